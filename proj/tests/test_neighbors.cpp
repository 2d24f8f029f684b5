#include <doctest.h>

#include <vector>

#include "odefield/neighbors.hpp"
#include "odefield/rng.hpp"

using namespace odefield;

namespace {

std::vector<double> random_points(std::size_t count, std::size_t dim, std::uint64_t seed,
                                  bool lattice) {
    std::vector<double> pts(count * dim);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < dim; ++c) {
            const double u = uniform_draw(seed, stream::sampler, i, c);
            // Lattice coordinates force exact distance ties.
            pts[i * dim + c] = lattice ? std::floor(u * 4.0) * 0.25 : u;
        }
    return pts;
}

} // namespace

TEST_CASE("knn tie-break goes to the lower index") {
    const std::vector<double> points = {-1.0, 1.0, 2.0}; // D = 1
    const std::vector<double> query = {0.0};
    const auto res = knn_points(query, points, 3, 1, 2);
    CHECK(res.indices == std::vector<std::size_t>{0, 1});
    CHECK(res.distances == std::vector<double>{1.0, 1.0});
}

TEST_CASE("query on a stored point returns distance zero") {
    const std::vector<double> points = {0.5, 0.5, 2.0, -1.0, 0.25, 0.75};
    const std::vector<double> query = {2.0, -1.0};
    const auto res = knn_points(query, points, 3, 2, 1);
    CHECK(res.indices == std::vector<std::size_t>{1});
    CHECK(res.distances == std::vector<double>{0.0});
}

TEST_CASE("knn argument validation") {
    const std::vector<double> points = {0.0, 1.0, 2.0};
    CHECK_THROWS_AS(knn_points(std::vector<double>{0.0}, points, 3, 1, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(knn_points(std::vector<double>{0.0}, points, 3, 1, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(knn_points(std::vector<double>{0.0, 0.0}, points, 3, 1, 1),
                    std::invalid_argument);
}

TEST_CASE("accelerated index equals brute force, ties included") {
    for (const std::size_t dim : {std::size_t{2}, std::size_t{6}, std::size_t{18}}) {
        for (const bool lattice : {true, false}) {
            const auto points = random_points(500, dim, 77 + dim, lattice);
            const NeighborIndex index(points, 500, dim);
            CHECK(index.accelerated() == (dim <= 16));
            for (const std::size_t k : {std::size_t{1}, std::size_t{10}}) {
                for (std::size_t q = 0; q < 50; ++q) {
                    const auto query = random_points(1, dim, 1000 + q, lattice);
                    const auto fast = index.query(query, k);
                    const auto slow = knn_points_brute(query, points, 500, dim, k);
                    REQUIRE(fast.indices == slow.indices);
                    REQUIRE(fast.distances == slow.distances);
                }
            }
        }
    }
}

TEST_CASE("duplicate points resolve by ascending index") {
    std::vector<double> points;
    for (int i = 0; i < 5; ++i) {
        points.push_back(1.0);
        points.push_back(1.0);
    }
    const std::vector<double> query = {1.0, 1.0};
    const auto res = knn_points(query, points, 5, 2, 3);
    CHECK(res.indices == std::vector<std::size_t>{0, 1, 2});
    CHECK(res.distances == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("neighbor distances are nondecreasing") {
    const auto points = random_points(300, 3, 5, false);
    const NeighborIndex index(points, 300, 3);
    for (std::size_t q = 0; q < 30; ++q) {
        const auto query = random_points(1, 3, 400 + q, false);
        const auto res = index.query(query, 17);
        for (std::size_t i = 0; i + 1 < res.distances.size(); ++i)
            CHECK(res.distances[i] <= res.distances[i + 1]);
    }
}

TEST_CASE("knn_times basics") {
    const auto grid = make_grid(4.0, 8); // times 0.5, 1.0, ..., 4.0

    SUBCASE("exact hit") {
        const auto res = knn_times(grid.time(4), grid, 1);
        CHECK(res.indices == std::vector<std::size_t>{4});
        CHECK(res.distances == std::vector<double>{0.0});
    }
    SUBCASE("midpoint tie resolves to the earlier time") {
        const auto res = knn_times(1.25, grid, 1); // midway between t_2 and t_3
        CHECK(res.indices == std::vector<std::size_t>{1});
    }
    SUBCASE("queries before the grid take the leading window") {
        const auto res = knn_times(0.0, grid, 3);
        CHECK(res.indices == std::vector<std::size_t>{0, 1, 2});
    }
    SUBCASE("queries past the horizon take the trailing window") {
        const auto res = knn_times(9.0, grid, 2);
        CHECK(res.indices == std::vector<std::size_t>{7, 6});
    }
    SUBCASE("k2 = m returns every index in distance order") {
        const auto res = knn_times(1.6, grid, 8);
        CHECK(res.indices.size() == 8);
        for (std::size_t i = 0; i + 1 < 8; ++i) CHECK(res.distances[i] <= res.distances[i + 1]);
        std::vector<std::size_t> sorted = res.indices;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < 8; ++i) CHECK(sorted[i] == i);
    }
    SUBCASE("k2 out of range") {
        CHECK_THROWS_AS(knn_times(1.0, grid, 0), std::invalid_argument);
        CHECK_THROWS_AS(knn_times(1.0, grid, 9), std::invalid_argument);
    }
}
