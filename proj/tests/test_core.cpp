#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "odefield/core.hpp"
#include "odefield/simulate.hpp"

using namespace odefield;

TEST_CASE("make_grid produces t_j = j T / m") {
    const auto grid = make_grid(4.0, 4);
    REQUIRE(grid.times.size() == 4);
    CHECK(grid.times[0] == 1.0);
    CHECK(grid.times[1] == 2.0);
    CHECK(grid.times[2] == 3.0);
    CHECK(grid.times[3] == 4.0);

    const auto fine = make_grid(4.0, 300);
    CHECK(fine.times.size() == 300);
    CHECK(fine.times[0] == doctest::Approx(4.0 / 300.0).epsilon(1e-15));
    CHECK(fine.times[299] == 4.0); // horizon hit exactly

    const auto single = make_grid(2.0, 1);
    REQUIRE(single.times.size() == 1);
    CHECK(single.times[0] == 2.0);
}

TEST_CASE("make_grid rejects bad arguments") {
    CHECK_THROWS_AS(make_grid(0.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(-1.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(1.0, 0), std::invalid_argument);
}

TEST_CASE("grid spacing is uniform to within 4 eps T") {
    const double eps = std::numeric_limits<double>::epsilon();
    for (const auto& [T, m] : {std::pair{4.0, 300}, {10.0, 300}, {2.0, 100}, {0.1, 977}}) {
        const auto grid = make_grid(T, static_cast<std::size_t>(m));
        const double step = T / static_cast<double>(m);
        double worst = 0.0;
        for (std::size_t j = 0; j + 1 < grid.times.size(); ++j)
            worst = std::max(worst, std::abs(grid.times[j + 1] - grid.times[j] - step));
        CHECK(worst <= 4.0 * eps * T);
        for (std::size_t j = 0; j + 1 < grid.times.size(); ++j)
            CHECK(grid.times[j] < grid.times[j + 1]);
    }
}

TEST_CASE("split_dataset halves deterministically") {
    const auto even = make_split(4);
    CHECK(even.first_half == std::vector<std::size_t>{0, 1});
    CHECK(even.second_half == std::vector<std::size_t>{2, 3});

    const auto odd = make_split(5);
    CHECK(odd.first_half == std::vector<std::size_t>{0, 1});
    CHECK(odd.second_half == std::vector<std::size_t>{2, 3, 4});

    CHECK_THROWS_AS(make_split(1), insufficient_data_error);
    CHECK_THROWS_AS(make_split(0), insufficient_data_error);
}

TEST_CASE("split is a partition for all n in 2..1000") {
    for (std::size_t n = 2; n <= 1000; ++n) {
        const auto split = make_split(n);
        CHECK(split.first_half.size() == n / 2);
        std::vector<std::size_t> all = split.first_half;
        all.insert(all.end(), split.second_half.begin(), split.second_half.end());
        std::sort(all.begin(), all.end());
        bool ok = all.size() == n;
        for (std::size_t i = 0; ok && i < n; ++i) ok = all[i] == i;
        REQUIRE(ok);
    }
}

TEST_CASE("dataset JSON round trip is exact") {
    const auto field = vanderpol_field();
    const auto sampler = segment_sampler({-1.0, -1.0}, {1.0, 1.0});
    const auto ds =
        generate_dataset(field, sampler, 7, make_grid(4.0, 11), 0.05, IntegratorConfig{5}, 99);

    const auto j = dataset_to_json(ds);
    std::stringstream io;
    io << j;
    nlohmann::json parsed;
    io >> parsed;
    const auto back = dataset_from_json(parsed);

    CHECK(back.ambient_dim == ds.ambient_dim);
    CHECK(back.n_trajectories == ds.n_trajectories);
    CHECK(back.grid.size == ds.grid.size);
    CHECK(back.grid.horizon == ds.grid.horizon);
    CHECK(back.sigma == ds.sigma);
    CHECK(back.seed == ds.seed);
    CHECK(back.initial_points == ds.initial_points);  // bitwise
    CHECK(back.observations == ds.observations);      // bitwise

    const auto path = std::filesystem::temp_directory_path() / "odefield_ds_roundtrip.json";
    save_dataset(path, ds);
    const auto loaded = load_dataset(path);
    CHECK(loaded.observations == ds.observations);
    std::filesystem::remove(path);
}

TEST_CASE("dataset CSV export has one row per observation") {
    const auto field = vanderpol_field();
    const auto sampler = segment_sampler({-1.0, -1.0}, {1.0, 1.0});
    const auto ds =
        generate_dataset(field, sampler, 3, make_grid(2.0, 5), 0.0, IntegratorConfig{4}, 7);
    const auto path = std::filesystem::temp_directory_path() / "odefield_ds.csv";
    {
        CsvWriter csv(path);
        write_dataset_csv(csv, ds);
    }
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "traj_id,time_index,time,comp_0,comp_1");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3 * 5);
    std::filesystem::remove(path);
}
