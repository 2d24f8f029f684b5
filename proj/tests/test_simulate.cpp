#include <doctest.h>

#include <cmath>
#include <vector>

#include "odefield/metrics.hpp"
#include "odefield/rng.hpp"
#include "odefield/simulate.hpp"

using namespace odefield;

namespace {

double sup_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST_CASE("benchmark fields match their defining systems") {
    const auto vdp = vanderpol_field();
    CHECK(vdp(std::vector<double>{0.0, 1.0}) == std::vector<double>{1.0, 0.5});
    CHECK(vdp(std::vector<double>{1.0, 0.0}) == std::vector<double>{0.0, -1.0});
    CHECK(vdp(std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0});

    const auto lv = lotka_volterra_field();
    CHECK(lv(std::vector<double>{0.5, 0.5}) == std::vector<double>{0.0, 0.0});
    CHECK(lv(std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0});
    CHECK(lv(std::vector<double>{1.0, 1.0}) == std::vector<double>{-0.5, 0.5});
}

TEST_CASE("high-dimensional Van der Pol pairs coordinates") {
    const auto d4 = highdim_vdp_field(4);
    CHECK(d4(std::vector<double>{0.0, 1.0, 0.0, 1.0}) ==
          std::vector<double>{1.0, 0.5, 1.0, 0.5});

    // D = 2 reduces to the classic oscillator on random points, bit for bit.
    const auto d2 = highdim_vdp_field(2);
    const auto vdp = vanderpol_field();
    for (std::size_t i = 0; i < 100; ++i) {
        const std::vector<double> x = {4.0 * uniform_draw(5, stream::sampler, i, 0) - 2.0,
                                       4.0 * uniform_draw(5, stream::sampler, i, 1) - 2.0};
        CHECK(d2(x) == vdp(x));
    }

    CHECK_THROWS_AS(highdim_vdp_field(3), std::invalid_argument);
    CHECK_THROWS_AS(highdim_vdp_field(0), std::invalid_argument);
}

TEST_CASE("field registry resolves names") {
    CHECK(field_from_name("vanderpol").ambient_dim == 2);
    CHECK(field_from_name("lotka-volterra").ambient_dim == 2);
    CHECK(field_from_name("vdp-highdim:6").ambient_dim == 6);
    const auto c = field_from_name("constant:3:0.5");
    CHECK(c.ambient_dim == 3);
    CHECK(c(std::vector<double>{9.0, 9.0, 9.0}) == std::vector<double>{0.5, 0.5, 0.5});
    CHECK_THROWS_AS(field_from_name("nope"), std::invalid_argument);
}

TEST_CASE("segment sampler draws lie on the segment") {
    CHECK(sample_initials(segment_sampler({0.0}, {1.0}), 0, 1).empty());

    const auto diag = segment_sampler({-1.0, -1.0}, {1.0, 1.0});
    const auto pts = sample_initials(diag, 500, 42);
    for (std::size_t i = 0; i < 500; ++i) {
        CHECK(pts[2 * i] == pts[2 * i + 1]);
        CHECK(pts[2 * i] >= -1.0);
        CHECK(pts[2 * i] <= 1.0);
    }

    const auto hi = segment_sampler(std::vector<double>(6, 1.0), std::vector<double>(6, 2.0));
    const auto hpts = sample_initials(hi, 100, 7);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t c = 0; c < 6; ++c) {
            CHECK(hpts[6 * i + c] == hpts[6 * i]);
            CHECK(hpts[6 * i + c] >= 1.0);
            CHECK(hpts[6 * i + c] <= 2.0);
        }
}

TEST_CASE("RK4 is exact for constant fields") {
    const auto f = constant_field({0.5, -2.0, 3.0});
    const auto grid = make_grid(4.0, 16);
    const std::vector<double> x0 = {1.0, 1.0, 1.0};
    const auto flow = integrate_flow(f, x0, grid, IntegratorConfig{3});
    for (std::size_t j = 0; j < 16; ++j) {
        const double t = grid.time(j);
        CHECK(flow[3 * j + 0] == doctest::Approx(1.0 + 0.5 * t).epsilon(1e-14));
        CHECK(flow[3 * j + 1] == doctest::Approx(1.0 - 2.0 * t).epsilon(1e-14));
        CHECK(flow[3 * j + 2] == doctest::Approx(1.0 + 3.0 * t).epsilon(1e-14));
    }
}

TEST_CASE("RK4 reproduces the exponential flow") {
    VectorField f;
    f.ambient_dim = 1;
    f.eval = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
    const auto grid = make_grid(1.0, 50);
    const std::vector<double> x0 = {1.0};
    const auto flow = integrate_flow(f, x0, grid, IntegratorConfig{20});
    CHECK(std::abs(flow[49] - std::exp(1.0)) < 1e-8);
    for (std::size_t j = 0; j < 50; ++j)
        CHECK(std::abs(flow[j] - std::exp(grid.time(j))) < 1e-8);
}

TEST_CASE("Van der Pol integration agrees with a 10x refined reference") {
    const auto f = vanderpol_field();
    const auto grid = make_grid(4.0, 300);
    const std::vector<double> x0 = {1.0, 1.0};
    const auto coarse = integrate_flow(f, x0, grid, IntegratorConfig{20});
    const auto fine = integrate_flow(f, x0, grid, IntegratorConfig{200});
    CHECK(sup_diff(coarse, fine) < 1e-6);
}

TEST_CASE("RK4 error shrinks at fourth order") {
    const auto f = vanderpol_field();
    const auto grid = make_grid(4.0, 50);
    const std::vector<double> x0 = {0.5, -0.25};
    const auto reference = integrate_flow(f, x0, grid, IntegratorConfig{40});
    const auto half = integrate_flow(f, x0, grid, IntegratorConfig{2});
    const auto full = integrate_flow(f, x0, grid, IntegratorConfig{4});
    const double err_half = sup_diff(half, reference);
    const double err_full = sup_diff(full, reference);
    CHECK(err_half / err_full >= 8.0);
}

TEST_CASE("divergent integration reports the failing time") {
    VectorField f;
    f.ambient_dim = 1;
    f.eval = [](std::span<const double> x, std::span<double> out) { out[0] = x[0] * x[0]; };
    const auto grid = make_grid(2.0, 20); // blow-up at t = 0.5 from x0 = 2
    const std::vector<double> x0 = {2.0};
    CHECK_THROWS_AS(integrate_flow(f, x0, grid, IntegratorConfig{50}),
                    integration_diverged_error);
    try {
        integrate_flow(f, x0, grid, IntegratorConfig{50});
    } catch (const integration_diverged_error& e) {
        CHECK(e.failing_time() > 0.0);
        CHECK(e.failing_time() <= 2.0);
    }
}

TEST_CASE("flow_at_times visits arbitrary ascending times") {
    const auto f = constant_field({2.0, -1.0});
    const std::vector<double> x0 = {0.0, 0.0};
    const std::vector<double> times = {0.0, 0.3, 0.31, 2.5};
    const auto states = flow_at_times(f, x0, times, 0.01);
    CHECK(states[0] == 0.0); // t = 0 returns the initial point
    CHECK(states[1] == 0.0);
    for (std::size_t i = 0; i < times.size(); ++i) {
        CHECK(states[2 * i] == doctest::Approx(2.0 * times[i]).epsilon(1e-14));
        CHECK(states[2 * i + 1] == doctest::Approx(-times[i]).epsilon(1e-14));
    }
}

TEST_CASE("add_noise contracts") {
    const auto f = vanderpol_field();
    const auto sampler = segment_sampler({-1.0, -1.0}, {1.0, 1.0});
    const auto grid = make_grid(4.0, 40);

    SUBCASE("sigma zero is the identity, bitwise") {
        const auto a = generate_dataset(f, sampler, 5, grid, 0.0, IntegratorConfig{5}, 3);
        std::vector<double> flows(a.observations);
        const auto noised = add_noise(flows, 5, 40, 2, 0.0, 3);
        CHECK(noised == a.observations);
    }

    SUBCASE("seeds control the stream") {
        const auto a = generate_dataset(f, sampler, 5, grid, 0.05, IntegratorConfig{5}, 3);
        const auto b = generate_dataset(f, sampler, 5, grid, 0.05, IntegratorConfig{5}, 3);
        const auto c = generate_dataset(f, sampler, 5, grid, 0.05, IntegratorConfig{5}, 4);
        CHECK(a.observations == b.observations);
        CHECK(a.observations != c.observations);
        CHECK(a.initial_points != c.initial_points);
    }

    SUBCASE("empirical noise standard deviation sits in the 3-sigma band") {
        // n*m*D = 50 * 1000 * 2 = 1e5 noise draws at sigma = 0.05.
        const auto wide = make_grid(4.0, 1000);
        const auto noiseless = generate_dataset(f, sampler, 50, wide, 0.0, IntegratorConfig{2}, 8);
        const auto noisy = generate_dataset(f, sampler, 50, wide, 0.05, IntegratorConfig{2}, 8);
        double sum = 0.0, sumsq = 0.0;
        const std::size_t count = noisy.observations.size();
        for (std::size_t i = 0; i < count; ++i) {
            const double d = noisy.observations[i] - noiseless.observations[i];
            sum += d;
            sumsq += d * d;
        }
        const double mean = sum / static_cast<double>(count);
        const double sd = std::sqrt(sumsq / static_cast<double>(count) - mean * mean);
        CHECK(sd >= 0.0485);
        CHECK(sd <= 0.0515);
    }
}

TEST_CASE("generate_dataset shapes and determinism") {
    const auto f = vanderpol_field();
    const auto sampler = segment_sampler({-1.0, -1.0}, {1.0, 1.0});
    const auto ds =
        generate_dataset(f, sampler, 300, make_grid(4.0, 300), 0.05, IntegratorConfig{5}, 11);
    CHECK(ds.n_trajectories == 300);
    CHECK(ds.grid.size == 300);
    CHECK(ds.ambient_dim == 2);
    CHECK(ds.observations.size() == 300 * 300 * 2);

    const auto noiseless =
        generate_dataset(f, sampler, 4, make_grid(4.0, 50), 0.0, IntegratorConfig{5}, 11);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto flow = integrate_flow(f, noiseless.initial(i), noiseless.grid,
                                         IntegratorConfig{5});
        for (std::size_t v = 0; v < flow.size(); ++v)
            CHECK(noiseless.observations[i * 50 * 2 + v] == flow[v]);
    }
}

TEST_CASE("Gronwall stability bound holds for Van der Pol pairs") {
    const auto f = vanderpol_field();
    const auto grid = make_grid(4.0, 50);
    const IntegratorConfig cfg{20};

    // 100 random pairs of initial conditions from the experiment's segment.
    const auto starts = sample_initials(segment_sampler({-1.0, -1.0}, {1.0, 1.0}), 200, 21);
    std::vector<std::vector<double>> flows(200);
    double lo[2] = {1e30, 1e30}, hi[2] = {-1e30, -1e30};
    for (std::size_t i = 0; i < 200; ++i) {
        flows[i] = integrate_flow(f, {starts.data() + 2 * i, 2}, grid, cfg);
        for (std::size_t j = 0; j < flows[i].size(); j += 2)
            for (int c = 0; c < 2; ++c) {
                lo[c] = std::min(lo[c], flows[i][j + static_cast<std::size_t>(c)]);
                hi[c] = std::max(hi[c], flows[i][j + static_cast<std::size_t>(c)]);
            }
    }
    // Empirical Lipschitz bound on the visited region: sup of the Jacobian
    // Frobenius norm over a fine grid on the padded bounding box.
    double lips = 0.0;
    for (int ix = 0; ix <= 60; ++ix)
        for (int iy = 0; iy <= 60; ++iy) {
            const double x1 = lo[0] - 0.1 + (hi[0] - lo[0] + 0.2) * ix / 60.0;
            const double x2 = lo[1] - 0.1 + (hi[1] - lo[1] + 0.2) * iy / 60.0;
            // J = [[0, 1], [-x1 x2 - 1, (1 - x1^2)/2]]
            const double fro = std::sqrt(1.0 + (x1 * x2 + 1.0) * (x1 * x2 + 1.0) +
                                         0.25 * (1.0 - x1 * x1) * (1.0 - x1 * x1));
            lips = std::max(lips, fro);
        }

    for (std::size_t pair = 0; pair < 100; ++pair) {
        const auto& fa = flows[2 * pair];
        const auto& fb = flows[2 * pair + 1];
        std::vector<double> diff0 = {starts[4 * pair] - starts[4 * pair + 2],
                                     starts[4 * pair + 1] - starts[4 * pair + 3]};
        const double base = norm2(diff0);
        for (std::size_t j = 0; j < 50; ++j) {
            const std::vector<double> d = {fa[2 * j] - fb[2 * j], fa[2 * j + 1] - fb[2 * j + 1]};
            const double bound = std::exp(lips * grid.time(j)) * base + 1e-6;
            CHECK(norm2(d) <= bound);
        }
    }
}

TEST_CASE("mean-value bound holds along Van der Pol trajectories") {
    const auto f = vanderpol_field();
    const auto grid = make_grid(4.0, 100);
    const IntegratorConfig cfg{20};
    const auto starts = sample_initials(segment_sampler({-1.0, -1.0}, {1.0, 1.0}), 100, 31);

    const auto fine_grid = make_grid(4.0, 1000);
    for (std::size_t i = 0; i < 100; ++i) {
        const auto flow = integrate_flow(f, {starts.data() + 2 * i, 2}, grid, cfg);
        // sup of ||f|| along the trajectory, sampled finely enough that the
        // discrete max dominates the continuous sup
        const auto fine = integrate_flow(f, {starts.data() + 2 * i, 2}, fine_grid, cfg);
        double sup_f = norm2(f(std::span<const double>{starts.data() + 2 * i, 2}));
        for (std::size_t j = 0; j < 1000; ++j)
            sup_f = std::max(sup_f, norm2(f(std::span<const double>{fine.data() + 2 * j, 2})));
        // one random (t, t') pair per trajectory
        const auto j1 = static_cast<std::size_t>(uniform_draw(31, stream::envelope_t, i, 0) * 100);
        const auto j2 = static_cast<std::size_t>(uniform_draw(31, stream::envelope_t, i, 1) * 100);
        const std::size_t a = std::min(std::min(j1, j2), std::size_t{99});
        const std::size_t b = std::min(std::max(j1, j2), std::size_t{99});
        const std::vector<double> d = {flow[2 * a] - flow[2 * b], flow[2 * a + 1] - flow[2 * b + 1]};
        CHECK(norm2(d) <= sup_f * (grid.time(b) - grid.time(a)) + 1e-6);
    }
}
