#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "odefield/metrics.hpp"

using namespace odefield;

TEST_CASE("sample_envelope produces count_x * count_t points") {
    const auto f = constant_field({2.0, -1.0});
    const auto sampler = segment_sampler({0.0, 0.0}, {1.0, 1.0});
    const auto env = sample_envelope(f, sampler, 3.0, 10, 10, IntegratorConfig{4}, 5);
    REQUIRE(env.size() == 100);
    for (const auto& pt : env) {
        CHECK(pt.source_time >= 0.0);
        CHECK(pt.source_time <= 3.0);
        // constant field: x = x0 + c t up to integrator tolerance (exact here)
        CHECK(pt.location[0] ==
              doctest::Approx(pt.source_initial[0] + 2.0 * pt.source_time).epsilon(1e-12));
        CHECK(pt.location[1] ==
              doctest::Approx(pt.source_initial[1] - pt.source_time).epsilon(1e-12));
        CHECK(pt.true_field == std::vector<double>{2.0, -1.0});
    }

    const auto tiny = sample_envelope(f, sampler, 3.0, 1, 1, IntegratorConfig{4}, 5);
    CHECK(tiny.size() == 1);
    CHECK_THROWS_AS(sample_envelope(f, sampler, 3.0, 0, 5, IntegratorConfig{4}, 5),
                    std::invalid_argument);
}

TEST_CASE("envelope sampling is deterministic per seed") {
    const auto f = vanderpol_field();
    const auto sampler = segment_sampler({-1.0, -1.0}, {1.0, 1.0});
    const auto a = sample_envelope(f, sampler, 4.0, 5, 5, IntegratorConfig{10}, 9);
    const auto b = sample_envelope(f, sampler, 4.0, 5, 5, IntegratorConfig{10}, 9);
    const auto c = sample_envelope(f, sampler, 4.0, 5, 5, IntegratorConfig{10}, 10);
    REQUIRE(a.size() == b.size());
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        all_equal = all_equal && a[i].location == b[i].location &&
                    a[i].source_time == b[i].source_time;
        any_diff = any_diff || a[i].location != c[i].location;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("normalized_error") {
    SUBCASE("perfect estimates give zero") {
        const std::vector<double> truth = {1.0, -2.0, 0.5, 3.0};
        const auto report = normalized_error(truth, truth, 2, 2);
        CHECK(report.mean == 0.0);
        CHECK(report.included == 2);
        CHECK(report.excluded == 0);
    }
    SUBCASE("doubling the field gives error one") {
        const std::vector<double> truth = {3.0, -1.0};
        const std::vector<double> est = {6.0, -2.0};
        const auto report = normalized_error(est, truth, 1, 2);
        CHECK(report.mean == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("equilibrium points are excluded and counted") {
        const std::vector<double> truth = {0.0, 0.0, 1.0, 1.0};
        const std::vector<double> est = {5.0, 5.0, 1.0, 1.0};
        const auto report = normalized_error(est, truth, 2, 2);
        CHECK(report.excluded == 1);
        CHECK(report.included == 1);
        CHECK(report.mean == 0.0);
        CHECK(std::isnan(report.per_point[0]));
    }
    SUBCASE("all excluded is an error") {
        const std::vector<double> truth = {0.0, 0.0};
        const std::vector<double> est = {1.0, 1.0};
        CHECK_THROWS_AS(normalized_error(est, truth, 1, 2), insufficient_data_error);
    }
    SUBCASE("scale invariance") {
        std::vector<double> truth(40), est(40);
        for (std::size_t i = 0; i < 40; ++i) {
            truth[i] = 0.5 + uniform_draw(2, stream::sampler, i);
            est[i] = truth[i] + 0.1 * uniform_draw(3, stream::sampler, i);
        }
        const auto base = normalized_error(est, truth, 20, 2);
        const double c = -3.7;
        std::vector<double> truth_s = truth, est_s = est;
        for (auto& v : truth_s) v *= c;
        for (auto& v : est_s) v *= c;
        const auto scaled = normalized_error(est_s, truth_s, 20, 2);
        for (std::size_t p = 0; p < 20; ++p)
            CHECK(scaled.per_point[p] == doctest::Approx(base.per_point[p]).epsilon(1e-12));
    }
}

TEST_CASE("regime classification") {
    CHECK(classify_regime(1000000, 10, 1.0).label == Regime::trajectory_rich);
    CHECK(classify_regime(10, 1000000, 1.0).label == Regime::time_rich);
    CHECK(classify_regime(1000, 1000, 1.0).label == Regime::balanced);
    CHECK_THROWS_AS(classify_regime(1000, 1000, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(classify_regime(1, 1000, 1.0), std::invalid_argument);

    // label corresponds to the argmax of the three reported rates
    for (const auto& [n, m] : {std::pair<std::size_t, std::size_t>{50, 2000}, {2000, 50},
                               {100, 100}, {17, 93}}) {
        const auto lab = classify_regime(n, m, 2.0);
        const double max_rate =
            std::max({lab.rate_balanced, lab.rate_time, lab.rate_trajectory});
        const int hits = (lab.rate_balanced == max_rate) + (lab.rate_time == max_rate) +
                         (lab.rate_trajectory == max_rate);
        if (lab.label == Regime::balanced) {
            CHECK((lab.rate_balanced == max_rate || hits > 1));
        } else if (lab.label == Regime::time_rich) {
            CHECK(lab.rate_time == max_rate);
            CHECK(hits == 1);
        } else {
            CHECK(lab.rate_trajectory == max_rate);
            CHECK(hits == 1);
        }
    }
}

TEST_CASE("log-log slope fitting") {
    SUBCASE("exact power law") {
        std::vector<std::pair<double, double>> pairs;
        for (const double s : {10.0, 100.0, 1000.0, 12345.0})
            pairs.emplace_back(s, std::pow(s, -1.0 / 6.0));
        CHECK(std::abs(fit_loglog_slope(pairs) + 1.0 / 6.0) < 1e-12);
    }
    SUBCASE("constant errors give slope zero") {
        std::vector<std::pair<double, double>> pairs = {{10.0, 0.7}, {100.0, 0.7}, {1000.0, 0.7}};
        CHECK(std::abs(fit_loglog_slope(pairs)) < 1e-14);
    }
    SUBCASE("planted exponents in [-2, 0] recovered to 1e-10") {
        for (double expo = -2.0; expo <= 0.0; expo += 0.25) {
            std::vector<std::pair<double, double>> pairs;
            for (const double s : {3.0, 17.0, 120.0, 999.0, 5432.0})
                pairs.emplace_back(s, 2.3 * std::pow(s, expo));
            CHECK(std::abs(fit_loglog_slope(pairs) - expo) < 1e-10);
        }
    }
    SUBCASE("input validation") {
        std::vector<std::pair<double, double>> two = {{1.0, 1.0}, {2.0, 0.5}};
        CHECK_THROWS_AS(fit_loglog_slope(two), std::invalid_argument);
        std::vector<std::pair<double, double>> bad = {{1.0, 1.0}, {2.0, -0.5}, {3.0, 0.1}};
        CHECK_THROWS_AS(fit_loglog_slope(bad), std::invalid_argument);
    }
}
