#pragma once

/// Envelope sampling, the normalized sup-norm error metric, convergence
/// regime classification, and empirical rate fitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "odefield/core.hpp"
#include "odefield/csvio.hpp"
#include "odefield/errors.hpp"
#include "odefield/rng.hpp"
#include "odefield/simulate.hpp"

namespace odefield {

/// Per-point normalized errors ||f_hat - f||_inf / ||f||_inf with their mean
/// over included points.  Near-equilibrium points (||f||_inf below the
/// floor) are excluded and counted; their per_point entry is NaN.
struct ErrorReport {
    std::vector<double> per_point;
    double mean = 0.0;
    std::size_t included = 0;
    std::size_t excluded = 0;

    // provenance metadata
    std::size_t n = 0, m = 0, dim = 0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::string tag;
};

inline double sup_norm(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) s = std::max(s, std::abs(x));
    return s;
}

inline ErrorReport normalized_error(std::span<const double> estimates,
                                    std::span<const double> truths, std::size_t count,
                                    std::size_t dim, double epsilon_floor = 1e-8) {
    if (estimates.size() != count * dim || truths.size() != count * dim)
        throw std::invalid_argument("normalized_error: buffer shape mismatch");
    ErrorReport report;
    report.dim = dim;
    report.per_point.assign(count, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    for (std::size_t p = 0; p < count; ++p) {
        const std::span<const double> est = estimates.subspan(p * dim, dim);
        const std::span<const double> truth = truths.subspan(p * dim, dim);
        const double denom = sup_norm(truth);
        if (denom < epsilon_floor) {
            ++report.excluded;
            continue;
        }
        double num = 0.0;
        for (std::size_t c = 0; c < dim; ++c) num = std::max(num, std::abs(est[c] - truth[c]));
        report.per_point[p] = num / denom;
        sum += report.per_point[p];
        ++report.included;
    }
    if (report.included == 0)
        throw insufficient_data_error("normalized_error: all points excluded by the "
                                      "equilibrium floor");
    report.mean = sum / static_cast<double>(report.included);
    return report;
}

/// count_x initial points times count_t uniform times on [0, T], product
/// paired; each point records x = phi(x_tilde, t) from a fine integration
/// together with the true field value f(x).
inline std::vector<EnvelopePoint> sample_envelope(const VectorField& f,
                                                  const SegmentSampler& sampler, double horizon,
                                                  std::size_t count_x, std::size_t count_t,
                                                  const IntegratorConfig& cfg,
                                                  std::uint64_t seed) {
    if (count_x == 0 || count_t == 0)
        throw std::invalid_argument("sample_envelope: counts must be >= 1");
    if (!(horizon > 0.0)) throw std::invalid_argument("sample_envelope: horizon must be positive");

    const std::size_t dim = f.ambient_dim;
    const auto initials =
        sample_initials(sampler, count_x, counter_hash(seed, stream::envelope_x));
    std::vector<double> times(count_t);
    for (std::size_t it = 0; it < count_t; ++it)
        times[it] = horizon * uniform_draw(seed, stream::envelope_t, it);

    // Ascending integration order; results land in original slots.
    std::vector<std::size_t> order(count_t);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return times[a] < times[b] || (times[a] == times[b] && a < b);
    });
    std::vector<double> sorted_times(count_t);
    for (std::size_t it = 0; it < count_t; ++it) sorted_times[it] = times[order[it]];

    const double step =
        horizon / (200.0 * static_cast<double>(cfg.substeps_per_interval));

    std::vector<EnvelopePoint> points(count_x * count_t);
    for (std::size_t ix = 0; ix < count_x; ++ix) {
        const std::span<const double> x0{initials.data() + ix * dim, dim};
        const auto states = flow_at_times(f, x0, sorted_times, step);
        for (std::size_t s = 0; s < count_t; ++s) {
            EnvelopePoint& pt = points[ix * count_t + order[s]];
            pt.source_initial.assign(x0.begin(), x0.end());
            pt.source_time = sorted_times[s];
            pt.location.assign(states.begin() + s * dim, states.begin() + (s + 1) * dim);
            pt.true_field = f(pt.location);
        }
    }
    return points;
}

inline std::vector<double> envelope_locations(std::span<const EnvelopePoint> pts,
                                              std::size_t dim) {
    std::vector<double> flat(pts.size() * dim);
    for (std::size_t p = 0; p < pts.size(); ++p)
        std::copy(pts[p].location.begin(), pts[p].location.end(), flat.begin() + p * dim);
    return flat;
}

inline std::vector<double> envelope_truths(std::span<const EnvelopePoint> pts, std::size_t dim) {
    std::vector<double> flat(pts.size() * dim);
    for (std::size_t p = 0; p < pts.size(); ++p)
        std::copy(pts[p].true_field.begin(), pts[p].true_field.end(), flat.begin() + p * dim);
    return flat;
}

// ---------------------------------------------------------------------------
// Convergence regimes

enum class Regime { trajectory_rich, time_rich, balanced };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::trajectory_rich: return "trajectory-rich";
        case Regime::time_rich: return "time-rich";
        default: return "balanced";
    }
}

/// The three rate expressions compared by the classifier.
struct RegimeLabel {
    Regime label = Regime::balanced;
    double rate_balanced = 0.0;   // (1/(nm))^{1/(5+b)}
    double rate_time = 0.0;       // (ln n / n)^{1/b}
    double rate_trajectory = 0.0; // 1/m
};

/// Argmax of the three rate expressions; exact ties default to balanced.
inline RegimeLabel classify_regime(std::size_t n, std::size_t m, double b) {
    if (n < 2 || m < 2) throw std::invalid_argument("classify_regime: need n, m >= 2");
    if (!(b > 0.0))
        throw std::invalid_argument("classify_regime: b must be positive (the time-rich "
                                    "rate is undefined at b = 0)");
    const double nd = static_cast<double>(n), md = static_cast<double>(m);
    RegimeLabel result;
    result.rate_balanced = std::pow(1.0 / (nd * md), 1.0 / (5.0 + b));
    result.rate_time = std::pow(std::log(nd) / nd, 1.0 / b);
    result.rate_trajectory = 1.0 / md;

    const double max_rate =
        std::max({result.rate_balanced, result.rate_time, result.rate_trajectory});
    const int hits = (result.rate_balanced == max_rate) + (result.rate_time == max_rate) +
                     (result.rate_trajectory == max_rate);
    if (hits > 1 || result.rate_balanced == max_rate)
        result.label = Regime::balanced;
    else if (result.rate_time == max_rate)
        result.label = Regime::time_rich;
    else
        result.label = Regime::trajectory_rich;
    return result;
}

/// Ordinary least squares slope of log(error) against log(scale).
inline double fit_loglog_slope(std::span<const std::pair<double, double>> pairs) {
    if (pairs.size() < 3)
        throw std::invalid_argument("fit_loglog_slope: need at least 3 pairs");
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& [scale, error] : pairs) {
        if (!(scale > 0.0) || !(error > 0.0))
            throw std::invalid_argument("fit_loglog_slope: scales and errors must be positive");
        mean_x += std::log(scale);
        mean_y += std::log(error);
    }
    mean_x /= static_cast<double>(pairs.size());
    mean_y /= static_cast<double>(pairs.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [scale, error] : pairs) {
        const double dx = std::log(scale) - mean_x;
        sxy += dx * (std::log(error) - mean_y);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_loglog_slope: degenerate scales");
    return sxy / sxx;
}

/// ErrorReport CSV: one row per point (x, true f, estimated f, normalized
/// error, excluded flag) plus a trailing summary row.
inline void write_error_report_csv(CsvWriter& csv, std::span<const EnvelopePoint> points,
                                   std::span<const double> estimates, const ErrorReport& report) {
    const std::size_t dim = report.dim;
    std::vector<std::string> header = {"point_id"};
    for (std::size_t c = 0; c < dim; ++c) header.push_back("x_" + std::to_string(c));
    for (std::size_t c = 0; c < dim; ++c) header.push_back("f_" + std::to_string(c));
    for (std::size_t c = 0; c < dim; ++c) header.push_back("fhat_" + std::to_string(c));
    header.push_back("normalized_error");
    header.push_back("excluded");
    csv.row(header);

    std::vector<std::string> row;
    for (std::size_t p = 0; p < points.size(); ++p) {
        row.clear();
        row.push_back(std::to_string(p));
        for (const double v : points[p].location) row.push_back(format_double(v));
        for (const double v : points[p].true_field) row.push_back(format_double(v));
        for (std::size_t c = 0; c < dim; ++c)
            row.push_back(format_double(estimates[p * dim + c]));
        const bool excluded = std::isnan(report.per_point[p]);
        row.push_back(excluded ? "" : format_double(report.per_point[p]));
        row.push_back(excluded ? "1" : "0");
        csv.row(row);
    }
    row = {"summary"};
    for (std::size_t c = 0; c < 3 * dim; ++c) row.push_back("");
    row.push_back(format_double(report.mean));
    row.push_back(std::to_string(report.excluded));
    csv.row(row);
}

} // namespace odefield
