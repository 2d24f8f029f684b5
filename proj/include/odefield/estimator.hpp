#pragma once

/// The three-step vector-field estimator and its calibration rules.
///
/// Step 1 denoises the flow by averaging observations over k1 spatial and
/// k2 temporal nearest neighbors.  Step 2 estimates derivatives along the
/// held-out trajectories with variance-minimizing weighted symmetric
/// differences.  Step 3 answers queries f_hat(x) by averaging the derivative
/// estimates of the r trajectories whose denoised positions come closest
/// to x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "odefield/core.hpp"
#include "odefield/neighbors.hpp"
#include "odefield/parallel.hpp"

namespace odefield {

enum class CalibrationMode { pointwise, supnorm };

/// Tuning parameters (k1, k2, k, r) plus the standardness exponent b they
/// were derived from.  Structural bounds against a dataset:
///   k1 <= |flow half|, k2 <= m, r <= |search half|, 2k + 2 < m.
struct CalibrationParams {
    std::size_t k1 = 1;
    std::size_t k2 = 1;
    std::size_t k = 1;
    std::size_t r = 1;
    double b = 1.0;
    CalibrationMode mode = CalibrationMode::pointwise;
};

/// Raw formula values and clamp flags, for logging degenerate regimes.
struct CalibrationDiagnostics {
    double k1_raw = 0, k2_raw = 0, k_raw = 0, r_raw = 0;
    bool clamped = false;
};

namespace detail {

inline std::size_t round_clamp(double value, std::size_t cap, bool& clamped) {
    value = std::max(value, 1.0);
    auto rounded = static_cast<std::size_t>(std::floor(value + 0.5)); // round half up
    if (rounded < 1) rounded = 1;
    if (rounded > cap) {
        rounded = cap;
        clamped = true;
    }
    return rounded;
}

} // namespace detail

/// Evaluate the calibration formulas with proportionality constant 1,
/// round half-up, and clamp to the structural bounds for a split dataset.
inline CalibrationParams calibrate(std::size_t n, std::size_t m, double b, CalibrationMode mode,
                                   CalibrationDiagnostics* diag = nullptr) {
    if (n < 2) throw std::invalid_argument("calibrate: n must be >= 2");
    if (m < 3) throw std::invalid_argument("calibrate: m must be >= 3");
    if (!(b >= 0.0)) throw std::invalid_argument("calibrate: b must be nonnegative");

    const double nd = static_cast<double>(n), md = static_cast<double>(m);
    const double ln_n = std::log(nd);
    const double ln_nm = std::log(nd * md);

    const double k1_raw =
        std::pow(nd / ln_n, 3.0 / (b + 3.0)) / std::pow(md / ln_nm, b / (b + 3.0));
    const double k2_raw =
        std::pow(md, (b + 2.0) / (b + 3.0)) / std::pow(nd / (ln_n * ln_nm), 1.0 / (b + 3.0));
    double k_raw, r_raw;
    if (mode == CalibrationMode::pointwise) {
        r_raw = std::pow(nd, 5.0 / (5.0 + b)) / std::pow(md, b / (5.0 + b));
        k_raw = std::pow(md, (4.0 + b) / (5.0 + b)) / std::pow(nd, 1.0 / (5.0 + b));
    } else {
        k_raw = std::pow(md, (b + 4.0) / (b + 5.0)) *
                std::pow(ln_nm * ln_n / nd, 1.0 / (b + 5.0));
        r_raw = std::pow(nd / ln_n, 5.0 / (b + 5.0)) * std::pow(ln_nm / md, b / (b + 5.0));
    }

    const std::size_t half = n / 2;
    const std::size_t k_cap = std::max<std::size_t>(1, (m - 3) / 2); // 2k + 2 < m
    bool clamped = false;
    CalibrationParams params;
    params.b = b;
    params.mode = mode;
    params.k1 = detail::round_clamp(k1_raw, half, clamped);
    params.k2 = detail::round_clamp(k2_raw, m, clamped);
    params.r = detail::round_clamp(r_raw, n - half, clamped);
    params.k = detail::round_clamp(k_raw, k_cap, clamped);
    if (diag) *diag = {k1_raw, k2_raw, k_raw, r_raw, clamped};
    return params;
}

/// Variance-minimizing convex weights w_l = 6 l^2 / (k (k+1) (2k+1)).
inline std::vector<double> step2_weights(std::size_t k) {
    if (k == 0) throw std::invalid_argument("step2_weights: k must be >= 1");
    const double kd = static_cast<double>(k);
    const double denom = kd * (kd + 1.0) * (2.0 * kd + 1.0);
    std::vector<double> w(k);
    for (std::size_t l = 1; l <= k; ++l)
        w[l - 1] = 6.0 * static_cast<double>(l) * static_cast<double>(l) / denom;
    return w;
}

namespace detail {

/// Shared Step-1 kernel: average observations over the given trajectories
/// and time indices, summing trajectories outer, times inner, so the cached
/// and ad-hoc paths agree bitwise.
inline void average_observations(const TrajectoryDataset& ds,
                                 std::span<const std::size_t> traj_ids,
                                 std::span<const std::size_t> time_ids,
                                 std::span<double> out) {
    const std::size_t dim = ds.ambient_dim;
    for (std::size_t c = 0; c < dim; ++c) out[c] = 0.0;
    for (const std::size_t i : traj_ids)
        for (const std::size_t j : time_ids) {
            const auto obs = ds.observation(i, j);
            for (std::size_t c = 0; c < dim; ++c) out[c] += obs[c];
        }
    const double scale = 1.0 / (static_cast<double>(traj_ids.size()) *
                                static_cast<double>(time_ids.size()));
    for (std::size_t c = 0; c < dim; ++c) out[c] *= scale;
}

inline std::vector<double> gather_initials(const TrajectoryDataset& ds,
                                           std::span<const std::size_t> traj_ids) {
    std::vector<double> pts(traj_ids.size() * ds.ambient_dim);
    for (std::size_t i = 0; i < traj_ids.size(); ++i) {
        const auto x = ds.initial(traj_ids[i]);
        std::copy(x.begin(), x.end(), pts.begin() + i * ds.ambient_dim);
    }
    return pts;
}

} // namespace detail

/// Step-1 flow estimate phi_hat(z, t): the double average of observations
/// over the k1 nearest flow-half initial points to z and the k2 nearest
/// grid times to t.
inline std::vector<double> estimate_flow(std::span<const double> z, double t,
                                         const TrajectoryDataset& ds,
                                         std::span<const std::size_t> flow_indices,
                                         std::size_t k1, std::size_t k2) {
    if (k1 == 0 || k1 > flow_indices.size())
        throw std::invalid_argument("estimate_flow: k1 must satisfy 1 <= k1 <= |flow half|");
    const auto pts = detail::gather_initials(ds, flow_indices);
    const auto nn = knn_points(z, pts, flow_indices.size(), ds.ambient_dim, k1);
    std::vector<std::size_t> traj_ids(k1);
    for (std::size_t p = 0; p < k1; ++p) traj_ids[p] = flow_indices[nn.indices[p]];
    const auto window = knn_times(t, ds.grid, k2);
    std::vector<double> out(ds.ambient_dim);
    detail::average_observations(ds, traj_ids, window.indices, out);
    return out;
}

/// Step-2 estimates f_hat(phi(X_i, t_j)) on the interior time indices
/// j in {k+1, ..., m-k-1} (1-based), where both the symmetric stencil and
/// the Step-3 search range are valid.
struct DerivativeField {
    std::size_t traj_count = 0;
    std::size_t interior_begin = 0; // 0-based first interior index (= k)
    std::size_t interior_count = 0; // m - 2k - 1
    std::size_t dim = 0;
    std::vector<std::size_t> traj_ids; // dataset trajectory indices, in row order
    std::vector<double> weights;       // w_1 .. w_k
    std::vector<double> estimates;     // traj_count * interior_count * dim

    std::span<const double> estimate(std::size_t local_traj, std::size_t local_j) const {
        return {estimates.data() + (local_traj * interior_count + local_j) * dim, dim};
    }
};

inline DerivativeField estimate_derivatives(const TrajectoryDataset& ds,
                                            std::span<const std::size_t> traj_ids,
                                            std::size_t k) {
    const std::size_t m = ds.grid.size;
    if (k == 0) throw std::invalid_argument("estimate_derivatives: k must be >= 1");
    if (2 * k + 2 >= m)
        throw std::invalid_argument("estimate_derivatives: stencil does not fit (need 2k+2 < m)");
    DerivativeField field;
    field.traj_count = traj_ids.size();
    field.interior_begin = k;
    field.interior_count = m - 2 * k - 1;
    field.dim = ds.ambient_dim;
    field.traj_ids.assign(traj_ids.begin(), traj_ids.end());
    field.weights = step2_weights(k);
    field.estimates.assign(field.traj_count * field.interior_count * field.dim, 0.0);

    const double dt = ds.grid.step();
    for (std::size_t it = 0; it < traj_ids.size(); ++it) {
        const std::size_t i = traj_ids[it];
        for (std::size_t lj = 0; lj < field.interior_count; ++lj) {
            const std::size_t j = field.interior_begin + lj;
            double* out = field.estimates.data() + (it * field.interior_count + lj) * field.dim;
            for (std::size_t l = 1; l <= k; ++l) {
                const auto fwd = ds.observation(i, j + l);
                const auto bwd = ds.observation(i, j - l);
                // On the regular grid t_{j+l} - t_{j-l} = 2 l T / m exactly.
                const double scale = field.weights[l - 1] / (2.0 * static_cast<double>(l) * dt);
                for (std::size_t c = 0; c < field.dim; ++c)
                    out[c] += scale * (fwd[c] - bwd[c]);
            }
        }
    }
    return field;
}

/// Which trajectories feed Step 1 versus Steps 2-3.  `split` keeps the
/// halves independent; `none` runs every step on the full dataset.
enum class SplitPolicy { split, none };

/// Everything needed to answer queries f_hat(x): the dataset, the Step-1
/// denoised position cache over the search set, and the derivative field.
/// Immutable once built; concurrent queries are safe.
struct VectorFieldModel {
    TrajectoryDataset dataset;
    SplitPolicy policy = SplitPolicy::split;
    CalibrationParams params;
    std::vector<std::size_t> flow_indices;
    std::vector<std::size_t> search_indices;
    std::size_t interior_begin = 0;
    std::size_t interior_count = 0;
    std::vector<double> cache; // |search| * interior_count * D denoised positions
    DerivativeField derivatives;

    std::size_t dim() const { return dataset.ambient_dim; }

    std::span<const double> cached_position(std::size_t local_traj, std::size_t local_j) const {
        return {cache.data() + (local_traj * interior_count + local_j) * dataset.ambient_dim,
                dataset.ambient_dim};
    }
};

inline void validate_params(const CalibrationParams& params, std::size_t flow_count,
                            std::size_t search_count, std::size_t m) {
    if (params.k1 < 1 || params.k1 > flow_count)
        throw std::invalid_argument("calibration: k1 out of range [1, " +
                                    std::to_string(flow_count) + "]");
    if (params.k2 < 1 || params.k2 > m)
        throw std::invalid_argument("calibration: k2 out of range [1, m]");
    if (params.r < 1 || params.r > search_count)
        throw std::invalid_argument("calibration: r out of range [1, " +
                                    std::to_string(search_count) + "]");
    if (params.k < 1 || 2 * params.k + 2 >= m)
        throw std::invalid_argument("calibration: k violates 2k + 2 < m");
}

inline VectorFieldModel build_model(const TrajectoryDataset& ds, const CalibrationParams& params,
                                    SplitPolicy policy = SplitPolicy::split,
                                    unsigned workers = 1) {
    VectorFieldModel model;
    model.dataset = ds;
    model.policy = policy;
    model.params = params;
    if (policy == SplitPolicy::split) {
        auto split = split_dataset(ds);
        model.flow_indices = std::move(split.first_half);
        model.search_indices = std::move(split.second_half);
    } else {
        model.flow_indices.resize(ds.n_trajectories);
        model.search_indices.resize(ds.n_trajectories);
        std::iota(model.flow_indices.begin(), model.flow_indices.end(), std::size_t{0});
        std::iota(model.search_indices.begin(), model.search_indices.end(), std::size_t{0});
    }
    validate_params(params, model.flow_indices.size(), model.search_indices.size(), ds.grid.size);

    const std::size_t m = ds.grid.size;
    const std::size_t dim = ds.ambient_dim;
    model.interior_begin = params.k;
    model.interior_count = m - 2 * params.k - 1;
    model.cache.assign(model.search_indices.size() * model.interior_count * dim, 0.0);

    // Time windows are query-independent; compute them once per interior j.
    std::vector<std::vector<std::size_t>> windows(model.interior_count);
    for (std::size_t lj = 0; lj < model.interior_count; ++lj)
        windows[lj] = knn_times(ds.grid.time(model.interior_begin + lj), ds.grid, params.k2).indices;

    const auto flow_points = detail::gather_initials(ds, model.flow_indices);
    const NeighborIndex flow_index(flow_points, model.flow_indices.size(), dim);

    parallel_for(model.search_indices.size(), workers, [&](std::size_t it) {
        const std::size_t i = model.search_indices[it];
        const auto nn = flow_index.query(ds.initial(i), params.k1);
        std::vector<std::size_t> traj_ids(params.k1);
        for (std::size_t p = 0; p < params.k1; ++p)
            traj_ids[p] = model.flow_indices[nn.indices[p]];
        for (std::size_t lj = 0; lj < model.interior_count; ++lj) {
            std::span<double> out{
                model.cache.data() + (it * model.interior_count + lj) * dim, dim};
            detail::average_observations(ds, traj_ids, windows[lj], out);
        }
    });

    model.derivatives = estimate_derivatives(ds, model.search_indices, params.k);
    return model;
}

struct QueryDiagnostics {
    std::vector<double> estimate;
    double nearest_distance = 0.0; // to the closest cached position; large
                                   // values flag extrapolation outside the envelope
};

namespace detail {

struct TrajectoryHit {
    double d2;
    std::size_t local_traj;
    std::size_t local_j;

    friend bool operator<(const TrajectoryHit& a, const TrajectoryHit& b) {
        return a.d2 < b.d2 || (a.d2 == b.d2 && a.local_traj < b.local_traj);
    }
};

} // namespace detail

/// Step-3 query: greedily select the r distinct search trajectories whose
/// cached positions are nearest to x (ties by ascending trajectory, then
/// time, index) and average their derivative estimates at the minimizing
/// time indices.
inline QueryDiagnostics query_with_diagnostics(const VectorFieldModel& model,
                                               std::span<const double> x) {
    const std::size_t dim = model.dim();
    if (x.size() != dim) throw std::invalid_argument("query: dimension mismatch");
    const std::size_t traj_count = model.search_indices.size();
    const std::size_t interior = model.interior_count;

    std::vector<detail::TrajectoryHit> hits(traj_count);
    for (std::size_t it = 0; it < traj_count; ++it) {
        const double* base = model.cache.data() + it * interior * dim;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t lj = 0; lj < interior; ++lj) {
            const double d2 = detail::sq_dist(x, base + lj * dim, dim);
            if (d2 < best) { // strict: earlier time index wins ties
                best = d2;
                best_j = lj;
            }
        }
        hits[it] = {best, it, best_j};
    }
    const std::size_t r = model.params.r;
    std::nth_element(hits.begin(), hits.begin() + (r - 1), hits.end());
    hits.resize(r);
    std::sort(hits.begin(), hits.end());

    QueryDiagnostics result;
    result.estimate.assign(dim, 0.0);
    for (const auto& hit : hits) {
        const auto est = model.derivatives.estimate(hit.local_traj, hit.local_j);
        for (std::size_t c = 0; c < dim; ++c) result.estimate[c] += est[c];
    }
    for (std::size_t c = 0; c < dim; ++c) result.estimate[c] /= static_cast<double>(r);
    result.nearest_distance = std::sqrt(hits.front().d2);
    return result;
}

inline std::vector<double> query(const VectorFieldModel& model, std::span<const double> x) {
    return query_with_diagnostics(model, x).estimate;
}

/// Batch query: count points of dimension D, flat in and flat out.
inline std::vector<double> query_batch(const VectorFieldModel& model,
                                       std::span<const double> points, std::size_t count,
                                       unsigned workers = 1) {
    const std::size_t dim = model.dim();
    if (points.size() != count * dim)
        throw std::invalid_argument("query_batch: point buffer shape mismatch");
    std::vector<double> out(count * dim);
    parallel_for(count, workers, [&](std::size_t p) {
        const auto est = query(model, points.subspan(p * dim, dim));
        std::copy(est.begin(), est.end(), out.begin() + p * dim);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Model persistence: dataset container extended with the cache and
// derivative arrays, so loaded models answer queries identically.

inline nlohmann::json model_to_json(const VectorFieldModel& model) {
    nlohmann::json j = dataset_to_json(model.dataset);
    j["format"] = "odefield-model";
    j["policy"] = model.policy == SplitPolicy::split ? "split" : "none";
    j["calibration"] = {{"k1", model.params.k1}, {"k2", model.params.k2},
                        {"k", model.params.k},   {"r", model.params.r},
                        {"b", model.params.b},
                        {"mode", model.params.mode == CalibrationMode::pointwise
                                     ? "pointwise"
                                     : "supnorm"}};
    j["cache"] = model.cache;
    j["derivative_estimates"] = model.derivatives.estimates;
    return j;
}

inline VectorFieldModel model_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "odefield-model")
        throw std::invalid_argument("model_from_json: not an odefield model container");
    nlohmann::json dsj = j;
    dsj["format"] = "odefield-dataset";
    const TrajectoryDataset ds = dataset_from_json(dsj);

    CalibrationParams params;
    const auto& cal = j.at("calibration");
    params.k1 = cal.at("k1").get<std::size_t>();
    params.k2 = cal.at("k2").get<std::size_t>();
    params.k = cal.at("k").get<std::size_t>();
    params.r = cal.at("r").get<std::size_t>();
    params.b = cal.at("b").get<double>();
    params.mode = cal.at("mode").get<std::string>() == "supnorm" ? CalibrationMode::supnorm
                                                                 : CalibrationMode::pointwise;
    const SplitPolicy policy =
        j.at("policy").get<std::string>() == "none" ? SplitPolicy::none : SplitPolicy::split;

    VectorFieldModel model;
    model.dataset = ds;
    model.policy = policy;
    model.params = params;
    if (policy == SplitPolicy::split) {
        auto split = split_dataset(ds);
        model.flow_indices = std::move(split.first_half);
        model.search_indices = std::move(split.second_half);
    } else {
        model.flow_indices.resize(ds.n_trajectories);
        model.search_indices.resize(ds.n_trajectories);
        std::iota(model.flow_indices.begin(), model.flow_indices.end(), std::size_t{0});
        std::iota(model.search_indices.begin(), model.search_indices.end(), std::size_t{0});
    }
    validate_params(params, model.flow_indices.size(), model.search_indices.size(), ds.grid.size);
    model.interior_begin = params.k;
    model.interior_count = ds.grid.size - 2 * params.k - 1;

    model.cache = j.at("cache").get<std::vector<double>>();
    if (model.cache.size() != model.search_indices.size() * model.interior_count * ds.ambient_dim)
        throw std::invalid_argument("model_from_json: cache size mismatch");

    model.derivatives.traj_count = model.search_indices.size();
    model.derivatives.interior_begin = model.interior_begin;
    model.derivatives.interior_count = model.interior_count;
    model.derivatives.dim = ds.ambient_dim;
    model.derivatives.traj_ids = model.search_indices;
    model.derivatives.weights = step2_weights(params.k);
    model.derivatives.estimates = j.at("derivative_estimates").get<std::vector<double>>();
    if (model.derivatives.estimates.size() != model.cache.size())
        throw std::invalid_argument("model_from_json: derivative array size mismatch");
    return model;
}

inline void save_model(const std::filesystem::path& path, const VectorFieldModel& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << model_to_json(model) << '\n';
}

inline VectorFieldModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

} // namespace odefield
