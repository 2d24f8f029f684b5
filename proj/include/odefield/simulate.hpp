#pragma once

/// Benchmark vector fields, high-accuracy flow integration, initial-condition
/// sampling, and Gaussian observation noise.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "odefield/core.hpp"
#include "odefield/rng.hpp"

namespace odefield {

/// An autonomous vector field f: R^D -> R^D.  Evaluators are pure and
/// deterministic: the same x always yields bitwise-identical f(x).
struct VectorField {
    std::size_t ambient_dim = 0;
    std::function<void(std::span<const double>, std::span<double>)> eval;
    std::optional<double> lipschitz_bound; // L, when known
    std::optional<double> sup_bound;       // M, when known
    std::string name;

    std::vector<double> operator()(std::span<const double> x) const {
        std::vector<double> out(ambient_dim);
        eval(x, out);
        return out;
    }
};

/// Van der Pol oscillator:
///   x1' = x2
///   x2' = (1 - x1^2) x2 / 2 - x1
inline VectorField vanderpol_field() {
    VectorField f;
    f.ambient_dim = 2;
    f.name = "vanderpol";
    f.eval = [](std::span<const double> x, std::span<double> out) {
        out[0] = x[1];
        out[1] = 0.5 * (1.0 - x[0] * x[0]) * x[1] - x[0];
    };
    return f;
}

/// Lotka-Volterra predator-prey model:
///   x1' = x1/2 - x1 x2
///   x2' = x1 x2 - x2/2
inline VectorField lotka_volterra_field() {
    VectorField f;
    f.ambient_dim = 2;
    f.name = "lotka-volterra";
    f.eval = [](std::span<const double> x, std::span<double> out) {
        out[0] = 0.5 * x[0] - x[0] * x[1];
        out[1] = x[0] * x[1] - 0.5 * x[1];
    };
    return f;
}

/// Higher-dimensional Van der Pol: consecutive coordinate pairs (2p-1, 2p)
/// each form an independent 2-dimensional Van der Pol subsystem.
inline VectorField highdim_vdp_field(std::size_t dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("highdim_vdp_field: dimension must be even and >= 2");
    VectorField f;
    f.ambient_dim = dim;
    f.name = "vdp-highdim:" + std::to_string(dim);
    f.eval = [dim](std::span<const double> x, std::span<double> out) {
        for (std::size_t p = 0; p < dim; p += 2) {
            out[p] = x[p + 1];
            out[p + 1] = 0.5 * (1.0 - x[p] * x[p]) * x[p + 1] - x[p];
        }
    };
    return f;
}

/// Constant field f(x) = c; flows are affine in t, so the full pipeline has
/// closed-form behavior.  Used heavily by tests and sanity configs.
inline VectorField constant_field(std::vector<double> c) {
    VectorField f;
    f.ambient_dim = c.size();
    f.name = "constant";
    f.sup_bound = 0.0;
    for (const double v : c) f.sup_bound = std::max(*f.sup_bound, std::abs(v));
    f.lipschitz_bound = 0.0;
    f.eval = [c = std::move(c)](std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = c[i];
    };
    return f;
}

/// CLI-facing registry.  Accepted keys:
///   "vanderpol", "lotka-volterra", "vdp-highdim:D", "constant:D:value"
inline VectorField field_from_name(std::string_view spec) {
    if (spec == "vanderpol") return vanderpol_field();
    if (spec == "lotka-volterra") return lotka_volterra_field();
    if (spec.starts_with("vdp-highdim:")) {
        const std::string arg(spec.substr(12));
        const long dim = std::stol(arg);
        if (dim < 2) throw std::invalid_argument("vdp-highdim: bad dimension " + arg);
        return highdim_vdp_field(static_cast<std::size_t>(dim));
    }
    if (spec.starts_with("constant:")) {
        const std::string rest(spec.substr(9));
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("constant field spec must be constant:D:value");
        const long dim = std::stol(rest.substr(0, colon));
        const double value = std::stod(rest.substr(colon + 1));
        if (dim < 1) throw std::invalid_argument("constant field: bad dimension");
        return constant_field(std::vector<double>(static_cast<std::size_t>(dim), value));
    }
    throw std::invalid_argument("unknown vector field: " + std::string(spec));
}

// ---------------------------------------------------------------------------
// Initial-condition sampling

/// Uniform sampler on the segment [p, q]: each draw is p + u (q - p) with a
/// single u ~ U(0,1), so every coordinate shares the same convex combination.
struct SegmentSampler {
    std::vector<double> p;
    std::vector<double> q;

    std::size_t ambient_dim() const { return p.size(); }
};

inline SegmentSampler segment_sampler(std::vector<double> p, std::vector<double> q) {
    if (p.size() != q.size() || p.empty())
        throw std::invalid_argument("segment_sampler: endpoints must share a nonzero dimension");
    return SegmentSampler{std::move(p), std::move(q)};
}

/// n i.i.d. draws on the segment, returned as an n*D row-major block.
/// Deterministic given (sampler, seed).
inline std::vector<double> sample_initials(const SegmentSampler& sampler, std::size_t n,
                                           std::uint64_t seed) {
    const std::size_t dim = sampler.ambient_dim();
    std::vector<double> out(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = uniform_draw(seed, stream::sampler, i);
        for (std::size_t c = 0; c < dim; ++c)
            out[i * dim + c] = sampler.p[c] + u * (sampler.q[c] - sampler.p[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Flow integration

/// Fixed-step classical 4th-order Runge-Kutta.  Fixed step keeps runs
/// bitwise reproducible; adaptive control would not.
struct IntegratorConfig {
    std::size_t substeps_per_interval = 20;
};

namespace detail {

inline void rk4_step(const VectorField& f, std::vector<double>& state, double h,
                     std::vector<double>& s1, std::vector<double>& s2,
                     std::vector<double>& s3, std::vector<double>& s4,
                     std::vector<double>& tmp) {
    const std::size_t dim = state.size();
    f.eval(state, s1);
    for (std::size_t c = 0; c < dim; ++c) tmp[c] = state[c] + 0.5 * h * s1[c];
    f.eval(tmp, s2);
    for (std::size_t c = 0; c < dim; ++c) tmp[c] = state[c] + 0.5 * h * s2[c];
    f.eval(tmp, s3);
    for (std::size_t c = 0; c < dim; ++c) tmp[c] = state[c] + h * s3[c];
    f.eval(tmp, s4);
    for (std::size_t c = 0; c < dim; ++c)
        state[c] += (h / 6.0) * (s1[c] + 2.0 * s2[c] + 2.0 * s3[c] + s4[c]);
}

inline void check_finite(std::span<const double> state, double time) {
    for (const double v : state)
        if (!std::isfinite(v))
            throw integration_diverged_error(
                "integration diverged at t = " + std::to_string(time), time);
}

} // namespace detail

/// phi(x0, t_j) for j = 1..m, as an m*D block.  Uses substeps * m equal RK4
/// steps over [0, T].  Throws integration_diverged_error on non-finite state.
inline std::vector<double> integrate_flow(const VectorField& f, std::span<const double> x0,
                                          const TemporalGrid& grid,
                                          const IntegratorConfig& cfg = {}) {
    if (cfg.substeps_per_interval == 0)
        throw std::invalid_argument("integrate_flow: substeps must be >= 1");
    if (x0.size() != f.ambient_dim)
        throw std::invalid_argument("integrate_flow: dimension mismatch");
    const std::size_t dim = f.ambient_dim;
    const std::size_t m = grid.size;
    const double h = grid.step() / static_cast<double>(cfg.substeps_per_interval);

    std::vector<double> state(x0.begin(), x0.end());
    std::vector<double> s1(dim), s2(dim), s3(dim), s4(dim), tmp(dim);
    std::vector<double> out(m * dim);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t s = 0; s < cfg.substeps_per_interval; ++s)
            detail::rk4_step(f, state, h, s1, s2, s3, s4, tmp);
        detail::check_finite(state, grid.time(j));
        for (std::size_t c = 0; c < dim; ++c) out[j * dim + c] = state[c];
    }
    return out;
}

/// phi(x0, t) at arbitrary ascending times, for envelope sampling and
/// reference solutions.  step_size is an upper bound on the RK4 step.
inline std::vector<double> flow_at_times(const VectorField& f, std::span<const double> x0,
                                         std::span<const double> ascending_times,
                                         double step_size) {
    if (!(step_size > 0.0)) throw std::invalid_argument("flow_at_times: step must be positive");
    const std::size_t dim = f.ambient_dim;
    std::vector<double> state(x0.begin(), x0.end());
    std::vector<double> s1(dim), s2(dim), s3(dim), s4(dim), tmp(dim);
    std::vector<double> out(ascending_times.size() * dim);
    double t = 0.0;
    for (std::size_t idx = 0; idx < ascending_times.size(); ++idx) {
        const double target = ascending_times[idx];
        if (target < t)
            throw std::invalid_argument("flow_at_times: times must be ascending and >= 0");
        if (target > t) {
            const auto steps =
                static_cast<std::size_t>(std::ceil((target - t) / step_size - 1e-12));
            const double h = (target - t) / static_cast<double>(std::max<std::size_t>(steps, 1));
            for (std::size_t s = 0; s < std::max<std::size_t>(steps, 1); ++s)
                detail::rk4_step(f, state, h, s1, s2, s3, s4, tmp);
            t = target;
        }
        detail::check_finite(state, t);
        for (std::size_t c = 0; c < dim; ++c) out[idx * dim + c] = state[c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observation noise

/// Y[i][j] = traj[i][j] + sigma * g(i,j,c) with g i.i.d. standard normal,
/// each draw keyed by (seed, i, j, component).  sigma = 0 returns the input
/// bitwise unchanged.
inline std::vector<double> add_noise(std::vector<double> trajectories, std::size_t n,
                                     std::size_t m, std::size_t dim, double sigma,
                                     std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be nonnegative");
    if (trajectories.size() != n * m * dim)
        throw std::invalid_argument("add_noise: shape mismatch");
    if (sigma == 0.0) return trajectories;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < dim; ++c)
                trajectories[(i * m + j) * dim + c] +=
                    sigma * normal_draw(seed, stream::noise, i, j, c);
    return trajectories;
}

// ---------------------------------------------------------------------------
// Dataset generation

inline TrajectoryDataset generate_dataset(const VectorField& f, const SegmentSampler& sampler,
                                          std::size_t n, const TemporalGrid& grid, double sigma,
                                          const IntegratorConfig& cfg, std::uint64_t seed) {
    if (sampler.ambient_dim() != f.ambient_dim)
        throw std::invalid_argument("generate_dataset: sampler/field dimension mismatch");
    TrajectoryDataset ds;
    ds.ambient_dim = f.ambient_dim;
    ds.n_trajectories = n;
    ds.grid = grid;
    ds.sigma = sigma;
    ds.seed = seed;
    ds.initial_points = sample_initials(sampler, n, seed);

    const std::size_t dim = f.ambient_dim;
    std::vector<double> flows(n * grid.size * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto traj = integrate_flow(f, ds.initial(i), grid, cfg);
        std::copy(traj.begin(), traj.end(), flows.begin() + i * grid.size * dim);
    }
    ds.observations = add_noise(std::move(flows), n, grid.size, dim, sigma, seed);
    return ds;
}

} // namespace odefield
