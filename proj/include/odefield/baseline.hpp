#pragma once

/// SINDy-style baseline: a polynomial feature library plus sequential
/// threshold least squares (STLSQ), with threshold selection over a grid by
/// minimizing the normalized error against a supplied truth oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odefield/core.hpp"
#include "odefield/csvio.hpp"
#include "odefield/estimator.hpp"
#include "odefield/linalg.hpp"
#include "odefield/metrics.hpp"
#include "odefield/parallel.hpp"

namespace odefield {

inline std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::size_t result = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        result = result * (n - k + i) / i;
    }
    return result;
}

/// Monomial basis x^alpha for |alpha| <= degree, in graded order with the
/// constant term first; within each degree, exponents of earlier coordinates
/// sort first (1, x1, x2, x1^2, x1 x2, x2^2, ...).
struct PolynomialLibrary {
    std::size_t ambient_dim = 0;
    std::size_t degree = 0;
    std::vector<std::vector<unsigned>> exponents;

    std::size_t size() const { return exponents.size(); }
};

namespace detail {

inline void enumerate_degree(std::size_t dim, unsigned remaining, std::size_t coord,
                             std::vector<unsigned>& current,
                             std::vector<std::vector<unsigned>>& out) {
    if (coord + 1 == dim) {
        current[coord] = remaining;
        out.push_back(current);
        return;
    }
    for (unsigned e = remaining + 1; e-- > 0;) {
        current[coord] = e;
        enumerate_degree(dim, remaining - e, coord + 1, current, out);
    }
}

} // namespace detail

inline PolynomialLibrary make_polynomial_library(std::size_t dim, std::size_t degree) {
    if (dim == 0) throw std::invalid_argument("polynomial library: dimension must be positive");
    PolynomialLibrary lib;
    lib.ambient_dim = dim;
    lib.degree = degree;
    std::vector<unsigned> current(dim, 0);
    for (unsigned d = 0; d <= degree; ++d)
        detail::enumerate_degree(dim, d, 0, current, lib.exponents);
    return lib;
}

/// Feature matrix: one row per point, one column per monomial, row-major.
inline std::vector<double> library_features(std::span<const double> points, std::size_t count,
                                            const PolynomialLibrary& lib) {
    const std::size_t dim = lib.ambient_dim;
    if (points.size() != count * dim)
        throw std::invalid_argument("library_features: point buffer shape mismatch");
    const std::size_t terms = lib.size();

    // Sparse exponent lists plus per-point power tables keep the cost per
    // monomial proportional to its number of active variables.
    std::vector<std::vector<std::pair<std::size_t, unsigned>>> active(terms);
    for (std::size_t q = 0; q < terms; ++q)
        for (std::size_t c = 0; c < dim; ++c)
            if (lib.exponents[q][c] > 0) active[q].emplace_back(c, lib.exponents[q][c]);

    const std::size_t pcols = lib.degree + 1;
    std::vector<double> powers(dim * pcols);
    std::vector<double> features(count * terms);
    for (std::size_t p = 0; p < count; ++p) {
        const double* x = points.data() + p * dim;
        for (std::size_t c = 0; c < dim; ++c) {
            powers[c * pcols] = 1.0;
            for (std::size_t e = 1; e < pcols; ++e)
                powers[c * pcols + e] = powers[c * pcols + e - 1] * x[c];
        }
        double* row = features.data() + p * terms;
        for (std::size_t q = 0; q < terms; ++q) {
            double value = 1.0;
            for (const auto& [c, e] : active[q]) value *= powers[c * pcols + e];
            row[q] = value;
        }
    }
    return features;
}

/// Result of an STLSQ fit.  Coefficients are stored term-major:
/// coefficient(q, s) = coefficients[q * target_dim + s].
struct SparseModel {
    std::size_t n_terms = 0;
    std::size_t target_dim = 0;
    std::vector<double> coefficients;
    double threshold = 0.0;
    std::size_t iterations = 0;
    std::vector<bool> eliminated; // per target dimension: all columns zeroed

    double coefficient(std::size_t term, std::size_t target) const {
        return coefficients[term * target_dim + target];
    }
};

namespace detail {

/// Above this library size, active-set least squares runs on precomputed
/// normal equations (Gram submatrices + Cholesky with the ridge fallback)
/// instead of per-group Householder QR.  Thresholding gives every target
/// dimension its own active set, so at large sizes the QR route degenerates
/// into target_dim separate full factorizations per iteration.
inline constexpr std::size_t gram_threshold = 256;

} // namespace detail

/// Precomputed normal equations theta^T theta and theta^T targets, shared
/// across a grid of STLSQ fits on the same design.
struct GramSystem {
    std::size_t cols = 0, target_dim = 0;
    std::vector<double> gram;
    std::vector<double> rhs;
};

namespace detail {

inline GramSystem build_gram(std::span<const double> theta, std::size_t rows, std::size_t cols,
                             std::span<const double> targets, std::size_t target_dim) {
    GramSystem cache;
    cache.cols = cols;
    cache.target_dim = target_dim;
    cache.gram.assign(cols * cols, 0.0);
    cache.rhs.assign(cols * target_dim, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = theta.data() + i * cols;
        const double* t = targets.data() + i * target_dim;
        for (std::size_t a = 0; a < cols; ++a) {
            const double ra = row[a];
            if (ra == 0.0) continue;
            double* g = cache.gram.data() + a * cols;
            for (std::size_t b = a; b < cols; ++b) g[b] += ra * row[b];
            double* r = cache.rhs.data() + a * target_dim;
            for (std::size_t s = 0; s < target_dim; ++s) r[s] += ra * t[s];
        }
    }
    for (std::size_t a = 0; a < cols; ++a)
        for (std::size_t b = 0; b < a; ++b) cache.gram[a * cols + b] = cache.gram[b * cols + a];
    return cache;
}

inline void solve_from_gram(const GramSystem& cache, const std::vector<std::size_t>& cols_used,
                            const std::vector<std::size_t>& dims, std::size_t target_dim,
                            std::vector<double>& coef, double ridge = 1e-10) {
    const std::size_t na = cols_used.size();
    ColMatrix G(na, na);
    // symmetric gather; transposed write keeps both sides contiguous
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < na; ++b)
            G(b, a) = cache.gram[cols_used[a] * cache.cols + cols_used[b]];
    ColMatrix B(na, dims.size());
    for (std::size_t d = 0; d < dims.size(); ++d)
        for (std::size_t a = 0; a < na; ++a)
            B(a, d) = cache.rhs[cols_used[a] * target_dim + dims[d]];
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        ColMatrix Gj = G;
        if (jitter > 0.0)
            for (std::size_t a = 0; a < na; ++a) Gj(a, a) += jitter;
        ColMatrix X = B;
        try {
            cholesky_solve(Gj, X);
            for (std::size_t d = 0; d < dims.size(); ++d)
                for (std::size_t a = 0; a < na; ++a)
                    coef[cols_used[a] * target_dim + dims[d]] = X(a, d);
            return;
        } catch (const std::runtime_error&) {
            jitter = jitter == 0.0 ? ridge : jitter * 100.0;
        }
    }
    throw std::runtime_error("stlsq: active-set normal equations not solvable");
}

/// Least-squares coefficients for every target, restricted per target to its
/// active column set.  Targets sharing an active set share one factorization.
inline void refit_active(std::span<const double> theta, std::size_t rows, std::size_t cols,
                         std::span<const double> targets, std::size_t target_dim,
                         const std::vector<std::vector<std::size_t>>& active,
                         std::vector<double>& coef, const GramSystem* gram, unsigned workers) {
    std::map<std::vector<std::size_t>, std::vector<std::size_t>> grouped;
    for (std::size_t s = 0; s < target_dim; ++s)
        if (!active[s].empty()) grouped[active[s]].push_back(s);
    std::vector<std::pair<const std::vector<std::size_t>*, const std::vector<std::size_t>*>> groups;
    groups.reserve(grouped.size());
    for (const auto& [cols_used, dims] : grouped) groups.emplace_back(&cols_used, &dims);

    std::fill(coef.begin(), coef.end(), 0.0);
    // Groups write disjoint coefficient columns, so they solve in parallel.
    parallel_for(groups.size(), workers, [&](std::size_t g) {
        const auto& cols_used = *groups[g].first;
        const auto& dims = *groups[g].second;
        if (gram) {
            solve_from_gram(*gram, cols_used, dims, target_dim, coef);
            return;
        }
        ColMatrix A(rows, cols_used.size());
        for (std::size_t j = 0; j < cols_used.size(); ++j) {
            double* cj = A.col(j);
            for (std::size_t i = 0; i < rows; ++i) cj[i] = theta[i * cols + cols_used[j]];
        }
        ColMatrix B(rows, dims.size());
        for (std::size_t d = 0; d < dims.size(); ++d) {
            double* bd = B.col(d);
            for (std::size_t i = 0; i < rows; ++i) bd[i] = targets[i * target_dim + dims[d]];
        }
        const ColMatrix X = solve_least_squares(std::move(A), std::move(B));
        for (std::size_t d = 0; d < dims.size(); ++d)
            for (std::size_t j = 0; j < cols_used.size(); ++j)
                coef[cols_used[j] * target_dim + dims[d]] = X(j, d);
    });
}

} // namespace detail

/// Sequential threshold least squares.  Iterates {least squares on active
/// columns; zero entries with |coef| < lambda} until the active sets are
/// stable or max_iters is reached.  A target whose columns are all
/// eliminated yields an all-zero column and a diagnostic flag, not an error.
///
/// `initial` optionally supplies the full-library least-squares solution
/// (term-major, cols x target_dim) so grids of thresholds can share it;
/// `gram` optionally supplies precomputed normal equations for the same
/// purpose.  Large libraries without a supplied gram build one internally.
inline SparseModel stlsq(std::span<const double> theta, std::size_t rows, std::size_t cols,
                         std::span<const double> targets, std::size_t target_dim, double lambda,
                         std::size_t max_iters = 20, std::span<const double> initial = {},
                         const GramSystem* gram = nullptr, unsigned workers = 1) {
    if (lambda < 0.0) throw std::invalid_argument("stlsq: lambda must be nonnegative");
    if (max_iters == 0) throw std::invalid_argument("stlsq: max_iters must be >= 1");
    if (theta.size() != rows * cols || targets.size() != rows * target_dim)
        throw std::invalid_argument("stlsq: matrix shape mismatch");

    GramSystem local_gram;
    if (!gram && cols > detail::gram_threshold) {
        local_gram = detail::build_gram(theta, rows, cols, targets, target_dim);
        gram = &local_gram;
    }

    SparseModel model;
    model.n_terms = cols;
    model.target_dim = target_dim;
    model.threshold = lambda;
    model.eliminated.assign(target_dim, false);
    model.coefficients.assign(cols * target_dim, 0.0);

    // Iteration 1: least squares on the full library.
    if (initial.empty()) {
        std::vector<std::vector<std::size_t>> full(target_dim);
        std::vector<std::size_t> all(cols);
        std::iota(all.begin(), all.end(), std::size_t{0});
        for (auto& a : full) a = all;
        detail::refit_active(theta, rows, cols, targets, target_dim, full, model.coefficients,
                             gram, workers);
    } else {
        if (initial.size() != cols * target_dim)
            throw std::invalid_argument("stlsq: initial solution shape mismatch");
        std::copy(initial.begin(), initial.end(), model.coefficients.begin());
    }

    std::vector<std::vector<std::size_t>> active(target_dim);
    {
        std::vector<std::size_t> all(cols);
        std::iota(all.begin(), all.end(), std::size_t{0});
        for (auto& a : active) a = all;
    }

    model.iterations = 1;
    for (;;) {
        // Threshold: shrink each target's active set, zeroing small entries.
        bool changed = false;
        for (std::size_t s = 0; s < target_dim; ++s) {
            std::vector<std::size_t> kept;
            kept.reserve(active[s].size());
            for (const std::size_t q : active[s]) {
                if (std::abs(model.coefficients[q * target_dim + s]) >= lambda) {
                    kept.push_back(q);
                } else {
                    model.coefficients[q * target_dim + s] = 0.0;
                    changed = true;
                }
            }
            active[s] = std::move(kept);
            if (active[s].empty()) model.eliminated[s] = true;
        }
        if (!changed || model.iterations >= max_iters) break;
        detail::refit_active(theta, rows, cols, targets, target_dim, active, model.coefficients,
                             gram, workers);
        ++model.iterations;
    }
    return model;
}

/// Evaluate the fitted field at one point.
inline std::vector<double> eval_sparse_field(const SparseModel& model,
                                             const PolynomialLibrary& lib,
                                             std::span<const double> x) {
    const auto features = library_features(x, 1, lib);
    std::vector<double> out(model.target_dim, 0.0);
    for (std::size_t q = 0; q < model.n_terms; ++q) {
        const double f = features[q];
        if (f == 0.0) continue;
        for (std::size_t s = 0; s < model.target_dim; ++s)
            out[s] += f * model.coefficient(q, s);
    }
    return out;
}

/// Batch evaluation: count points in, count x target_dim out.
inline std::vector<double> eval_sparse_field_batch(const SparseModel& model,
                                                   const PolynomialLibrary& lib,
                                                   std::span<const double> points,
                                                   std::size_t count) {
    const auto features = library_features(points, count, lib);
    std::vector<double> out(count * model.target_dim, 0.0);
    for (std::size_t p = 0; p < count; ++p) {
        const double* row = features.data() + p * model.n_terms;
        double* o = out.data() + p * model.target_dim;
        for (std::size_t q = 0; q < model.n_terms; ++q) {
            const double f = row[q];
            if (f == 0.0) continue;
            for (std::size_t s = 0; s < model.target_dim; ++s)
                o[s] += f * model.coefficient(q, s);
        }
    }
    return out;
}

/// A SINDy fit: the model chosen from the threshold grid together with the
/// library it was built on and the selection error it achieved.
struct SindyFit {
    SparseModel model;
    PolynomialLibrary library;
    double threshold = 0.0;
    double mean_error = 0.0;
    std::size_t grid_index = 0;
};

/// Fit SINDy on a dataset: the design matrix holds polynomial features of
/// the observed (noisy) states at the derivative field's interior indices;
/// targets are the finite-difference derivative estimates computed without
/// splitting.  The threshold is selected from the grid by minimizing the
/// mean normalized error against the true field on the evaluation points —
/// an oracle selection, which is why the envelope truths are an explicit
/// argument.
inline SindyFit sindy_fit(const TrajectoryDataset& ds, const DerivativeField& derivs,
                          std::size_t degree, std::span<const double> thresholds,
                          std::span<const EnvelopePoint> eval_points,
                          double epsilon_floor = 1e-8, std::size_t max_iters = 20,
                          unsigned workers = 1) {
    if (thresholds.empty()) throw std::invalid_argument("sindy_fit: threshold grid is empty");
    const std::size_t dim = ds.ambient_dim;
    const std::size_t rows = derivs.traj_count * derivs.interior_count;

    std::vector<double> positions(rows * dim);
    for (std::size_t it = 0; it < derivs.traj_count; ++it) {
        const std::size_t i = derivs.traj_ids[it];
        for (std::size_t lj = 0; lj < derivs.interior_count; ++lj) {
            const auto obs = ds.observation(i, derivs.interior_begin + lj);
            std::copy(obs.begin(), obs.end(),
                      positions.begin() + (it * derivs.interior_count + lj) * dim);
        }
    }

    SindyFit fit;
    fit.library = make_polynomial_library(dim, degree);
    const std::size_t terms = fit.library.size();
    const auto theta = library_features(positions, rows, fit.library);

    // The full-library least-squares solution and the normal equations are
    // threshold-independent; compute them once and share across the grid.
    GramSystem gram;
    const GramSystem* gram_ptr = nullptr;
    if (terms > detail::gram_threshold) {
        gram = detail::build_gram(theta, rows, terms, derivs.estimates, dim);
        gram_ptr = &gram;
    }
    const auto initial =
        stlsq(theta, rows, terms, derivs.estimates, dim, 0.0, 1, {}, gram_ptr, workers)
            .coefficients;

    const auto locations = envelope_locations(eval_points, dim);
    const auto truths = envelope_truths(eval_points, dim);

    bool have_best = false;
    for (std::size_t g = 0; g < thresholds.size(); ++g) {
        auto model = stlsq(theta, rows, terms, derivs.estimates, dim, thresholds[g], max_iters,
                           initial, gram_ptr, workers);
        const auto estimates =
            eval_sparse_field_batch(model, fit.library, locations, eval_points.size());
        const auto report =
            normalized_error(estimates, truths, eval_points.size(), dim, epsilon_floor);
        if (!have_best || report.mean < fit.mean_error) {
            have_best = true;
            fit.model = std::move(model);
            fit.threshold = thresholds[g];
            fit.mean_error = report.mean;
            fit.grid_index = g;
        }
    }
    return fit;
}

/// CSV export: one row per nonzero coefficient (target dim, multi-index,
/// coefficient).
inline void write_sparse_model_csv(CsvWriter& csv, const SparseModel& model,
                                   const PolynomialLibrary& lib) {
    csv.row({"target_dim", "multi_index", "coefficient"});
    for (std::size_t s = 0; s < model.target_dim; ++s)
        for (std::size_t q = 0; q < model.n_terms; ++q) {
            const double c = model.coefficient(q, s);
            if (c == 0.0) continue;
            std::string alpha;
            for (std::size_t d = 0; d < lib.ambient_dim; ++d) {
                if (d > 0) alpha += ' ';
                alpha += std::to_string(lib.exponents[q][d]);
            }
            csv.row({std::to_string(s), alpha, format_double(c)});
        }
}

} // namespace odefield
