#pragma once

/// Small dense linear algebra for the sparse-regression baseline: Householder
/// QR least squares with a tiny ridge fallback on the normal equations when
/// the active submatrix is rank-deficient.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace odefield {

/// Column-major dense matrix.
struct ColMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    ColMatrix() = default;
    ColMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return a[c * rows + r]; }
    double operator()(std::size_t r, std::size_t c) const { return a[c * rows + r]; }
    double* col(std::size_t c) { return a.data() + c * rows; }
    const double* col(std::size_t c) const { return a.data() + c * rows; }
};

namespace detail {

/// In-place Householder QR of A, transforming B alongside.  Returns the
/// magnitudes of the R diagonal for rank detection.
inline std::vector<double> qr_transform(ColMatrix& A, ColMatrix& B) {
    const std::size_t rows = A.rows, cols = A.cols;
    std::vector<double> v(rows), rdiag(cols, 0.0);
    for (std::size_t k = 0; k < cols; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = k; i < rows; ++i) {
            v[i] = A(i, k);
            norm2 += v[i] * v[i];
        }
        const double normx = std::sqrt(norm2);
        rdiag[k] = normx;
        if (normx == 0.0) continue; // exactly dependent column
        const double alpha = v[k] >= 0.0 ? -normx : normx;
        v[k] -= alpha;
        double vtv = 0.0;
        for (std::size_t i = k; i < rows; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0) continue;
        const double beta = 2.0 / vtv;
        A(k, k) = alpha;
        for (std::size_t j = k + 1; j < cols; ++j) {
            double w = 0.0;
            double* cj = A.col(j);
            for (std::size_t i = k; i < rows; ++i) w += v[i] * cj[i];
            w *= beta;
            for (std::size_t i = k; i < rows; ++i) cj[i] -= w * v[i];
        }
        for (std::size_t j = 0; j < B.cols; ++j) {
            double w = 0.0;
            double* cj = B.col(j);
            for (std::size_t i = k; i < rows; ++i) w += v[i] * cj[i];
            w *= beta;
            for (std::size_t i = k; i < rows; ++i) cj[i] -= w * v[i];
        }
    }
    return rdiag;
}

/// Cholesky solve of the SPD system G X = B, in place.  Throws if G is not
/// positive definite.  G must be filled symmetrically; the factor is formed
/// with contiguous row access so large systems stay cache-friendly.
inline void cholesky_solve(ColMatrix& G, ColMatrix& B) {
    const std::size_t n = G.rows;
    double* a = G.a.data(); // symmetric, so row-major indexing is equivalent
    for (std::size_t i = 0; i < n; ++i) {
        double* ri = a + i * n;
        for (std::size_t j = 0; j < i; ++j) {
            const double* rj = a + j * n;
            double s = ri[j];
            for (std::size_t p = 0; p < j; ++p) s -= ri[p] * rj[p];
            ri[j] = s / rj[j];
        }
        double d = ri[i];
        for (std::size_t p = 0; p < i; ++p) d -= ri[p] * ri[p];
        if (!(d > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
        ri[i] = std::sqrt(d);
    }
    for (std::size_t c = 0; c < B.cols; ++c) {
        double* b = B.col(c);
        for (std::size_t i = 0; i < n; ++i) { // forward, row i contiguous
            const double* ri = a + i * n;
            double s = b[i];
            for (std::size_t p = 0; p < i; ++p) s -= ri[p] * b[p];
            b[i] = s / ri[i];
        }
        for (std::size_t p = n; p-- > 0;) { // backward as saxpy over row p
            const double* rp = a + p * n;
            b[p] /= rp[p];
            const double bp = b[p];
            for (std::size_t i = 0; i < p; ++i) b[i] -= rp[i] * bp;
        }
    }
}

} // namespace detail

/// Ridge-regularized normal equations (A^T A + ridge I) X = A^T B.
inline ColMatrix solve_ridge(const ColMatrix& A, const ColMatrix& B, double ridge) {
    const std::size_t cols = A.cols;
    ColMatrix G(cols, cols);
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = j; i < cols; ++i) {
            double s = 0.0;
            const double* ci = A.col(i);
            const double* cj = A.col(j);
            for (std::size_t r = 0; r < A.rows; ++r) s += ci[r] * cj[r];
            G(i, j) = s;
            G(j, i) = s;
        }
    ColMatrix rhs(cols, B.cols);
    for (std::size_t c = 0; c < B.cols; ++c)
        for (std::size_t j = 0; j < cols; ++j) {
            double s = 0.0;
            const double* cj = A.col(j);
            const double* bc = B.col(c);
            for (std::size_t r = 0; r < A.rows; ++r) s += cj[r] * bc[r];
            rhs(j, c) = s;
        }
    double jitter = ridge;
    for (int attempt = 0; attempt < 8; ++attempt) {
        ColMatrix Gj = G;
        for (std::size_t j = 0; j < cols; ++j) Gj(j, j) += jitter;
        ColMatrix X = rhs;
        try {
            detail::cholesky_solve(Gj, X);
            return X;
        } catch (const std::runtime_error&) {
            jitter = jitter == 0.0 ? 1e-12 : jitter * 100.0;
        }
    }
    throw std::runtime_error("solve_ridge: normal equations not solvable");
}

/// Minimize ||A X - B||_2 columnwise via Householder QR.  If A is detected
/// rank-deficient, falls back to the ridge-regularized normal equations.
inline ColMatrix solve_least_squares(ColMatrix A, ColMatrix B, double ridge = 1e-10) {
    if (A.rows != B.rows) throw std::invalid_argument("solve_least_squares: row mismatch");
    if (A.rows < A.cols || A.cols == 0)
        return solve_ridge(A, B, ridge); // underdetermined; QR needs rows >= cols
    const ColMatrix A_orig = A;
    const ColMatrix B_orig = B;
    const auto rdiag = detail::qr_transform(A, B);
    double max_diag = 0.0;
    for (std::size_t k = 0; k < A.cols; ++k) max_diag = std::max(max_diag, rdiag[k]);
    const double tol =
        max_diag * static_cast<double>(A.cols) * std::numeric_limits<double>::epsilon();
    for (std::size_t k = 0; k < A.cols; ++k)
        if (rdiag[k] <= tol) return solve_ridge(A_orig, B_orig, ridge);

    ColMatrix X(A.cols, B.cols);
    for (std::size_t c = 0; c < B.cols; ++c) {
        double* x = X.col(c);
        const double* b = B.col(c);
        for (std::size_t ii = A.cols; ii-- > 0;) {
            double s = b[ii];
            for (std::size_t j = ii + 1; j < A.cols; ++j) s -= A(ii, j) * x[j];
            x[ii] = s / A(ii, ii);
        }
    }
    return X;
}

} // namespace odefield
