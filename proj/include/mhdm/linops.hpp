// Dense linear forward operators on grid signals: identity, explicit
// matrices, Gaussian convolution with zero padding, the forward difference
// matrix, and the substitution operator D^T (D D^T)^(-1) that turns total
// variation denoising into an l1 problem in the jump variable.
//
// Everything here is desk scale (n <= 512), so operators are materialized
// densely. Only op_norm_estimate is restricted to apply/apply_adjoint calls.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include "errors.hpp"
#include "signal.hpp"

namespace mhdm {

enum class MapKind { Identity, Matrix, GaussianConv, Diff, Substitution };

class LinearMap {
public:
    static LinearMap identity(Eigen::Index n) {
        if (n < 1) throw std::invalid_argument("LinearMap::identity: n must be positive");
        LinearMap m;
        m.kind_ = MapKind::Identity;
        m.rows_ = m.cols_ = n;
        return m;
    }

    static LinearMap from_matrix(Mat A, MapKind kind = MapKind::Matrix) {
        if (A.rows() == 0 || A.cols() == 0)
            throw std::invalid_argument("LinearMap::from_matrix: empty matrix");
        LinearMap m;
        m.kind_ = kind;
        m.rows_ = A.rows();
        m.cols_ = A.cols();
        m.A_ = std::move(A);
        return m;
    }

    MapKind kind() const { return kind_; }
    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    bool is_identity() const { return kind_ == MapKind::Identity; }

    Vec apply(const Vec& x) const {
        if (x.size() != cols_) throw std::invalid_argument("LinearMap::apply: size mismatch");
        if (kind_ == MapKind::Identity) return x;
        return *A_ * x;
    }

    Vec apply_adjoint(const Vec& y) const {
        if (y.size() != rows_) throw std::invalid_argument("LinearMap::apply_adjoint: size mismatch");
        if (kind_ == MapKind::Identity) return y;
        return A_->transpose() * y;
    }

    const Mat& dense() const {
        if (!A_) A_ = Mat::Identity(rows_, cols_);
        return *A_;
    }

    // set on GaussianConv maps, for serialization round trips
    std::optional<double> sigma;

    // filled once by op_norm_cached, spectral norm at tol 1e-10
    mutable std::optional<double> op_norm_cache;

private:
    MapKind kind_ = MapKind::Identity;
    Eigen::Index rows_ = 0, cols_ = 0;
    mutable std::optional<Mat> A_;
};

// Column j holds a Gaussian of standard deviation sigma (in domain units,
// grid spacing 1/n) centered at node j, truncated at the boundary and
// rescaled to unit column sum, so constants are mapped to signals with the
// same total mass.
inline LinearMap make_gaussian_conv(Eigen::Index n, double sigma) {
    if (n < 3) throw std::invalid_argument("make_gaussian_conv: need n >= 3");
    if (!(sigma > 0.0)) throw std::invalid_argument("make_gaussian_conv: sigma must be positive");
    const double h = 1.0 / static_cast<double>(n);
    Mat K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double d = static_cast<double>(i - j) * h;
            K(i, j) = std::exp(-d * d / (2.0 * sigma * sigma));
        }
        K.col(j) /= K.col(j).sum();
    }
    LinearMap m = LinearMap::from_matrix(std::move(K), MapKind::GaussianConv);
    m.sigma = sigma;
    return m;
}

// Forward differences, (n-1) x n: row i is x_{i+1} - x_i.
inline Mat diff_matrix(Eigen::Index n) {
    if (n < 2) throw std::invalid_argument("diff_matrix: need n >= 2");
    Mat D = Mat::Zero(n - 1, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        D(i, i) = -1.0;
        D(i, i + 1) = 1.0;
    }
    return D;
}

// T = D^T (D D^T)^(-1), n x (n-1). Satisfies (T^T T)^(-1) = D D^T, which is
// tridiagonal and diagonally dominant, the property behind the equivalence of
// the multiscale decomposition and single Tikhonov steps for 1-d total
// variation denoising.
inline LinearMap substitution_operator(Eigen::Index n) {
    if (n < 2) throw std::invalid_argument("substitution_operator: need n >= 2");
    Mat D = diff_matrix(n);
    Mat M = D * D.transpose();
    Mat T = D.transpose() * M.llt().solve(Mat::Identity(n - 1, n - 1));
    return LinearMap::from_matrix(std::move(T), MapKind::Substitution);
}

// Spectral norm by power iteration on A^T A, using only apply and
// apply_adjoint. Deterministic start. Stops once the eigenvalue residual
// ||A^T A v - rho v|| <= tol * rho, which bounds the relative error of rho
// against the top eigenvalue, so the returned sqrt(rho) never underestimates
// ||A|| by more than about tol/2 relative.
inline double op_norm_estimate(const LinearMap& A, double tol = 1e-8, int max_iter = 200000) {
    if (!(tol > 0.0)) throw std::invalid_argument("op_norm_estimate: tol must be positive");
    Eigen::Index n = A.cols();
    Vec v(n);
    std::uint64_t state = 0x9e3779b97f4a7c15ull; // fixed splitmix64 stream
    for (Eigen::Index i = 0; i < n; ++i) {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z ^= z >> 31;
        v[i] = static_cast<double>(z >> 11) * 0x1.0p-53 - 0.5;
    }
    v.normalize();

    double rho = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec Bv = A.apply_adjoint(A.apply(v));
        rho = v.dot(Bv);
        if (rho <= 0.0) return 0.0; // zero map (B is PSD, so rho >= 0)
        double resid = (Bv - rho * v).norm();
        if (resid <= tol * rho) return std::sqrt(rho);
        v = Bv / Bv.norm();
    }
    throw numerical_failure("op_norm_estimate: power iteration did not converge", std::sqrt(rho));
}

inline double op_norm_cached(const LinearMap& A) {
    if (!A.op_norm_cache) A.op_norm_cache = op_norm_estimate(A, 1e-10);
    return *A.op_norm_cache;
}

} // namespace mhdm
