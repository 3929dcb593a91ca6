// Executable checks for the structural results behind the multiscale
// decomposition: the norm decomposition identity, the residual rate bound,
// the positive cone condition and the resulting agreement with single-step
// Tikhonov minimizers, the scalar condition that characterizes that
// agreement per component pair, closed forms for the 2x2 counterexample and
// the 2-d rounded square, dual seminorms for optimality certificates, and
// the entropy escalation effect.

#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "mhdm.hpp"

namespace mhdm {

// |  ||f||^2 - ||v_n||^2 - sum_k (||T u_k||^2 + 2 w_k) | / ||f||^2, where
// w_k is <T^T v_k, u_k>, recomputed from the stored components. For plain
// runs with a seminorm penalty, w_k = J(u_k)/lambda_k instead, which turns
// the identity into an optimality check of the inner solves. f = 0 returns 0.
inline double decomposition_identity_residual(const MultiscaleDecomposition& d,
                                              const LinearMap& T) {
    if (d.components.empty()) throw std::invalid_argument("identity residual: empty run");
    const Vec& f = d.data;
    double f2 = f.squaredNorm();
    if (f2 == 0.0) return 0.0;

    bool seminorm_form = d.variant == Variant::Mhdm && is_seminorm(d.penalty);
    Vec x = Vec::Zero(T.cols());
    double rhs = 0.0;
    Vec v;
    for (int k = 0; k < d.steps(); ++k) {
        const Vec& u = d.components[static_cast<std::size_t>(k)];
        x += u;
        v = f - T.apply(x);
        double w = seminorm_form
            ? evaluate(d.penalty, Signal(u, d.spacing)) / d.lambdas[static_cast<std::size_t>(k)]
            : T.apply_adjoint(v).dot(u);
        rhs += T.apply(u).squaredNorm() + 2.0 * w;
    }
    return std::abs(f2 - v.squaredNorm() - rhs) / f2;
}

// Same identity with the symmetric Bregman distances recorded by the Bregman
// and iterated Tikhonov drivers: ||f||^2 = ||T x_n - f||^2 +
// sum_k (||T u_k||^2 + 2 <p_k - p_{k-1}, u_k> / lambda_k).
inline double bregman_decomposition_residual(const MultiscaleDecomposition& d,
                                             const LinearMap& T) {
    if (!d.bregman) throw std::invalid_argument("bregman residual: run has no dual state");
    if (d.components.empty()) throw std::invalid_argument("bregman residual: empty run");
    const Vec& f = d.data;
    double f2 = f.squaredNorm();
    if (f2 == 0.0) return 0.0;

    Vec x = Vec::Zero(T.cols());
    double rhs = 0.0;
    for (int k = 0; k < d.steps(); ++k) {
        const Vec& u = d.components[static_cast<std::size_t>(k)];
        x += u;
        rhs += T.apply(u).squaredNorm()
             + 2.0 * d.bregman->sym_updates[static_cast<std::size_t>(k)]
                   / d.lambdas[static_cast<std::size_t>(k)];
    }
    double vn2 = (f - T.apply(x)).squaredNorm();
    return std::abs(f2 - vn2 - rhs) / f2;
}

// ---- positive cone condition ----

struct ConeReport {
    bool passes = true;
    Vec margins;                       // r_i = S_ii - sum_{j != i} |S_ij|
    int witness_row = -1;              // most negative margin when failing
    std::vector<int> witness_subset;   // exhaustive mode only
};

namespace detail {

inline Vec dominance_margins(const Mat& S) {
    Vec r(S.rows());
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < S.cols(); ++j)
            if (j != i) off += std::abs(S(i, j));
        r[i] = S(i, i) - off;
    }
    return r;
}

inline Mat gram_inverse(const Mat& T) {
    Mat G = T.transpose() * T;
    Eigen::FullPivLU<Mat> lu(G);
    if (!lu.isInvertible())
        throw std::invalid_argument("positive cone check: operator must be injective");
    Mat X = lu.inverse();
    // one Newton step of refinement; dominance margins are often exactly zero
    // and would otherwise drown in the O(eps * cond) error of the raw inverse
    X = X * (2.0 * Mat::Identity(G.rows(), G.cols()) - G * X);
    return X;
}

} // namespace detail

// Diagonal dominance of (T^T T)^(-1), which is equivalent to dominance of
// ((T_I)^T T_I)^(-1) for every column subset I. Margins below -margin_tol fail.
inline ConeReport positive_cone_check(const Mat& T, double margin_tol = 1e-12) {
    ConeReport rep;
    rep.margins = detail::dominance_margins(detail::gram_inverse(T));
    Eigen::Index worst;
    double m = rep.margins.minCoeff(&worst);
    if (m < -margin_tol) {
        rep.passes = false;
        rep.witness_row = static_cast<int>(worst);
    }
    return rep;
}

inline ConeReport positive_cone_check(const LinearMap& T, double margin_tol = 1e-12) {
    // the substitution kind is built as D^T (D D^T)^{-1}, so its gram inverse
    // is D D^T exactly; the dense route would bury its exactly-zero interior
    // margins under O(eps * cond^2) rounding from re-forming and re-inverting
    if (T.kind() == MapKind::Substitution) {
        Eigen::Index m = T.cols();
        Mat S = Mat::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            S(i, i) = 2.0;
            if (i + 1 < m) S(i, i + 1) = S(i + 1, i) = -1.0;
        }
        ConeReport rep;
        rep.margins = detail::dominance_margins(S);
        Eigen::Index worst;
        if (rep.margins.minCoeff(&worst) < -margin_tol) {
            rep.passes = false;
            rep.witness_row = static_cast<int>(worst);
        }
        return rep;
    }
    return positive_cone_check(T.dense(), margin_tol);
}

// Subset-by-subset version, exponential in the column count; the test
// companion of the equivalence above.
inline ConeReport positive_cone_check_exhaustive(const Mat& T, double margin_tol = 1e-12) {
    Eigen::Index k = T.cols();
    if (k > 20) throw std::invalid_argument("exhaustive cone check: more than 20 columns");
    ConeReport rep;
    rep.margins = detail::dominance_margins(detail::gram_inverse(T));
    for (unsigned long mask = 1; mask < (1ul << k); ++mask) {
        std::vector<int> idx;
        for (Eigen::Index j = 0; j < k; ++j)
            if (mask & (1ul << j)) idx.push_back(static_cast<int>(j));
        Mat Ts(T.rows(), idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) Ts.col(j) = T.col(idx[j]);
        Vec r = detail::dominance_margins(detail::gram_inverse(Ts));
        Eigen::Index worst;
        if (r.minCoeff(&worst) < -margin_tol) {
            rep.passes = false;
            rep.margins = r;
            rep.witness_row = static_cast<int>(worst);
            rep.witness_subset = idx;
            return rep;
        }
    }
    return rep;
}

// ---- per-pair agreement condition ----

// J(x_next - x_prev) + J(x_next) - J(2 x_next - x_prev), zero exactly when
// the decomposition step at lambda_next coincides with the single-step
// minimizer; nonnegative for seminorms by the triangle inequality.
inline double condition2_residual(const Penalty& J, const Signal& x_prev, const Signal& x_next) {
    if (!is_seminorm(J))
        throw std::invalid_argument("condition2_residual: penalty must be a seminorm");
    if (x_prev.size() != x_next.size())
        throw std::invalid_argument("condition2_residual: size mismatch");
    Signal diff(x_next.values - x_prev.values, x_next.spacing);
    Signal refl(2.0 * x_next.values - x_prev.values, x_next.spacing);
    return evaluate(J, diff) + evaluate(J, x_next) - evaluate(J, refl);
}

// ---- the 2x2 counterexample ----

inline Mat counterexample_operator() {
    Mat T(2, 2);
    T << 2.0, 1.0, 1.0, 0.0;
    return T;
}

inline Vec counterexample_data() {
    Vec f(2);
    f << 4.0, -1.0;
    return f;
}

// closed-form minimizer of (lambda/2)||T x - f||^2 + ||x||_1 for the
// counterexample pair above
inline Vec counterexample_minimizer(double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("counterexample_minimizer: lambda > 0 required");
    Vec x(2);
    if (lambda <= 1.0 / 7.0) {
        x << 0.0, 0.0;
    } else if (lambda <= 0.5) {
        x << 7.0 / 5.0 - 1.0 / (5.0 * lambda), 0.0;
    } else if (lambda <= 1.0) {
        x << 1.0 / lambda - 1.0, 6.0 - 3.0 / lambda;
    } else if (lambda <= 3.0) {
        x << 0.0, 4.0 - 1.0 / lambda;
    } else {
        x << 3.0 / lambda - 1.0, 6.0 - 7.0 / lambda;
    }
    return x;
}

// ---- dual seminorms ----

inline double dual_seminorm_l1(const Vec& xstar) {
    return xstar.size() == 0 ? 0.0 : xstar.lpNorm<Eigen::Infinity>();
}

// Dual of w ||D x||_1. Infinite unless xstar annihilates constants; otherwise
// ||(D D^T)^(-1) D xstar||_inf / w.
inline double dual_seminorm_tv1d(const Vec& xstar, double weight) {
    if (!(weight > 0.0)) throw std::invalid_argument("dual_seminorm_tv1d: weight must be positive");
    if (xstar.size() < 2) throw std::invalid_argument("dual_seminorm_tv1d: need n >= 2");
    double norm = xstar.norm();
    if (norm == 0.0) return 0.0;
    if (std::abs(xstar.sum()) > 1e-10 * norm) return std::numeric_limits<double>::infinity();
    Mat D = diff_matrix(xstar.size());
    Mat M = D * D.transpose();
    Vec q = M.llt().solve(D * xstar);
    return q.lpNorm<Eigen::Infinity>() / weight;
}

// ---- Bregman distance ----

struct BregmanDistanceResult {
    double value = 0.0;
    bool subgradient_plausible = true; // probe check only, not a certificate
};

inline BregmanDistanceResult bregman_distance(const Penalty& J, const Signal& x1,
                                              const Signal& x0, const Vec& xi) {
    if (x0.size() != x1.size() || xi.size() != x0.size())
        throw std::invalid_argument("bregman_distance: size mismatch");
    BregmanDistanceResult r;
    double J0 = evaluate(J, x0);
    r.value = evaluate(J, x1) - J0 - xi.dot(x1.values - x0.values);

    // probe the subgradient inequality J(z) >= J(x0) + <xi, z - x0> at a few
    // fixed directions; failures flag xi as implausible but do not throw
    double scale = std::max(1.0, x0.norm());
    std::vector<Vec> probes = {x1.values, Vec::Zero(x0.size()),
                               x0.values * 1.5, x0.values * 0.5};
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(x0.size(), 3); ++i) {
        Vec e = x0.values;
        e[i] += 0.25 * scale;
        probes.push_back(e);
    }
    for (const Vec& z : probes) {
        double lhs = evaluate(J, Signal(z, x0.spacing));
        double rhs = J0 + xi.dot(z - x0.values);
        if (lhs < rhs - 1e-9 * std::max(1.0, std::abs(rhs))) {
            r.subgradient_plausible = false;
            break;
        }
    }
    return r;
}

// ---- residual rate bound ----

// sqrt(4 C J(truth) / (lambda0 (n+1)) + delta^2), the guaranteed residual
// decay under the schedule growth condition lambda_n >= 2 C lambda_{n-1}
inline double rate_bound(int n, double lambda0, double C, double Jval, double delta) {
    if (n < 0) throw std::invalid_argument("rate_bound: negative index");
    if (!(lambda0 > 0.0)) throw std::invalid_argument("rate_bound: lambda0 must be positive");
    if (!(C > 0.0)) throw std::invalid_argument("rate_bound: C must be positive");
    if (Jval < 0.0 || delta < 0.0) throw std::invalid_argument("rate_bound: negative inputs");
    return std::sqrt(4.0 * C * Jval / (lambda0 * (n + 1)) + delta * delta);
}

// ---- entropy escalation ----

// On E = { i : 0 <= truth_i < 1/e } the entropy iterates overshoot and then
// increase strictly forever. True when x_0 > truth on E and every later
// update u_n stays strictly positive there. The updates are the witness: they
// shrink doubly exponentially and soon fall below one ulp of the running sum,
// so testing x_n < x_{n+1} directly would fail in floating point even though
// the exact iterates keep growing.
inline bool entropy_escalation_check(const MultiscaleDecomposition& d, const Vec& truth) {
    if (d.components.empty()) throw std::invalid_argument("entropy escalation: empty run");
    if (truth.size() != d.partial_sums.front().size())
        throw std::invalid_argument("entropy escalation: truth size mismatch");
    constexpr double inv_e = 0.36787944117144233;
    std::vector<Eigen::Index> E;
    for (Eigen::Index i = 0; i < truth.size(); ++i)
        if (truth[i] >= 0.0 && truth[i] < inv_e) E.push_back(i);
    if (E.empty())
        throw std::invalid_argument("entropy escalation: no component of truth lies in [0, 1/e)");

    for (Eigen::Index i : E)
        if (!(d.partial_sums.front()[i] > truth[i])) return false;
    for (int n = 1; n < d.steps(); ++n)
        for (Eigen::Index i : E)
            if (!(d.components[static_cast<std::size_t>(n)][i] > 0.0)) return false;
    return true;
}

// ---- the 2-d rounded square ----

inline double rounded_square_shape(double s, double t) {
    double as = std::abs(s), at = std::abs(t);
    return 2.0 - as - at + std::sqrt(2.0 * (1.0 - as) * (1.0 - at));
}

// Exact isotropic total variation minimizer of the indicator of the unit
// square at parameter lambda, for lambda above 1 + sqrt(pi)/2 (below that the
// minimizer formula changes character). Zero outside the square.
inline double rounded_square_minimizer(double s, double t, double lambda) {
    const double c = 1.0 + 0.5 * std::sqrt(M_PI);
    if (!(lambda > c))
        throw std::invalid_argument("rounded_square_minimizer: lambda must exceed 1 + sqrt(pi)/2");
    if (std::abs(s) > 1.0 || std::abs(t) > 1.0) return 0.0;
    double r = rounded_square_shape(s, t);
    if (r >= 1.0 / c) return 1.0 - c / lambda;
    if (r > 1.0 / lambda) return 1.0 - 1.0 / (lambda * r);
    return 0.0;
}

struct Condition2Violation {
    double value = 0.0;
    bool coarse_grid = false; // grids below 64 cells per axis
};

namespace detail {

// isotropic total variation of a field sampled on an m x m grid with cell
// width h, forward differences, zero beyond the last row and column
inline double tv_iso(const Mat& U, double h) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        for (Eigen::Index j = 0; j < U.cols(); ++j) {
            double dx = i + 1 < U.rows() ? U(i + 1, j) - U(i, j) : -U(i, j);
            double dy = j + 1 < U.cols() ? U(i, j + 1) - U(i, j) : -U(i, j);
            s += std::sqrt(dx * dx + dy * dy);
        }
    }
    return s * h;
}

} // namespace detail

// Quadrature value of TV(x_next - x_prev) + TV(x_next) - TV(2 x_next -
// x_prev) for the rounded-square minimizers at two consecutive parameters.
// Positive values certify that the agreement condition fails in 2-d.
inline Condition2Violation condition2_2d_violation(double lambda_k, double lambda_k1, int grid) {
    const double c = 1.0 + 0.5 * std::sqrt(M_PI);
    if (!(lambda_k > c) || !(lambda_k1 >= lambda_k))
        throw std::invalid_argument("condition2_2d_violation: need 1 + sqrt(pi)/2 < lambda_k <= lambda_k1");
    if (grid < 8) throw std::invalid_argument("condition2_2d_violation: grid too small");

    // pad past the square so boundary jumps enter the quadrature
    const double half = 1.5;
    const double h = 2.0 * half / grid;
    Mat prev(grid, grid), next(grid, grid);
    for (int i = 0; i < grid; ++i) {
        double s = -half + (i + 0.5) * h;
        for (int j = 0; j < grid; ++j) {
            double t = -half + (j + 0.5) * h;
            prev(i, j) = rounded_square_minimizer(s, t, lambda_k);
            next(i, j) = rounded_square_minimizer(s, t, lambda_k1);
        }
    }
    Condition2Violation out;
    out.coarse_grid = grid < 64;
    out.value = detail::tv_iso(next - prev, h) + detail::tv_iso(next, h)
              - detail::tv_iso(2.0 * next - prev, h);
    return out;
}

// ---- report serialization ----

// Pairwise agreement between single-step minimizers along a parameter
// schedule: the condition residual of each consecutive pair against a bound
// of tolerance * (1 + J(x_next)), zero residual meaning the multiscale step
// at lambda_next reproduces the single-step minimizer exactly.
struct AgreementReport {
    std::vector<double> lambdas_prev, lambdas_next;
    std::vector<double> residuals, bounds;

    bool all_within() const {
        for (std::size_t k = 0; k < residuals.size(); ++k)
            if (residuals[k] > bounds[k]) return false;
        return true;
    }
};

inline AgreementReport agreement_report(const Penalty& J, const std::vector<Vec>& minimizers,
                                        const std::vector<double>& lambdas, double spacing,
                                        double tolerance = 1e-6) {
    if (minimizers.size() < 2)
        throw std::invalid_argument("agreement report: need at least two minimizers");
    if (minimizers.size() != lambdas.size())
        throw std::invalid_argument("agreement report: one lambda per minimizer");
    AgreementReport rep;
    for (std::size_t k = 0; k + 1 < minimizers.size(); ++k) {
        Signal prev(minimizers[k], spacing), next(minimizers[k + 1], spacing);
        rep.lambdas_prev.push_back(lambdas[k]);
        rep.lambdas_next.push_back(lambdas[k + 1]);
        rep.residuals.push_back(condition2_residual(J, prev, next));
        rep.bounds.push_back(tolerance * (1.0 + evaluate(J, next)));
    }
    return rep;
}

namespace detail {

inline std::string short_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

} // namespace detail

inline std::string agreement_report_text(const AgreementReport& rep) {
    std::size_t worst = 0;
    for (std::size_t k = 1; k < rep.residuals.size(); ++k)
        if (rep.residuals[k] - rep.bounds[k] > rep.residuals[worst] - rep.bounds[worst]) worst = k;
    std::string out = "agreement: ";
    out += rep.all_within() ? "YES" : "NO";
    out += " (" + std::to_string(rep.residuals.size()) + " pairs, worst residual "
         + detail::short_double(rep.residuals[worst]) + " at lambda "
         + detail::short_double(rep.lambdas_next[worst]) + ")\n";
    return out;
}

inline std::string agreement_report_csv(const AgreementReport& rep) {
    std::string out = "lambda_prev,lambda_next,residual,bound,within\n";
    for (std::size_t k = 0; k < rep.residuals.size(); ++k) {
        out += detail::short_double(rep.lambdas_prev[k]) + ","
             + detail::short_double(rep.lambdas_next[k]) + ","
             + detail::short_double(rep.residuals[k]) + ","
             + detail::short_double(rep.bounds[k]) + ","
             + (rep.residuals[k] <= rep.bounds[k] ? "1" : "0") + "\n";
    }
    return out;
}

inline std::string cone_report_text(const ConeReport& rep) {
    std::string out = "positive cone: ";
    out += rep.passes ? "YES" : "NO";
    out += "\n";
    if (!rep.passes && rep.witness_row >= 0) {
        char line[96];
        std::snprintf(line, sizeof(line), "violated in row %d, margin %.6g\n", rep.witness_row,
                      rep.margins[static_cast<std::size_t>(rep.witness_row)]);
        out += line;
    }
    return out;
}

inline std::string cone_report_csv(const ConeReport& rep) {
    std::string out = "row,margin,witness\n";
    for (std::size_t i = 0; i < static_cast<std::size_t>(rep.margins.size()); ++i) {
        out += std::to_string(i) + "," + detail::short_double(rep.margins[static_cast<Eigen::Index>(i)])
             + "," + (static_cast<int>(i) == rep.witness_row ? "1" : "0") + "\n";
    }
    return out;
}

} // namespace mhdm
