// Subproblem solvers for one step of the multiscale decomposition,
//
//     minimize (lambda/2) ||T u - data||^2 + J(u),
//
// one routine per penalty/operator combination. Denoising paths (T = Id) are
// exact, closed-form or componentwise prox evaluations. General paths are
// first order methods: FISTA with an active-set polish for l1, a monotone
// proximal gradient with the exact scalar prox for lp, Chambolle-Pock for
// total variation, a direct normal-equations solve for the quadratic penalty.
//
// Iterates always start from zero unless a warm start is supplied, so runs
// are reproducible. Internally the l1/lp paths work on the objective divided
// by lambda, which keeps step sizes independent of lambda; reported
// objectives are at the original scale.

#pragma once

#include <functional>
#include <optional>

#include "linops.hpp"
#include "penalties.hpp"
#include "scalar_math.hpp"

namespace mhdm {

struct SolveOptions {
    int max_iter = 5000;
    std::optional<double> tol;   // iterative paths default to 1e-8
    std::optional<Vec> warm_start;

    double tol_or(double fallback) const { return tol.value_or(fallback); }
};

struct SubproblemResult {
    Vec minimizer;
    double objective = 0.0;       // (lambda/2)||T u - data||^2 + J(u)
    int iterations = 0;
    bool converged = true;
    Vec subgradient_proxy;        // lambda T^T (data - T u)
};

namespace detail {

inline void check_lambda(double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("solver: lambda must be positive");
}

inline Vec soft_threshold(const Vec& z, double t) {
    Vec out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = prox_abs(z[i], t);
    return out;
}

inline void finish(SubproblemResult& r, const LinearMap& T, const Vec& data, double lambda) {
    r.subgradient_proxy = lambda * T.apply_adjoint(data - T.apply(r.minimizer));
}

// forward difference and its negative adjoint on a plain vector
inline Vec fwd_diff(const Vec& x) {
    Eigen::Index n = x.size();
    Vec d(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) d[i] = x[i + 1] - x[i];
    return d;
}

inline Vec fwd_diff_adjoint(const Vec& y) {
    Eigen::Index n = y.size() + 1;
    Vec x = Vec::Zero(n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        x[i] -= y[i];
        x[i + 1] += y[i];
    }
    return x;
}

inline double diff_norm(Eigen::Index n) {
    // largest singular value of the forward difference matrix
    return 2.0 * std::sin(0.5 * M_PI * static_cast<double>(n - 1) / static_cast<double>(n));
}

// FISTA on h(x) = (1/2)||T x - f||^2 + (1/lambda)(||x||_1 - <tilt, x>), the
// lambda-normalized l1 subproblem with an optional linear tilt (the
// linearization term of the Bregman iteration). Stops on the subdifferential
// inclusion xi = lambda T^T(f - Tx) + tilt in d||x||_1 up to kkt_tol, or on
// objective stagnation. A final active-set solve polishes the support found
// by FISTA to machine precision when its normal equations are trustworthy.
inline SubproblemResult l1_fista_core(const Vec& f, const LinearMap& T, double lambda,
                                      const Vec& tilt, const SolveOptions& opts) {
    check_lambda(lambda);
    const double L = std::max(op_norm_cached(T) * op_norm_cached(T), 1e-300);
    const double t = 1.0 / L;
    const double tol = opts.tol_or(1e-8);
    const double kkt_tol = 1e-6;

    Vec x = opts.warm_start.value_or(Vec::Zero(T.cols()));
    Vec y = x;
    double theta = 1.0;

    auto smooth_grad = [&](const Vec& z) -> Vec {
        return T.apply_adjoint(T.apply(z) - f) - tilt / lambda;
    };
    auto objective_norm = [&](const Vec& z) {
        return 0.5 * (T.apply(z) - f).squaredNorm() + (z.lpNorm<1>() - tilt.dot(z)) / lambda;
    };
    // largest violation of xi in d||x||_1
    auto kkt_residual = [&](const Vec& z, const Vec& xi) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            double v = z[i] == 0.0 ? std::max(0.0, std::abs(xi[i]) - 1.0)
                                   : std::abs(xi[i] - (z[i] > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, v);
        }
        return worst;
    };

    SubproblemResult r;
    r.converged = false;
    double obj_prev = objective_norm(x);
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Vec x_next = soft_threshold(y - t * smooth_grad(y), t / lambda);
        double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        if ((y - x_next).dot(x_next - x) > 0.0) {
            // momentum points uphill, restart
            y = x_next;
            theta_next = 1.0;
        } else {
            y = x_next + ((theta - 1.0) / theta_next) * (x_next - x);
        }
        x = x_next;
        theta = theta_next;

        if (it % 10 == 9 || it + 1 == opts.max_iter) {
            Vec xi = lambda * T.apply_adjoint(f - T.apply(x)) + tilt;
            if (kkt_residual(x, xi) <= kkt_tol) { r.converged = true; ++it; break; }
            double obj = objective_norm(x);
            if (std::abs(obj_prev - obj) <= tol * std::max(1.0, std::abs(obj))) {
                r.converged = true; ++it; break;
            }
            obj_prev = obj;
        }
    }

    // active-set polish: solve the normal equations on the support
    std::vector<Eigen::Index> S;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) S.push_back(i);
    if (!S.empty() && static_cast<Eigen::Index>(S.size()) <= T.rows()) {
        const Mat& A = T.dense();
        Mat As(A.rows(), S.size());
        for (std::size_t k = 0; k < S.size(); ++k) As.col(k) = A.col(S[k]);
        Vec rhs(S.size());
        for (std::size_t k = 0; k < S.size(); ++k)
            rhs[k] = As.col(k).dot(f) + (tilt[S[k]] - (x[S[k]] > 0.0 ? 1.0 : -1.0)) / lambda;
        Eigen::LDLT<Mat> ldlt(As.transpose() * As);
        if (ldlt.info() == Eigen::Success) {
            Vec zs = ldlt.solve(rhs);
            bool signs_ok = true;
            for (std::size_t k = 0; k < S.size(); ++k)
                if (zs[k] * x[S[k]] <= 0.0) { signs_ok = false; break; }
            if (signs_ok) {
                Vec z = Vec::Zero(x.size());
                for (std::size_t k = 0; k < S.size(); ++k) z[S[k]] = zs[k];
                Vec xi = lambda * T.apply_adjoint(f - T.apply(z)) + tilt;
                double kr_z = kkt_residual(z, xi);
                Vec xi_x = lambda * T.apply_adjoint(f - T.apply(x)) + tilt;
                if (kr_z <= kkt_residual(x, xi_x) && objective_norm(z) <= objective_norm(x) + 1e-15) {
                    x = z;
                    if (kr_z <= kkt_tol) r.converged = true;
                }
            }
        }
    }

    r.minimizer = std::move(x);
    r.iterations = it;
    r.objective = lambda * (0.5 * (T.apply(r.minimizer) - f).squaredNorm())
                + r.minimizer.lpNorm<1>() - tilt.dot(r.minimizer);
    finish(r, T, f, lambda);
    return r;
}

} // namespace detail

// ---- l1 ----

inline SubproblemResult solve_l1_denoise(const Signal& data, double lambda) {
    detail::check_lambda(lambda);
    SubproblemResult r;
    r.minimizer = detail::soft_threshold(data.values, 1.0 / lambda);
    r.objective = 0.5 * lambda * (r.minimizer - data.values).squaredNorm()
                + r.minimizer.lpNorm<1>();
    r.subgradient_proxy = lambda * (data.values - r.minimizer);
    return r;
}

inline SubproblemResult solve_l1_general(const Signal& data, const LinearMap& T, double lambda,
                                         const SolveOptions& opts = {}) {
    return detail::l1_fista_core(data.values, T, lambda, Vec::Zero(T.cols()), opts);
}

// l1 step of the Bregman iteration: the penalty is tilted by the previous
// subgradient, J_n(x) = ||x||_1 - <tilt, x> up to a constant.
inline SubproblemResult solve_l1_tilted(const Signal& data, const LinearMap& T, double lambda,
                                        const Vec& tilt, const SolveOptions& opts = {}) {
    if (tilt.size() != T.cols()) throw std::invalid_argument("solve_l1_tilted: tilt size mismatch");
    detail::check_lambda(lambda);
    if (T.is_identity()) {
        // (lambda/2)||x - f||^2 + ||x||_1 - <tilt, x> in closed form
        Vec u = detail::soft_threshold(data.values + tilt / lambda, 1.0 / lambda);
        SubproblemResult r;
        r.minimizer = std::move(u);
        r.iterations = 1;
        r.converged = true;
        r.objective = lambda * 0.5 * (r.minimizer - data.values).squaredNorm()
                    + r.minimizer.lpNorm<1>() - tilt.dot(r.minimizer);
        r.subgradient_proxy = lambda * (data.values - r.minimizer);
        return r;
    }
    return detail::l1_fista_core(data.values, T, lambda, tilt, opts);
}

// ---- lp, 0 < p < 1 ----

inline SubproblemResult solve_lp_denoise(const Signal& data, double lambda, double p) {
    detail::check_lambda(lambda);
    SubproblemResult r;
    r.minimizer.resize(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i)
        r.minimizer[i] = prox_power_p(data.values[i], 1.0 / lambda, p);
    r.objective = 0.5 * lambda * (r.minimizer - data.values).squaredNorm()
                + evaluate(Penalty::lp(p), Signal(r.minimizer, data.spacing));
    r.subgradient_proxy = lambda * (data.values - r.minimizer);
    return r;
}

// Monotone proximal gradient with the exact scalar prox. Nonconvex, so only
// a stationary point is guaranteed; the iteration starts from the l1
// minimizer (or the supplied warm start) and never increases the objective.
// If descending from zero ends lower, that result is returned instead.
inline SubproblemResult solve_lp_general(const Signal& data, const LinearMap& T, double lambda,
                                         double p, const SolveOptions& opts = {}) {
    detail::check_lambda(lambda);
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("solve_lp_general: p must lie in (0,1)");
    if (T.is_identity()) return solve_lp_denoise(data, lambda, p);

    const Vec& f = data.values;
    const double L = std::max(op_norm_cached(T) * op_norm_cached(T), 1e-300);
    const double t0 = 1.0 / L;
    const double tol = opts.tol_or(1e-8);

    auto objective_norm = [&](const Vec& z) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) s += std::pow(std::abs(z[i]), p);
        return 0.5 * (T.apply(z) - f).squaredNorm() + s / lambda;
    };

    int total_it = 0;
    auto descend = [&](Vec x) -> std::pair<Vec, double> {
        double obj = objective_norm(x);
        for (int it = 0; it < opts.max_iter; ++it, ++total_it) {
            Vec grad = T.apply_adjoint(T.apply(x) - f);
            double step = t0;
            Vec cand;
            double obj_cand = obj;
            bool accepted = false;
            for (int h = 0; h < 40; ++h) {
                Vec z = x - step * grad;
                cand.resize(z.size());
                for (Eigen::Index i = 0; i < z.size(); ++i)
                    cand[i] = prox_power_p(z[i], step / lambda, p);
                obj_cand = objective_norm(cand);
                if (obj_cand <= obj) { accepted = true; break; }
                step *= 0.5;
            }
            if (!accepted) break;
            double drop = obj - obj_cand;
            x = std::move(cand);
            obj = obj_cand;
            if (drop <= tol * std::max(1.0, std::abs(obj)) && step == t0) break;
        }
        return {std::move(x), obj};
    };

    Vec start;
    if (opts.warm_start) {
        start = *opts.warm_start;
    } else {
        SolveOptions l1_opts = opts;
        l1_opts.warm_start.reset();
        start = solve_l1_general(data, T, lambda, l1_opts).minimizer;
    }
    auto [x, obj] = descend(std::move(start));
    if (objective_norm(Vec::Zero(T.cols())) < obj) {
        auto [x0, obj0] = descend(Vec::Zero(T.cols()));
        if (obj0 < obj) { x = std::move(x0); obj = obj0; }
    }

    SubproblemResult r;
    r.minimizer = std::move(x);
    r.iterations = total_it;
    r.converged = true; // monotone scheme, stationary within budget
    r.objective = lambda * obj;
    detail::finish(r, T, f, lambda);
    return r;
}

// ---- total variation ----

// Exact 1-D TV denoising. The minimizer of (lambda/2)||x - f||^2 + w||Dx||_1
// is the slope sequence of the taut string through the tube of half-width
// w/lambda around the running sum of f, with pinned endpoints: the running
// sum of x - f is the dual variable, the tube is dual feasibility, and the
// string bends only where the tube is touched with the matching jump sign.
// Greedy restart from each contact point; quadratic worst case in n.
inline SubproblemResult solve_tv1d_denoise(const Signal& data, double lambda, double weight,
                                           const SolveOptions& opts = {}) {
    detail::check_lambda(lambda);
    if (!(weight > 0.0)) throw std::invalid_argument("solve_tv1d_denoise: weight must be positive");
    const Vec& f = data.values;
    const Eigen::Index n = f.size();
    if (n < 2) throw std::invalid_argument("solve_tv1d_denoise: need n >= 2");

    const double w = weight / lambda;
    std::vector<double> hi(static_cast<std::size_t>(n) + 1), lo(hi.size());
    hi[0] = lo[0] = 0.0;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        s += f[i];
        hi[static_cast<std::size_t>(i) + 1] = s + w;
        lo[static_cast<std::size_t>(i) + 1] = s - w;
    }
    hi[static_cast<std::size_t>(n)] = lo[static_cast<std::size_t>(n)] = s;

    Vec x(n);
    Eigen::Index a = 0; // anchor on the 0..n running-sum grid
    double av = 0.0;
    while (a < n) {
        double slo = -std::numeric_limits<double>::infinity();
        double shi = std::numeric_limits<double>::infinity();
        Eigen::Index ilo = a, ihi = a;
        for (Eigen::Index i = a + 1; i <= n; ++i) {
            double d = static_cast<double>(i - a);
            double bu = (hi[static_cast<std::size_t>(i)] - av) / d;
            double bl = (lo[static_cast<std::size_t>(i)] - av) / d;
            if (bl > slo) { slo = bl; ilo = i; }
            if (bu < shi) { shi = bu; ihi = i; }
            if (slo > shi) {
                if (ilo == i) { // lower wall unreachable: bend on the upper wall
                    for (Eigen::Index j = a; j < ihi; ++j) x[j] = shi;
                    a = ihi;
                    av = hi[static_cast<std::size_t>(ihi)];
                } else {
                    for (Eigen::Index j = a; j < ilo; ++j) x[j] = slo;
                    a = ilo;
                    av = lo[static_cast<std::size_t>(ilo)];
                }
                break;
            }
            if (i == n) { // tube exhausted, finish straight to the pinned end
                double sl = (s - av) / d;
                for (Eigen::Index j = a; j < n; ++j) x[j] = sl;
                a = n;
                break;
            }
        }
    }
    (void)opts;

    SubproblemResult r;
    r.minimizer = std::move(x);
    r.iterations = 1;
    r.converged = true;
    r.objective = lambda * 0.5 * (r.minimizer - f).squaredNorm()
                + weight * detail::fwd_diff(r.minimizer).lpNorm<1>();
    r.subgradient_proxy = lambda * (f - r.minimizer);
    return r;
}

// Chambolle-Pock for (lambda/2)||T x - f||^2 + w||D x||_1. The x update is
// the prox of the quadratic data term, a solve with I + tau lambda T^T T,
// factored once per call. Stops when both the iterate and the objective
// settle to relative changes below tol.
inline SubproblemResult solve_tv1d_general(const Signal& data, const LinearMap& T, double lambda,
                                           double weight, const SolveOptions& opts = {}) {
    detail::check_lambda(lambda);
    if (!(weight > 0.0)) throw std::invalid_argument("solve_tv1d_general: weight must be positive");
    if (T.is_identity()) return solve_tv1d_denoise(data, lambda, weight, opts);

    const Vec& f = data.values;
    const Eigen::Index n = T.cols();
    if (n < 2) throw std::invalid_argument("solve_tv1d_general: need n >= 2");

    const double Ld = detail::diff_norm(n);
    const double tau = 0.99 / Ld, sigma = 0.99 / Ld;
    const double tol = opts.tol_or(1e-8);

    const Mat& A = T.dense();
    Eigen::LDLT<Mat> prox_solver(Mat::Identity(n, n) + (tau * lambda) * (A.transpose() * A));
    if (prox_solver.info() != Eigen::Success)
        throw numerical_failure("solve_tv1d_general: prox factorization failed", 0.0);
    Vec Atf = A.transpose() * f;

    Vec x = opts.warm_start.value_or(Vec::Zero(n));
    Vec xbar = x;
    Vec y = Vec::Zero(n - 1);

    auto objective = [&](const Vec& z) {
        return 0.5 * lambda * (T.apply(z) - f).squaredNorm()
             + weight * detail::fwd_diff(z).lpNorm<1>();
    };

    SubproblemResult r;
    r.converged = false;
    double obj_prev = objective(x);
    int settled = 0;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Vec q = y + sigma * detail::fwd_diff(xbar);
        for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = std::clamp(q[i], -weight, weight);
        Vec rhs = x - tau * detail::fwd_diff_adjoint(q) + (tau * lambda) * Atf;
        Vec x_next = prox_solver.solve(rhs);
        xbar = 2.0 * x_next - x;
        double dx = (x_next - x).norm() / (1.0 + x_next.norm());
        x = std::move(x_next);
        y = std::move(q);

        if (it % 10 == 9 || it + 1 == opts.max_iter) {
            double obj = objective(x);
            bool small = dx <= tol && std::abs(obj_prev - obj) <= tol * std::max(1.0, std::abs(obj));
            settled = small ? settled + 1 : 0;
            obj_prev = obj;
            if (settled >= 3) { r.converged = true; ++it; break; }
        }
    }

    r.minimizer = std::move(x);
    r.iterations = it;
    r.objective = objective(r.minimizer);
    detail::finish(r, T, f, lambda);
    return r;
}

// ---- entropy ----

// Componentwise exact prox. Fidelity and entropy both carry the grid
// quadrature weight, so the weight cancels in the minimizer and the reported
// objective is the weighted one.
inline SubproblemResult solve_entropy_denoise(const Signal& data, double lambda) {
    detail::check_lambda(lambda);
    SubproblemResult r;
    r.minimizer.resize(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i)
        r.minimizer[i] = prox_entropy_scalar(data.values[i], lambda);
    r.objective = data.spacing * (0.5 * lambda * (r.minimizer - data.values).squaredNorm())
                + evaluate(Penalty::entropy(), Signal(r.minimizer, data.spacing));
    r.subgradient_proxy = lambda * (data.values - r.minimizer);
    return r;
}

// ---- quadratic ----

// (lambda T^T T + I) u = lambda T^T f + tilt, the Tikhonov normal equations
// with an optional linear tilt (the previous iterate for the iterated
// Tikhonov method, the previous subgradient for the quadratic Bregman step).
inline SubproblemResult solve_quadratic_tilted(const Signal& data, const LinearMap& T,
                                               double lambda, const Vec& tilt) {
    detail::check_lambda(lambda);
    if (tilt.size() != T.cols()) throw std::invalid_argument("solve_quadratic_tilted: tilt size mismatch");
    const Vec& f = data.values;
    SubproblemResult r;
    if (T.is_identity()) {
        r.minimizer = (lambda * f + tilt) / (1.0 + lambda);
    } else {
        const Mat& A = T.dense();
        Eigen::LDLT<Mat> ldlt(lambda * (A.transpose() * A) + Mat::Identity(T.cols(), T.cols()));
        if (ldlt.info() != Eigen::Success)
            throw numerical_failure("solve_quadratic_tilted: factorization failed", 0.0);
        r.minimizer = ldlt.solve(lambda * (A.transpose() * f) + tilt);
    }
    r.objective = 0.5 * lambda * (T.apply(r.minimizer) - f).squaredNorm()
                + 0.5 * r.minimizer.squaredNorm() - tilt.dot(r.minimizer);
    detail::finish(r, T, data.values, lambda);
    return r;
}

inline SubproblemResult solve_quadratic_general(const Signal& data, const LinearMap& T,
                                                double lambda) {
    return solve_quadratic_tilted(data, T, lambda, Vec::Zero(T.cols()));
}

// ---- dispatch ----

inline SubproblemResult solve_subproblem(const Penalty& J, const LinearMap& T, const Signal& data,
                                         double lambda, const SolveOptions& opts = {}) {
    if (data.size() != T.rows()) throw std::invalid_argument("solve_subproblem: data size mismatch");
    switch (J.kind) {
    case PenaltyKind::L1:
        return T.is_identity() ? solve_l1_denoise(data, lambda)
                               : solve_l1_general(data, T, lambda, opts);
    case PenaltyKind::Lp:
        return solve_lp_general(data, T, lambda, J.p, opts);
    case PenaltyKind::TV1D:
        return solve_tv1d_general(data, T, lambda, J.tv_weight(data.spacing), opts);
    case PenaltyKind::Quadratic:
        return solve_quadratic_general(data, T, lambda);
    case PenaltyKind::Entropy:
        if (!T.is_identity())
            throw unsupported_combination("solve_subproblem: entropy penalty needs T = Id");
        return solve_entropy_denoise(data, lambda);
    }
    throw std::logic_error("solve_subproblem: unknown penalty kind");
}

} // namespace mhdm
