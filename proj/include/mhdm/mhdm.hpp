// The multiscale decomposition engine and its variants.
//
// Given data f and a forward operator T, the plain iteration extracts
//
//     u_n = argmin_u (lambda_n/2) ||v_{n-1} - T u||^2 + J(u),
//     x_n = x_{n-1} + u_n,   v_n = f - T x_n,   v_{-1} = f,
//
// with an increasing parameter sequence lambda_n. Variants swap the penalty
// per iteration: a varying lp exponent, the tight coupling
// lambda_n a_n J(u + x_{n-1}) + J(u), the linearized (Bregman) penalty
// J(x) - <p_{n-1}, x>, and the iterated Tikhonov method, which is the
// quadratic special case. Every run records the full decomposition, the
// residual norms, the per-step penalty values, and the fidelity inner
// products <T^T v_n, u_n> that enter the norm decomposition identity.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "solvers.hpp"

namespace mhdm {

enum class Variant { Mhdm, Flexible, Tight, Bregman, IteratedTikhonov };

inline const char* variant_name(Variant v) {
    switch (v) {
    case Variant::Mhdm: return "mhdm";
    case Variant::Flexible: return "flexible";
    case Variant::Tight: return "tight";
    case Variant::Bregman: return "bregman";
    case Variant::IteratedTikhonov: return "iterated-tikhonov";
    }
    return "?";
}

class LambdaSchedule {
public:
    static LambdaSchedule geometric(double lambda0, double ratio) {
        if (!(lambda0 > 0.0)) throw std::invalid_argument("LambdaSchedule: lambda0 must be positive");
        if (!(ratio > 1.0)) throw std::invalid_argument("LambdaSchedule: ratio must exceed 1");
        LambdaSchedule s;
        s.lambda0_ = lambda0;
        s.ratio_ = ratio;
        return s;
    }

    static LambdaSchedule explicit_values(std::vector<double> values) {
        if (values.empty()) throw std::invalid_argument("LambdaSchedule: empty value list");
        for (double v : values)
            if (!(v > 0.0)) throw std::invalid_argument("LambdaSchedule: values must be positive");
        LambdaSchedule s;
        s.values_ = std::move(values);
        return s;
    }

    double at(int n) const {
        if (n < 0) throw std::invalid_argument("LambdaSchedule: negative index");
        if (!values_.empty()) {
            if (n >= static_cast<int>(values_.size()))
                throw std::invalid_argument("LambdaSchedule: index past explicit list");
            return values_[static_cast<std::size_t>(n)];
        }
        return lambda0_ * std::pow(ratio_, n);
    }

    bool is_geometric() const { return values_.empty(); }
    double lambda0() const { return values_.empty() ? lambda0_ : values_.front(); }
    double ratio() const { return ratio_; }
    const std::vector<double>& explicit_list() const { return values_; }

private:
    double lambda0_ = 1.0;
    double ratio_ = 2.0;
    std::vector<double> values_;
};

struct StoppingRule {
    enum class Kind { FixedCount, Discrepancy };
    Kind kind = Kind::FixedCount;
    int last_index = 0;   // FixedCount: run n = 0..last_index inclusive
    double delta = 0.0;   // Discrepancy
    double tau = 1.01;
    int max_index = 100;  // Discrepancy cap

    static StoppingRule fixed_count(int last_index) {
        if (last_index < 0) throw std::invalid_argument("StoppingRule: negative index");
        StoppingRule r;
        r.kind = Kind::FixedCount;
        r.last_index = last_index;
        return r;
    }

    // stop at the first n with ||v_n||^2 < tau delta^2
    static StoppingRule discrepancy(double delta, double tau, int max_index) {
        if (!(delta >= 0.0)) throw std::invalid_argument("StoppingRule: negative delta");
        if (!(tau > 1.0)) throw std::invalid_argument("StoppingRule: tau must exceed 1");
        if (max_index < 0) throw std::invalid_argument("StoppingRule: negative cap");
        StoppingRule r;
        r.kind = Kind::Discrepancy;
        r.delta = delta;
        r.tau = tau;
        r.max_index = max_index;
        return r;
    }
};

struct BregmanState {
    Vec p;                            // current dual variable, p_n
    std::vector<double> sym_updates;  // <p_n - p_{n-1}, u_n>, the scaled symmetric Bregman distances
};

struct MultiscaleDecomposition {
    Variant variant = Variant::Mhdm;
    Penalty penalty;
    double spacing = 1.0;
    Vec data; // f as handed to the run

    std::vector<Vec> components;          // u_0 .. u_N
    std::vector<Vec> partial_sums;        // x_0 .. x_N
    std::vector<double> residual_norms;   // ||v_n||
    std::vector<double> lambdas;
    std::vector<double> penalty_values;   // J(u_n), or J_n(u_n) for flexible runs
    std::vector<double> fidelity_inner;   // <T^T v_n, u_n>
    std::vector<int> solver_iterations;
    std::vector<char> solver_converged;
    std::optional<int> stop_index;        // discrepancy index when triggered
    std::optional<BregmanState> bregman;  // Bregman and iterated Tikhonov runs

    int steps() const { return static_cast<int>(components.size()); }
    int last_index() const { return steps() - 1; }

    const Vec& solution() const {
        if (partial_sums.empty()) throw std::logic_error("MultiscaleDecomposition: empty run");
        return partial_sums.back();
    }
};

inline std::optional<int> discrepancy_stop_index(const std::vector<double>& residual_norms,
                                                 double delta, double tau) {
    if (!(tau > 1.0)) throw std::invalid_argument("discrepancy_stop_index: tau must exceed 1");
    if (!(delta >= 0.0)) throw std::invalid_argument("discrepancy_stop_index: negative delta");
    for (std::size_t n = 0; n < residual_norms.size(); ++n) {
        double rn2 = residual_norms[n] * residual_norms[n];
        // an exactly explained signal stops the scan even at delta = 0
        if (rn2 < tau * delta * delta || rn2 == 0.0) return static_cast<int>(n);
    }
    return std::nullopt;
}

inline std::optional<int> discrepancy_stop_index(const MultiscaleDecomposition& d,
                                                 double delta, double tau) {
    return discrepancy_stop_index(d.residual_norms, delta, tau);
}

namespace detail {

struct StepOutcome {
    Vec u;
    double penalty_value = 0.0;
    int iterations = 0;
    bool converged = true;
};

// common loop: produce u_n from (n, lambda_n, v_{n-1}, x_{n-1}), accumulate,
// record, stop by rule
template <class StepFn>
MultiscaleDecomposition engine_loop(Variant variant, const Penalty& J, const LinearMap& T,
                                    const Signal& f, const LambdaSchedule& lambdas,
                                    const StoppingRule& stop, StepFn step) {
    if (f.size() != T.rows()) throw std::invalid_argument("decomposition: data size mismatch");

    MultiscaleDecomposition d;
    d.variant = variant;
    d.penalty = J;
    d.spacing = f.spacing;
    d.data = f.values;

    Vec x = Vec::Zero(T.cols());
    Vec v = f.values;
    const int last = stop.kind == StoppingRule::Kind::FixedCount ? stop.last_index : stop.max_index;
    const double threshold = stop.tau * stop.delta * stop.delta;

    for (int n = 0; n <= last; ++n) {
        double lambda = lambdas.at(n);
        StepOutcome out = step(n, lambda, v, x);
        x += out.u;
        v = f.values - T.apply(x);

        d.components.push_back(out.u);
        d.partial_sums.push_back(x);
        d.residual_norms.push_back(v.norm());
        d.lambdas.push_back(lambda);
        d.penalty_values.push_back(out.penalty_value);
        d.fidelity_inner.push_back(T.apply_adjoint(v).dot(out.u));
        d.solver_iterations.push_back(out.iterations);
        d.solver_converged.push_back(out.converged ? 1 : 0);

        double vn2 = v.squaredNorm();
        if (stop.kind == StoppingRule::Kind::Discrepancy && (vn2 < threshold || vn2 == 0.0)) {
            d.stop_index = n;
            break;
        }
    }
    return d;
}

inline SolveOptions per_step_options(const SolveOptions& opts) {
    SolveOptions o = opts;
    o.warm_start.reset(); // every subproblem starts from zero
    return o;
}

// exact minimizer of (kappa/2)(s - m)^2 + t1 |s + c| + t2 |s|, the scalar
// piece of the tight l1 subproblem
inline double two_kink_prox(double m, double kappa, double t1, double c, double t2) {
    double best_s = 0.0;
    double best_v = std::numeric_limits<double>::infinity();
    auto consider = [&](double s) {
        double v = 0.5 * kappa * (s - m) * (s - m) + t1 * std::abs(s + c) + t2 * std::abs(s);
        if (v < best_v) { best_v = v; best_s = s; }
    };
    consider(0.0);
    consider(-c);
    for (double s1 : {-1.0, 1.0}) {
        for (double s2 : {-1.0, 1.0}) {
            double s = m - (t1 * s1 + t2 * s2) / kappa;
            if (s1 * (s + c) >= 0.0 && s2 * s >= 0.0) consider(s);
        }
    }
    return best_s;
}

// exact scalar minimizer for the tight entropy step with T = Id,
// (lambda/2)(s + c - m)^2 + lambda a S(s + c) + S(s), S(s) = s log s
inline double tight_entropy_scalar(double m, double lambda, double a, double c) {
    double lo = std::max(0.0, -c);
    auto dpsi = [&](double s) {
        return lambda * (s + c - m) + lambda * a * (std::log(s + c) + 1.0) + std::log(s) + 1.0;
    };
    double hi = lo + 1.0;
    while (dpsi(hi) < 0.0 && hi < 1e12) hi = lo + (hi - lo) * 2.0;
    double a_ = lo, b_ = hi;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (a_ + b_);
        if (mid <= lo) { a_ = lo; break; }
        if (dpsi(mid) < 0.0) a_ = mid; else b_ = mid;
        if (b_ - a_ <= 1e-15 * std::max(1.0, b_)) break;
    }
    return 0.5 * (a_ + b_);
}

// grid plus golden-section minimizer for the tight lp step with T = Id
inline double tight_lp_scalar(double m, double lambda, double a, double c, double p) {
    auto psi = [&](double s) {
        return 0.5 * lambda * (s + c - m) * (s + c - m)
             + lambda * a * std::pow(std::abs(s + c), p) + std::pow(std::abs(s), p);
    };
    double bound = std::abs(m) + std::abs(c) + 1.0;
    // the minimizer is within sqrt(2 psi(0)/lambda) of m
    bound = std::max(bound, std::sqrt(2.0 * psi(0.0) / lambda) + std::abs(m));
    double best_s = 0.0, best_v = psi(0.0);
    auto consider = [&](double s) {
        double v = psi(s);
        if (v < best_v) { best_v = v; best_s = s; }
    };
    consider(-c);
    const int grid = 800;
    double lo = m - bound, hi = m + bound, h = (hi - lo) / grid;
    int best_cell = -1;
    for (int i = 0; i <= grid; ++i) {
        double s = lo + i * h;
        double v = psi(s);
        if (v < best_v) { best_v = v; best_s = s; best_cell = i; }
    }
    if (best_cell >= 0) {
        // golden section inside the bracketing cells
        double a_ = lo + std::max(0, best_cell - 1) * h;
        double b_ = lo + std::min(grid, best_cell + 1) * h;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b_ - gr * (b_ - a_), x2 = a_ + gr * (b_ - a_);
        double f1 = psi(x1), f2 = psi(x2);
        for (int it = 0; it < 120; ++it) {
            if (f1 <= f2) { b_ = x2; x2 = x1; f2 = f1; x1 = b_ - gr * (b_ - a_); f1 = psi(x1); }
            else { a_ = x1; x1 = x2; f1 = f2; x2 = a_ + gr * (b_ - a_); f2 = psi(x2); }
        }
        consider(0.5 * (a_ + b_));
    }
    return best_s;
}

} // namespace detail

inline MultiscaleDecomposition run_mhdm(const Penalty& J, const LinearMap& T, const Signal& f,
                                        const LambdaSchedule& lambdas, const StoppingRule& stop,
                                        const SolveOptions& opts = {}) {
    SolveOptions step_opts = detail::per_step_options(opts);
    return detail::engine_loop(Variant::Mhdm, J, T, f, lambdas, stop,
        [&](int, double lambda, const Vec& v, const Vec&) {
            SubproblemResult r = solve_subproblem(J, T, Signal(v, f.spacing), lambda, step_opts);
            detail::StepOutcome out;
            out.penalty_value = evaluate(J, Signal(r.minimizer, f.spacing));
            out.u = std::move(r.minimizer);
            out.iterations = r.iterations;
            out.converged = r.converged;
            return out;
        });
}

// Tight variant: u_n minimizes
// (lambda_n/2)||T(u + x_{n-1}) - f||^2 + lambda_n a_n J(u + x_{n-1}) + J(u).
// Supported: l1 with any operator (monotone proximal gradient with the exact
// two-kink scalar prox, a single exact prox when T = Id), and separable
// penalties with T = Id via exact scalar minimization. a_n == 0 reduces every
// step to the plain iteration.
inline MultiscaleDecomposition run_tight(const Penalty& J, std::function<double(int)> a_rule,
                                         const LinearMap& T, const Signal& f,
                                         const LambdaSchedule& lambdas, const StoppingRule& stop,
                                         const SolveOptions& opts = {}) {
    if (!a_rule) throw std::invalid_argument("run_tight: empty coupling rule");
    if (J.kind == PenaltyKind::TV1D)
        throw unsupported_combination("run_tight: total variation coupling is not supported");
    if (J.kind != PenaltyKind::L1 && !T.is_identity())
        throw unsupported_combination("run_tight: this penalty needs T = Id");

    SolveOptions step_opts = detail::per_step_options(opts);
    return detail::engine_loop(Variant::Tight, J, T, f, lambdas, stop,
        [&, step_opts](int n, double lambda, const Vec&, const Vec& x) {
            double a = a_rule(n);
            if (!(a >= 0.0)) throw std::invalid_argument("run_tight: coupling a_n must be >= 0");
            detail::StepOutcome out;

            if (J.kind == PenaltyKind::Quadratic) {
                // (lambda T^T T + (lambda a + 1) I) u = lambda T^T (f - T x) - lambda a x
                Vec rhs = lambda * T.apply_adjoint(f.values - T.apply(x)) - (lambda * a) * x;
                if (T.is_identity()) {
                    out.u = rhs / (lambda + lambda * a + 1.0);
                } else {
                    const Mat& A = T.dense();
                    Eigen::LDLT<Mat> ldlt(lambda * (A.transpose() * A)
                                          + (lambda * a + 1.0) * Mat::Identity(T.cols(), T.cols()));
                    out.u = ldlt.solve(rhs);
                }
            } else if (J.kind == PenaltyKind::L1 && T.is_identity()) {
                out.u.resize(x.size());
                for (Eigen::Index i = 0; i < x.size(); ++i)
                    out.u[i] = detail::two_kink_prox(f.values[i] - x[i], lambda,
                                                     lambda * a, x[i], 1.0);
            } else if (J.kind == PenaltyKind::L1) {
                // monotone proximal gradient on the lambda-normalized objective
                const double L = std::max(op_norm_cached(T) * op_norm_cached(T), 1e-300);
                const double tol = step_opts.tol_or(1e-8);
                auto objective = [&](const Vec& u) {
                    Vec w = u + x;
                    return 0.5 * (T.apply(w) - f.values).squaredNorm()
                         + a * w.lpNorm<1>() + u.lpNorm<1>() / lambda;
                };
                Vec u = Vec::Zero(x.size());
                double obj = objective(u);
                int used = 0;
                for (int it = 0; it < step_opts.max_iter; ++it) {
                    Vec grad = T.apply_adjoint(T.apply(u + x) - f.values);
                    double t = 1.0 / L;
                    Vec cand(u.size());
                    double obj_cand = obj;
                    bool accepted = false;
                    for (int hhalf = 0; hhalf < 40; ++hhalf) {
                        Vec z = u - t * grad;
                        for (Eigen::Index i = 0; i < z.size(); ++i)
                            cand[i] = detail::two_kink_prox(z[i], 1.0 / t, t * a, x[i], t / lambda);
                        obj_cand = objective(cand);
                        if (obj_cand <= obj) { accepted = true; break; }
                        t *= 0.5;
                    }
                    ++used;
                    if (!accepted) break;
                    double drop = obj - obj_cand;
                    u = std::move(cand);
                    obj = obj_cand;
                    if (drop <= tol * std::max(1.0, std::abs(obj))) break;
                }
                out.u = std::move(u);
                out.iterations = used;
            } else if (J.kind == PenaltyKind::Lp) {
                out.u.resize(x.size());
                for (Eigen::Index i = 0; i < x.size(); ++i)
                    out.u[i] = detail::tight_lp_scalar(f.values[i] - x[i], lambda, a, x[i], J.p);
            } else { // Entropy, T = Id
                out.u.resize(x.size());
                for (Eigen::Index i = 0; i < x.size(); ++i)
                    out.u[i] = detail::tight_entropy_scalar(f.values[i] - x[i], lambda, a, x[i]);
            }

            out.penalty_value = evaluate(J, Signal(out.u, f.spacing));
            return out;
        });
}

// Bregman iteration: x_n minimizes (lambda_n/2)||T x - f||^2 + J(x) -
// <p_{n-1}, x>, then p_n = p_{n-1} + lambda_n T^T (f - T x_n). Supported for
// J in {l1, quadratic}; the quadratic case coincides with the iterated
// Tikhonov method.
inline MultiscaleDecomposition run_bregman(const Penalty& J, const LinearMap& T, const Signal& f,
                                           const LambdaSchedule& lambdas, const StoppingRule& stop,
                                           const SolveOptions& opts = {}) {
    if (J.kind != PenaltyKind::L1 && J.kind != PenaltyKind::Quadratic)
        throw unsupported_combination("run_bregman: penalty must be l1 or quadratic");

    SolveOptions step_opts = detail::per_step_options(opts);
    BregmanState state;
    state.p = Vec::Zero(T.cols());

    MultiscaleDecomposition d = detail::engine_loop(Variant::Bregman, J, T, f, lambdas, stop,
        [&](int, double lambda, const Vec&, const Vec& x) {
            SolveOptions o = step_opts;
            o.warm_start = x; // inner problems change slowly along the iteration
            SubproblemResult r = J.kind == PenaltyKind::L1
                ? solve_l1_tilted(f, T, lambda, state.p, o)
                : solve_quadratic_tilted(f, T, lambda, state.p);
            detail::StepOutcome out;
            out.u = r.minimizer - x;
            out.iterations = r.iterations;
            out.converged = r.converged;
            out.penalty_value = evaluate(J, Signal(out.u, f.spacing));
            Vec p_next = state.p + lambda * T.apply_adjoint(f.values - T.apply(r.minimizer));
            state.sym_updates.push_back((p_next - state.p).dot(out.u));
            state.p = std::move(p_next);
            return out;
        });
    d.bregman = std::move(state);
    return d;
}

// Iterated Tikhonov: x_n minimizes lambda_n ||T x - f||^2 + ||x - x_{n-1}||^2,
// solved exactly through the normal equations. Matches both the quadratic
// decomposition steps and the quadratic Bregman iteration.
inline MultiscaleDecomposition run_iterated_tikhonov(const LinearMap& T, const Signal& f,
                                                     const LambdaSchedule& lambdas,
                                                     const StoppingRule& stop,
                                                     const SolveOptions& opts = {}) {
    (void)opts; // direct solves only
    BregmanState state;
    state.p = Vec::Zero(T.cols());

    MultiscaleDecomposition d = detail::engine_loop(
        Variant::IteratedTikhonov, Penalty::quadratic(), T, f, lambdas, stop,
        [&](int, double lambda, const Vec&, const Vec& x) {
            SubproblemResult r = solve_quadratic_tilted(f, T, lambda, x);
            detail::StepOutcome out;
            out.u = r.minimizer - x;
            out.penalty_value = 0.5 * out.u.squaredNorm();
            // p_n - p_{n-1} = lambda T^T (f - T x_n) = u_n at an exact solve
            state.sym_updates.push_back(out.u.squaredNorm());
            state.p = r.minimizer;
            return out;
        });
    d.bregman = std::move(state);
    return d;
}

// Flexible iteration: one penalty J_n per step. Constant schedules reproduce
// the plain run exactly; varying-exponent schedules use |.|^p_n at step n;
// tight and linearized schedules delegate to their dedicated drivers.
inline MultiscaleDecomposition run_flexible(const PenaltySchedule& schedule, const LinearMap& T,
                                            const Signal& f, const LambdaSchedule& lambdas,
                                            const StoppingRule& stop,
                                            const SolveOptions& opts = {}) {
    switch (schedule.kind) {
    case ScheduleKind::Constant:
        return run_mhdm(schedule.base, T, f, lambdas, stop, opts);
    case ScheduleKind::Tight:
        return run_tight(schedule.base, schedule.coupling, T, f, lambdas, stop, opts);
    case ScheduleKind::BregmanLinearized:
        return run_bregman(schedule.base, T, f, lambdas, stop, opts);
    case ScheduleKind::VaryingExponent:
        break;
    }

    SolveOptions step_opts = detail::per_step_options(opts);
    MultiscaleDecomposition d = detail::engine_loop(
        Variant::Flexible, Penalty::l1(), T, f, lambdas, stop,
        [&](int n, double lambda, const Vec& v, const Vec&) {
            double p = schedule.exponent(n);
            if (!(p > 0.0 && p <= 1.0))
                throw std::invalid_argument("run_flexible: exponent rule left (0,1]");
            Penalty Jn = p == 1.0 ? Penalty::l1() : Penalty::lp(p);
            SubproblemResult r = solve_subproblem(Jn, T, Signal(v, f.spacing), lambda, step_opts);
            detail::StepOutcome out;
            // record the effective penalty J_n = J/lambda_n of the flexible form
            out.penalty_value = evaluate(Jn, Signal(r.minimizer, f.spacing)) / lambda;
            out.u = std::move(r.minimizer);
            out.iterations = r.iterations;
            out.converged = r.converged;
            return out;
        });
    return d;
}

} // namespace mhdm
