// Convex and nonconvex penalties, their generalized triangle inequality
// constants, and per-iteration penalty schedules for the flexible variant of
// the multiscale decomposition.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>

#include "signal.hpp"

namespace mhdm {

enum class PenaltyKind { L1, Lp, TV1D, Quadratic, Entropy };

struct Penalty {
    PenaltyKind kind = PenaltyKind::L1;
    double p = 1.0;                  // exponent, Lp only
    std::optional<double> weight;    // TV1D only, grid spacing when absent

    static Penalty l1() { return {PenaltyKind::L1, 1.0, {}}; }

    static Penalty lp(double p) {
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("Penalty::lp: p must lie in (0,1)");
        return {PenaltyKind::Lp, p, {}};
    }

    static Penalty tv1d() { return {PenaltyKind::TV1D, 1.0, {}}; }

    static Penalty tv1d(double weight) {
        if (!(weight > 0.0)) throw std::invalid_argument("Penalty::tv1d: weight must be positive");
        return {PenaltyKind::TV1D, 1.0, weight};
    }

    static Penalty quadratic() { return {PenaltyKind::Quadratic, 1.0, {}}; }
    static Penalty entropy() { return {PenaltyKind::Entropy, 1.0, {}}; }

    double tv_weight(double spacing) const { return weight.value_or(spacing); }
};

// positively homogeneous convex penalties, for which the decomposition
// identity can use J(u)/lambda in place of the fidelity inner product
inline bool is_seminorm(const Penalty& J) {
    return J.kind == PenaltyKind::L1 || J.kind == PenaltyKind::TV1D;
}

inline bool is_separable(const Penalty& J) {
    return J.kind != PenaltyKind::TV1D;
}

inline double evaluate(const Penalty& J, const Signal& x) {
    const Vec& v = x.values;
    switch (J.kind) {
    case PenaltyKind::L1:
        return v.lpNorm<1>();
    case PenaltyKind::Lp: {
        double s = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), J.p);
        return s;
    }
    case PenaltyKind::TV1D: {
        double s = 0.0;
        for (Eigen::Index i = 0; i + 1 < v.size(); ++i) s += std::abs(v[i + 1] - v[i]);
        return J.tv_weight(x.spacing) * s;
    }
    case PenaltyKind::Quadratic:
        return 0.5 * v.squaredNorm();
    case PenaltyKind::Entropy: {
        double s = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v[i] < 0.0) return std::numeric_limits<double>::infinity();
            if (v[i] > 0.0) s += v[i] * std::log(v[i]);
        }
        return s * x.spacing;
    }
    }
    throw std::logic_error("evaluate: unknown penalty kind");
}

// Smallest C with J(x + y) <= C (J(x) + J(y)). Powers of seminorms give
// C = 2^max(0, p-1); the entropy admits no such constant.
inline std::optional<double> triangle_constant(const Penalty& J) {
    switch (J.kind) {
    case PenaltyKind::L1:
    case PenaltyKind::Lp:
    case PenaltyKind::TV1D:
        return 1.0;
    case PenaltyKind::Quadratic:
        return 2.0;
    case PenaltyKind::Entropy:
        return std::nullopt;
    }
    return std::nullopt;
}

// Per-iteration penalty J_n for the flexible iteration. Constant reproduces
// the plain method (J_n = J / lambda_n), VaryingExponent swaps in |.|^p_n
// with an iteration dependent exponent, Tight adds the coupled term
// a_n J(u + x_{n-1}), BregmanLinearized subtracts the linearization at the
// previous iterate.
enum class ScheduleKind { Constant, VaryingExponent, Tight, BregmanLinearized };

struct PenaltySchedule {
    ScheduleKind kind = ScheduleKind::Constant;
    Penalty base;
    std::function<double(int)> exponent; // VaryingExponent
    std::function<double(int)> coupling; // Tight, the a_n sequence

    static PenaltySchedule constant(Penalty J) {
        PenaltySchedule s;
        s.kind = ScheduleKind::Constant;
        s.base = J;
        return s;
    }

    static PenaltySchedule varying_exponent(std::function<double(int)> p_rule) {
        if (!p_rule) throw std::invalid_argument("PenaltySchedule: empty exponent rule");
        PenaltySchedule s;
        s.kind = ScheduleKind::VaryingExponent;
        s.exponent = std::move(p_rule);
        return s;
    }

    static PenaltySchedule tight(Penalty J, std::function<double(int)> a_rule) {
        if (!a_rule) throw std::invalid_argument("PenaltySchedule: empty coupling rule");
        PenaltySchedule s;
        s.kind = ScheduleKind::Tight;
        s.base = J;
        s.coupling = std::move(a_rule);
        return s;
    }

    static PenaltySchedule bregman_linearized(Penalty J) {
        PenaltySchedule s;
        s.kind = ScheduleKind::BregmanLinearized;
        s.base = J;
        return s;
    }
};

// the two exponent rules used in the varying-exponent experiments
inline double increasing_exponent_rule(int n) { return 0.95 - 0.9 / (n + 1); }
inline double decreasing_exponent_rule(int n) { return 0.05 + 0.9 / (n + 1); }

} // namespace mhdm
