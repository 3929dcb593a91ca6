// Scalar kernels used by the proximal solvers: the principal branch of the
// Lambert W function, the entropy prox, soft thresholding, and the exact
// scalar prox of |s|^p for p in (0,1).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "errors.hpp"

namespace mhdm {

// Principal branch W0, defined for x >= -1/e. Halley iteration; the residual
// |w e^w - x| at return is below 1e-13 * max(1, |x|).
inline double lambert_w0(double x) {
    constexpr double inv_e = 0.36787944117144233;
    if (std::isnan(x)) throw std::domain_error("lambert_w0: NaN input");
    if (x < -inv_e) {
        if (x > -inv_e * (1.0 + 1e-12)) {
            x = -inv_e; // round-off slack at the branch point
        } else {
            throw std::domain_error("lambert_w0: x below -1/e");
        }
    }
    if (x == 0.0) return 0.0;

    double w;
    if (x < -0.25) {
        // series around the branch point, p = sqrt(2(ex + 1))
        double p = std::sqrt(2.0 * (std::exp(1.0) * x + 1.0));
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    } else if (x < 10.0) {
        w = std::log1p(x); // exact at 0, decent up to moderate x
    } else {
        double lx = std::log(x);
        w = lx - std::log(lx);
    }

    for (int it = 0; it < 60; ++it) {
        double ew = std::exp(w);
        double f = w * ew - x;
        if (std::abs(f) <= 1e-14 * std::max(1.0, std::abs(x))) return w;
        double fp = ew * (1.0 + w);
        double fpp = ew * (2.0 + w);
        double denom = fp - 0.5 * f * fpp / fp;
        double step = f / denom;
        w -= step;
        if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(w)) {
            break;
        }
    }
    double resid = std::abs(w * std::exp(w) - x);
    if (resid > 1e-13 * std::max(1.0, std::abs(x))) {
        throw numerical_failure("lambert_w0: Halley iteration stalled", w);
    }
    return w;
}

// Minimizer over s >= 0 of (lambda/2)(s - y)^2 + s log s, which is
// (1/lambda) W(lambda e^(lambda y - 1)). Always strictly positive. When the
// exponent overflows, W(e^z) is evaluated through the asymptotic fixed point
// w = z - log w instead of forming e^z.
inline double prox_entropy_scalar(double y, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("prox_entropy_scalar: lambda must be positive");
    double z = lambda * y - 1.0 + std::log(lambda);
    if (z > 700.0) {
        double w = z - std::log(z);
        for (int it = 0; it < 4; ++it) w = z - std::log(w);
        return w / lambda;
    }
    return lambert_w0(std::exp(z)) / lambda;
}

// Soft threshold, the prox of t|s|.
inline double prox_abs(double y, double t) {
    if (t < 0.0) throw std::invalid_argument("prox_abs: negative threshold");
    double m = std::abs(y) - t;
    return m > 0.0 ? (y < 0.0 ? -m : m) : 0.0;
}

// Global minimizer of (1/2)(s - y)^2 + w |s|^p for p in (0,1), w > 0.
// Odd in y. The minimizer is 0 or the largest root of s + w p s^(p-1) = |y|;
// that root is found by Newton from s0 = |y| (the map is convex and increasing
// there, so the iterates decrease monotonically onto the root), with a
// bisection fallback. Ties between the two candidates resolve to 0.
inline double prox_power_p(double y, double w, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("prox_power_p: p must lie in (0,1)");
    if (!(w > 0.0)) throw std::invalid_argument("prox_power_p: weight must be positive");
    double a = std::abs(y);
    if (a == 0.0) return 0.0;

    // stationary points of g(s) = s + w p s^(p-1): minimum at s_bar
    double s_bar = std::pow(w * p * (1.0 - p), 1.0 / (2.0 - p));
    double g_min = s_bar + w * p * std::pow(s_bar, p - 1.0);
    if (a <= g_min) return 0.0; // no interior stationary point

    auto g = [&](double s) { return s + w * p * std::pow(s, p - 1.0); };
    double s = a;
    bool newton_ok = false;
    for (int it = 0; it < 100; ++it) {
        double gs = g(s);
        if (std::abs(gs - a) <= 1e-13 * std::max(1.0, a)) { newton_ok = true; break; }
        double gp = 1.0 + w * p * (p - 1.0) * std::pow(s, p - 2.0);
        double next = s - (gs - a) / gp;
        if (!(next > s_bar) || !(next < s)) break; // leave to bisection
        s = next;
    }
    if (!newton_ok && std::abs(g(s) - a) > 1e-13 * std::max(1.0, a)) {
        double lo = s_bar, hi = a;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            if (g(mid) < a) lo = mid; else hi = mid;
            if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
        }
        s = 0.5 * (lo + hi);
    }

    double phi_root = 0.5 * (s - a) * (s - a) + w * std::pow(s, p);
    double phi_zero = 0.5 * a * a;
    if (phi_root < phi_zero) return y < 0.0 ? -s : s;
    return 0.0;
}

} // namespace mhdm
