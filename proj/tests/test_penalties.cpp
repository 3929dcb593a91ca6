#include <catch2/catch_amalgamated.hpp>

#include <mhdm/penalties.hpp>

#include <cmath>
#include <random>

using mhdm::Penalty;
using mhdm::Signal;
using mhdm::Vec;

namespace {

Vec vec3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

} // namespace

TEST_CASE("penalty evaluation") {
    SECTION("l1") {
        REQUIRE(mhdm::evaluate(Penalty::l1(), Signal(vec3(1, -2, 0))) == 3.0);
    }

    SECTION("lp square roots") {
        REQUIRE(mhdm::evaluate(Penalty::lp(0.5), Signal(vec3(4, 0, 9)))
                == Catch::Approx(5.0).margin(1e-14));
    }

    SECTION("quadratic") {
        REQUIRE(mhdm::evaluate(Penalty::quadratic(), Signal(vec3(1, 2, 2))) == 4.5);
    }

    SECTION("total variation with explicit weight") {
        Vec v(4);
        v << 0, 1, 1, 0;
        REQUIRE(mhdm::evaluate(Penalty::tv1d(0.25), Signal(v)) == 0.5);
        // default weight is the grid spacing
        REQUIRE(mhdm::evaluate(Penalty::tv1d(), Signal(v, 0.25)) == 0.5);
        REQUIRE(mhdm::evaluate(Penalty::tv1d(), Signal(Vec::Constant(10, 3.7))) == 0.0);
    }

    SECTION("entropy of the constant 1/e equals -1/e") {
        int n = 64;
        Signal x(Vec::Constant(n, std::exp(-1.0)), 1.0 / n);
        REQUIRE(mhdm::evaluate(Penalty::entropy(), x)
                == Catch::Approx(-std::exp(-1.0)).margin(1e-12));
    }

    SECTION("entropy conventions at 0 and below") {
        REQUIRE(mhdm::evaluate(Penalty::entropy(), Signal(vec3(0, 0, 0))) == 0.0);
        REQUIRE(std::isinf(mhdm::evaluate(Penalty::entropy(), Signal(vec3(0.5, -0.1, 0)))));
    }
}

TEST_CASE("generalized triangle constants") {
    REQUIRE(mhdm::triangle_constant(Penalty::l1()) == 1.0);
    REQUIRE(mhdm::triangle_constant(Penalty::lp(0.3)) == 1.0);
    REQUIRE(mhdm::triangle_constant(Penalty::tv1d()) == 1.0);
    REQUIRE(mhdm::triangle_constant(Penalty::quadratic()) == 2.0);
    REQUIRE_FALSE(mhdm::triangle_constant(Penalty::entropy()).has_value());

    SECTION("inequality holds empirically") {
        std::mt19937_64 gen(5);
        std::uniform_real_distribution<double> U(-2.0, 2.0);
        std::vector<Penalty> js = {Penalty::l1(), Penalty::lp(0.5), Penalty::tv1d(0.1),
                                   Penalty::quadratic()};
        for (int trial = 0; trial < 1000; ++trial) {
            Vec x(12), y(12);
            for (int i = 0; i < 12; ++i) {
                x[i] = U(gen);
                y[i] = U(gen);
            }
            for (const Penalty& J : js) {
                double C = *mhdm::triangle_constant(J);
                double lhs = mhdm::evaluate(J, Signal(x - y));
                double rhs = mhdm::evaluate(J, Signal(x)) + mhdm::evaluate(J, Signal(y));
                REQUIRE(lhs <= C * rhs + 1e-12);
            }
        }
    }
}

TEST_CASE("lp approaches l1 as p approaches 1") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    std::bernoulli_distribution keep(0.3);
    Vec x = Vec::Zero(50);
    for (int i = 0; i < 50; ++i)
        if (keep(gen)) x[i] = U(gen);
    double l1 = mhdm::evaluate(Penalty::l1(), Signal(x));
    double lp = mhdm::evaluate(Penalty::lp(0.999), Signal(x));
    REQUIRE(std::abs(lp - l1) <= 1e-2 * l1);
}

TEST_CASE("penalty construction and classification") {
    REQUIRE_THROWS_AS(Penalty::lp(1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(Penalty::lp(0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(Penalty::tv1d(-0.1), std::invalid_argument);

    REQUIRE(mhdm::is_seminorm(Penalty::l1()));
    REQUIRE(mhdm::is_seminorm(Penalty::tv1d()));
    REQUIRE_FALSE(mhdm::is_seminorm(Penalty::lp(0.5)));
    REQUIRE_FALSE(mhdm::is_seminorm(Penalty::quadratic()));

    REQUIRE(mhdm::is_separable(Penalty::l1()));
    REQUIRE_FALSE(mhdm::is_separable(Penalty::tv1d()));
}

TEST_CASE("penalty schedules") {
    SECTION("exponent rules stay in (0, 1]") {
        for (int n = 0; n < 200; ++n) {
            double up = mhdm::increasing_exponent_rule(n);
            double down = mhdm::decreasing_exponent_rule(n);
            REQUIRE(up > 0.0);
            REQUIRE(up < 1.0);
            REQUIRE(down > 0.0);
            REQUIRE(down < 1.0);
            if (n > 0) {
                REQUIRE(up > mhdm::increasing_exponent_rule(n - 1));
                REQUIRE(down < mhdm::decreasing_exponent_rule(n - 1));
            }
        }
        REQUIRE(mhdm::increasing_exponent_rule(0) == Catch::Approx(0.05).margin(1e-15));
        REQUIRE(mhdm::decreasing_exponent_rule(0) == Catch::Approx(0.95).margin(1e-15));
    }

    SECTION("schedule construction validates rules") {
        REQUIRE_THROWS_AS(mhdm::PenaltySchedule::varying_exponent(nullptr), std::invalid_argument);
        REQUIRE_THROWS_AS(mhdm::PenaltySchedule::tight(Penalty::l1(), nullptr),
                          std::invalid_argument);
        auto s = mhdm::PenaltySchedule::varying_exponent(mhdm::increasing_exponent_rule);
        REQUIRE(s.kind == mhdm::ScheduleKind::VaryingExponent);
        REQUIRE(s.exponent(0) == Catch::Approx(0.05).margin(1e-15));
    }
}
