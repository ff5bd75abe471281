#include <gtest/gtest.h>

#include <cmath>

#include "hypdr/discharge.hpp"
#include "test_support.hpp"

using namespace hypdr;
using hypdr::testing::F;

namespace {
const Var x("x"), y("y"), v("v");

Ode circle() { return Ode{{{x, parse_term("-y")}, {y, parse_term("x")}}}; }
Ode ramp() { return Ode{{{x, parse_term("v")}, {v, parse_term("1")}}}; }

struct Fixture : ::testing::Test {
    SmtSolver solver;
};
}

TEST_F(Fixture, RampPointQueryFindsOrigin)
{
    Discharger d(solver, {x, v}, SimParams{}, 1e-3);
    auto r = d.sat_point(F("x = 0 & v = 0"), ramp(), F("true"), {{x, 0.5}, {v, 1}});
    ASSERT_TRUE(r.sat()) << r.reason;
    EXPECT_NEAR(r.witness.at(x), 0.0, 1e-9);
    EXPECT_NEAR(r.witness.at(v), 0.0, 1e-9);
    EXPECT_NEAR(r.duration, 1.0, 1e-9);
}

TEST_F(Fixture, RampPointQueryRegionPre)
{
    Discharger d(solver, {x, v}, SimParams{}, 1e-3);
    auto r = d.sat_point(F("v <= 0"), ramp(), F("true"), {{x, 0.5}, {v, 1}});
    ASSERT_TRUE(r.sat());
    EXPECT_NEAR(r.witness.at(v), 0.0, 1e-9);
    EXPECT_NEAR(r.witness.at(x), 0.0, 1e-6);
}

TEST_F(Fixture, StayFailureNearStartIsUnreached)
{
    Discharger d(solver, {x, v}, SimParams{}, 1e-3);
    auto r = d.sat_point(F("v <= 0"), ramp(), F("x >= 0.25"), {{x, 0.5}, {v, 1}});
    EXPECT_TRUE(r.unreached()) << r.reason;
}

TEST_F(Fixture, ZeroDurationIsSat)
{
    Discharger d(solver, {x, v}, SimParams{}, 1e-3);
    auto r = d.sat_point(F("x >= 0"), ramp(), F("false"), {{x, 0.5}, {v, 1}});
    ASSERT_TRUE(r.sat());
    EXPECT_EQ(r.duration, 0.0);
    EXPECT_EQ(r.witness.at(x), 0.5);
}

TEST_F(Fixture, BoundaryCrossingBetweenSamplesIsLocated)
{
    // Backward from (0,-1) clockwise along the unit circle reaches y = 0 at
    // (-1,0) between samples; pre is the axis segment itself.
    Discharger d(solver, {x, y}, SimParams{}, 1e-3);
    auto r = d.sat_point(F("y = 0 & -1.1 <= x & x <= -0.9"), circle(), F("y <= 0"), {{x, 0}, {y, -1}});
    ASSERT_TRUE(r.sat()) << r.reason;
    EXPECT_NEAR(r.witness.at(x), -1.0, 1e-6);
    EXPECT_NEAR(r.duration, M_PI / 2, 2e-3);
}

TEST_F(Fixture, JumpQueryAtFixpoint)
{
    Discharger d(solver, {x, y}, SimParams{}, 1e-3);
    auto r = d.sat_jump(F("x = 0 & y = 0"), circle(), F("y >= 0"), F("y <= 0"), Command{}, {{x, 0}, {y, 0}});
    EXPECT_TRUE(r.sat());
}

TEST_F(Fixture, JumpQueryCaseStudyConflict)
{
    Discharger d(solver, {x, y}, SimParams{}, 1e-3);
    auto r = d.sat_jump(F("(x <= 1 & y >= 0) | x <= 0.5"), circle(), F("y >= 0"), F("y <= 0"), Command{},
                        {{x, 0.998516}, {y, -1.889365}});
    EXPECT_TRUE(r.unreached()) << r.reason;
}

TEST_F(Fixture, JumpQueryInvertsCommand)
{
    Discharger d(solver, {x, y}, SimParams{}, 1e-3);
    Command c;
    c.assignments.push_back(*parse_assignment("x := 1*x - 1", {"x", "y"}));
    Ode still{{{x, Term::constant(0)}, {y, Term::constant(0)}}};
    auto r = d.sat_jump(F("x = 3"), still, F("true"), F("x > 0"), c, {{x, 2}, {y, 0}});
    ASSERT_TRUE(r.sat());
    EXPECT_EQ(r.witness.at(x), 3.0);
    auto g = d.sat_jump(F("x = 3"), still, F("true"), F("x > 5"), c, {{x, 2}, {y, 0}});
    EXPECT_TRUE(g.unreached());
}

TEST_F(Fixture, InvariancePointAtOrigin)
{
    auto r = query_unsat_invariance(solver, F("x = 0 & y = 0"), circle(), F("y >= 0"), F("x > 1"), 1e-3);
    EXPECT_TRUE(r.unsat) << r.method;
}

TEST_F(Fixture, InvarianceOverlapIsOtherwise)
{
    auto r = query_unsat_invariance(solver, F("x <= 1"), circle(), F("true"), F("x <= 1"), 1e-3);
    EXPECT_FALSE(r.unsat);
    EXPECT_EQ(r.method, "pre and target overlap");
}

TEST_F(Fixture, InvarianceMonotoneVariable)
{
    Ode up{{{y, Term::constant(1)}}};
    auto r = query_unsat_invariance(solver, F("y > 1"), up, F("true"), F("y < 0"), 1e-3);
    EXPECT_TRUE(r.unsat);
    EXPECT_EQ(r.method, "pre is invariant");
}

TEST_F(Fixture, InvarianceFailsOnRotationDisk)
{
    // An Euler step leaves every disk of the rotation field; only the
    // level-set check refutes this one.
    auto pre = F("x*x + y*y <= 0.25");
    auto target = F("x > 0.75");
    EXPECT_FALSE(query_unsat_invariance(solver, pre, circle(), F("true"), target, 1e-3).unsat);
    auto fi = query_unsat_first_integral(solver, {x, y}, pre, circle(), F("true"), target);
    EXPECT_TRUE(fi.unsat) << fi.method;
}

TEST(FirstIntegrals, CircleAndRamp)
{
    auto c = polynomial_first_integrals(circle(), {x, y});
    ASSERT_EQ(c.size(), 1u);
    Valuation s{{x, 0.6}, {y, 0.8}};
    EXPECT_NEAR(c[0].evaluate(s) / c[0].evaluate({{x, 1}, {y, 0}}), 1.0, 1e-12);
    auto r = polynomial_first_integrals(ramp(), {x, v});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_TRUE(r[0].lie_derivative(ramp().field()).is_zero());
    Ode grow{{{x, parse_term("x")}}};
    EXPECT_TRUE(polynomial_first_integrals(grow, {x}).empty());
}

TEST_F(Fixture, DischargerRecordsUnsatVerdicts)
{
    Discharger d(solver, {x, y}, SimParams{}, 1e-3);
    auto out = d.refute({F("x = 0 & y = 0"), circle(), F("y >= 0"), F("y < 0")});
    EXPECT_TRUE(out.unsat);
    EXPECT_EQ(d.unsat_log().size(), 1u);
    EXPECT_FALSE(d.refute({F("x = 1 & y = 0"), circle(), F("y >= 0"), F("x < 0")}).unsat);
    EXPECT_EQ(d.unsat_log().size(), 1u);
}

TEST_F(Fixture, ProbeFindsRealCounterexamples)
{
    std::mt19937 rng(1);
    SimParams p;
    p.horizon = 4000;
    // Reachable: from (1,0) the rotation reaches x < 0 within pi/2 + a bit.
    auto bad = probe_obligation(solver, {x, y}, {F("x = 1 & y = 0"), circle(), F("y >= 0"), F("x < 0")}, 200, p, rng);
    EXPECT_TRUE(bad.counterexample.has_value());
    auto good = probe_obligation(solver, {x, y}, {F("x*x + y*y <= 0.25"), circle(), F("true"), F("x > 0.75")}, 200, p, rng);
    EXPECT_FALSE(good.counterexample.has_value());
    EXPECT_GT(good.start_points, 10u);
}
