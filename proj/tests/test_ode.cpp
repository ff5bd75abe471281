#include <gtest/gtest.h>

#include <cmath>

#include "hypdr/ode.hpp"
#include "test_support.hpp"

using namespace hypdr;

namespace {
const Var x("x"), y("y"), v("v");

Ode circle() { return Ode{{{x, parse_term("-y")}, {y, parse_term("x")}}}; }
Ode ramp() { return Ode{{{x, parse_term("v")}, {v, parse_term("1")}}}; }
}

TEST(Simulate, RampReachesHalfAtOneSecond)
{
    SimParams p;
    p.horizon = 1001;
    auto tr = simulate_ode(ramp(), {x, v}, {{x, 0}, {v, 0}}, p, Direction::Forward);
    ASSERT_EQ(tr.samples.size(), 1001u);
    Valuation end = tr.at(1000);
    EXPECT_NEAR(end.at(x), 0.5, 1e-6);
    EXPECT_NEAR(end.at(v), 1.0, 1e-6);
}

TEST(Simulate, CircleConservesRadius)
{
    SimParams p;
    p.horizon = 10001;
    auto tr = simulate_ode(circle(), {x, y}, {{x, 1}, {y, 0}}, p, Direction::Forward);
    for (const auto& s : tr.samples)
        ASSERT_NEAR(s[0] * s[0] + s[1] * s[1], 1.0, 1e-6);
}

TEST(Simulate, BackwardForwardRoundTrip)
{
    SimParams p;
    p.horizon = 10001;
    Valuation start{{x, 0.3}, {y, -0.8}};
    auto back = simulate_ode(circle(), {x, y}, start, p, Direction::Backward);
    auto fwd = simulate_ode(circle(), {x, y}, back.at(10000), p, Direction::Forward);
    EXPECT_NEAR(fwd.at(10000).at(x), 0.3, 1e-6);
    EXPECT_NEAR(fwd.at(10000).at(y), -0.8, 1e-6);
}

TEST(Simulate, BackwardFlowRunsClockwise)
{
    SimParams p;
    p.horizon = 2;
    auto tr = simulate_ode(circle(), {x, y}, {{x, 1}, {y, 0}}, p, Direction::Backward);
    EXPECT_LT(tr.at(1).at(y), 0.0);
}

TEST(Simulate, FixpointStaysPut)
{
    SimParams p;
    p.horizon = 500;
    auto tr = simulate_ode(circle(), {x, y}, {{x, 0}, {y, 0}}, p, Direction::Forward);
    EXPECT_EQ(tr.at(499).at(x), 0.0);
    EXPECT_EQ(tr.at(499).at(y), 0.0);
}

TEST(Simulate, DivergenceIsReported)
{
    Ode blowup{{{x, parse_term("x*x")}}};
    SimParams p;
    EXPECT_THROW(simulate_ode(blowup, {x}, {{x, 1}}, p, Direction::Forward), SimulationDiverged);
}

TEST(Simulate, DumpFormat)
{
    SimParams p;
    p.horizon = 2;
    auto tr = simulate_ode(circle(), {x, y}, {{x, 0}, {y, 0}}, p, Direction::Backward);
    EXPECT_EQ(tr.dump(), "0,0,0\n-0.001,0,0\n");
}
