#include <gtest/gtest.h>

#include <fstream>

#include "hypdr/ode.hpp"
#include "test_support.hpp"

using namespace hypdr;
using hypdr::testing::F;
using hypdr::testing::fixture;

namespace {
const Var x("x"), y("y"), sum("sum");

HybridAutomaton circle() { return load_model(fixture("circle.hha")); }
HybridAutomaton sum_model() { return load_model(fixture("sum.hha")); }

Command cmd(std::initializer_list<const char*> lines, const std::set<std::string>& vars)
{
    Command c;
    for (const char* l : lines)
        if (auto a = parse_assignment(l, vars))
            c.assignments.push_back(*a);
    return c;
}
}

TEST(ParseModel, CircleAutomaton)
{
    auto ha = circle();
    EXPECT_FALSE(ha.is_discrete());
    ASSERT_EQ(ha.locations.size(), 2u);
    EXPECT_EQ(ha.initial_location, "q0");
    EXPECT_EQ(ha.flow("q0").rhs.at(x).to_string(), "-y");
    EXPECT_EQ(ha.stay("q1").to_string(), "y <= 0");
    ASSERT_EQ(ha.transitions.size(), 2u);
    EXPECT_TRUE(ha.transitions[0].cmd.is_skip());
    EXPECT_EQ(ha.transitions[1].guard.to_string(), "y >= 0");
    ASSERT_TRUE(ha.safe);
    EXPECT_EQ(ha.safe->to_string(), "x <= 1");
}

TEST(ParseModel, SumProgram)
{
    auto ha = sum_model();
    EXPECT_TRUE(ha.is_discrete());
    const auto& loop = ha.transitions[0];
    ASSERT_EQ(loop.cmd.assignments.size(), 2u);
    EXPECT_EQ(loop.cmd.to_strings()[0], "sum := 1*sum + x");
    EXPECT_EQ(loop.cmd.to_strings()[1], "x := 1*x - 1");
}

TEST(ParseModel, NonAffineCommandRejected)
{
    EXPECT_THROW(load_model(fixture("bad_command.hha")), ValidationError);
}

TEST(ParseModel, InvariantViolationsRejected)
{
    const char* unknown_init = R"({"vars":["x"],"locations":[{"id":"q0"}],"init":{"location":"q9","formula":"x=0"}})";
    EXPECT_THROW(parse_model(unknown_init), ValidationError);
    const char* primed_guard = R"({"vars":["x"],"locations":[{"id":"q0"}],"init":{"location":"q0","formula":"x=0"},
        "transitions":[{"from":"q0","guard":"x' > 0","cmd":["skip"],"to":"q0"}]})";
    EXPECT_THROW(parse_model(primed_guard), ValidationError);
    const char* zero_scale = R"({"vars":["x"],"locations":[{"id":"q0"}],"init":{"location":"q0","formula":"x=0"},
        "transitions":[{"from":"q0","guard":"true","cmd":["x := 0*x + 1"],"to":"q0"}]})";
    EXPECT_THROW(parse_model(zero_scale), ValidationError);
    const char* partial_flow = R"({"vars":["x","y"],"locations":[{"id":"q0","flow":{"x":"1"}}],"init":{"location":"q0","formula":"x=0"}})";
    EXPECT_THROW(parse_model(partial_flow), ValidationError);
    const char* cyclic = R"({"vars":["x","y"],"locations":[{"id":"q0"}],"init":{"location":"q0","formula":"x=0"},
        "transitions":[{"from":"q0","guard":"true","cmd":["x := 1*x + y","y := 1*y + x"],"to":"q0"}]})";
    EXPECT_THROW(parse_model(cyclic), ValidationError);
}

TEST(ParseModel, SyntaxErrorsCarryPosition)
{
    try {
        parse_model("{\n  \"vars\": [\"x\",\n  oops]}");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line, 3);
    }
    try {
        parse_model(R"({"vars":["x"],"locations":[{"id":"q0"}],"init":{"location":"q0","formula":"x = = 0"}})");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("init.formula"), std::string::npos);
    }
}

TEST(ParseModel, SerializeRoundTrip)
{
    for (const char* name : {"circle.hha", "sum.hha", "ramp.hha"}) {
        auto ha = load_model(fixture(name));
        std::string text = serialize_model(ha);
        auto back = parse_model(text);
        EXPECT_EQ(serialize_model(back), text) << name;
    }
}

TEST(InvertCommand, Skip)
{
    Command skip;
    Valuation post{{x, 2.001}, {y, 0}};
    EXPECT_EQ(invert_command(skip, post), post);
}

TEST(InvertCommand, SumLoopReadsPreState)
{
    Command c = cmd({"sum := 1*sum + x", "x := 1*x - 1"}, {"x", "sum"});
    Valuation pre = invert_command(c, {{x, 2}, {sum, 3}});
    EXPECT_EQ(pre.at(x), 3.0);
    EXPECT_EQ(pre.at(sum), 0.0);
}

TEST(InvertCommand, Affine)
{
    Command c = cmd({"x := 2*x + 1"}, {"x"});
    EXPECT_EQ(invert_command(c, {{x, 5}}).at(x), 2.0);
}

TEST(InvertCommandProperty, InverseOfForward)
{
    std::mt19937 rng(19);
    std::uniform_int_distribution<int> coef(-6, 6);
    for (int n = 0; n < 500; ++n) {
        int r1x = coef(rng), r1y = coef(rng);
        if (r1x == 0) r1x = 3;
        if (r1y == 0) r1y = -2;
        std::string ax = "x := " + std::to_string(r1x) + "*x + " + std::to_string(coef(rng));
        std::string ay = "y := " + std::to_string(r1y) + "*y - " + std::to_string(coef(rng)) + "*x";
        Command c;
        c.assignments.push_back(*parse_assignment(ax, {"x", "y"}));
        if (n % 2)
            c.assignments.push_back(*parse_assignment(ay, {"x", "y"}));
        Valuation s = hypdr::testing::random_valuation(rng, {x, y});
        Valuation there = apply_command(c, s);
        Valuation back = invert_command(c, there);
        ASSERT_NEAR(back.at(x), s.at(x), 1e-9) << ax;
        ASSERT_NEAR(back.at(y), s.at(y), 1e-9) << ay;
        Valuation again = apply_command(c, invert_command(c, s));
        ASSERT_NEAR(again.at(x), s.at(x), 1e-9);
        ASSERT_NEAR(again.at(y), s.at(y), 1e-9);
        // The post-state is the unique model of the command relation.
        ASSERT_TRUE(c.as_formula({x, y}).evaluate(s.merged(there.primed(1)), 1e-9));
    }
}

TEST(CheckRun, CircleHalfTurnThenJump)
{
    auto ha = circle();
    ha.init = F("x = 1 & y = 0");
    hypdr::Run run{{"q0", {{x, 1}, {y, 0}}}, {"q1", {{x, -1}, {y, 0}}}, {"q1", {{x, 0}, {y, -1}}}};
    EXPECT_TRUE(check_run(ha, run, 1e-2));
}

TEST(CheckRun, SumExampleRun)
{
    auto ha = sum_model();
    hypdr::Run run{{"q0", {{x, 3}, {sum, 0}}}, {"q0", {{x, 2}, {sum, 3}}}, {"q0", {{x, 1}, {sum, 5}}},
            {"q0", {{x, 0}, {sum, 6}}}, {"q1", {{x, 0}, {sum, 6}}}};
    EXPECT_TRUE(check_run(ha, run, 0.0));
}

TEST(CheckRun, InitialViolationRejected)
{
    auto ha = circle();
    hypdr::Run run{{"q0", {{x, 1}, {y, 0}}}};
    EXPECT_FALSE(check_run(ha, run, 1e-2));
}

TEST(CheckRun, ZeroDurationJumpAccepted)
{
    auto ha = circle();
    ha.init = F("y = 0");
    hypdr::Run run{{"q0", {{x, 0.5}, {y, 0}}}, {"q1", {{x, 0.5}, {y, 0}}}, {"q1", {{x, 0.5}, {y, 0}}}};
    EXPECT_TRUE(check_run(ha, run, 1e-6));
}

TEST(CheckRun, StayViolationRejected)
{
    auto ha = circle();
    ha.init = F("x = 1 & y = 0");
    // Reaching (0,-1) from (1,0) anticlockwise would leave y >= 0.
    hypdr::Run run{{"q0", {{x, 1}, {y, 0}}}, {"q0", {{x, 0}, {y, -1}}}};
    EXPECT_FALSE(check_run(ha, run, 1e-2));
}

TEST(CheckRunProperty, CorruptedRunsRejected)
{
    auto ha = sum_model();
    hypdr::Run good{{"q0", {{x, 3}, {sum, 0}}}, {"q0", {{x, 2}, {sum, 3}}}, {"q0", {{x, 1}, {sum, 5}}},
             {"q0", {{x, 0}, {sum, 6}}}, {"q1", {{x, 0}, {sum, 6}}}};
    std::mt19937 rng(23);
    std::uniform_int_distribution<std::size_t> pos(1, good.size() - 1);
    std::uniform_int_distribution<int> delta(1, 5);
    for (int n = 0; n < 200; ++n) {
        hypdr::Run bad = good;
        std::size_t i = pos(rng);
        const Var& v = n % 2 ? x : sum;
        bad[i].valuation.set(v, bad[i].valuation.at(v) + delta(rng));
        EXPECT_FALSE(check_run(ha, bad, 1e-6));
    }
    hypdr::Run swapped = good;
    swapped[4].location = "q0";
    EXPECT_FALSE(check_run(ha, swapped, 1e-6));
}
