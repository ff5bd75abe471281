#include <gtest/gtest.h>

#include <random>

#include "hypdr/discharge.hpp"
#include "hypdr/ode.hpp"
#include "hypdr/smt.hpp"
#include "hypdr/transformers.hpp"
#include "test_support.hpp"

using namespace hypdr;
using hypdr::testing::F;
using hypdr::testing::fixture;

namespace {

Formula point(const Valuation& s)
{
    std::vector<Formula> eqs;
    for (const auto& [v, c] : s.values())
        eqs.push_back(Formula::atom(Term::var(v), CmpOp::Eq, Term::constant(c)));
    return Formula::conjunction(eqs);
}

/// Random linear constraint a*x + b*y <= c with small grid coefficients.
Formula random_halfplane(std::mt19937& rng, const Var& a, const Var& b)
{
    std::uniform_int_distribution<int> k(-3, 3);
    Term t = Term::constant(k(rng)) * Term::var(a) + Term::constant(k(rng)) * Term::var(b);
    return Formula::atom(t, CmpOp::Le, Term::constant(k(rng) * 0.5));
}

Formula random_box(std::mt19937& rng, const Var& a, const Var& b)
{
    std::uniform_int_distribution<int> lo(-8, 6), w(1, 6);
    double a0 = lo(rng) / 4.0, b0 = lo(rng) / 4.0;
    double aw = w(rng) / 4.0, bw = w(rng) / 4.0;
    auto ta = Term::var(a), tb = Term::var(b);
    return Formula::conjunction({Formula::atom(ta, CmpOp::Ge, Term::constant(a0)),
                                 Formula::atom(ta, CmpOp::Le, Term::constant(a0 + aw)),
                                 Formula::atom(tb, CmpOp::Ge, Term::constant(b0)),
                                 Formula::atom(tb, CmpOp::Le, Term::constant(b0 + bw))});
}

Formula random_region(std::mt19937& rng, const Var& a, const Var& b)
{
    std::uniform_int_distribution<int> pick(0, 3), rad(1, 12);
    switch (pick(rng)) {
    case 0: return random_halfplane(rng, a, b);
    case 1: return random_box(rng, a, b);
    case 2: {
        auto ta = Term::var(a), tb = Term::var(b);
        return Formula::atom(ta * ta + tb * tb, CmpOp::Le, Term::constant(rad(rng) * 0.25));
    }
    default: return random_box(rng, a, b) || random_halfplane(rng, a, b);
    }
}

std::vector<Valuation> samples_in(std::mt19937& rng, const std::vector<Var>& vars, const Formula& phi, int want)
{
    std::vector<Valuation> out;
    for (int i = 0; i < 400 && static_cast<int>(out.size()) < want; ++i) {
        auto s = hypdr::testing::random_valuation(rng, vars, -2, 2);
        if (phi.evaluate(s))
            out.push_back(s);
    }
    return out;
}

struct Circle : ::testing::Test {
    HybridAutomaton ha = load_model(fixture("circle.hha"));
    SmtSolver solver;
    Discharger d{solver, ha.vars, SimParams{}, 1e-3};
    Var x = ha.vars[0], y = ha.vars[1];
};

struct Sum : ::testing::Test {
    HybridAutomaton ha = load_model(fixture("sum.hha"));
    SmtSolver solver;
};

}  // namespace

TEST_F(Sum, InitialFrameMapsInitialLocationToInit)
{
    auto R = initial_frame(ha);
    EXPECT_EQ(R.at("q0").to_string(), ha.init.to_string());
    EXPECT_TRUE(R.at("q1").is_false());
    // Init is always part of the image at the initial location.
    EXPECT_TRUE(solver.implies(ha.init, predtrans_discrete(ha, R, "q0")));
}

TEST_F(Sum, DiscreteImageIsMonotone)
{
    std::mt19937 rng(11);
    const auto& vars = ha.vars;
    int compared = 0;
    for (int trial = 0; trial < 40; ++trial) {
        Frame weak, strong;
        for (const auto& loc : ha.locations) {
            auto w = random_halfplane(rng, vars[0], vars[1]) || random_halfplane(rng, vars[0], vars[1]);
            weak[loc.id] = w;
            strong[loc.id] = w && random_halfplane(rng, vars[0], vars[1]);
        }
        for (const auto& loc : ha.locations) {
            auto big = predtrans_discrete(ha, weak, loc.id);
            auto small = predtrans_discrete(ha, strong, loc.id);
            for (int k = 0; k < 6; ++k) {
                auto s = hypdr::testing::random_valuation(rng, vars, -3, 3);
                auto in_small = solver.check(small && point(s));
                if (!in_small.sat())
                    continue;
                ++compared;
                EXPECT_TRUE(solver.check(big && point(s)).sat()) << s.to_string() << " trial " << trial;
            }
        }
    }
    EXPECT_GT(compared, 20);
}

TEST_F(Sum, ImagesUseFreshCopies)
{
    auto R = constant_frame(ha, F("x >= 0"));
    auto a = predtrans_discrete(ha, R, "q0").free_vars();
    auto b = predtrans_discrete(ha, R, "q0").free_vars();
    std::set<Var> model(ha.vars.begin(), ha.vars.end());
    std::set<Var> copies_a, copies_b;
    for (const auto& v : a)
        if (!model.count(v))
            copies_a.insert(v);
    for (const auto& v : b)
        if (!model.count(v))
            copies_b.insert(v);
    ASSERT_FALSE(copies_a.empty());
    for (const auto& v : copies_a)
        EXPECT_FALSE(copies_b.count(v)) << v.to_string();
}

TEST_F(Circle, HybridImagesUseFreshCopies)
{
    auto R = constant_frame(ha, F("x <= 1"));
    auto a = predtrans_hybrid(ha, R, "q1");
    auto b = predtrans_hybrid(ha, R, "q1");
    ASSERT_EQ(a.crps.size(), 1u);
    EXPECT_NE(a.crps[0].copy, b.crps[0].copy);
    for (const auto& v : a.crps[0].pre.free_vars())
        EXPECT_NE(std::find(a.crps[0].copy.begin(), a.crps[0].copy.end(), v), a.crps[0].copy.end());
    EXPECT_NE(predtrans_cont(ha, R, "q0").copy, a.crps[0].copy);
}

TEST_F(Circle, CommandSubstitutionsAgreeWithEvaluation)
{
    auto sum = load_model(fixture("sum.hha"));
    std::mt19937 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto phi = hypdr::testing::random_formula(rng, sum.vars, 2);
        const auto& t = sum.transitions[trial % sum.transitions.size()];
        auto s = hypdr::testing::random_valuation(rng, sum.vars);
        EXPECT_EQ(post_image(sum, t, phi).evaluate(s), phi.evaluate(apply_command(t.cmd, s))) << phi.to_string();
        EXPECT_EQ(command_preimage(sum, t, phi).evaluate(s), phi.evaluate(invert_command(t.cmd, s)))
            << phi.to_string();
    }
}

// Randomized single-step soundness: every concrete step from a frame lands
// in the transformer image, and a refuted closure admits no concrete step
// outside ψ.

TEST_F(Sum, JumpStepsLandInDiscreteImage)
{
    std::mt19937 rng(21);
    int steps = 0;
    for (int trial = 0; steps < 200 && trial < 2000; ++trial) {
        Frame R;
        for (const auto& loc : ha.locations)
            R[loc.id] = random_region(rng, ha.vars[0], ha.vars[1]);
        const auto& t = ha.transitions[trial % ha.transitions.size()];
        for (const auto& s : samples_in(rng, ha.vars, R.at(t.from) && t.guard, 1)) {
            auto post = apply_command(t.cmd, s);
            auto r = solver.check(predtrans_discrete(ha, R, t.to) && point(post));
            EXPECT_TRUE(r.sat()) << s.to_string() << " -> " << post.to_string();
            ++steps;
        }
    }
    EXPECT_GE(steps, 200);
}

namespace {
/// Forward-simulates from s under the flow of q and calls `visit` at the
/// start and at every later sample where the stay condition holds.
void flow_samples(const HybridAutomaton& ha, const LocationId& q, const Valuation& s, int horizon,
                  const std::function<void(const Valuation&)>& visit)
{
    VectorField f(ha.flow(q), ha.vars);
    SimParams p;
    p.horizon = horizon;
    simulate(f, s, p, Direction::Forward, [&](int i, std::span<const double> x) {
        auto v = f.to_valuation(x);
        if (i > 0 && !ha.stay(q).evaluate(v))
            return false;
        visit(v);
        return true;
    });
}
}

TEST_F(Circle, RefutedJumpClosuresAdmitNoEscape)
{
    std::mt19937 rng(31);
    int trials = 0, refuted = 0;
    for (; trials < 150; ++trials) {
        const auto& t = ha.transitions[trials % 2];
        auto pre = random_region(rng, x, y);
        auto psi = random_region(rng, x, y);
        if (trials % 3 == 0)
            psi = psi || pre;
        auto outcome = d.refute(closure_obligation(ha, pre, t, psi));
        if (!outcome.unsat)
            continue;
        ++refuted;
        for (const auto& s : samples_in(rng, ha.vars, pre, 4))
            flow_samples(ha, t.from, s, 4000, [&](const Valuation& v) {
                if (t.guard.evaluate(v))
                    ASSERT_TRUE(psi.evaluate(apply_command(t.cmd, v), 1e-6))
                        << "pre " << pre.to_string() << " psi " << psi.to_string() << " at " << v.to_string()
                        << " via " << outcome.method;
            });
    }
    EXPECT_EQ(trials, 150);
    EXPECT_GT(refuted, 10);
}

TEST_F(Circle, RefutedFlowClosuresAdmitNoEscape)
{
    std::mt19937 rng(41);
    int trials = 0, refuted = 0;
    for (; trials < 150; ++trials) {
        const LocationId q = trials % 2 ? "q1" : "q0";
        auto pre = random_region(rng, x, y);
        auto psi = random_region(rng, x, y) || pre;
        auto outcome = d.refute(flow_obligation(ha, pre, q, psi));
        if (!outcome.unsat)
            continue;
        ++refuted;
        for (const auto& s : samples_in(rng, ha.vars, pre, 4))
            flow_samples(ha, q, s, 4000, [&](const Valuation& v) {
                ASSERT_TRUE(psi.evaluate(v, 1e-6))
                    << "pre " << pre.to_string() << " psi " << psi.to_string() << " at " << v.to_string()
                    << " via " << outcome.method;
            });
    }
    EXPECT_EQ(trials, 150);
    EXPECT_GT(refuted, 10);
}
