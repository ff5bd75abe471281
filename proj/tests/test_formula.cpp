#include <gtest/gtest.h>

#include "hypdr/smt.hpp"
#include "test_support.hpp"

using namespace hypdr;
using hypdr::testing::F;

namespace {
const Var x("x"), y("y"), sum("sum");
}

TEST(Evaluate, SumInitialCondition)
{
    EXPECT_TRUE(F("x >= 0 & sum = 0").evaluate({{x, 3}, {sum, 0}}));
}

TEST(Evaluate, TrueIsTrueEverywhere)
{
    EXPECT_TRUE(Formula::top().evaluate({}));
    EXPECT_TRUE(F("true").evaluate({{x, -7}}));
}

TEST(Evaluate, ExactComparison)
{
    EXPECT_TRUE(F("x <= 0.5").evaluate({{x, 0.4999}, {y, 0}}, 0.0));
    EXPECT_FALSE(F("x <= 0.5").evaluate({{x, 0.5001}}, 0.0));
}

TEST(Evaluate, ToleranceFollowsPolarity)
{
    Valuation s{{x, 1.0 + 1e-12}};
    EXPECT_FALSE(F("x <= 1").evaluate(s, 0.0));
    EXPECT_TRUE(F("x <= 1").evaluate(s, 1e-9));
    // Under negation the relaxation flips direction: !(x > 1) is x <= 1.
    EXPECT_TRUE(F("!(x > 1)").evaluate(s, 1e-9));
    EXPECT_TRUE(F("x = 1").evaluate(s, 1e-9));
    EXPECT_TRUE(F("!(x = 1)").evaluate(s, 1e-9));
}

TEST(Evaluate, MissingBindingThrows)
{
    EXPECT_THROW(F("x + y > 0").evaluate({{x, 1}}), UndeclaredVariable);
}

TEST(Substitute, SingleRename)
{
    Formula r = F("x > 0").substitute({{x, Term::var(x.primed(2))}});
    EXPECT_TRUE(r.structurally_equal(F("x'' > 0")));
}

TEST(Substitute, DoubleRenameIsSimultaneous)
{
    Formula r = F("x' = x - 1").substitute({{x.primed(1), Term::var(x)}, {x, Term::var(x.primed(2))}});
    EXPECT_TRUE(r.structurally_equal(F("x = x'' - 1"))) << r.to_string();
}

TEST(SubstituteProperty, AgreesWithUpdatedValuation)
{
    std::mt19937 rng(7);
    std::vector<Var> vars{x, y};
    for (int n = 0; n < 500; ++n) {
        Formula phi = hypdr::testing::random_formula(rng, vars, 3);
        Term t = hypdr::testing::random_term(rng, vars, 2);
        Valuation s = hypdr::testing::random_valuation(rng, vars);
        bool lhs = phi.substitute({{x, t}}).evaluate(s);
        bool rhs = phi.evaluate(s.updated(x, t.evaluate(s)));
        ASSERT_EQ(lhs, rhs) << phi.to_string() << " with x := " << t.to_string() << " at " << s.to_string();
    }
}

TEST(SubstituteProperty, CompositionMatchesComposedMapping)
{
    std::mt19937 rng(11);
    std::vector<Var> vars{x, y};
    for (int n = 0; n < 300; ++n) {
        Formula phi = hypdr::testing::random_formula(rng, vars, 3);
        std::map<Var, Term> m1{{x, hypdr::testing::random_term(rng, vars, 1)}};
        std::map<Var, Term> m2{{y, hypdr::testing::random_term(rng, vars, 1)}, {x, Term::var(y)}};
        std::map<Var, Term> composed;
        for (const auto& [v, t] : m1)
            composed[v] = t.substitute(m2);
        for (const auto& [v, t] : m2)
            if (!composed.count(v))
                composed[v] = t;
        Formula a = phi.substitute(m1).substitute(m2);
        Formula b = phi.substitute(composed);
        ASSERT_TRUE(a.structurally_equal(b)) << a.to_string() << " vs " << b.to_string();
    }
}

TEST(ValuationToFormula, Origin)
{
    Formula f = valuation_to_formula({{x, 0}, {y, 0}});
    EXPECT_TRUE(f.structurally_equal(F("x = 0 & y = 0"))) << f.to_string();
}

TEST(ValuationToFormula, CaseStudyPoint)
{
    Valuation s{{x, 0.490533}, {y, 1.93995}};
    Formula f = valuation_to_formula(s);
    EXPECT_EQ(f.to_string(), "x = 0.490533 & y = 1.93995");
    EXPECT_TRUE(f.evaluate(s));
    EXPECT_FALSE((!f).evaluate(s));
}

TEST(ValuationToFormula, UniqueModel)
{
    SmtSolver solver;
    Valuation s{{x, 0.25}, {y, -1.5}, {sum, 3}};
    Formula f = valuation_to_formula(s);
    for (const auto& [v, value] : s.values())
        EXPECT_TRUE(solver.check(f && !Formula::atom(Term::var(v), CmpOp::Eq, Term::constant(value))).unsat());
}

TEST(Conjuncts, FlattensNestedConjunctions)
{
    auto cs = conjuncts(F("a > 0 & (b > 0 & c > 0)"));
    ASSERT_EQ(cs.size(), 3u);
    EXPECT_EQ(cs[2].to_string(), "c > 0");
}

TEST(Conjuncts, DisjunctionIsAtomic)
{
    auto cs = conjuncts(F("a > 0 | b > 0"));
    ASSERT_EQ(cs.size(), 1u);
}

TEST(Conjuncts, ReconjoinedIsEquivalent)
{
    SmtSolver solver;
    std::mt19937 rng(3);
    std::vector<Var> vars{x, y};
    for (int n = 0; n < 30; ++n) {
        Formula phi = hypdr::testing::random_formula(rng, vars, 3) && hypdr::testing::random_formula(rng, vars, 2);
        Formula back = Formula::conjunction(conjuncts(phi));
        EXPECT_TRUE(solver.implies(phi, back));
        EXPECT_TRUE(solver.implies(back, phi));
    }
}

TEST(Printing, RoundTripsThroughParser)
{
    std::mt19937 rng(5);
    std::vector<Var> vars{x, y, x.primed(1), y.primed(2)};
    for (int n = 0; n < 500; ++n) {
        Formula phi = hypdr::testing::random_formula(rng, vars, 3);
        Formula back = parse_formula(phi.to_string());
        ASSERT_EQ(parse_formula(back.to_string()).to_string(), back.to_string());
        Valuation s = hypdr::testing::random_valuation(rng, vars);
        ASSERT_EQ(back.evaluate(s), phi.evaluate(s)) << phi.to_string();
    }
}

TEST(Parser, GrammarFeatures)
{
    Formula f = F("!(x < 1) -> y >= 0 | x'' = 2*x' - 3");
    EXPECT_EQ(f.kind(), Formula::Kind::Implies);
    Formula chain = F("-0.707107 <= x <= 0.707107");
    EXPECT_TRUE(chain.evaluate({{x, 0.7}}));
    EXPECT_FALSE(chain.evaluate({{x, 0.71}}));
    EXPECT_TRUE(F("(x + 1)*(x - 1) <= 0").evaluate({{x, 0.5}}));
}

TEST(Parser, ErrorsCarryPosition)
{
    try {
        parse_formula("x <= \n  & y");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line, 2);
        EXPECT_GE(e.column, 1);
    }
    EXPECT_THROW(parse_formula("x''' > 0"), ParseError);
    EXPECT_THROW(parse_formula("x / 2 > 0"), ParseError);
}

TEST(Parser, DeclaredVariables)
{
    EXPECT_NO_THROW(check_declared(F("x' > y"), {"x", "y"}));
    EXPECT_THROW(check_declared(F("z > 0"), {"x", "y"}), UndeclaredVariable);
    EXPECT_THROW(check_declared(F("x' > 0"), {"x"}, 0), UndeclaredVariable);
}
