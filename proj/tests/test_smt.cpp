#include <gtest/gtest.h>

#include <cmath>

#include "hypdr/smt.hpp"
#include "test_support.hpp"

using namespace hypdr;
using hypdr::testing::F;

namespace {
const Var x("x"), y("y");
}

TEST(Smt, ContradictionIsUnsat)
{
    SmtSolver s;
    EXPECT_TRUE(s.check(F("x > 0 & x < 0")).unsat());
}

TEST(Smt, CircleIntersectionModel)
{
    SmtSolver s;
    auto r = s.check(F("x*x + y*y = 1 & y >= 0 & x = 1"));
    ASSERT_TRUE(r.sat());
    EXPECT_DOUBLE_EQ(r.model.at(x), 1.0);
    EXPECT_DOUBLE_EQ(r.model.at(y), 0.0);
}

TEST(Smt, CounterexamplePointViolatesStay)
{
    SmtSolver s;
    EXPECT_TRUE(s.check(F("x = 0.998516 & y = -1.889365 & y >= 0")).unsat());
}

TEST(Smt, IrrationalModelIsApproximated)
{
    SmtSolver s;
    auto r = s.check(F("x*x = 2 & x > 0"));
    ASSERT_TRUE(r.sat());
    EXPECT_NEAR(r.model.at(x), std::sqrt(2.0), 1e-12);
}

TEST(Smt, ModelsBindExtraVariables)
{
    SmtSolver s;
    auto r = s.check(F("x > 3"), {y});
    ASSERT_TRUE(r.sat());
    EXPECT_TRUE(r.model.contains(y));
    EXPECT_GT(r.model.at(x), 3.0);
}

TEST(Smt, PrimedAndFreshCopiesAreDistinctSymbols)
{
    SmtSolver s;
    Formula f = F("x = 1 & x' = 2 & x'' = 3") && Formula::atom(Term::var(Var("x", 2, 5)), CmpOp::Eq, Term::constant(4));
    auto r = s.check(f);
    ASSERT_TRUE(r.sat());
    EXPECT_EQ(r.model.at(Var("x", 2, 5)), 4.0);
    EXPECT_EQ(r.model.at(Var("x", 2)), 3.0);
    EXPECT_NE(smt_symbol(Var("x", 2, 5)), smt_symbol(Var("x", 2)));
}

TEST(Smt, ImplicationAndCache)
{
    SmtSolver s;
    EXPECT_TRUE(s.implies(F("x > 2"), F("x > 1")));
    EXPECT_FALSE(s.implies(F("x > 1"), F("x > 2")));
    EXPECT_TRUE(s.implies(F("x > 2"), F("x > 1")));
    EXPECT_GE(s.stats().cache_hits, 1u);
}

TEST(Smt, SymbolNamesAreQuoted)
{
    EXPECT_EQ(smt_symbol(Var("and")), "|and|");
    EXPECT_EQ(to_smtlib(F("x - 1.5 >= -2")), "(>= (- |x| 1.5) (- 2.0))");
}

TEST(Smt, UnreachableSolverFailsAtStartup)
{
    EXPECT_THROW(SmtSolver("sh -c 'read line; exit 1'", 2000), SolverError);
}

TEST(Smt, CrashedSolverRestarts)
{
    // The solver dies after a few hundred bytes of input each time it runs.
    SmtSolver flaky("sh -c 'dd bs=1 count=600 status=none | z3 -in'", 2000);
    int answered = 0;
    for (int k = 0; k < 20; ++k) {
        auto r = flaky.check(F("x > " + std::to_string(k) + " & x < " + std::to_string(k + 1)));
        if (!r.unknown()) {
            ASSERT_TRUE(r.sat());
            ++answered;
        }
    }
    EXPECT_GT(flaky.stats().restarts, 0u);
    EXPECT_GT(answered, 0);
}
