#pragma once

#include <random>
#include <string>

#include "hypdr/formula.hpp"
#include "hypdr/model.hpp"
#include "hypdr/parser.hpp"

namespace hypdr::testing {

inline std::string fixture(const std::string& name) { return std::string(HYPDR_FIXTURE_DIR) + "/" + name; }

inline Formula F(const std::string& text) { return parse_formula(text); }

/// Random polynomial term over `vars` of bounded depth.
inline Term random_term(std::mt19937& rng, const std::vector<Var>& vars, int depth)
{
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 5);
    std::uniform_int_distribution<int> small(-4, 4);
    std::uniform_int_distribution<std::size_t> which(0, vars.size() - 1);
    switch (pick(rng)) {
    case 0: return Term::constant(small(rng) * 0.5);
    case 1: return Term::var(vars[which(rng)]);
    case 2: return random_term(rng, vars, depth - 1) + random_term(rng, vars, depth - 1);
    case 3: return random_term(rng, vars, depth - 1) - random_term(rng, vars, depth - 1);
    case 4: return random_term(rng, vars, depth - 1) * random_term(rng, vars, depth - 1);
    default: return -random_term(rng, vars, depth - 1);
    }
}

inline Formula random_formula(std::mt19937& rng, const std::vector<Var>& vars, int depth)
{
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 0 : 4);
    std::uniform_int_distribution<int> op(0, 4);
    switch (pick(rng)) {
    case 0:
    case 1:
        return Formula::atom(random_term(rng, vars, 2), static_cast<CmpOp>(op(rng)), random_term(rng, vars, 1));
    case 2: return random_formula(rng, vars, depth - 1) && random_formula(rng, vars, depth - 1);
    case 3: return random_formula(rng, vars, depth - 1) || random_formula(rng, vars, depth - 1);
    default: return !random_formula(rng, vars, depth - 1);
    }
}

inline Valuation random_valuation(std::mt19937& rng, const std::vector<Var>& vars, double lo = -3, double hi = 3)
{
    std::uniform_int_distribution<int> grid(static_cast<int>(lo * 4), static_cast<int>(hi * 4));
    Valuation s;
    for (const auto& v : vars)
        s.set(v, grid(rng) / 4.0);
    return s;
}

}  // namespace hypdr::testing
