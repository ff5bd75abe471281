#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hypdr/model.hpp"

namespace hypdr {

/// Per-location formula over the unprimed variables.
using Frame = std::map<LocationId, Formula>;

Frame constant_frame(const HybridAutomaton& ha, const Formula& phi);
/// q0 ↦ φ0, every other location ↦ false.
Frame initial_frame(const HybridAutomaton& ha);
Frame conjoin(const Frame& a, const Frame& b);
std::string to_string(const Frame& frame);

/// Allocates instance numbers for fresh copies of the double-primed
/// variables. Process-wide, so no two obligations ever share a copy.
int fresh_instance();
/// Instance number reserved for auxiliary symbols inside a single solver
/// query (the Euler step length, the start-point copy of a level-set
/// check). Never returned by fresh_instance(), so identical obligations
/// produce identical solver text.
inline constexpr int kScratchInstance = 1 << 30;
std::vector<Var> fresh_copy(const std::vector<Var>& vars, int instance);
/// Renaming x ↦ x″#instance.
std::map<Var, Term> to_copy(const std::vector<Var>& vars, int instance);

/// A continuous reachability obligation pre ∧ ⟨ode, stay⟩target. `pre`,
/// `ode` and `stay` live on the fresh copy `copy`; `target` may also
/// mention the unprimed variables.
struct CrpQuery {
    Formula pre;
    Ode ode;
    Formula stay;
    Formula target;
    std::vector<Var> copy;
    std::optional<std::size_t> transition;  // index into ha.transitions
};

/// The discrete forward transformer at `q`:
/// (φ0 if q = q0) ∨ ⋁ R(q)[x″/x] ∧ φ[x″/x] ∧ φc[x/x′, x″/x], with the x″
/// left free (existential in satisfiability position).
Formula predtrans_discrete(const HybridAutomaton& ha, const Frame& R, const LocationId& q);

struct HybridImage {
    Formula init;                   // φ0 at q0, false elsewhere
    std::vector<CrpQuery> crps;     // one per incoming transition, file order
};

/// The hybrid transformer F_H at `q`, disjunct by disjunct.
HybridImage predtrans_hybrid(const HybridAutomaton& ha, const Frame& R, const LocationId& q);

/// F_C at `q`: flow-only image of R(q) with target x = x″.
CrpQuery predtrans_cont(const HybridAutomaton& ha, const Frame& R, const LocationId& q);

/// pre ∧ ⟨ode, stay⟩target over a single copy of the variables.
struct CrpObligation {
    Formula pre;
    Ode ode;
    Formula stay;
    Formula target;
};

/// Closure of one transition t = (q, φ, c, q′) against ψ at q′:
/// F_H restricted to t implies ψ iff this obligation is unsatisfiable.
/// Deterministic commands let the post-state be written as a term of the
/// jump point, which removes the second variable copy.
CrpObligation closure_obligation(const HybridAutomaton& ha, const Formula& pre, const JumpTransition& t,
                                 const Formula& psi);
/// Flow-only closure at q: F_C(pre) implies ψ iff this is unsatisfiable.
CrpObligation flow_obligation(const HybridAutomaton& ha, const Formula& pre, const LocationId& q,
                              const Formula& psi);

/// Post-state of a jump as a formula over the unprimed variables:
/// ψ[x := c(x)].
Formula post_image(const HybridAutomaton& ha, const JumpTransition& t, const Formula& psi);
/// Pre-image of `phi` through the command alone: φ[x := c⁻¹(x)].
Formula command_preimage(const HybridAutomaton& ha, const JumpTransition& t, const Formula& phi);

}  // namespace hypdr
