#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypdr/formula.hpp"
#include "hypdr/polynomial.hpp"

namespace hypdr {

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using LocationId = std::string;

/// One assignment `x := r1*x + r2` (or `- r2`). The offset may be a
/// polynomial over the other pre-state variables; with r1 != 0 and acyclic
/// offset dependencies the pre-state is uniquely recoverable.
struct Assignment {
    Var target;
    double scale = 1.0;
    Term offset = Term::constant(0.0);

    std::string to_string() const;
};

/// A jump command: simultaneous assignments, every right-hand side read in
/// the pre-state; variables without an assignment stutter. Empty is `skip`.
struct Command {
    std::vector<Assignment> assignments;

    bool is_skip() const { return assignments.empty(); }
    const Assignment* find(const std::string& var) const;

    /// φ_c over X ∪ X′: ⋀ x′ = r1·x + r2 and y′ = y for unassigned y.
    Formula as_formula(const std::vector<Var>& vars) const;
    /// Terms of the post-state as functions of the pre-state.
    std::map<Var, Term> forward_terms(const std::vector<Var>& vars) const;
    /// Terms of the pre-state as functions of the post-state.
    std::map<Var, Term> inverse_terms(const std::vector<Var>& vars) const;

    std::vector<std::string> to_strings() const;
};

/// Parses one `cmd` entry: `skip` or `x := r1*x + r2`. The right-hand side
/// is accepted as any polynomial that is affine in x with a nonzero constant
/// coefficient and an x-free remainder.
std::optional<Assignment> parse_assignment(const std::string& text, const std::set<std::string>& vars);

Valuation apply_command(const Command& cmd, const Valuation& pre);
/// Unique σ_pre with σ_pre ∪ σ_post′ ⊨ φ_c.
Valuation invert_command(const Command& cmd, const Valuation& post);

/// Right-hand sides of ẋ = f(x), one per model variable.
struct Ode {
    std::map<Var, Term> rhs;

    std::map<Var, Polynomial> field() const;
    std::string to_string() const;
};

struct JumpTransition {
    LocationId from;
    Formula guard;
    Command cmd;
    LocationId to;
};

struct Location {
    LocationId id;
    std::optional<Ode> flow;
    Formula inv = Formula::top();
};

/// A hybrid automaton ⟨Q, q0, φ0, flow, inv, δ⟩. When no location carries a
/// flow the model is a discrete-time state-transition system.
struct HybridAutomaton {
    std::vector<Var> vars;
    std::vector<Location> locations;
    LocationId initial_location;
    Formula init = Formula::top();
    std::vector<JumpTransition> transitions;
    std::optional<Formula> safe;

    bool is_discrete() const;
    const Location& location(const LocationId& id) const;
    std::size_t location_index(const LocationId& id) const;
    std::set<std::string> var_names() const;
    /// The flow at `id`; the zero field for discrete models.
    Ode flow(const LocationId& id) const;
    const Formula& stay(const LocationId& id) const { return location(id).inv; }

    /// Throws ValidationError naming the violated invariant.
    void validate() const;
};

HybridAutomaton parse_model(const std::string& text);
HybridAutomaton load_model(const std::string& path);
std::string serialize_model(const HybridAutomaton& ha);

struct RunStep {
    LocationId location;
    Valuation valuation;
};
using Run = std::vector<RunStep>;

struct SimParams;

/// Run check for hybrid automata (each interior step a flow then an
/// enabled jump, the last step flow-only) and plain jump-run check for
/// discrete models. Flow steps are checked by forward simulation: some
/// sample within `eps` (max-norm) of the target, with the stay condition
/// holding within `eps` on every sample after the start.
bool check_run(const HybridAutomaton& ha, const Run& run, double eps, const SimParams& params);
bool check_run(const HybridAutomaton& ha, const Run& run, double eps);

}  // namespace hypdr
