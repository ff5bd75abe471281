#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hypdr/ode.hpp"
#include "hypdr/smt.hpp"
#include "hypdr/transformers.hpp"

namespace hypdr {

/// Outcome of pre ∧ ⟨ode, stay⟩(x = σ′) by backward simulation from σ′.
struct PointQueryResult {
    enum class Status { Sat, Unreached, Inconclusive };
    Status status = Status::Inconclusive;
    Valuation witness;    // Sat: a pre-state that flows to σ′
    double duration = 0;  // Sat: flow time from the witness to σ′
    std::size_t samples = 0;
    std::string reason;

    bool sat() const { return status == Status::Sat; }
    bool unreached() const { return status == Status::Unreached; }
};

/// Outcome of a refutation attempt for pre ∧ ⟨ode, stay⟩target.
struct RefuteOutcome {
    bool unsat = false;
    std::string method;  // which sufficient condition fired, or why none did
};

/// Exact polynomial first integrals of `ode` of degree 1..max_degree: p
/// with Lie derivative identically zero. Candidates come from a numeric
/// nullspace and are kept only if the symbolic check is exact.
std::vector<Polynomial> polynomial_first_integrals(const Ode& ode, const std::vector<Var>& vars, int max_degree = 2);

/// The Δt sufficient condition. Unsat only when pre ∧ target is unsat and
/// either pre or ¬target is preserved by an Euler step of length Δt < r
/// from every point of the stay condition.
RefuteOutcome query_unsat_invariance(SmtSolver& solver, const Formula& pre, const Ode& ode, const Formula& stay,
                                     const Formula& target, double r);

/// Level-set condition: every state reachable from pre lies on the level
/// sets of the first integrals through pre.
RefuteOutcome query_unsat_first_integral(SmtSolver& solver, const std::vector<Var>& vars, const Formula& pre,
                                         const Ode& ode, const Formula& stay, const Formula& target);

struct UnsatRecord {
    CrpObligation obligation;
    std::string method;
};

/// Owns the discharge policy for one verification run: point queries by
/// simulation, refutations by the invariance check, then the stay check
/// (target disjoint from the stay condition), then the first-integral check.
/// Zero fields are decided by pre ∧ target alone.
class Discharger {
public:
    Discharger(SmtSolver& solver, std::vector<Var> vars, SimParams params, double r);

    PointQueryResult sat_point(const Formula& pre, const Ode& ode, const Formula& stay, const Valuation& target);
    /// Reduces pre ∧ ⟨ode, stay⟩(guard ∧ cmd ∧ x′ = σ′) to a point query at
    /// the unique pre-jump valuation.
    PointQueryResult sat_jump(const Formula& pre, const Ode& ode, const Formula& stay, const Formula& guard,
                              const Command& cmd, const Valuation& target);
    RefuteOutcome refute(const CrpObligation& obligation);

    /// The points visited by the most recent backward simulation.
    const Trajectory& last_trajectory() const { return last_; }
    const std::vector<UnsatRecord>& unsat_log() const { return unsat_log_; }

    SmtSolver& solver() { return solver_; }
    const std::vector<Var>& vars() const { return vars_; }
    const SimParams& params() const { return params_; }
    double r() const { return r_; }

private:
    SmtSolver& solver_;
    std::vector<Var> vars_;
    SimParams params_;
    double r_;
    Trajectory last_;
    std::vector<UnsatRecord> unsat_log_;
    std::map<std::string, std::vector<Polynomial>> integrals_;
};

/// Statistical check of an Unsat verdict: simulates `trajectories` forward
/// runs from points of pre (obtained by SMT sampling and rejection) and
/// reports the first state that satisfies the target while the stay
/// condition held along the way.
struct ProbeResult {
    std::size_t trajectories = 0;
    std::size_t start_points = 0;
    std::optional<Valuation> counterexample;
};
ProbeResult probe_obligation(SmtSolver& solver, const std::vector<Var>& vars, const CrpObligation& obligation,
                             std::size_t trajectories, const SimParams& params, std::mt19937& rng);

}  // namespace hypdr
