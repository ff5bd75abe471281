#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypdr/discharge.hpp"
#include "hypdr/model.hpp"
#include "hypdr/oracle.hpp"
#include "hypdr/transformers.hpp"

namespace hypdr {

/// A frame conjunct with the premise it was proven from. `premise` is the
/// frame whose image was shown to be contained in `psi`; any stronger
/// predecessor frame keeps the lemma valid.
struct Lemma {
    Formula psi;
    Frame premise;
    std::string origin;  // rule that introduced it
};

inline constexpr int kRem = -1;

/// R_0 … R_N plus the remainder frame. R_0 is fixed at the initial frame;
/// every other frame is the conjunction of its lemmas (true when empty).
class FrameSequence {
public:
    explicit FrameSequence(const HybridAutomaton& ha);

    int n() const { return static_cast<int>(levels_.size()); }
    /// R_i(q); `i == kRem` selects the remainder frame.
    Formula at(int i, const LocationId& q) const;
    Frame frame(int i) const;
    const std::vector<Lemma>& lemmas(int i, const LocationId& q) const;
    /// Conjoins a lemma; returns false if an identical formula is already there.
    bool add(int i, const LocationId& q, Lemma lemma);
    /// Returns the R_0 entry to edit consistency tests; not used by the engine.
    Frame& initial() { return r0_; }

    /// N := N+1 with R_{N+1} = true and R_rem = true.
    void unfold();
    void reset_rem();

    const std::vector<LocationId>& locations() const { return locations_; }
    std::string to_string() const;
    std::uint64_t digest() const;

private:
    using Level = std::map<LocationId, std::vector<Lemma>>;
    Level& level(int i);
    const Level& level(int i) const;

    std::vector<LocationId> locations_;
    Frame r0_;
    std::vector<Level> levels_;  // levels_[i-1] holds R_i
    Level rem_;
};

/// ⟨σ, q, i⟩. `duration` and `transition` describe the step from this
/// entry to the next one: flow time, then the jump (absent for the step
/// into a remainder entry or in discrete mode where only the jump counts).
struct TraceEntry {
    Valuation sigma;
    LocationId q;
    int index = 0;  // kRem for the remainder frame
    double duration = 0.0;
    std::optional<std::size_t> transition;
};
using Trace = std::vector<TraceEntry>;  // front is the head

struct Configuration {
    Trace trace;
    FrameSequence frames;
};

enum class Mode { Auto, Discrete, Hybrid };

enum class AbortKind { SolverFailure, SimulationInconclusive, OracleExhausted, FrameBudgetExceeded, StepBudgetExceeded };
const char* to_string(AbortKind k);

struct VerificationResult {
    enum class Status { Valid, Model, Aborted };
    Status status = Status::Aborted;
    Frame invariant;  // Valid
    Run trace;        // Model
    AbortKind abort = AbortKind::SolverFailure;
    std::string reason;

    bool valid() const { return status == Status::Valid; }
    bool model() const { return status == Status::Model; }
    bool aborted() const { return status == Status::Aborted; }
};
const char* to_string(VerificationResult::Status s);

class SideConditionViolated : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Rule {
    Initialize,
    Valid,
    Unfold,
    Induction,
    Candidate,
    Decide,
    Model,
    Conflict,
    InductionCont,
    CandidateCont,
    DecideCont,
    ConflictCont,
};
const char* to_string(Rule r);

/// Witnesses for one rule application.
struct RuleApplication {
    RuleApplication(Rule r = Rule::Initialize, LocationId q = {}, Valuation s = {})
        : rule(r), location(std::move(q)), sigma(std::move(s)) {}

    Rule rule;
    LocationId location;
    Valuation sigma;
    int index = 0;                          // Induction: i with R_i ⇒ ψ pushed to R_{i+1}; Valid: k
    std::optional<std::size_t> transition;  // Decide
    double duration = 0.0;                  // Decide, DecideCont
    Formula psi = Formula::top();           // Conflict, ConflictCont, Induction, InductionCont
    /// Conflict: one generalization per incoming transition of the head.
    std::vector<std::pair<std::size_t, Formula>> per_transition;
};

struct EngineOptions {
    Mode mode = Mode::Auto;
    int max_frames = 32;
    std::size_t max_steps = 100000;
    /// Run check_consistent after every rule application.
    bool check_consistency = false;
    std::ostream* log = nullptr;
};

class Engine {
public:
    Engine(const HybridAutomaton& ha, Formula safe, Discharger& discharger, GeneralizationChain& oracle,
           EngineOptions options = {});

    /// Discrete GPDR or the hybrid loop, per the mode.
    VerificationResult run();

    /// Re-checks the side condition, then rewrites the configuration.
    /// Returns a terminal result for Valid and Model.
    std::optional<VerificationResult> apply_rule(const RuleApplication& app);

    const Configuration& configuration() const { return cfg_; }
    Configuration& configuration() { return cfg_; }
    bool discrete() const { return discrete_; }

    struct Stats {
        std::size_t rule_applications = 0;
        std::map<std::string, std::size_t> per_rule;
        std::size_t queries = 0;
        std::size_t consistency_checks = 0;
        std::vector<std::string> violations;
        double seconds = 0.0;
    };
    const Stats& stats() const { return stats_; }
    const std::vector<nlohmann::json>& log() const { return log_; }

    /// Called after every rule application.
    std::function<void(const RuleApplication&, const Configuration&)> observer;
    /// Called before every generalization query.
    std::function<void(const GeneralizationQuery&)> on_query;

private:
    VerificationResult run_hybrid();
    VerificationResult run_discrete();
    /// Propagates the trace head toward frame 0.
    std::optional<VerificationResult> remove_trace();
    std::optional<VerificationResult> handle_rem_head();
    std::optional<VerificationResult> handle_interior_head();
    std::optional<VerificationResult> handle_discrete_head();
    std::optional<VerificationResult> conflict(const TraceEntry& head,
                                               const std::vector<std::pair<std::size_t, Trajectory>>& refuted);
    void propagate();
    std::optional<VerificationResult> valid_check();
    Formula init_at(const LocationId& q) const;
    bool induction_holds(int i, const LocationId& q, const Formula& psi);
    Run to_run(const Trace& trace) const;
    GeneralizationQuery make_query(GeneralizationQuery::Kind kind, const TraceEntry& head,
                                   std::optional<std::size_t> transition);
    std::optional<Answer> ask(const GeneralizationQuery& q, const Trajectory& backward);
    void record(const RuleApplication& app, const std::vector<GeneralizationQuery>& queries = {},
                const std::vector<Answer>& answers = {});
    [[noreturn]] void abort(AbortKind kind, const std::string& reason);

    const HybridAutomaton& ha_;
    Formula safe_;
    Discharger& d_;
    GeneralizationChain& oracle_;
    EngineOptions options_;
    bool discrete_;
    Configuration cfg_;
    int next_query_id_ = 1;
    Stats stats_;
    std::vector<nlohmann::json> log_;
    std::vector<GeneralizationQuery> pending_queries_;
    std::vector<Answer> pending_answers_;
};

/// Thrown inside the engine to stop the run; converted to Aborted.
struct EngineAbort {
    AbortKind kind;
    std::string reason;
};

/// Names of violated consistency conditions (Con-A … Con-F-2), each with a
/// short explanation; empty when consistent. Lemma premises let the
/// transformer conditions be checked by implication; a lemma whose premise
/// no longer holds is re-proven with the discharger, and one that cannot
/// be decided either way is reported with an "inconclusive" prefix.
std::vector<std::string> check_consistent(const HybridAutomaton& ha, const Formula& safe, const Configuration& cfg,
                                          bool discrete, Discharger& discharger);

enum class Verdict { Holds, Fails, Inconclusive };
const char* to_string(Verdict v);

struct ResultCheck {
    Verdict verdict = Verdict::Inconclusive;
    std::string reason;
};

/// Independent check of a verdict. Valid(R): φ0 ⇒ R(q0), closure of R
/// under every transition, R(q) ⇒ φ_P. Model(M): check_run with `eps` and
/// the last valuation violates φ_P.
ResultCheck validate_invariant(const HybridAutomaton& ha, const Formula& safe, const Frame& R, Discharger& d);
ResultCheck validate_result(const HybridAutomaton& ha, const Formula& safe, const VerificationResult& result,
                            Discharger& d, double eps = 1e-2);

nlohmann::json result_to_json(const VerificationResult& result);
nlohmann::json trace_to_json(const Trace& trace);
std::uint64_t fnv1a64(const std::string& text);

struct ReplayOutcome {
    bool identical = false;
    std::optional<std::size_t> divergence_step;
    std::string detail;
    VerificationResult result;
};

/// Answers recorded in a session log, as a hint script keyed by query id.
HintScript answers_from_log(const std::vector<nlohmann::json>& records);
/// Compares a fresh run's log to the recorded one.
ReplayOutcome compare_logs(const std::vector<nlohmann::json>& recorded, const std::vector<nlohmann::json>& fresh,
                           VerificationResult result);

}  // namespace hypdr
