#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hypdr/discharge.hpp"
#include "hypdr/model.hpp"

namespace hypdr {

/// A request for a formula ψ that excludes a counterexample while
/// containing everything the transformer can reach into the frame.
struct GeneralizationQuery {
    enum class Kind { Conflict, ConflictCont };

    int id = 0;
    Kind kind = Kind::Conflict;
    LocationId location;                    // q′, whose frame ψ strengthens
    std::optional<LocationId> source;       // q of the jump (conflict only)
    std::optional<std::size_t> transition;  // index into ha.transitions
    int frame = 0;                          // index of the Pre frame
    Formula pre;
    Ode flow;
    Formula stay;
    std::optional<Formula> guard;
    std::optional<Command> cmd;
    Valuation ce;
    Formula init;
    bool discrete = false;

    nlohmann::json to_json() const;
    /// Human-readable block with the Pre/Flow/Stay/Guard/Cmd/CE/Init fields.
    std::string to_text() const;
};

const char* to_string(GeneralizationQuery::Kind kind);

struct ValidationReport {
    bool ok = false;
    std::string reason;  // the failing condition when !ok
};

/// Checks a candidate ψ against the side conditions of the rule that will
/// consume it: ψ excludes CE, Init implies ψ, and the kind-specific
/// closure (transition image or flow image) is refuted by the discharger.
class GeneralizationValidator {
public:
    GeneralizationValidator(const HybridAutomaton& ha, Discharger& discharger) : ha_(ha), d_(discharger) {}
    ValidationReport validate(const GeneralizationQuery& q, const Formula& psi);

private:
    const HybridAutomaton& ha_;
    Discharger& d_;
};

/// Scripted answers, one JSON object per line:
/// {"match": <query id>?, "kind": "conflict"|"conflict_cont"?, "location": "<id>"?,
///  "repeat": bool?, "psi": "<formula>"}.
/// An entry is consumed by the first query it matches and passes, unless
/// `repeat` is set.
class HintScript {
public:
    struct Entry {
        std::optional<int> match;
        std::optional<GeneralizationQuery::Kind> kind;
        std::optional<LocationId> location;
        Formula psi;
        std::string text;
        bool repeat = false;
        bool consumed = false;
    };

    static HintScript parse(const std::string& text);
    static HintScript load(const std::string& path);

    std::vector<Entry>& entries() { return entries_; }
    std::size_t remaining() const;

private:
    std::vector<Entry> entries_;
};

/// Built-in candidates for a query, strongest structural guesses first.
std::vector<Formula> heuristic_candidates(const HybridAutomaton& ha, const Formula& safe, const GeneralizationQuery& q);

/// A blocking source of answers (a terminal prompt or the session server).
class InteractiveSource {
public:
    virtual ~InteractiveSource() = default;
    /// Returns a validated ψ, or nullopt when the user gives up.
    virtual std::optional<Formula> ask(const GeneralizationQuery& q, const Trajectory& backward,
                                       const std::function<ValidationReport(const Formula&)>& validate) = 0;
};

class TerminalSource : public InteractiveSource {
public:
    TerminalSource(std::istream& in, std::ostream& out, std::set<std::string> vars)
        : in_(in), out_(out), vars_(std::move(vars)) {}
    std::optional<Formula> ask(const GeneralizationQuery& q, const Trajectory& backward,
                               const std::function<ValidationReport(const Formula&)>& validate) override;

private:
    std::istream& in_;
    std::ostream& out_;
    std::set<std::string> vars_;
};

/// Where an accepted generalization came from.
enum class AnswerSource { Script, Heuristic, Interactive };
const char* to_string(AnswerSource s);

struct Answer {
    Formula psi;
    AnswerSource source;
};

/// Tries the hint script, then the heuristics, then the interactive
/// source; every candidate must pass the validator.
class GeneralizationChain {
public:
    GeneralizationChain(const HybridAutomaton& ha, Formula safe, GeneralizationValidator& validator)
        : ha_(ha), safe_(std::move(safe)), validator_(validator) {}

    void set_script(HintScript* script) { script_ = script; }
    void set_heuristics(bool on) { heuristics_ = on; }
    void set_interactive(InteractiveSource* source) { interactive_ = source; }

    std::optional<Answer> next_generalization(const GeneralizationQuery& q, const Trajectory& backward);

    std::size_t rejected() const { return rejected_; }

private:
    const HybridAutomaton& ha_;
    Formula safe_;
    GeneralizationValidator& validator_;
    HintScript* script_ = nullptr;
    bool heuristics_ = true;
    InteractiveSource* interactive_ = nullptr;
    std::size_t rejected_ = 0;
};

/// HTTP+JSON session server. The engine thread publishes one query at a
/// time and blocks in ask(); POST /answer hands the text to the engine
/// thread, which validates it with its own solver and replies through the
/// same rendezvous.
class SessionServer : public InteractiveSource {
public:
    SessionServer(std::set<std::string> vars);
    ~SessionServer() override;

    /// Binds and serves in a background thread. Port 0 picks a free port.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

    std::optional<Formula> ask(const GeneralizationQuery& q, const Trajectory& backward,
                               const std::function<ValidationReport(const Formula&)>& validate) override;

    void set_status(nlohmann::json status);
    void set_result(nlohmann::json result);
    /// Makes pending and future ask() calls return nullopt.
    void cancel();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace hypdr
