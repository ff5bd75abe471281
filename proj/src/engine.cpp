#include "hypdr/engine.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

namespace hypdr {

using json = nlohmann::json;

namespace {

constexpr double kMembershipEps = 1e-6;
constexpr double kStepTolerance = 1e-6;

bool holds_at(const Formula& phi, const Valuation& sigma) { return phi.evaluate(sigma, kMembershipEps); }

Formula conjoin_lemmas(const std::vector<Lemma>& lemmas)
{
    std::vector<Formula> fs;
    fs.reserve(lemmas.size());
    for (const auto& l : lemmas)
        fs.push_back(l.psi);
    return Formula::conjunction(std::move(fs));
}

Valuation restrict_to(const Valuation& sigma, const std::vector<Var>& vars)
{
    Valuation out;
    for (const auto& v : vars)
        out.set(v, sigma.find(v).value_or(0.0));
    return out;
}

bool close_to(const Valuation& a, const Valuation& b, double tol)
{
    for (const auto& [v, value] : b.values()) {
        auto x = a.find(v);
        if (!x || std::fabs(*x - value) > tol * std::max(1.0, std::fabs(value)))
            return false;
    }
    return true;
}

struct FlowEnd {
    Valuation end;
    bool stayed = true;
};

/// Forward RK4 for exactly `duration`, checking the stay condition after
/// every step.
FlowEnd flow_for(const HybridAutomaton& ha, const LocationId& q, const Valuation& start, double duration,
                 const SimParams& params)
{
    VectorField f(ha.flow(q), ha.vars);
    std::vector<double> x = f.to_state(start);
    const Formula& stay = ha.stay(q);
    FlowEnd out;
    const int steps = static_cast<int>(std::floor(duration / params.h + 1e-9));
    const double rest = duration - steps * params.h;
    for (int i = 0; i < steps; ++i) {
        rk4_step(f, x, params.h);
        if (!holds_at(stay, f.to_valuation(x)))
            out.stayed = false;
    }
    if (rest > 1e-12) {
        rk4_step(f, x, rest);
        if (!holds_at(stay, f.to_valuation(x)))
            out.stayed = false;
    }
    out.end = f.to_valuation(x);
    return out;
}

/// The step between two adjacent trace entries: flow for the stored
/// duration, then the stored jump (or none when `to` is a remainder entry).
bool step_holds(const HybridAutomaton& ha, bool discrete, const SimParams& params, const TraceEntry& from,
                const TraceEntry& to)
{
    Valuation jump_point = from.sigma;
    if (!discrete) {
        auto end = flow_for(ha, from.q, from.sigma, from.duration, params);
        if (!end.stayed)
            return false;
        jump_point = end.end;
    }
    if (!from.transition)
        return !discrete && from.q == to.q && close_to(jump_point, to.sigma, kStepTolerance);
    if (*from.transition >= ha.transitions.size())
        return false;
    const auto& t = ha.transitions[*from.transition];
    return t.from == from.q && t.to == to.q && holds_at(t.guard, jump_point) &&
           close_to(apply_command(t.cmd, jump_point), to.sigma, kStepTolerance);
}

Formula init_formula(const HybridAutomaton& ha, const LocationId& q)
{
    return q == ha.initial_location ? ha.init : Formula::bottom();
}

bool closure_refuted(const HybridAutomaton& ha, Discharger& d, const Frame& pre, const LocationId& q,
                     const Formula& psi, std::string* why = nullptr)
{
    if (!d.solver().implies(init_formula(ha, q), psi)) {
        if (why)
            *why = "initial states not contained";
        return false;
    }
    for (const auto& t : ha.transitions) {
        if (t.to != q)
            continue;
        auto out = d.refute(closure_obligation(ha, pre.at(t.from), t, psi));
        if (!out.unsat) {
            if (why)
                *why = "transition " + t.from + " -> " + t.to + ": " + out.method;
            return false;
        }
    }
    return true;
}

json valuation_json(const Valuation& sigma)
{
    json j = json::object();
    for (const auto& [v, value] : sigma.values())
        j[v.name] = value;
    return j;
}

std::string hex64(std::uint64_t h)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

// ------------------------------------------------------------ names

const char* to_string(AbortKind k)
{
    switch (k) {
    case AbortKind::SolverFailure: return "SolverFailure";
    case AbortKind::SimulationInconclusive: return "SimulationInconclusive";
    case AbortKind::OracleExhausted: return "OracleExhausted";
    case AbortKind::FrameBudgetExceeded: return "FrameBudgetExceeded";
    case AbortKind::StepBudgetExceeded: return "StepBudgetExceeded";
    }
    return "?";
}

const char* to_string(VerificationResult::Status s)
{
    switch (s) {
    case VerificationResult::Status::Valid: return "valid";
    case VerificationResult::Status::Model: return "model";
    case VerificationResult::Status::Aborted: return "aborted";
    }
    return "?";
}

const char* to_string(Rule r)
{
    switch (r) {
    case Rule::Initialize: return "Initialize";
    case Rule::Valid: return "Valid";
    case Rule::Unfold: return "Unfold";
    case Rule::Induction: return "Induction";
    case Rule::Candidate: return "Candidate";
    case Rule::Decide: return "Decide";
    case Rule::Model: return "Model";
    case Rule::Conflict: return "Conflict";
    case Rule::InductionCont: return "InductionCont";
    case Rule::CandidateCont: return "CandidateCont";
    case Rule::DecideCont: return "DecideCont";
    case Rule::ConflictCont: return "ConflictCont";
    }
    return "?";
}

const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::Holds: return "holds";
    case Verdict::Fails: return "fails";
    case Verdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

std::uint64_t fnv1a64(const std::string& text)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ------------------------------------------------------------ frames

FrameSequence::FrameSequence(const HybridAutomaton& ha) : r0_(initial_frame(ha))
{
    for (const auto& l : ha.locations) {
        locations_.push_back(l.id);
        rem_[l.id];
    }
}

FrameSequence::Level& FrameSequence::level(int i)
{
    if (i == kRem)
        return rem_;
    if (i < 1 || i > n())
        throw std::out_of_range("frame index " + std::to_string(i) + " outside 1.." + std::to_string(n()));
    return levels_[static_cast<std::size_t>(i - 1)];
}

const FrameSequence::Level& FrameSequence::level(int i) const
{
    return const_cast<FrameSequence*>(this)->level(i);
}

Formula FrameSequence::at(int i, const LocationId& q) const
{
    if (i == 0)
        return r0_.at(q);
    return conjoin_lemmas(level(i).at(q));
}

Frame FrameSequence::frame(int i) const
{
    Frame f;
    for (const auto& q : locations_)
        f[q] = at(i, q);
    return f;
}

const std::vector<Lemma>& FrameSequence::lemmas(int i, const LocationId& q) const { return level(i).at(q); }

bool FrameSequence::add(int i, const LocationId& q, Lemma lemma)
{
    auto& list = level(i).at(q);
    const std::string text = lemma.psi.to_string();
    for (const auto& l : list)
        if (l.psi.to_string() == text)
            return false;
    list.push_back(std::move(lemma));
    return true;
}

void FrameSequence::unfold()
{
    Level fresh;
    for (const auto& q : locations_)
        fresh[q];
    levels_.push_back(std::move(fresh));
    reset_rem();
}

void FrameSequence::reset_rem()
{
    for (auto& [q, list] : rem_)
        list.clear();
}

std::string FrameSequence::to_string() const
{
    std::string s = "N=" + std::to_string(n()) + "\n";
    for (int i = 0; i <= n(); ++i)
        s += "R_" + std::to_string(i) + ": " + hypdr::to_string(frame(i)) + "\n";
    s += "R_rem: " + hypdr::to_string(frame(kRem)) + "\n";
    return s;
}

std::uint64_t FrameSequence::digest() const { return fnv1a64(to_string()); }

// ------------------------------------------------------------ engine

Engine::Engine(const HybridAutomaton& ha, Formula safe, Discharger& discharger, GeneralizationChain& oracle,
               EngineOptions options)
    : ha_(ha), safe_(std::move(safe)), d_(discharger), oracle_(oracle), options_(options),
      discrete_(options.mode == Mode::Auto ? ha.is_discrete() : options.mode == Mode::Discrete),
      cfg_{{}, FrameSequence(ha)}
{
    if (discrete_ && !ha.is_discrete())
        throw std::invalid_argument("discrete mode needs a model without flows");
}

void Engine::abort(AbortKind kind, const std::string& reason) { throw EngineAbort{kind, reason}; }

Formula Engine::init_at(const LocationId& q) const { return init_formula(ha_, q); }

VerificationResult Engine::run()
{
    auto t0 = std::chrono::steady_clock::now();
    VerificationResult r;
    try {
        r = discrete_ ? run_discrete() : run_hybrid();
    } catch (const EngineAbort& a) {
        r.status = VerificationResult::Status::Aborted;
        r.abort = a.kind;
        r.reason = a.reason;
    } catch (const SolverError& e) {
        r.status = VerificationResult::Status::Aborted;
        r.abort = AbortKind::SolverFailure;
        r.reason = e.what();
    }
    stats_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

namespace {

SmtResult checked(SmtSolver& s, const Formula& phi, const std::vector<Var>& vars)
{
    auto r = s.check(phi, std::set<Var>(vars.begin(), vars.end()));
    if (r.unknown())
        throw EngineAbort{AbortKind::SolverFailure, "solver returned unknown: " + r.reason};
    return r;
}

}  // namespace

VerificationResult Engine::run_hybrid()
{
    auto bad = checked(d_.solver(), ha_.init && !safe_, ha_.vars);
    if (bad.sat()) {
        // An initial state already violates the property.
        VerificationResult r;
        r.status = VerificationResult::Status::Model;
        Valuation s = restrict_to(bad.model, ha_.vars);
        r.trace = {{ha_.initial_location, s}, {ha_.initial_location, s}};
        return r;
    }
    apply_rule({Rule::Initialize});
    while (true) {
        bool candidate = false;
        for (const auto& q : cfg_.frames.locations()) {
            auto res = checked(d_.solver(), cfg_.frames.at(kRem, q) && !safe_, ha_.vars);
            if (!res.sat())
                continue;
            RuleApplication app{Rule::CandidateCont, q, restrict_to(res.model, ha_.vars)};
            apply_rule(app);
            if (auto out = remove_trace())
                return *out;
            candidate = true;
            break;
        }
        if (candidate)
            continue;
        if (cfg_.frames.n() >= options_.max_frames)
            abort(AbortKind::FrameBudgetExceeded, "reached " + std::to_string(options_.max_frames) + " frames");
        apply_rule({Rule::Unfold});
        propagate();
        if (auto out = valid_check())
            return *out;
    }
}

VerificationResult Engine::run_discrete()
{
    auto bad = checked(d_.solver(), ha_.init && !safe_, ha_.vars);
    if (bad.sat()) {
        VerificationResult r;
        r.status = VerificationResult::Status::Model;
        r.trace = {{ha_.initial_location, restrict_to(bad.model, ha_.vars)}};
        return r;
    }
    apply_rule({Rule::Initialize});
    while (true) {
        bool candidate = false;
        const int n = cfg_.frames.n();
        for (const auto& q : cfg_.frames.locations()) {
            auto res = checked(d_.solver(), cfg_.frames.at(n, q) && !safe_, ha_.vars);
            if (!res.sat())
                continue;
            RuleApplication app{Rule::Candidate, q, restrict_to(res.model, ha_.vars)};
            apply_rule(app);
            if (auto out = remove_trace())
                return *out;
            candidate = true;
            break;
        }
        if (candidate)
            continue;
        if (cfg_.frames.n() >= options_.max_frames)
            abort(AbortKind::FrameBudgetExceeded, "reached " + std::to_string(options_.max_frames) + " frames");
        apply_rule({Rule::Unfold});
        propagate();
        if (auto out = valid_check())
            return *out;
    }
}

std::optional<VerificationResult> Engine::remove_trace()
{
    while (!cfg_.trace.empty()) {
        const TraceEntry& head = cfg_.trace.front();
        std::optional<VerificationResult> out;
        if (head.index == kRem)
            out = handle_rem_head();
        else if (head.index == 0)
            out = apply_rule({Rule::Model, head.q, head.sigma});
        else if (discrete_)
            out = handle_discrete_head();
        else
            out = handle_interior_head();
        if (out)
            return out;
    }
    return valid_check();
}

std::optional<VerificationResult> Engine::handle_rem_head()
{
    const TraceEntry head = cfg_.trace.front();
    const int n = cfg_.frames.n();
    const Formula pre = cfg_.frames.at(n, head.q);
    auto res = d_.sat_point(pre, ha_.flow(head.q), ha_.stay(head.q), head.sigma);
    if (res.sat()) {
        RuleApplication app{Rule::DecideCont, head.q, res.witness};
        app.duration = res.duration;
        apply_rule(app);
        return std::nullopt;
    }
    if (!res.unreached())
        abort(AbortKind::SimulationInconclusive, "remainder query at " + head.q + ": " + res.reason);

    auto query = make_query(GeneralizationQuery::Kind::ConflictCont, head, std::nullopt);
    auto answer = ask(query, d_.last_trajectory());
    if (!answer)
        abort(AbortKind::OracleExhausted, "no generalization accepted for query #" + std::to_string(query.id));
    RuleApplication app{Rule::ConflictCont, head.q, head.sigma};
    app.psi = answer->psi;
    pending_queries_ = {query};
    pending_answers_ = {*answer};
    apply_rule(app);

    for (const auto& psi : conjuncts(pre)) {
        if (psi.is_true() || d_.solver().implies(cfg_.frames.at(kRem, head.q), psi))
            continue;
        if (!d_.refute(flow_obligation(ha_, pre, head.q, psi)).unsat)
            continue;
        RuleApplication ind{Rule::InductionCont, head.q};
        ind.psi = psi;
        apply_rule(ind);
    }
    return std::nullopt;
}

namespace {

/// Re-indexes a trace whose head is an initial state so that it starts at 0.
Trace reindex_from_zero(Trace trace)
{
    int i = 0;
    for (auto& e : trace)
        if (e.index != kRem)
            e.index = i++;
    return trace;
}

}  // namespace

std::optional<VerificationResult> Engine::handle_interior_head()
{
    const TraceEntry head = cfg_.trace.front();
    const int i = head.index;
    if (head.q == ha_.initial_location && ha_.init.evaluate(head.sigma, d_.params().eps_eval)) {
        cfg_.trace = reindex_from_zero(cfg_.trace);
        return apply_rule({Rule::Model, head.q, head.sigma});
    }
    std::vector<std::pair<std::size_t, Trajectory>> refuted;
    for (std::size_t k = 0; k < ha_.transitions.size(); ++k) {
        const auto& t = ha_.transitions[k];
        if (t.to != head.q)
            continue;
        auto res = d_.sat_jump(cfg_.frames.at(i - 1, t.from), ha_.flow(t.from), ha_.stay(t.from), t.guard, t.cmd,
                               head.sigma);
        if (res.sat()) {
            RuleApplication app{Rule::Decide, t.from, res.witness};
            app.transition = k;
            app.duration = res.duration;
            apply_rule(app);
            return std::nullopt;
        }
        if (!res.unreached())
            abort(AbortKind::SimulationInconclusive, "jump query " + t.from + " -> " + t.to + ": " + res.reason);
        refuted.emplace_back(k, d_.last_trajectory());
    }
    return conflict(head, refuted);
}

std::optional<VerificationResult> Engine::handle_discrete_head()
{
    const TraceEntry head = cfg_.trace.front();
    const int i = head.index;
    if (head.q == ha_.initial_location && ha_.init.evaluate(head.sigma, d_.params().eps_eval)) {
        cfg_.trace = reindex_from_zero(cfg_.trace);
        return apply_rule({Rule::Model, head.q, head.sigma});
    }
    std::vector<std::pair<std::size_t, Trajectory>> refuted;
    for (std::size_t k = 0; k < ha_.transitions.size(); ++k) {
        const auto& t = ha_.transitions[k];
        if (t.to != head.q)
            continue;
        Formula step = Formula::conjunction({cfg_.frames.at(i - 1, t.from), t.guard, t.cmd.as_formula(ha_.vars),
                                             valuation_to_formula(head.sigma.primed(1))});
        auto res = checked(d_.solver(), step, ha_.vars);
        if (res.sat()) {
            RuleApplication app{Rule::Decide, t.from, restrict_to(res.model, ha_.vars)};
            app.transition = k;
            apply_rule(app);
            return std::nullopt;
        }
        refuted.emplace_back(k, Trajectory{ha_.vars, d_.params().h, Direction::Backward, {}});
    }
    return conflict(head, refuted);
}

std::optional<VerificationResult> Engine::conflict(const TraceEntry& head,
                                                   const std::vector<std::pair<std::size_t, Trajectory>>& refuted)
{
    RuleApplication app{Rule::Conflict, head.q, head.sigma};
    app.index = head.index;
    std::vector<GeneralizationQuery> queries;
    std::vector<Answer> answers;
    std::vector<Formula> parts;
    for (const auto& [k, traj] : refuted) {
        auto query = make_query(GeneralizationQuery::Kind::Conflict, head, k);
        auto answer = ask(query, traj);
        if (!answer)
            abort(AbortKind::OracleExhausted, "no generalization accepted for query #" + std::to_string(query.id));
        app.per_transition.emplace_back(k, answer->psi);
        parts.push_back(answer->psi);
        queries.push_back(std::move(query));
        answers.push_back(*answer);
    }
    app.psi = parts.empty() ? init_at(head.q) : Formula::disjunction(parts);
    pending_queries_ = std::move(queries);
    pending_answers_ = std::move(answers);
    const auto before = cfg_.frames.digest();
    apply_rule(app);
    if (cfg_.frames.digest() == before)
        abort(AbortKind::OracleExhausted, "accepted generalization left the frames unchanged");
    propagate();
    return std::nullopt;
}

GeneralizationQuery Engine::make_query(GeneralizationQuery::Kind kind, const TraceEntry& head,
                                       std::optional<std::size_t> transition)
{
    GeneralizationQuery q;
    q.id = next_query_id_++;
    q.kind = kind;
    q.location = head.q;
    q.ce = head.sigma;
    q.discrete = discrete_;
    if (kind == GeneralizationQuery::Kind::Conflict) {
        const auto& t = ha_.transitions.at(*transition);
        q.source = t.from;
        q.transition = transition;
        q.frame = head.index - 1;
        q.pre = cfg_.frames.at(head.index - 1, t.from);
        q.flow = ha_.flow(t.from);
        q.stay = ha_.stay(t.from);
        q.guard = t.guard;
        q.cmd = t.cmd;
        q.init = init_at(head.q);
    } else {
        q.frame = cfg_.frames.n();
        q.pre = cfg_.frames.at(q.frame, head.q);
        q.flow = ha_.flow(head.q);
        q.stay = ha_.stay(head.q);
        q.init = cfg_.frames.at(0, head.q);
    }
    return q;
}

std::optional<Answer> Engine::ask(const GeneralizationQuery& q, const Trajectory& backward)
{
    ++stats_.queries;
    if (on_query)
        on_query(q);
    return oracle_.next_generalization(q, backward);
}

bool Engine::induction_holds(int i, const LocationId& q, const Formula& psi)
{
    Frame pre = cfg_.frames.frame(i);
    pre[q] = pre[q] && psi;
    return closure_refuted(ha_, d_, pre, q, psi);
}

void Engine::propagate()
{
    const int n = cfg_.frames.n();
    for (int i = 0; i < n; ++i) {
        for (const auto& q : cfg_.frames.locations()) {
            for (const auto& psi : conjuncts(cfg_.frames.at(i, q))) {
                if (psi.is_true() || d_.solver().implies(cfg_.frames.at(i + 1, q), psi))
                    continue;
                if (!induction_holds(i, q, psi))
                    continue;
                RuleApplication app{Rule::Induction, q};
                app.index = i;
                app.psi = psi;
                apply_rule(app);
            }
        }
    }
}

std::optional<VerificationResult> Engine::valid_check()
{
    const int n = cfg_.frames.n();
    for (int k = 0; k < n; ++k) {
        bool fixpoint = true;
        for (const auto& q : cfg_.frames.locations())
            if (!d_.solver().implies(cfg_.frames.at(k + 1, q), cfg_.frames.at(k, q))) {
                fixpoint = false;
                break;
            }
        if (fixpoint) {
            RuleApplication app{Rule::Valid};
            app.index = k;
            return apply_rule(app);
        }
    }
    return std::nullopt;
}

Run Engine::to_run(const Trace& trace) const
{
    Run run;
    for (const auto& e : trace)
        run.push_back({e.q, e.sigma});
    return run;
}

std::optional<VerificationResult> Engine::apply_rule(const RuleApplication& app)
{
    if (stats_.rule_applications >= options_.max_steps)
        abort(AbortKind::StepBudgetExceeded, "reached " + std::to_string(options_.max_steps) + " rule applications");
    SmtSolver& s = d_.solver();
    FrameSequence& F = cfg_.frames;
    Trace& M = cfg_.trace;
    const int n = F.n();
    auto require = [&](bool ok, const std::string& what) {
        if (!ok)
            throw SideConditionViolated(std::string(to_string(app.rule)) + ": " + what);
    };
    auto head = [&]() -> const TraceEntry& {
        require(!M.empty(), "trace is empty");
        return M.front();
    };
    auto excludes = [&](const Formula& psi, const Valuation& ce) {
        return s.check(psi && valuation_to_formula(ce)).unsat();
    };

    std::optional<VerificationResult> out;
    switch (app.rule) {
    case Rule::Initialize: {
        FrameSequence fresh(ha_);
        for (const auto& q : fresh.locations())
            require(s.implies(fresh.at(0, q), safe_), "R_0(" + q + ") does not imply the property");
        cfg_ = Configuration{{}, std::move(fresh)};
        break;
    }
    case Rule::Valid: {
        require(app.index >= 0 && app.index < n, "index out of range");
        for (const auto& q : F.locations())
            require(s.implies(F.at(app.index + 1, q), F.at(app.index, q)), "frames differ at " + q);
        out = VerificationResult{};
        out->status = VerificationResult::Status::Valid;
        out->invariant = F.frame(app.index);
        break;
    }
    case Rule::Unfold: {
        for (const auto& q : F.locations())
            require(s.implies(F.at(discrete_ ? n : kRem, q), safe_), "frame at " + q + " does not imply the property");
        F.unfold();
        M.clear();
        break;
    }
    case Rule::Induction: {
        require(app.index >= 0 && app.index < n, "index out of range");
        require(s.implies(F.at(app.index, app.location), app.psi), "psi does not hold in R_i");
        require(induction_holds(app.index, app.location, app.psi), "relative induction not shown");
        Frame premise = F.frame(app.index);
        premise[app.location] = premise[app.location] && app.psi;
        F.add(app.index + 1, app.location, {app.psi, std::move(premise), "Induction"});
        M.clear();
        break;
    }
    case Rule::Candidate: {
        require(M.empty(), "trace is not empty");
        require(holds_at(F.at(n, app.location) && !safe_, app.sigma), "witness not in R_N and not unsafe");
        M.push_back({app.sigma, app.location, n, 0.0, std::nullopt});
        break;
    }
    case Rule::CandidateCont: {
        require(M.empty(), "trace is not empty");
        require(holds_at(F.at(kRem, app.location) && !safe_, app.sigma), "witness not in R_rem and not unsafe");
        M.push_back({app.sigma, app.location, kRem, 0.0, std::nullopt});
        break;
    }
    case Rule::DecideCont: {
        const TraceEntry& h = head();
        require(h.index == kRem && h.q == app.location, "head is not a remainder entry at the location");
        require(holds_at(F.at(n, app.location), app.sigma), "witness not in R_N");
        TraceEntry e{app.sigma, app.location, n, app.duration, std::nullopt};
        require(step_holds(ha_, discrete_, d_.params(), e, h), "witness does not flow to the head");
        M.insert(M.begin(), e);
        break;
    }
    case Rule::Decide: {
        const TraceEntry& h = head();
        require(h.index >= 1 && h.index != kRem, "head index must be positive");
        require(app.transition && *app.transition < ha_.transitions.size(), "no transition given");
        const auto& t = ha_.transitions[*app.transition];
        require(t.to == h.q && t.from == app.location, "transition does not connect the locations");
        require(holds_at(F.at(h.index - 1, app.location), app.sigma), "witness not in R_{i-1}");
        TraceEntry e{app.sigma, app.location, h.index - 1, discrete_ ? 0.0 : app.duration, app.transition};
        require(step_holds(ha_, discrete_, d_.params(), e, h), "witness does not reach the head");
        M.insert(M.begin(), e);
        break;
    }
    case Rule::Model: {
        const TraceEntry& h = head();
        require(h.index == 0 && h.q == ha_.initial_location, "head is not at frame 0 of the initial location");
        require(holds_at(ha_.init, h.sigma), "head is not an initial state");
        out = VerificationResult{};
        out->status = VerificationResult::Status::Model;
        out->trace = to_run(M);
        break;
    }
    case Rule::Conflict: {
        const TraceEntry h = head();
        require(h.index >= 1 && h.index != kRem && h.q == app.location, "head index must be positive");
        require(excludes(app.psi, h.sigma), "generalization does not exclude the counterexample");
        require(s.implies(init_at(h.q), app.psi), "generalization does not contain the initial states");
        std::set<std::size_t> covered;
        for (const auto& [k, psi_t] : app.per_transition) {
            require(k < ha_.transitions.size() && ha_.transitions[k].to == h.q, "transition does not enter the head");
            const auto& t = ha_.transitions[k];
            require(s.implies(psi_t, app.psi), "per-transition part not contained in the generalization");
            require(d_.refute(closure_obligation(ha_, F.at(h.index - 1, t.from), t, psi_t)).unsat,
                    "image through " + t.from + " -> " + t.to + " not contained");
            covered.insert(k);
        }
        for (std::size_t k = 0; k < ha_.transitions.size(); ++k)
            require(ha_.transitions[k].to != h.q || covered.count(k), "a transition into the head is not covered");
        Frame premise = F.frame(h.index - 1);
        for (int j = 1; j <= h.index; ++j)
            F.add(j, h.q, {app.psi, premise, "Conflict"});
        M.clear();
        break;
    }
    case Rule::ConflictCont:
    case Rule::InductionCont: {
        const Formula pre = F.at(n, app.location);
        if (app.rule == Rule::ConflictCont) {
            const TraceEntry& h = head();
            require(h.index == kRem && h.q == app.location, "head is not a remainder entry at the location");
            require(excludes(app.psi, h.sigma), "generalization does not exclude the counterexample");
        }
        require(s.implies(pre, app.psi), "R_N does not imply the generalization");
        require(d_.refute(flow_obligation(ha_, pre, app.location, app.psi)).unsat, "flow image not contained");
        F.add(kRem, app.location, {app.psi, Frame{{app.location, pre}}, to_string(app.rule)});
        if (app.rule == Rule::ConflictCont)
            M.clear();
        break;
    }
    }

    ++stats_.rule_applications;
    ++stats_.per_rule[to_string(app.rule)];
    record(app, pending_queries_, pending_answers_);
    pending_queries_.clear();
    pending_answers_.clear();
    if (options_.check_consistency && !out) {
        ++stats_.consistency_checks;
        for (const auto& v : check_consistent(ha_, safe_, cfg_, discrete_, d_))
            stats_.violations.push_back("step " + std::to_string(stats_.rule_applications) + " (" +
                                        to_string(app.rule) + "): " + v);
    }
    if (observer)
        observer(app, cfg_);
    return out;
}

json trace_to_json(const Trace& trace)
{
    json arr = json::array();
    for (const auto& e : trace) {
        json j;
        j["location"] = e.q;
        j["index"] = e.index == kRem ? json("rem") : json(e.index);
        j["valuation"] = valuation_json(e.sigma);
        if (e.duration != 0.0)
            j["duration"] = e.duration;
        if (e.transition)
            j["transition"] = *e.transition;
        arr.push_back(std::move(j));
    }
    return arr;
}

void Engine::record(const RuleApplication& app, const std::vector<GeneralizationQuery>& queries,
                    const std::vector<Answer>& answers)
{
    json j;
    j["step"] = stats_.rule_applications;
    j["rule"] = to_string(app.rule);
    j["frames_digest"] = hex64(cfg_.frames.digest());
    j["trace"] = trace_to_json(cfg_.trace);
    if (!queries.empty()) {
        j["query"] = json::array();
        for (const auto& q : queries)
            j["query"].push_back(q.to_json());
        j["answer"] = json::array();
        for (std::size_t k = 0; k < answers.size(); ++k)
            j["answer"].push_back(
                {{"id", queries[k].id}, {"psi", answers[k].psi.to_string()}, {"source", to_string(answers[k].source)}});
    }
    if (options_.log)
        *options_.log << j.dump() << "\n" << std::flush;
    log_.push_back(std::move(j));
}

// ------------------------------------------------------------ consistency

std::vector<std::string> check_consistent(const HybridAutomaton& ha, const Formula& safe, const Configuration& cfg,
                                          bool discrete, Discharger& d)
{
    std::vector<std::string> v;
    SmtSolver& s = d.solver();
    const FrameSequence& F = cfg.frames;
    const int n = F.n();
    const Frame init = initial_frame(ha);
    auto idx = [](int i) { return i == kRem ? std::string("rem") : std::to_string(i); };

    for (const auto& q : F.locations())
        if (F.at(0, q).to_string() != init.at(q).to_string())
            v.push_back("Con-A: R_0(" + q + ") is not the initial frame");

    for (int i = 0; i < n; ++i)
        for (const auto& q : F.locations())
            if (!s.implies(F.at(i, q), F.at(i + 1, q)))
                v.push_back("Con-B-1: R_" + idx(i) + "(" + q + ") does not imply R_" + idx(i + 1));
    if (!discrete)
        for (const auto& q : F.locations())
            if (!s.implies(F.at(n, q), F.at(kRem, q)))
                v.push_back("Con-B-2: R_N(" + q + ") does not imply R_rem");

    for (int i = 0; i < n; ++i)
        for (const auto& q : F.locations())
            if (!s.implies(F.at(i, q), safe))
                v.push_back("Con-C: R_" + idx(i) + "(" + q + ") does not imply the property");

    for (int i = 0; i < n; ++i) {
        const Frame Ri = F.frame(i);
        for (const auto& q : F.locations()) {
            if (discrete) {
                if (!s.implies(predtrans_discrete(ha, Ri, q), F.at(i + 1, q)))
                    v.push_back("Con-D: image of R_" + idx(i) + " at " + q + " not in R_" + idx(i + 1));
                continue;
            }
            for (const auto& lemma : F.lemmas(i + 1, q)) {
                bool premise_ok = true;
                for (const auto& [p, phi] : lemma.premise)
                    if (!s.implies(Ri.at(p), phi)) {
                        premise_ok = false;
                        break;
                    }
                if (premise_ok)
                    continue;
                std::string why;
                if (!closure_refuted(ha, d, Ri, q, lemma.psi, &why))
                    v.push_back("inconclusive Con-D-1: lemma " + lemma.psi.to_string() + " of R_" + idx(i + 1) + "(" +
                                q + "): " + why);
            }
        }
    }
    if (!discrete) {
        for (const auto& q : F.locations()) {
            const Formula rn = F.at(n, q);
            for (const auto& lemma : F.lemmas(kRem, q)) {
                if (s.implies(rn, lemma.premise.at(q)))
                    continue;
                if (!s.implies(rn, lemma.psi) || !d.refute(flow_obligation(ha, rn, q, lemma.psi)).unsat)
                    v.push_back("inconclusive Con-D-2: lemma " + lemma.psi.to_string() + " of R_rem(" + q + ")");
            }
        }
    }

    const Trace& M = cfg.trace;
    for (std::size_t k = 0; k < M.size(); ++k) {
        const auto& e = M[k];
        if (e.index == kRem ? discrete : (e.index < 0 || e.index > n)) {
            v.push_back("trace: entry " + std::to_string(k) + " has index " + idx(e.index));
            continue;
        }
        if ((discrete && e.index == n) || (!discrete && e.index == kRem))
            if (!holds_at(F.at(e.index, e.q) && !safe, e.sigma))
                v.push_back("Con-E: entry " + std::to_string(k) + " is not an unsafe state of R_" + idx(e.index));
        if (k + 1 == M.size()) {
            if (e.index != (discrete ? n : kRem))
                v.push_back("trace: last entry has index " + idx(e.index));
            continue;
        }
        const auto& next = M[k + 1];
        const bool to_rem = next.index == kRem;
        if (to_rem ? e.index != n : next.index != e.index + 1 || e.index >= n) {
            v.push_back("trace: indices " + idx(e.index) + ", " + idx(next.index) + " are not contiguous");
            continue;
        }
        const std::string label = to_rem ? "Con-F-2" : "Con-F-1";
        if (!holds_at(F.at(e.index, e.q), e.sigma))
            v.push_back(label + ": entry " + std::to_string(k) + " not in R_" + idx(e.index));
        if (!step_holds(ha, discrete, d.params(), e, next))
            v.push_back(label + ": entry " + std::to_string(k) + " does not reach entry " + std::to_string(k + 1));
    }
    return v;
}

// ------------------------------------------------------------ results

ResultCheck validate_invariant(const HybridAutomaton& ha, const Formula& safe, const Frame& R, Discharger& d)
{
    SmtSolver& s = d.solver();
    for (const auto& l : ha.locations)
        if (!R.count(l.id))
            return {Verdict::Fails, "no formula for location " + l.id};
    auto refuted = [&](const Formula& phi, const std::string& what) -> std::optional<ResultCheck> {
        auto r = s.check(phi);
        if (r.sat())
            return ResultCheck{Verdict::Fails, what};
        if (r.unknown())
            return ResultCheck{Verdict::Inconclusive, what + " (solver unknown)"};
        return std::nullopt;
    };
    if (auto bad = refuted(ha.init && !R.at(ha.initial_location), "initial states not contained at " + ha.initial_location))
        return *bad;
    for (const auto& l : ha.locations)
        if (auto bad = refuted(R.at(l.id) && !safe, "invariant at " + l.id + " does not imply the property"))
            return *bad;
    std::optional<ResultCheck> open;
    std::mt19937 rng(1);
    for (const auto& t : ha.transitions) {
        auto ob = closure_obligation(ha, R.at(t.from), t, R.at(t.to));
        auto out = d.refute(ob);
        if (out.unsat)
            continue;
        const std::string where = "closure through " + t.from + " -> " + t.to;
        if (auto bad = refuted(ob.pre && ob.target, where + " fails at flow time 0"))
            if (bad->verdict == Verdict::Fails)
                return *bad;
        auto probe = probe_obligation(s, ha.vars, ob, 200, d.params(), rng);
        if (probe.counterexample)
            return {Verdict::Fails, where + " fails from " + probe.counterexample->to_string()};
        if (!open)
            open = ResultCheck{Verdict::Inconclusive, where + " not shown (" + out.method + ")"};
    }
    if (open)
        return *open;
    return {Verdict::Holds, ""};
}

ResultCheck validate_result(const HybridAutomaton& ha, const Formula& safe, const VerificationResult& result,
                            Discharger& d, double eps)
{
    if (result.valid())
        return validate_invariant(ha, safe, result.invariant, d);
    if (result.model()) {
        if (result.trace.empty())
            return {Verdict::Fails, "empty trace"};
        if (!check_run(ha, result.trace, eps, d.params()))
            return {Verdict::Fails, "trace is not a run"};
        if (safe.evaluate(result.trace.back().valuation))
            return {Verdict::Fails, "last state satisfies the property"};
        return {Verdict::Holds, ""};
    }
    return {Verdict::Inconclusive, "aborted run"};
}

json result_to_json(const VerificationResult& result)
{
    json j;
    j["status"] = to_string(result.status);
    if (result.valid()) {
        j["invariant"] = json::object();
        for (const auto& [q, phi] : result.invariant)
            j["invariant"][q] = phi.to_string();
    }
    if (result.model()) {
        j["trace"] = json::array();
        for (const auto& step : result.trace)
            j["trace"].push_back({{"location", step.location}, {"valuation", valuation_json(step.valuation)}});
    }
    if (result.aborted()) {
        j["abort"] = to_string(result.abort);
        j["reason"] = result.reason;
    }
    return j;
}

// ------------------------------------------------------------ replay

HintScript answers_from_log(const std::vector<json>& records)
{
    std::string text;
    for (const auto& r : records) {
        if (!r.contains("answer"))
            continue;
        for (const auto& a : r["answer"])
            text += json{{"match", a["id"]}, {"psi", a["psi"]}}.dump() + "\n";
    }
    return HintScript::parse(text);
}

ReplayOutcome compare_logs(const std::vector<json>& recorded, const std::vector<json>& fresh,
                           VerificationResult result)
{
    ReplayOutcome out;
    out.result = std::move(result);
    const std::size_t common = std::min(recorded.size(), fresh.size());
    for (std::size_t k = 0; k < common; ++k) {
        for (const char* field : {"rule", "frames_digest", "trace"}) {
            if (recorded[k].value(field, json()) != fresh[k].value(field, json())) {
                out.divergence_step = k + 1;
                out.detail = std::string("field '") + field + "' differs";
                return out;
            }
        }
    }
    if (recorded.size() != fresh.size()) {
        out.divergence_step = common + 1;
        out.detail = "recorded " + std::to_string(recorded.size()) + " steps, replay produced " +
                     std::to_string(fresh.size());
        return out;
    }
    out.identical = true;
    return out;
}

}  // namespace hypdr
