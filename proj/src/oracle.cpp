#include "hypdr/oracle.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <httplib.h>

#include "hypdr/parser.hpp"

namespace hypdr {

using json = nlohmann::json;

const char* to_string(GeneralizationQuery::Kind kind)
{
    return kind == GeneralizationQuery::Kind::Conflict ? "conflict" : "conflict_cont";
}

const char* to_string(AnswerSource s)
{
    switch (s) {
    case AnswerSource::Script: return "script";
    case AnswerSource::Heuristic: return "heuristic";
    case AnswerSource::Interactive: return "interactive";
    }
    return "?";
}

json GeneralizationQuery::to_json() const
{
    json j;
    j["id"] = id;
    j["kind"] = to_string(kind);
    j["location"] = location;
    if (source)
        j["source"] = *source;
    j["frame"] = frame;
    j["pre"] = pre.to_string();
    j["flow"] = json::object();
    for (const auto& [v, t] : flow.rhs)
        j["flow"][v.name] = t.to_string();
    j["stay"] = stay.to_string();
    if (guard)
        j["guard"] = guard->to_string();
    if (cmd)
        j["cmd"] = cmd->to_strings();
    j["ce"] = json::object();
    for (const auto& [v, value] : ce.values())
        j["ce"][v.name] = value;
    j["init"] = init.to_string();
    return j;
}

std::string GeneralizationQuery::to_text() const
{
    std::ostringstream os;
    os << "Query #" << id << " (" << to_string(kind) << ", location " << location;
    if (source)
        os << " from " << *source;
    os << ", frame " << frame << ")\n";
    os << "  Pre:   " << pre.to_string() << "\n";
    if (!discrete) {
        os << "  Flow:  " << flow.to_string() << "\n";
        os << "  Stay:  " << stay.to_string() << "\n";
    }
    if (guard)
        os << "  Guard: " << guard->to_string() << "\n";
    if (cmd) {
        os << "  Cmd:   ";
        auto lines = cmd->to_strings();
        for (std::size_t i = 0; i < lines.size(); ++i)
            os << (i ? "; " : "") << lines[i];
        os << "\n";
    }
    os << "  CE:    " << valuation_to_formula(ce).to_string() << "\n";
    os << "  Init:  " << init.to_string() << "\n";
    return os.str();
}

ValidationReport GeneralizationValidator::validate(const GeneralizationQuery& q, const Formula& psi)
{
    try {
        check_declared(psi, ha_.var_names(), 0);
    } catch (const UndeclaredVariable& e) {
        return {false, std::string("mentions ") + e.what()};
    }
    SmtSolver& s = d_.solver();
    auto ce = s.check(psi && valuation_to_formula(q.ce));
    if (!ce.unsat())
        return {false, ce.sat() ? "does not exclude CE" : "solver unknown while checking CE exclusion"};
    // Point queries evaluate with this tolerance, so a thinner exclusion
    // would let the same counterexample come back.
    if (psi.evaluate(q.ce, d_.params().eps_eval))
        return {false, "does not exclude CE by more than eps_eval"};
    if (!s.implies(q.init, psi))
        return {false, "does not contain Init"};
    if (q.kind == GeneralizationQuery::Kind::Conflict) {
        const auto& t = ha_.transitions.at(*q.transition);
        auto out = d_.refute(closure_obligation(ha_, q.pre, t, psi));
        if (!out.unsat)
            return {false, "image of Pre through the transition not shown to be contained (" + out.method + ")"};
    } else {
        if (!s.implies(q.pre, psi))
            return {false, "does not contain Pre"};
        auto out = d_.refute(flow_obligation(ha_, q.pre, q.location, psi));
        if (!out.unsat)
            return {false, "flow image of Pre not shown to be contained (" + out.method + ")"};
    }
    return {true, ""};
}

HintScript HintScript::parse(const std::string& text)
{
    HintScript script;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("hint script: ") + e.what(), lineno, 1);
        }
        Entry e;
        if (!j.contains("psi") || !j["psi"].is_string())
            throw ParseError("hint script entry lacks a psi string", lineno, 1);
        e.text = j["psi"].get<std::string>();
        try {
            e.psi = parse_formula(e.text);
        } catch (const ParseError& pe) {
            throw ParseError(std::string("hint script psi: ") + pe.what(), lineno, pe.column);
        }
        if (j.contains("match"))
            e.match = j["match"].get<int>();
        if (j.contains("kind")) {
            auto k = j["kind"].get<std::string>();
            if (k != "conflict" && k != "conflict_cont")
                throw ParseError("hint script kind must be conflict or conflict_cont", lineno, 1);
            e.kind = k == "conflict" ? GeneralizationQuery::Kind::Conflict : GeneralizationQuery::Kind::ConflictCont;
        }
        if (j.contains("repeat"))
            e.repeat = j["repeat"].get<bool>();
        if (j.contains("location"))
            e.location = j["location"].get<std::string>();
        script.entries_.push_back(std::move(e));
    }
    return script;
}

HintScript HintScript::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open hint script '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::size_t HintScript::remaining() const
{
    std::size_t n = 0;
    for (const auto& e : entries_)
        n += e.consumed ? 0 : 1;
    return n;
}

namespace {

void collect_atoms(const Formula& f, std::vector<Formula>& out)
{
    switch (f.kind()) {
    case Formula::Kind::Atom: out.push_back(f); break;
    case Formula::Kind::True:
    case Formula::Kind::False: break;
    default:
        for (const auto& c : f.children())
            collect_atoms(c, out);
    }
}

}  // namespace

std::vector<Formula> heuristic_candidates(const HybridAutomaton& ha, const Formula& safe, const GeneralizationQuery& q)
{
    std::vector<Formula> c;
    std::vector<Formula> atoms;
    collect_atoms(safe, atoms);
    collect_atoms(ha.init, atoms);
    for (const auto& tr : ha.transitions)
        collect_atoms(tr.guard, atoms);
    for (const auto& l : ha.locations)
        collect_atoms(l.inv, atoms);
    auto add_atoms = [&] {
        c.push_back(safe);
        for (const auto& a : atoms) {
            c.push_back(a);
            c.push_back(!a);
        }
    };
    if (q.kind == GeneralizationQuery::Kind::Conflict) {
        const auto& t = ha.transitions.at(*q.transition);
        auto back = [&](const Formula& f) { return command_preimage(ha, t, f); };
        if (q.discrete) {
            add_atoms();
        } else {
            c.push_back(back(q.stay));
            c.push_back(q.init || back((q.stay || q.pre) && *q.guard));
        }
        c.push_back(back(q.pre));
        // Exact one-step image when the flow is stationary.
        c.push_back(q.init || back(q.pre && *q.guard));
    } else {
        c.push_back(q.stay);
        c.push_back(q.pre || q.stay);
        c.push_back(q.pre);
    }
    if (!q.discrete)
        add_atoms();
    for (const auto& [v, value] : q.ce.values()) {
        c.push_back(Formula::atom(Term::var(v), CmpOp::Lt, Term::constant(value)));
        c.push_back(Formula::atom(Term::var(v), CmpOp::Gt, Term::constant(value)));
    }
    c.push_back(!valuation_to_formula(q.ce));
    c.push_back(Formula::bottom());

    std::vector<Formula> unique;
    std::set<std::string> seen;
    for (auto& f : c)
        if (seen.insert(f.to_string()).second)
            unique.push_back(std::move(f));
    return unique;
}

std::optional<Answer> GeneralizationChain::next_generalization(const GeneralizationQuery& q, const Trajectory& backward)
{
    if (script_) {
        for (auto& e : script_->entries()) {
            if (e.consumed)
                continue;
            if ((e.match && *e.match != q.id) || (e.kind && *e.kind != q.kind) ||
                (e.location && *e.location != q.location))
                continue;
            if (validator_.validate(q, e.psi).ok) {
                e.consumed = !e.repeat;
                return Answer{e.psi, AnswerSource::Script};
            }
            ++rejected_;
        }
    }
    if (heuristics_) {
        for (const auto& psi : heuristic_candidates(ha_, safe_, q)) {
            if (validator_.validate(q, psi).ok)
                return Answer{psi, AnswerSource::Heuristic};
            ++rejected_;
        }
    }
    if (interactive_) {
        auto psi = interactive_->ask(q, backward, [&](const Formula& f) { return validator_.validate(q, f); });
        if (psi)
            return Answer{*psi, AnswerSource::Interactive};
    }
    return std::nullopt;
}

std::optional<Formula> TerminalSource::ask(const GeneralizationQuery& q, const Trajectory&,
                                           const std::function<ValidationReport(const Formula&)>& validate)
{
    out_ << q.to_text();
    while (true) {
        out_ << "psi> " << std::flush;
        std::string line;
        if (!std::getline(in_, line) || line == "abort" || line.find_first_not_of(" \t") == std::string::npos)
            return std::nullopt;
        try {
            Formula psi = parse_formula(line);
            check_declared(psi, vars_, 0);
            auto report = validate(psi);
            if (report.ok)
                return psi;
            out_ << "rejected: " << report.reason << "\n";
        } catch (const ParseError& e) {
            out_ << "parse error: " << e.what() << "\n";
        } catch (const UndeclaredVariable& e) {
            out_ << "rejected: " << e.what() << "\n";
        }
    }
}

// ---------------------------------------------------------------- server

struct SessionServer::Impl {
    httplib::Server server;
    std::thread thread;
    std::set<std::string> vars;

    std::mutex m;
    std::condition_variable cv;
    json status = {{"state", "starting"}};
    std::optional<json> result;
    std::optional<json> pending;
    int pending_id = -1;
    std::map<int, std::string> trajectories;
    std::optional<std::string> answer;
    std::optional<ValidationReport> verdict;
    bool cancelled = false;

    std::mutex post_mutex;
};

SessionServer::SessionServer(std::set<std::string> vars) : impl_(std::make_unique<Impl>())
{
    impl_->vars = std::move(vars);
    auto& I = *impl_;
    I.server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    I.server.Get("/status", [&I](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lk(I.m);
        json s = I.status;
        s["pending_query"] = I.pending ? json(I.pending_id) : json(nullptr);
        s["done"] = I.result.has_value();
        res.set_content(s.dump(), "application/json");
    });
    I.server.Get("/query", [&I](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lk(I.m);
        if (!I.pending) {
            res.status = 204;
            return;
        }
        res.set_content(I.pending->dump(), "application/json");
    });
    I.server.Get("/trajectory", [&I](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("query")) {
            res.status = 400;
            res.set_content(json{{"error", "missing query parameter"}}.dump(), "application/json");
            return;
        }
        int id = 0;
        try {
            id = std::stoi(req.get_param_value("query"));
        } catch (const std::exception&) {
            res.status = 400;
            res.set_content(json{{"error", "query id must be an integer"}}.dump(), "application/json");
            return;
        }
        std::lock_guard lk(I.m);
        auto it = I.trajectories.find(id);
        if (it == I.trajectories.end()) {
            res.status = 404;
            res.set_content(json{{"error", "unknown query id"}}.dump(), "application/json");
            return;
        }
        res.set_content(it->second, "text/plain");
    });
    I.server.Get("/result", [&I](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lk(I.m);
        if (!I.result) {
            res.status = 204;
            return;
        }
        res.set_content(I.result->dump(), "application/json");
    });
    I.server.Post("/answer", [&I](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard post(I.post_mutex);
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            res.status = 400;
            res.set_content(json{{"error", "body is not JSON"}}.dump(), "application/json");
            return;
        }
        if (!body.contains("id") || !body["id"].is_number_integer() || !body.contains("psi") || !body["psi"].is_string()) {
            res.status = 400;
            res.set_content(json{{"error", "expected {id: int, psi: string}"}}.dump(), "application/json");
            return;
        }
        int id = body["id"].get<int>();
        std::unique_lock lk(I.m);
        if (!I.pending || id != I.pending_id) {
            res.status = 409;
            res.set_content(json{{"error", "stale query id"}, {"pending", I.pending ? json(I.pending_id) : json(nullptr)}}.dump(),
                            "application/json");
            return;
        }
        I.answer = body["psi"].get<std::string>();
        I.verdict.reset();
        I.cv.notify_all();
        I.cv.wait(lk, [&I] { return I.verdict.has_value() || I.cancelled; });
        if (!I.verdict) {
            res.status = 409;
            res.set_content(json{{"error", "session cancelled"}}.dump(), "application/json");
            return;
        }
        if (I.verdict->ok) {
            res.set_content(json{{"accepted", true}, {"id", id}}.dump(), "application/json");
        } else {
            res.status = 422;
            res.set_content(json{{"accepted", false}, {"id", id}, {"reason", I.verdict->reason}}.dump(), "application/json");
        }
    });
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::start(const std::string& host, int port)
{
    auto& I = *impl_;
    if (port == 0)
        port_ = I.server.bind_to_any_port(host);
    else if (I.server.bind_to_port(host, port))
        port_ = port;
    else
        port_ = -1;
    if (port_ <= 0)
        throw std::runtime_error("cannot bind session server to " + host + ":" + std::to_string(port));
    I.thread = std::thread([&I] { I.server.listen_after_bind(); });
    I.server.wait_until_ready();
    return port_;
}

void SessionServer::stop()
{
    cancel();
    if (impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

void SessionServer::cancel()
{
    std::lock_guard lk(impl_->m);
    impl_->cancelled = true;
    impl_->cv.notify_all();
}

void SessionServer::set_status(json status)
{
    std::lock_guard lk(impl_->m);
    impl_->status = std::move(status);
}

void SessionServer::set_result(json result)
{
    std::lock_guard lk(impl_->m);
    impl_->result = std::move(result);
    impl_->status["state"] = "done";
}

std::optional<Formula> SessionServer::ask(const GeneralizationQuery& q, const Trajectory& backward,
                                          const std::function<ValidationReport(const Formula&)>& validate)
{
    auto& I = *impl_;
    std::unique_lock lk(I.m);
    I.pending = q.to_json();
    I.pending_id = q.id;
    I.trajectories[q.id] = backward.dump();
    I.status["state"] = "waiting";
    while (true) {
        I.cv.wait(lk, [&I] { return I.answer.has_value() || I.cancelled; });
        if (I.cancelled) {
            I.pending.reset();
            return std::nullopt;
        }
        std::string text = *I.answer;
        I.answer.reset();
        lk.unlock();
        ValidationReport report;
        std::optional<Formula> psi;
        try {
            psi = parse_formula(text);
            check_declared(*psi, I.vars, 0);
            report = validate(*psi);
        } catch (const ParseError& e) {
            report = {false, std::string("parse error: ") + e.what()};
        } catch (const UndeclaredVariable& e) {
            report = {false, std::string("mentions ") + e.what()};
        }
        lk.lock();
        I.verdict = report;
        if (report.ok) {
            I.pending.reset();
            I.status["state"] = "running";
        }
        I.cv.notify_all();
        if (report.ok)
            return psi;
    }
}

}  // namespace hypdr
