#include "hypdr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "hypdr/ode.hpp"
#include "hypdr/parser.hpp"

namespace hypdr {

using json = nlohmann::json;

// ---------------------------------------------------------------- commands

std::string Assignment::to_string() const
{
    std::string s = target.name + " := " + format_number(scale) + "*" + target.name;
    if (offset.kind() == Term::Kind::Const) {
        double c = offset.value();
        s += c < 0 ? " - " + format_number(-c) : " + " + format_number(c);
    } else {
        s += " + " + offset.to_string();
    }
    return s;
}

const Assignment* Command::find(const std::string& var) const
{
    for (const auto& a : assignments)
        if (a.target.name == var)
            return &a;
    return nullptr;
}

std::map<Var, Term> Command::forward_terms(const std::vector<Var>& vars) const
{
    std::map<Var, Term> out;
    for (const auto& v : vars) {
        if (const auto* a = find(v.name))
            out[v.primed(1)] = Term::constant(a->scale) * Term::var(v) + a->offset;
        else
            out[v.primed(1)] = Term::var(v);
    }
    return out;
}

Formula Command::as_formula(const std::vector<Var>& vars) const
{
    std::vector<Formula> eqs;
    for (const auto& [post, rhs] : forward_terms(vars))
        eqs.push_back(Formula::atom(Term::var(post), CmpOp::Eq, rhs));
    return Formula::conjunction(std::move(eqs));
}

std::map<Var, Term> Command::inverse_terms(const std::vector<Var>& vars) const
{
    // pre[v] is the pre-state value of v as a term over the post-state copy.
    std::map<Var, Term> pre;
    for (const auto& v : vars)
        if (!find(v.name))
            pre[v] = Term::var(v.primed(1));
    bool progress = true;
    while (pre.size() < vars.size() && progress) {
        progress = false;
        for (const auto& a : assignments) {
            if (pre.count(a.target))
                continue;
            std::set<Var> deps;
            a.offset.collect_vars(deps);
            bool ready = std::all_of(deps.begin(), deps.end(), [&](const Var& d) { return pre.count(d) != 0; });
            if (!ready)
                continue;
            Term offset_pre = a.offset.substitute(pre);
            pre[a.target] = Term::constant(1.0 / a.scale) * (Term::var(a.target.primed(1)) - offset_pre);
            progress = true;
        }
    }
    if (pre.size() < vars.size())
        throw ValidationError("command offsets depend on each other cyclically; pre-state is not recoverable");
    return pre;
}

std::vector<std::string> Command::to_strings() const
{
    if (assignments.empty())
        return {"skip"};
    std::vector<std::string> out;
    for (const auto& a : assignments)
        out.push_back(a.to_string());
    return out;
}

std::optional<Assignment> parse_assignment(const std::string& text, const std::set<std::string>& vars)
{
    static const std::regex skip_re(R"(^\s*skip\s*$)");
    static const std::regex assign_re(R"(^\s*([A-Za-z_][A-Za-z0-9_]*)\s*:=\s*(.+?)\s*$)");
    if (std::regex_match(text, skip_re))
        return std::nullopt;
    std::smatch m;
    if (!std::regex_match(text, m, assign_re))
        throw ValidationError("command '" + text + "' is neither skip nor an assignment");
    Var target(m[1].str());
    if (!vars.count(target.name))
        throw ValidationError("command assigns undeclared variable '" + target.name + "'");
    Term rhs = parse_term(m[2].str());
    try {
        check_declared(rhs, vars, 0);
    } catch (const UndeclaredVariable& e) {
        throw ValidationError("command '" + text + "': " + e.what());
    }
    Polynomial p = Polynomial::from_term(rhs);
    Polynomial linear = p.coefficient(target, 1);
    Polynomial rest = p.coefficient(target, 0);
    if (p.degree_in(target) > 1 || !linear.is_constant())
        throw ValidationError("command '" + text + "' is not of the form x := r1*x + r2");
    if (linear.constant_value() == 0.0)
        throw ValidationError("command '" + text + "' has r1 = 0; r1 must be nonzero");
    return Assignment{target, linear.constant_value(), rest.to_term()};
}

Valuation apply_command(const Command& cmd, const Valuation& pre)
{
    Valuation post = pre;
    for (const auto& a : cmd.assignments)
        post.set(a.target, a.scale * pre.at(a.target) + a.offset.evaluate(pre));
    return post;
}

Valuation invert_command(const Command& cmd, const Valuation& post)
{
    std::vector<Var> vars;
    for (const auto& [v, value] : post.values())
        vars.push_back(v);
    auto terms = cmd.inverse_terms(vars);
    Valuation post1 = post.primed(1);
    Valuation pre;
    for (const auto& [v, t] : terms)
        pre.set(v, t.evaluate(post1));
    return pre;
}

// ---------------------------------------------------------------- ode / model

std::map<Var, Polynomial> Ode::field() const
{
    std::map<Var, Polynomial> out;
    for (const auto& [v, t] : rhs)
        out.emplace(v, Polynomial::from_term(t));
    return out;
}

std::string Ode::to_string() const
{
    std::string s;
    for (const auto& [v, t] : rhs) {
        if (!s.empty())
            s += ", ";
        s += "d" + v.name + "/dt = " + t.to_string();
    }
    return s;
}

bool HybridAutomaton::is_discrete() const
{
    return std::none_of(locations.begin(), locations.end(), [](const Location& l) { return l.flow.has_value(); });
}

const Location& HybridAutomaton::location(const LocationId& id) const
{
    return locations.at(location_index(id));
}

std::size_t HybridAutomaton::location_index(const LocationId& id) const
{
    for (std::size_t i = 0; i < locations.size(); ++i)
        if (locations[i].id == id)
            return i;
    throw ValidationError("unknown location '" + id + "'");
}

std::set<std::string> HybridAutomaton::var_names() const
{
    std::set<std::string> out;
    for (const auto& v : vars)
        out.insert(v.name);
    return out;
}

Ode HybridAutomaton::flow(const LocationId& id) const
{
    const auto& loc = location(id);
    if (loc.flow)
        return *loc.flow;
    Ode zero;
    for (const auto& v : vars)
        zero.rhs[v] = Term::constant(0.0);
    return zero;
}

namespace {

void require_level0(const Formula& phi, const std::set<std::string>& names, const std::string& where)
{
    try {
        check_declared(phi, names, 0);
    } catch (const UndeclaredVariable& e) {
        throw ValidationError(where + ": " + e.what() + " (only declared unprimed variables are allowed)");
    }
}

}  // namespace

void HybridAutomaton::validate() const
{
    if (vars.empty())
        throw ValidationError("model declares no variables");
    std::set<std::string> names;
    for (const auto& v : vars) {
        if (v.name.empty() || v.prime != 0)
            throw ValidationError("variable names must be nonempty and unprimed");
        if (!names.insert(v.name).second)
            throw ValidationError("variable '" + v.name + "' declared twice");
    }
    if (locations.empty())
        throw ValidationError("model declares no locations");
    std::set<std::string> ids;
    for (const auto& l : locations)
        if (!ids.insert(l.id).second)
            throw ValidationError("location '" + l.id + "' declared twice");
    if (!ids.count(initial_location))
        throw ValidationError("initial location '" + initial_location + "' is not a declared location");
    require_level0(init, names, "init formula");
    if (safe)
        require_level0(*safe, names, "safe formula");
    bool any_flow = !is_discrete();
    for (const auto& l : locations) {
        if (any_flow && !l.flow)
            throw ValidationError("location '" + l.id + "' lacks a flow while other locations have one");
        require_level0(l.inv, names, "stay condition of '" + l.id + "'");
        if (l.flow) {
            for (const auto& v : vars)
                if (!l.flow->rhs.count(v))
                    throw ValidationError("flow of '" + l.id + "' has no derivative for '" + v.name + "'");
            for (const auto& [v, t] : l.flow->rhs) {
                if (!names.count(v.name) || v.prime != 0)
                    throw ValidationError("flow of '" + l.id + "' defines undeclared variable '" + v.name + "'");
                try {
                    check_declared(t, names, 0);
                } catch (const UndeclaredVariable& e) {
                    throw ValidationError("flow of '" + l.id + "': " + e.what());
                }
            }
        }
    }
    for (const auto& t : transitions) {
        if (!ids.count(t.from) || !ids.count(t.to))
            throw ValidationError("transition endpoint '" + (ids.count(t.from) ? t.to : t.from) + "' is not a location");
        require_level0(t.guard, names, "guard of " + t.from + " -> " + t.to);
        std::set<std::string> assigned;
        for (const auto& a : t.cmd.assignments)
            if (!assigned.insert(a.target.name).second)
                throw ValidationError("command of " + t.from + " -> " + t.to + " assigns '" + a.target.name + "' twice");
        t.cmd.inverse_terms(vars);
    }
}

namespace {

Formula field_formula(const json& j, const char* key, const std::string& where, Formula fallback)
{
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_string())
        throw ValidationError(where + "." + key + " must be a formula string");
    try {
        return parse_formula(j[key].get<std::string>());
    } catch (const ParseError& e) {
        throw ParseError(where + "." + key + ": " + e.what(), e.line, e.column);
    }
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte)
{
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

HybridAutomaton parse_model(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError(e.what(), line, col);
    }
    if (!j.is_object())
        throw ValidationError("model file must hold a JSON object");
    HybridAutomaton ha;
    try {
        for (const auto& v : j.at("vars"))
            ha.vars.emplace_back(v.get<std::string>());
        auto names = ha.var_names();
        for (const auto& jl : j.at("locations")) {
            Location loc;
            loc.id = jl.at("id").get<std::string>();
            std::string where = "location " + loc.id;
            loc.inv = field_formula(jl, "inv", where, Formula::top());
            if (jl.contains("flow")) {
                Ode ode;
                for (const auto& [name, rhs] : jl.at("flow").items()) {
                    try {
                        ode.rhs[Var(name)] = parse_term(rhs.get<std::string>());
                    } catch (const ParseError& e) {
                        throw ParseError(where + ".flow." + name + ": " + e.what(), e.line, e.column);
                    }
                }
                loc.flow = std::move(ode);
            }
            ha.locations.push_back(std::move(loc));
        }
        const auto& ji = j.at("init");
        ha.initial_location = ji.at("location").get<std::string>();
        ha.init = field_formula(ji, "formula", "init", Formula::top());
        if (j.contains("transitions")) {
            for (const auto& jt : j.at("transitions")) {
                JumpTransition t;
                t.from = jt.at("from").get<std::string>();
                t.to = jt.at("to").get<std::string>();
                t.guard = field_formula(jt, "guard", "transition " + t.from + "->" + t.to, Formula::top());
                if (jt.contains("cmd"))
                    for (const auto& c : jt.at("cmd"))
                        if (auto a = parse_assignment(c.get<std::string>(), names))
                            t.cmd.assignments.push_back(*a);
                ha.transitions.push_back(std::move(t));
            }
        }
        if (j.contains("safe"))
            ha.safe = field_formula(j, "safe", "model", Formula::top());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model: ") + e.what());
    }
    ha.validate();
    return ha;
}

HybridAutomaton load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open model file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str());
}

std::string serialize_model(const HybridAutomaton& ha)
{
    json j;
    j["vars"] = json::array();
    for (const auto& v : ha.vars)
        j["vars"].push_back(v.name);
    j["locations"] = json::array();
    for (const auto& l : ha.locations) {
        json jl;
        jl["id"] = l.id;
        if (l.flow) {
            jl["flow"] = json::object();
            for (const auto& [v, t] : l.flow->rhs)
                jl["flow"][v.name] = t.to_string();
            jl["inv"] = l.inv.to_string();
        } else if (!l.inv.is_true()) {
            jl["inv"] = l.inv.to_string();
        }
        j["locations"].push_back(jl);
    }
    j["init"] = {{"location", ha.initial_location}, {"formula", ha.init.to_string()}};
    j["transitions"] = json::array();
    for (const auto& t : ha.transitions)
        j["transitions"].push_back({{"from", t.from}, {"guard", t.guard.to_string()}, {"cmd", t.cmd.to_strings()}, {"to", t.to}});
    if (ha.safe)
        j["safe"] = ha.safe->to_string();
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- runs

namespace {

double max_distance(std::span<const double> a, std::span<const double> b)
{
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::fabs(a[i] - b[i]));
    return d;
}

bool flow_reaches(const HybridAutomaton& ha, const LocationId& q, const Valuation& from, const Valuation& to,
                  double eps, const SimParams& params)
{
    VectorField f(ha.flow(q), ha.vars);
    const Formula& stay = ha.stay(q);
    std::vector<double> target = f.to_state(to);
    if (max_distance(f.to_state(from), target) <= eps)
        return true;
    if (ha.is_discrete())
        return false;
    bool reached = false;
    simulate(f, from, params, Direction::Forward, [&](int i, std::span<const double> x) {
        if (i == 0)
            return true;
        if (!stay.evaluate(f.to_valuation(x), eps))
            return false;
        if (max_distance(x, target) <= eps) {
            reached = true;
            return false;
        }
        return true;
    });
    return reached;
}

}  // namespace

bool check_run(const HybridAutomaton& ha, const Run& run, double eps, const SimParams& params)
{
    if (run.empty())
        throw std::invalid_argument("a run is nonempty");
    if (run.front().location != ha.initial_location)
        return false;
    if (!ha.init.evaluate(run.front().valuation, eps))
        return false;
    const bool discrete = ha.is_discrete();
    const std::size_t jumps = discrete ? run.size() - 1 : (run.size() >= 2 ? run.size() - 2 : 0);
    for (std::size_t i = 0; i < jumps; ++i) {
        const auto& cur = run[i];
        const auto& next = run[i + 1];
        bool enabled = false;
        for (const auto& t : ha.transitions) {
            if (t.from != cur.location || t.to != next.location)
                continue;
            if (discrete) {
                Valuation post = apply_command(t.cmd, cur.valuation);
                VectorField f(ha.flow(cur.location), ha.vars);
                enabled = t.guard.evaluate(cur.valuation, eps) &&
                          max_distance(f.to_state(post), f.to_state(next.valuation)) <= eps;
            } else {
                Valuation jump_point = invert_command(t.cmd, next.valuation);
                enabled = t.guard.evaluate(jump_point, eps) &&
                          flow_reaches(ha, cur.location, cur.valuation, jump_point, eps, params);
            }
            if (enabled)
                break;
        }
        if (!enabled)
            return false;
    }
    if (!discrete && run.size() >= 2) {
        const auto& last = run[run.size() - 1];
        const auto& prev = run[run.size() - 2];
        if (last.location != prev.location)
            return false;
        return flow_reaches(ha, prev.location, prev.valuation, last.valuation, eps, params);
    }
    return true;
}

bool check_run(const HybridAutomaton& ha, const Run& run, double eps)
{
    return check_run(ha, run, eps, SimParams{});
}

}  // namespace hypdr
