#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hypdr/discharge.hpp"
#include "hypdr/engine.hpp"
#include "hypdr/model.hpp"
#include "hypdr/oracle.hpp"
#include "hypdr/parser.hpp"
#include "hypdr/smt.hpp"

using namespace hypdr;
using json = nlohmann::json;

namespace {

constexpr int kExitValid = 0;
constexpr int kExitFailedCheck = 1;
constexpr int kExitUsage = 2;
constexpr int kExitModel = 10;
constexpr int kExitAborted = 20;
constexpr int kExitInconclusive = 30;

struct Config {
    std::string model;
    std::string safe;
    std::string init_formula;
    std::string init_location;
    std::string mode = "auto";
    std::string hints;
    bool no_heuristics = false;
    bool interactive = false;
    std::string serve;
    double serve_linger = 0.0;
    SimParams sim;
    double r = 1e-3;
    int max_frames = 32;
    std::size_t max_steps = 100000;
    std::string solver_cmd;
    int timeout_ms = 10000;
    std::string log;
    std::string result;
    bool check_consistency = false;
    bool quiet = false;
};

void add_model_options(CLI::App* app, Config& c)
{
    app->add_option("model", c.model, "Model file (.hha JSON)")->required();
    app->add_option("--safe", c.safe, "Safety property; overrides the model's");
    app->add_option("--init-formula", c.init_formula, "Initial condition; overrides the model's");
    app->add_option("--init-location", c.init_location, "Initial location; overrides the model's");
    app->add_option("--h", c.sim.h, "RK4 step size")->check(CLI::PositiveNumber);
    app->add_option("--T", c.sim.horizon, "Samples per simulation")->check(CLI::PositiveNumber);
    app->add_option("--eps-eval", c.sim.eps_eval, "Tolerance for formula evaluation at samples");
    app->add_option("--r", c.r, "Step bound for the invariance check")->check(CLI::PositiveNumber);
    app->add_option("--solver-cmd", c.solver_cmd, "SMT solver command line (default $HYPDR_SOLVER or z3 -in)");
    app->add_option("--timeout-ms", c.timeout_ms, "Per-query solver timeout in milliseconds");
}

void add_engine_options(CLI::App* app, Config& c)
{
    app->add_option("--mode", c.mode, "auto, discrete or hybrid")->check(CLI::IsMember({"auto", "discrete", "hybrid"}));
    app->add_option("--hints", c.hints, "Hint script (JSONL)");
    app->add_flag("--no-heuristics", c.no_heuristics, "Disable the built-in generalization candidates");
    app->add_flag("--interactive", c.interactive, "Ask on the terminal when no hint applies");
    app->add_option("--serve", c.serve, "Serve queries over HTTP at host:port");
    app->add_option("--serve-linger", c.serve_linger, "Seconds to keep serving after the result");
    app->add_option("--max-frames", c.max_frames, "Frame budget")->check(CLI::PositiveNumber);
    app->add_option("--max-steps", c.max_steps, "Rule application budget");
    app->add_option("--log", c.log, "Session log output (JSONL)");
    app->add_option("--result", c.result, "Result artifact output (JSON)");
    app->add_flag("--check-consistency", c.check_consistency, "Check frame consistency after every rule");
    app->add_flag("-q,--quiet", c.quiet, "Print only the verdict");
}

HybridAutomaton load(const Config& c)
{
    HybridAutomaton ha = load_model(c.model);
    const auto names = ha.var_names();
    if (!c.safe.empty()) {
        ha.safe = parse_formula(c.safe);
        check_declared(*ha.safe, names, 0);
    }
    if (!c.init_formula.empty()) {
        ha.init = parse_formula(c.init_formula);
        check_declared(ha.init, names, 0);
    }
    if (!c.init_location.empty())
        ha.initial_location = c.init_location;
    ha.validate();
    if (!ha.safe)
        throw ValidationError("no safety property: give --safe or a \"safe\" field");
    return ha;
}

json config_json(const Config& c)
{
    return {{"model", c.model},
            {"safe", c.safe},
            {"init_formula", c.init_formula},
            {"init_location", c.init_location},
            {"mode", c.mode},
            {"hints", c.hints},
            {"heuristics", !c.no_heuristics},
            {"h", c.sim.h},
            {"T", c.sim.horizon},
            {"eps_eval", c.sim.eps_eval},
            {"r", c.r},
            {"max_frames", c.max_frames},
            {"max_steps", c.max_steps},
            {"solver_cmd", c.solver_cmd.empty() ? default_solver_command() : c.solver_cmd},
            {"timeout_ms", c.timeout_ms}};
}

Mode parse_mode(const std::string& m)
{
    return m == "discrete" ? Mode::Discrete : m == "hybrid" ? Mode::Hybrid : Mode::Auto;
}

std::pair<std::string, int> split_address(const std::string& addr)
{
    auto colon = addr.rfind(':');
    if (colon == std::string::npos)
        return {"127.0.0.1", std::stoi(addr)};
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

void print_result(const VerificationResult& r, std::ostream& os)
{
    os << to_string(r.status) << "\n";
    if (r.valid())
        for (const auto& [q, phi] : r.invariant)
            os << "  " << q << ": " << phi.to_string() << "\n";
    if (r.model())
        for (std::size_t k = 0; k < r.trace.size(); ++k)
            os << "  " << k << " " << r.trace[k].location << " " << r.trace[k].valuation.to_string() << "\n";
    if (r.aborted())
        os << "  " << to_string(r.abort) << ": " << r.reason << "\n";
}

int exit_code(const VerificationResult& r)
{
    return r.valid() ? kExitValid : r.model() ? kExitModel : kExitAborted;
}

struct RunOutput {
    VerificationResult result;
    std::vector<json> log;
    json stats;
};

RunOutput run_engine(const Config& c, const HybridAutomaton& ha, HintScript* script, bool heuristics,
                     std::ostream* log)
{
    SmtSolver solver(c.solver_cmd.empty() ? default_solver_command() : c.solver_cmd, c.timeout_ms);
    Discharger d(solver, ha.vars, c.sim, c.r);
    GeneralizationValidator validator(ha, d);
    GeneralizationChain chain(ha, *ha.safe, validator);
    chain.set_script(script);
    chain.set_heuristics(heuristics);

    std::unique_ptr<TerminalSource> terminal;
    std::unique_ptr<SessionServer> server;
    if (!c.serve.empty()) {
        server = std::make_unique<SessionServer>(ha.var_names());
        auto [host, port] = split_address(c.serve);
        int bound = server->start(host, port);
        std::cerr << "serving session on http://" << host << ":" << bound << "\n";
        chain.set_interactive(server.get());
    } else if (c.interactive) {
        terminal = std::make_unique<TerminalSource>(std::cin, std::cerr, ha.var_names());
        chain.set_interactive(terminal.get());
    }

    EngineOptions opts;
    opts.mode = parse_mode(c.mode);
    opts.max_frames = c.max_frames;
    opts.max_steps = c.max_steps;
    opts.check_consistency = c.check_consistency;
    opts.log = log;
    Engine engine(ha, *ha.safe, d, chain, opts);
    if (server) {
        engine.observer = [&](const RuleApplication& app, const Configuration& cfg) {
            server->set_status({{"state", "running"},
                                {"step", engine.stats().rule_applications},
                                {"rule", to_string(app.rule)},
                                {"frames", cfg.frames.to_string()},
                                {"frames_digest", cfg.frames.digest()}});
        };
    }
    RunOutput out;
    out.result = engine.run();
    out.log = engine.log();

    auto check = validate_result(ha, *ha.safe, out.result, d);
    const auto& es = engine.stats();
    const auto& ss = solver.stats();
    out.stats = {{"rule_applications", es.rule_applications},
                 {"per_rule", es.per_rule},
                 {"generalization_queries", es.queries},
                 {"rejected_candidates", chain.rejected()},
                 {"consistency_checks", es.consistency_checks},
                 {"consistency_violations", es.violations},
                 {"frames", engine.configuration().frames.n()},
                 {"seconds", es.seconds},
                 {"solver", {{"queries", ss.queries},
                             {"cache_hits", ss.cache_hits},
                             {"unknown", ss.unknown},
                             {"restarts", ss.restarts},
                             {"seconds", ss.seconds}}},
                 {"independent_check", {{"verdict", to_string(check.verdict)}, {"reason", check.reason}}}};
    if (server) {
        json r = result_to_json(out.result);
        r["stats"] = out.stats;
        server->set_result(r);
        if (c.serve_linger > 0)
            std::this_thread::sleep_for(std::chrono::duration<double>(c.serve_linger));
        server->stop();
    }
    return out;
}

int cmd_verify(const Config& c)
{
    HybridAutomaton ha = load(c);
    std::optional<HintScript> script;
    if (!c.hints.empty())
        script = HintScript::load(c.hints);
    std::ofstream log_file;
    if (!c.log.empty()) {
        log_file.open(c.log);
        if (!log_file)
            throw std::runtime_error("cannot write log '" + c.log + "'");
        log_file << json{{"config", config_json(c)}}.dump() << "\n";
    }
    auto out = run_engine(c, ha, script ? &*script : nullptr, !c.no_heuristics, c.log.empty() ? nullptr : &log_file);
    json artifact = result_to_json(out.result);
    artifact["stats"] = out.stats;
    artifact["config"] = config_json(c);
    if (!c.result.empty()) {
        std::ofstream f(c.result);
        f << artifact.dump(2) << "\n";
    }
    print_result(out.result, std::cout);
    if (!c.quiet) {
        std::cout << "independent check: " << out.stats["independent_check"]["verdict"].get<std::string>();
        auto reason = out.stats["independent_check"]["reason"].get<std::string>();
        std::cout << (reason.empty() ? "" : " (" + reason + ")") << "\n";
        std::cout << "rule applications: " << out.stats["rule_applications"] << ", time "
                  << out.stats["seconds"].get<double>() << " s\n";
    }
    return exit_code(out.result);
}

Frame load_invariant(const std::string& path, const HybridAutomaton& ha)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open invariant file '" + path + "'");
    json j = json::parse(in);
    if (j.contains("invariant"))
        j = j["invariant"];
    Frame R;
    for (const auto& l : ha.locations) {
        if (!j.contains(l.id))
            throw ValidationError("invariant file has no entry for location " + l.id);
        R[l.id] = parse_formula(j[l.id].get<std::string>());
        check_declared(R[l.id], ha.var_names(), 0);
    }
    return R;
}

int cmd_check_invariant(const Config& c, const std::string& inv_path)
{
    HybridAutomaton ha = load(c);
    Frame R = load_invariant(inv_path, ha);
    SmtSolver solver(c.solver_cmd.empty() ? default_solver_command() : c.solver_cmd, c.timeout_ms);
    Discharger d(solver, ha.vars, c.sim, c.r);
    auto check = validate_invariant(ha, *ha.safe, R, d);
    std::cout << to_string(check.verdict) << (check.reason.empty() ? "" : ": " + check.reason) << "\n";
    switch (check.verdict) {
    case Verdict::Holds: return kExitValid;
    case Verdict::Fails: return kExitFailedCheck;
    case Verdict::Inconclusive: return kExitInconclusive;
    }
    return kExitInconclusive;
}

int cmd_replay(Config c, const std::string& log_path)
{
    std::ifstream in(log_path);
    if (!in)
        throw std::runtime_error("cannot open session log '" + log_path + "'");
    std::vector<json> recorded;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        json j = json::parse(line);
        if (j.contains("config")) {
            const auto& cfg = j["config"];
            c.safe = cfg.value("safe", c.safe);
            c.init_formula = cfg.value("init_formula", c.init_formula);
            c.init_location = cfg.value("init_location", c.init_location);
            c.mode = cfg.value("mode", c.mode);
            c.sim.h = cfg.value("h", c.sim.h);
            c.sim.horizon = cfg.value("T", c.sim.horizon);
            c.sim.eps_eval = cfg.value("eps_eval", c.sim.eps_eval);
            c.r = cfg.value("r", c.r);
            c.max_frames = cfg.value("max_frames", c.max_frames);
            c.max_steps = cfg.value("max_steps", c.max_steps);
            continue;
        }
        recorded.push_back(std::move(j));
    }
    if (recorded.empty()) {
        std::cerr << "error: session log has no steps\n";
        return kExitUsage;
    }
    HybridAutomaton ha = load(c);
    HintScript script = answers_from_log(recorded);
    c.serve.clear();
    c.interactive = false;
    auto out = run_engine(c, ha, &script, false, nullptr);
    auto cmp = compare_logs(recorded, out.log, out.result);
    print_result(out.result, std::cout);
    if (cmp.identical) {
        std::cout << "replay identical (" << recorded.size() << " steps)\n";
        return kExitValid;
    }
    std::cout << "DivergenceAt(" << *cmp.divergence_step << "): " << cmp.detail << "\n";
    return kExitFailedCheck;
}

Valuation parse_point(const std::string& text, const HybridAutomaton& ha)
{
    Valuation v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("point entries look like x=1.5");
        std::string name = item.substr(0, eq);
        name.erase(0, name.find_first_not_of(' '));
        name.erase(name.find_last_not_of(' ') + 1);
        if (!ha.var_names().count(name))
            throw std::invalid_argument("unknown variable '" + name + "'");
        v.set(Var(name), std::stod(item.substr(eq + 1)));
    }
    for (const auto& x : ha.vars)
        if (!v.contains(x))
            throw std::invalid_argument("point lacks a value for " + x.name);
    return v;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Safety model checker for hybrid automata"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);
    Config c;

    auto* verify = app.add_subcommand("verify", "Run the model checker");
    add_model_options(verify, c);
    add_engine_options(verify, c);

    std::string inv_path;
    auto* check = app.add_subcommand("check-invariant", "Check a per-location inductive invariant");
    add_model_options(check, c);
    check->add_option("invariant", inv_path, "JSON object mapping locations to formulas")->required();

    std::string log_path;
    auto* replay = app.add_subcommand("replay", "Re-run a session log with its recorded answers");
    add_model_options(replay, c);
    replay->add_option("session_log", log_path, "Session log (JSONL)")->required();

    std::string location, from, direction = "forward";
    auto* sim = app.add_subcommand("simulate", "Print an RK4 trajectory as t,x1,...,xn lines");
    add_model_options(sim, c);
    sim->add_option("--location", location, "Location whose flow is used")->required();
    sim->add_option("--from", from, "Start point, e.g. x=1,y=0")->required();
    sim->add_option("--direction", direction)->check(CLI::IsMember({"forward", "backward"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*verify)
            return cmd_verify(c);
        if (*check)
            return cmd_check_invariant(c, inv_path);
        if (*replay)
            return cmd_replay(c, log_path);
        if (*sim) {
            HybridAutomaton ha = load_model(c.model);
            ha.validate();
            auto traj = simulate_ode(ha.flow(location), ha.vars, parse_point(from, ha), c.sim,
                                     direction == "forward" ? Direction::Forward : Direction::Backward);
            std::cout << traj.dump();
            return 0;
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const SolverError& e) {
        std::cerr << "error: solver: " << e.what() << "\n";
        return kExitAborted;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
