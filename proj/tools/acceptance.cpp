// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

#include "hypdr/engine.hpp"
#include "hypdr/ode.hpp"
#include "hypdr/parser.hpp"

using namespace hypdr;

namespace {

// Pinned tolerances.
constexpr double kRunEps = 1e-2;           // check_run on returned traces
constexpr double kCase2Lo = 1.9, kCase2Hi = 2.1;
constexpr double kCase3Bound = 0.708;
constexpr double kWitnessRelTol = 1e-3;    // Sat witness forward replay
constexpr double kRoundTripTol = 1e-6;     // RK4 forward/backward
constexpr int kRoundTripSteps = 10000;
constexpr std::size_t kProbeTrajectories = 1000;
constexpr std::size_t kMinRuleApplications = 200;
constexpr int kJumpSteps = 200, kHybridSteps = 150, kFlowSteps = 150;

std::string fixture(const std::string& name) { return std::string(HYPDR_FIXTURE_DIR) + "/" + name; }

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail)
{
    if (!pass)
        ++failures;
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Witness {
    Ode ode;
    std::vector<Var> vars;
    Valuation start;
    double duration;
    Valuation target;
};

struct UnsatItem {
    std::vector<Var> vars;
    CrpObligation obligation;
    std::string method;
};

std::vector<Witness> witnesses;
std::map<std::string, UnsatItem> unsat_items;
std::size_t total_rules = 0;
std::vector<std::string> all_violations;

void collect_unsat(const Discharger& d)
{
    for (const auto& rec : d.unsat_log()) {
        const auto& o = rec.obligation;
        std::string key = o.pre.to_string() + "|" + o.ode.to_string() + "|" + o.stay.to_string() + "|" +
                          o.target.to_string();
        unsat_items.emplace(key, UnsatItem{d.vars(), o, rec.method});
    }
}

/// One instrumented engine run.
struct Case {
    HybridAutomaton ha;
    Formula safe;
    SmtSolver solver;
    Discharger d;
    GeneralizationValidator validator;
    GeneralizationChain chain;
    HintScript script;
    std::unique_ptr<Engine> engine;
    VerificationResult result;
    double seconds = 0;

    Case(const std::string& model, const std::string& init, const std::string& safe_text,
         std::optional<std::string> hints_file = std::nullopt)
        : ha(load_model(fixture(model))), safe(parse_formula(safe_text)), d(solver, ha.vars, SimParams{}, 1e-3),
          validator(ha, d), chain(ha, safe, validator)
    {
        ha.init = parse_formula(init);
        if (hints_file) {
            script = HintScript::load(fixture(*hints_file));
            chain.set_script(&script);
            chain.set_heuristics(false);
        }
        EngineOptions o;
        o.check_consistency = true;
        engine = std::make_unique<Engine>(ha, safe, d, chain, o);
        engine->observer = [this](const RuleApplication& app, const Configuration& cfg) {
            if (engine->discrete() || cfg.trace.size() < 2)
                return;
            if (app.rule != Rule::Decide && app.rule != Rule::DecideCont)
                return;
            const auto& e = cfg.trace[0];
            const auto& next = cfg.trace[1];
            Valuation target = next.sigma;
            if (app.rule == Rule::Decide)
                target = invert_command(ha.transitions[*e.transition].cmd, next.sigma);
            witnesses.push_back({ha.flow(e.q), ha.vars, e.sigma, e.duration, target});
        };
        auto t0 = std::chrono::steady_clock::now();
        result = engine->run();
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        total_rules += engine->stats().rule_applications;
        for (const auto& v : engine->stats().violations)
            all_violations.push_back(model + ": " + v);
        collect_unsat(d);
    }

    bool implies_everywhere(const Formula& bound)
    {
        for (const auto& [q, f] : result.invariant)
            if (!solver.implies(f, bound))
                return false;
        return true;
    }
};

std::string summary(const Case& c)
{
    std::string s = std::string(to_string(c.result.status));
    if (c.result.aborted())
        s += " (" + std::string(to_string(c.result.abort)) + ": " + c.result.reason + ")";
    return s + ", " + std::to_string(c.engine->stats().rule_applications) + " rules, " + fmt(c.seconds) + " s";
}

void origin_init()
{
    Case c("circle.hha", "x = 0 & y = 0", "x <= 1", "hints/circle_origin.hints");
    bool ok = c.result.valid() && c.seconds < 60;
    std::string detail = summary(c);
    if (c.result.valid()) {
        auto check = validate_invariant(c.ha, c.safe, c.result.invariant, c.d);
        ok = ok && check.verdict == Verdict::Holds && c.implies_everywhere(parse_formula("x <= 1"));
        detail += ", check-invariant " + std::string(to_string(check.verdict)) + ", invariant " +
                  to_string(c.result.invariant);
    }
    report(ok, "circle, origin init, scripted: Valid < 60 s", detail);
}

void wide_init()
{
    Case c("circle.hha", "x <= 0.5", "x <= 1");
    bool ok = c.result.model() && c.seconds < 60;
    std::string detail = summary(c);
    if (c.result.model()) {
        double x = c.result.trace.back().valuation.at(Var("x"));
        bool replay = check_run(c.ha, c.result.trace, kRunEps);
        ok = ok && replay && x > 1 && x >= kCase2Lo && x <= kCase2Hi;
        detail += ", check_run(eps=" + fmt(kRunEps) + ") " + (replay ? "ok" : "failed") + ", final x " + fmt(x);
    }
    report(ok, "circle, init x <= 1/2: Model, final x in [1.9, 2.1] < 60 s", detail);
}

void box_init()
{
    Case c("circle.hha", "0 <= x & x <= 0.5 & 0 <= y & y <= 0.5", "x <= 1", "hints/circle_box.hints");
    bool ok = c.result.valid() && c.seconds < 120;
    std::string detail = summary(c);
    if (c.result.valid()) {
        auto check = validate_invariant(c.ha, c.safe, c.result.invariant, c.d);
        bool bound = c.implies_everywhere(parse_formula("x <= " + fmt(kCase3Bound)));
        ok = ok && check.verdict == Verdict::Holds && bound;
        detail += ", check-invariant " + std::string(to_string(check.verdict)) + ", x <= " + fmt(kCase3Bound) +
                  (bound ? " everywhere" : " violated");
    }
    report(ok, "circle, box init, scripted: Valid, x <= 0.708 < 120 s", detail);
}

void discrete()
{
    Case v("sum.hha", "x >= 0 & sum = 0", "sum >= 0");
    bool ok_v = v.result.valid() && v.seconds < 10;
    std::string dv = summary(v);
    if (v.result.valid()) {
        auto check = validate_invariant(v.ha, v.safe, v.result.invariant, v.d);
        ok_v = ok_v && check.verdict == Verdict::Holds;
        dv += ", independent check " + std::string(to_string(check.verdict));
    }
    Case m("sum.hha", "x = 3 & sum = 0", "sum <= 5");
    bool ok_m = m.result.model() && m.seconds < 10;
    std::string dm = summary(m);
    if (m.result.model()) {
        double s = m.result.trace.back().valuation.at(Var("sum"));
        auto check = validate_result(m.ha, m.safe, m.result, m.d);
        ok_m = ok_m && s == 6.0 && check.verdict == Verdict::Holds;
        dm += ", final sum " + fmt(s);
    }
    report(ok_v && ok_m, "discrete sum: Valid for sum >= 0, Model ending at sum = 6, < 10 s each",
           "[" + dv + "] [" + dm + "]");
}

void extra_fixture_runs()
{
    Case a("circle.hha", "x = 0 & y = 0", "x <= 1");
    Case b("ramp.hha", "x = 0 & v = 0", "x <= 5");
    Case c("ramp.hha", "x = 0 & v = 0 | x <= -1 & v = 0", "v >= 0");
    Case d("sum.hha", "x = 6 & sum = 0", "sum <= 20");
    Case e("sum.hha", "x >= 0 & x <= 2 & sum = 0", "sum <= 3");
    Case f("sum.hha", "x = 10 & sum = 0", "sum <= 40");
    Case g("circle.hha", "x = 0.5 & y = 0", "x <= 1");
    (void)a, (void)b, (void)c, (void)d, (void)e, (void)f, (void)g;
}

void consistency()
{
    bool ok = all_violations.empty() && total_rules >= kMinRuleApplications;
    std::string detail = std::to_string(total_rules) + " rule applications checked, " +
                         std::to_string(all_violations.size()) + " violations";
    if (!all_violations.empty())
        detail += "; first: " + all_violations.front();
    report(ok, "consistency after every rule application, >= 200 applications, 0 violations", detail);
}

// ---------------------------------------------------------------- transformers

Formula point(const Valuation& s)
{
    std::vector<Formula> eqs;
    for (const auto& [v, c] : s.values())
        eqs.push_back(Formula::atom(Term::var(v), CmpOp::Eq, Term::constant(c)));
    return Formula::conjunction(eqs);
}

Formula random_box(std::mt19937& rng, const std::vector<Var>& vars)
{
    std::uniform_int_distribution<int> lo(-8, 6), w(1, 8);
    std::vector<Formula> parts;
    for (const auto& v : vars) {
        double a = lo(rng) / 4.0, b = a + w(rng) / 4.0;
        parts.push_back(Formula::atom(Term::var(v), CmpOp::Ge, Term::constant(a)));
        parts.push_back(Formula::atom(Term::var(v), CmpOp::Le, Term::constant(b)));
    }
    return Formula::conjunction(parts);
}

Valuation grid_point(std::mt19937& rng, const std::vector<Var>& vars)
{
    std::uniform_int_distribution<int> g(-12, 12);
    Valuation s;
    for (const auto& v : vars)
        s.set(v, g(rng) / 4.0);
    return s;
}

void transformers()
{
    std::mt19937 rng(2024);
    int checked = 0, failed = 0;
    std::string first_failure;
    auto fail = [&](const std::string& what) {
        ++failed;
        if (first_failure.empty())
            first_failure = what;
    };

    // F: one jump of the discrete model.
    {
        auto ha = load_model(fixture("sum.hha"));
        SmtSolver solver;
        for (int n = 0; n < kJumpSteps;) {
            Frame R;
            for (const auto& loc : ha.locations)
                R[loc.id] = random_box(rng, ha.vars) || random_box(rng, ha.vars);
            const auto& t = ha.transitions[static_cast<std::size_t>(n) % ha.transitions.size()];
            auto s = grid_point(rng, ha.vars);
            if (!(R.at(t.from) && t.guard).evaluate(s))
                continue;
            auto post = apply_command(t.cmd, s);
            // VC with witness: R(from)[x''] ∧ guard[x''] ∧ φc[x''/x, x/x'] at x'' = s, x = post.
            auto vc = predtrans_discrete(ha, R, t.to);
            std::map<Var, Term> subst;
            for (const auto& v : vc.free_vars())
                if (v.instance != 0)
                    subst[v] = Term::constant(s.at(Var(v.name)));
            auto ground = vc.substitute(subst) && point(post);
            ++n;
            ++checked;
            if (!solver.check(ground).sat())
                fail("F jump " + s.to_string() + " -> " + post.to_string());
        }
    }

    // F_H and F_C on the circle: a simulated flow, then a jump for F_H.
    auto ha = load_model(fixture("circle.hha"));
    SmtSolver solver;
    auto substitute_copy = [](const CrpQuery& c, const Formula& f, const Valuation& at) {
        std::map<Var, Term> m;
        for (const auto& v : c.copy)
            m[v] = Term::constant(at.at(Var(v.name)));
        return f.substitute(m);
    };
    std::uniform_int_distribution<int> steps(0, 3000);
    VectorField f0(ha.flow("q0"), ha.vars), f1(ha.flow("q1"), ha.vars);
    auto flow_to_jump = [&](const LocationId& q, const Valuation& s, const Formula& stop,
                            std::optional<Valuation>& hit) {
        const VectorField& f = q == "q0" ? f0 : f1;
        SimParams p;
        p.horizon = steps(rng) + 1;
        std::optional<Valuation> last;
        simulate(f, s, p, Direction::Forward, [&](int i, std::span<const double> x) {
            auto v = f.to_valuation(x);
            if (i > 0 && !ha.stay(q).evaluate(v))
                return false;
            last = v;
            if (stop.evaluate(v)) {
                hit = v;
                return false;
            }
            return true;
        });
        if (!hit && stop.is_true())
            hit = last;
    };

    for (int n = 0, tries = 0; n < kHybridSteps && tries < 100000; ++tries) {
        const auto& t = ha.transitions[static_cast<std::size_t>(tries) % 2];
        Frame R = constant_frame(ha, Formula::bottom());
        R[t.from] = random_box(rng, ha.vars);
        auto s = grid_point(rng, ha.vars);
        if (!R.at(t.from).evaluate(s))
            continue;
        std::optional<Valuation> xi;
        flow_to_jump(t.from, s, t.guard, xi);
        if (!xi)
            continue;
        auto post = apply_command(t.cmd, *xi);
        auto img = predtrans_hybrid(ha, R, t.to);
        const CrpQuery* crp = nullptr;
        for (const auto& c : img.crps)
            if (c.transition && &ha.transitions[*c.transition] == &t)
                crp = &c;
        ++n;
        ++checked;
        if (!crp) {
            fail("F_H: no disjunct for " + t.from + " -> " + t.to);
            continue;
        }
        bool pre_ok = solver.check(substitute_copy(*crp, crp->pre, s)).sat();
        bool jump_ok = solver.check(substitute_copy(*crp, crp->target, *xi) && point(post)).sat();
        if (!pre_ok || !jump_ok)
            fail("F_H " + s.to_string() + " -> " + post.to_string());
    }

    for (int n = 0, tries = 0; n < kFlowSteps && tries < 100000; ++tries) {
        const LocationId q = tries % 2 ? "q1" : "q0";
        Frame R = constant_frame(ha, Formula::bottom());
        R[q] = random_box(rng, ha.vars);
        auto s = grid_point(rng, ha.vars);
        if (!R.at(q).evaluate(s))
            continue;
        std::optional<Valuation> end;
        flow_to_jump(q, s, Formula::top(), end);
        if (!end)
            continue;
        auto crp = predtrans_cont(ha, R, q);
        ++n;
        ++checked;
        bool pre_ok = solver.check(substitute_copy(crp, crp.pre, s)).sat();
        bool end_ok = solver.check(substitute_copy(crp, crp.target, *end) && point(*end)).sat();
        if (!pre_ok || !end_ok)
            fail("F_C " + s.to_string() + " -> " + end->to_string());
    }

    report(failed == 0 && checked >= kJumpSteps + kHybridSteps + kFlowSteps,
           "transformer soundness over 500 randomized single steps",
           std::to_string(checked) + " steps (" + std::to_string(kJumpSteps) + " F, " + std::to_string(kHybridSteps) +
               " F_H, " + std::to_string(kFlowSteps) + " F_C), " + std::to_string(failed) + " failures" +
               (first_failure.empty() ? "" : "; first: " + first_failure));
}

// ---------------------------------------------------------------- discharge

void direct_point_queries()
{
    auto ha = load_model(fixture("circle.hha"));
    SmtSolver solver;
    Discharger d(solver, ha.vars, SimParams{}, 1e-3);
    const char* pres[] = {"y <= 0", "x <= 0.5", "x >= 0 & y >= 0", "x * x + y * y <= 0.25", "x = 0"};
    const char* stays[] = {"true", "y >= 0", "y <= 0"};
    std::mt19937 rng(7);
    for (int k = 0; k < 40; ++k) {
        auto pre = parse_formula(pres[k % 5]);
        auto stay = parse_formula(stays[(k / 5) % 3]);
        auto target = grid_point(rng, ha.vars);
        auto r = d.sat_point(pre, ha.flow("q0"), stay, target);
        if (r.sat())
            witnesses.push_back({ha.flow("q0"), ha.vars, r.witness, r.duration, target});
    }
    collect_unsat(d);
}

void discharge_round_trip()
{
    direct_point_queries();
    const double h = SimParams{}.h;
    double worst = 0;
    std::size_t bad = 0;
    for (const auto& w : witnesses) {
        VectorField f(w.ode, w.vars);
        auto x = f.to_state(w.start);
        auto full = static_cast<long>(std::floor(w.duration / h + 1e-9));
        for (long i = 0; i < full; ++i)
            rk4_step(f, x, h);
        double rest = w.duration - static_cast<double>(full) * h;
        if (rest > 1e-15)
            rk4_step(f, x, rest);
        auto tgt = f.to_state(w.target);
        double err = 0, scale = 1;
        for (std::size_t i = 0; i < x.size(); ++i) {
            err = std::max(err, std::fabs(x[i] - tgt[i]));
            scale = std::max(scale, std::fabs(tgt[i]));
        }
        worst = std::max(worst, err / scale);
        if (err / scale > kWitnessRelTol)
            ++bad;
    }

    auto ha = load_model(fixture("circle.hha"));
    VectorField f(ha.flow("q0"), ha.vars);
    std::vector<double> x{1.0, 0.0};
    for (int i = 0; i < kRoundTripSteps; ++i)
        rk4_step(f, x, h);
    for (int i = 0; i < kRoundTripSteps; ++i)
        rk4_step(f, x, -h);
    double rt = std::max(std::fabs(x[0] - 1.0), std::fabs(x[1]));

    report(!witnesses.empty() && bad == 0 && rt < kRoundTripTol,
           "Sat witnesses replay within rel 1e-3; RK4 round trip < 1e-6 over 1e4 steps",
           std::to_string(witnesses.size()) + " witnesses, worst rel error " + fmt(worst) + ", " +
               std::to_string(bad) + " over tolerance; round-trip error " + fmt(rt));
}

void probe_unsat()
{
    std::vector<const std::pair<const std::string, UnsatItem>*> items;
    for (const auto& kv : unsat_items)
        items.push_back(&kv);
    std::vector<ProbeResult> results(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        SmtSolver solver;
        for (std::size_t k; (k = next++) < items.size();) {
            std::mt19937 rng(static_cast<unsigned>(99 + k));
            const auto& item = items[k]->second;
            results[k] = probe_obligation(solver, item.vars, item.obligation, kProbeTrajectories, SimParams{}, rng);
        }
    };
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> pool;
    unsigned threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    for (unsigned i = 0; i < threads; ++i)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::size_t with_ce = 0, no_starts = 0, trajectories = 0;
    std::string first;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& r = results[k];
        trajectories += r.trajectories;
        if (r.start_points == 0)
            ++no_starts;
        if (r.counterexample) {
            ++with_ce;
            if (first.empty())
                first = items[k]->first + " via " + items[k]->second.method + " at " + r.counterexample->to_string();
        }
    }
    report(!unsat_items.empty() && with_ce == 0, "1000-trajectory probe finds no counterexample for any Unsat verdict",
           std::to_string(unsat_items.size()) + " distinct Unsat obligations (" + std::to_string(no_starts) +
               " with empty pre), " + std::to_string(trajectories) + " trajectories, " + std::to_string(with_ce) +
               " counterexamples, " + fmt(secs) + " s" + (first.empty() ? "" : "; first: " + first));
}

}  // namespace

int main()
{
    try {
        origin_init();
        wide_init();
        box_init();
        discrete();
        extra_fixture_runs();
        consistency();
        transformers();
        discharge_round_trip();
        probe_unsat();
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance suite aborted: " << e.what() << std::endl;
        return 1 + failures;
    }
    return failures;
}
