#include "hypdr/discharge.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace hypdr {

namespace {

bool is_zero_field(const Ode& ode)
{
    for (const auto& [v, p] : ode.field())
        if (!p.is_zero())
            return false;
    return true;
}

Formula euler_step(const Formula& phi, const Ode& ode, const Var& dt)
{
    std::map<Var, Term> m;
    for (const auto& [v, rhs] : ode.rhs)
        m[v] = Term::var(v) + rhs * Term::var(dt);
    return phi.substitute(m);
}

void enumerate_exponents(std::size_t n, int max_degree, std::vector<int>& cur, std::size_t pos, int used,
                         std::vector<std::vector<int>>& out)
{
    if (pos == n) {
        if (used > 0)
            out.push_back(cur);
        return;
    }
    for (int e = 0; used + e <= max_degree; ++e) {
        cur[pos] = e;
        enumerate_exponents(n, max_degree, cur, pos + 1, used + e, out);
    }
    cur[pos] = 0;
}

Polynomial monomial(const std::vector<Var>& vars, const std::vector<int>& exps)
{
    Polynomial p = Polynomial::constant(1.0);
    for (std::size_t i = 0; i < vars.size(); ++i)
        for (int k = 0; k < exps[i]; ++k)
            p = p * Polynomial::variable(vars[i]);
    return p;
}

}  // namespace

std::vector<Polynomial> polynomial_first_integrals(const Ode& ode, const std::vector<Var>& vars, int max_degree)
{
    auto field = ode.field();
    if (is_zero_field(ode)) {
        std::vector<Polynomial> out;
        for (const auto& v : vars)
            out.push_back(Polynomial::variable(v));
        return out;
    }
    std::vector<std::vector<int>> exps;
    std::vector<int> cur(vars.size(), 0);
    enumerate_exponents(vars.size(), max_degree, cur, 0, 0, exps);

    std::vector<Polynomial> basis, images;
    std::map<Polynomial::Monomial, int> rows;
    for (const auto& e : exps) {
        basis.push_back(monomial(vars, e));
        images.push_back(basis.back().lie_derivative(field));
        for (const auto& [m, c] : images.back().terms())
            rows.emplace(m, static_cast<int>(rows.size()));
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(basis.size()));
    for (std::size_t j = 0; j < images.size(); ++j)
        for (const auto& [m, c] : images[j].terms())
            A(rows.at(m), static_cast<Eigen::Index>(j)) = c;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    if (lu.dimensionOfKernel() == 0)
        return {};
    // Reduced echelon form of the kernel basis gives small integer-like coefficients.
    Eigen::MatrixXd K = lu.kernel().transpose();
    Eigen::Index r = 0;
    for (Eigen::Index c = K.cols() - 1; c >= 0 && r < K.rows(); --c) {
        Eigen::Index piv;
        if (K.col(c).segment(r, K.rows() - r).cwiseAbs().maxCoeff(&piv) < 1e-10)
            continue;
        K.row(r).swap(K.row(r + piv));
        K.row(r) /= K(r, c);
        for (Eigen::Index i = 0; i < K.rows(); ++i)
            if (i != r)
                K.row(i) -= K(i, c) * K.row(r);
        ++r;
    }
    std::vector<Polynomial> out;
    for (Eigen::Index k = 0; k < K.rows(); ++k) {
        double scale = K.row(k).cwiseAbs().maxCoeff();
        if (scale < 1e-10)
            continue;
        Polynomial p;
        for (std::size_t j = 0; j < basis.size(); ++j) {
            double c = std::round(K(k, static_cast<Eigen::Index>(j)) / scale * 1e9) / 1e9;
            if (c != 0.0)
                p = p + c * basis[j];
        }
        if (!p.is_constant() && p.lie_derivative(field).is_zero())
            out.push_back(std::move(p));
    }
    return out;
}

RefuteOutcome query_unsat_invariance(SmtSolver& solver, const Formula& pre, const Ode& ode, const Formula& stay,
                                     const Formula& target, double r)
{
    auto overlap = solver.check(pre && target);
    if (!overlap.unsat())
        return {false, overlap.sat() ? "pre and target overlap" : "solver unknown on pre and target"};
    Var dt("dt", 0, kScratchInstance);
    Formula bound = Formula::atom(Term::constant(0), CmpOp::Lt, Term::var(dt)) &&
                    Formula::atom(Term::var(dt), CmpOp::Lt, Term::constant(r));
    if (solver.check(Formula::conjunction({bound, pre, stay, !euler_step(pre, ode, dt)})).unsat())
        return {true, "pre is invariant"};
    if (solver.check(Formula::conjunction({bound, !target, stay, euler_step(target, ode, dt)})).unsat())
        return {true, "complement of target is invariant"};
    return {false, "no invariance certificate"};
}

RefuteOutcome query_unsat_first_integral(SmtSolver& solver, const std::vector<Var>& vars, const Formula& pre,
                                         const Ode& ode, const Formula& stay, const Formula& target)
{
    auto overlap = solver.check(pre && target);
    if (!overlap.unsat())
        return {false, overlap.sat() ? "pre and target overlap" : "solver unknown on pre and target"};
    auto integrals = polynomial_first_integrals(ode, vars);
    if (integrals.empty())
        return {false, "no polynomial first integral"};
    auto copy = to_copy(vars, kScratchInstance);
    std::vector<Formula> parts{pre.substitute(copy), stay, target};
    for (const auto& p : integrals) {
        Term t = p.to_term();
        parts.push_back(Formula::atom(t, CmpOp::Eq, t.substitute(copy)));
    }
    if (solver.check(Formula::conjunction(std::move(parts))).unsat())
        return {true, "level sets of first integrals"};
    return {false, "level-set check inconclusive"};
}

Discharger::Discharger(SmtSolver& solver, std::vector<Var> vars, SimParams params, double r)
    : solver_(solver), vars_(std::move(vars)), params_(params), r_(r)
{
}

PointQueryResult Discharger::sat_point(const Formula& pre, const Ode& ode, const Formula& stay, const Valuation& target)
{
    PointQueryResult res;
    last_ = Trajectory{vars_, params_.h, Direction::Backward, {}};
    const double eps = params_.eps_eval;
    if (solver_.check(pre).unsat()) {
        res.status = PointQueryResult::Status::Unreached;
        res.reason = "pre is empty";
        return res;
    }
    VectorField f(ode, vars_);
    if (is_zero_field(ode)) {
        last_.samples.push_back(f.to_state(target));
        res.samples = 1;
        if (pre.evaluate(target, eps)) {
            res.status = PointQueryResult::Status::Sat;
            res.witness = target;
        } else {
            res.status = PointQueryResult::Status::Unreached;
            res.reason = "stationary flow and the target is outside pre";
        }
        return res;
    }
    std::vector<double> prev;
    bool decided = false;
    try {
        simulate(f, target, params_, Direction::Backward, [&](int i, std::span<const double> x) {
            last_.samples.emplace_back(x.begin(), x.end());
            Valuation s = f.to_valuation(x);
            if (pre.evaluate(s, eps)) {
                res.status = PointQueryResult::Status::Sat;
                res.witness = s;
                res.duration = i * params_.h;
                decided = true;
                return false;
            }
            if (!stay.evaluate(s, eps)) {
                res.status = PointQueryResult::Status::Unreached;
                res.reason = "backward flow leaves the stay condition after " + std::to_string(i) + " steps";
                decided = true;
                if (i > 0) {
                    // Locate the stay boundary inside the last step; it may touch pre.
                    double lo = 0.0, hi = params_.h;
                    for (int k = 0; k < 60; ++k) {
                        double mid = 0.5 * (lo + hi);
                        std::vector<double> p = prev;
                        rk4_step(f, p, -mid);
                        (stay.evaluate(f.to_valuation(p), eps) ? lo : hi) = mid;
                    }
                    std::vector<double> p = prev;
                    rk4_step(f, p, -lo);
                    Valuation b = f.to_valuation(p);
                    if (lo > 0.0 && pre.evaluate(b, eps)) {
                        res.status = PointQueryResult::Status::Sat;
                        res.witness = b;
                        res.duration = (i - 1) * params_.h + lo;
                        last_.samples.back() = p;
                    }
                }
                return false;
            }
            prev.assign(x.begin(), x.end());
            return true;
        });
    } catch (const SimulationDiverged& e) {
        res.status = PointQueryResult::Status::Inconclusive;
        res.reason = e.what();
        res.samples = last_.samples.size();
        return res;
    }
    res.samples = last_.samples.size();
    if (!decided) {
        res.status = PointQueryResult::Status::Inconclusive;
        res.reason = "horizon exhausted without meeting pre or the stay boundary";
    }
    return res;
}

PointQueryResult Discharger::sat_jump(const Formula& pre, const Ode& ode, const Formula& stay, const Formula& guard,
                                      const Command& cmd, const Valuation& target)
{
    Valuation jump_point = invert_command(cmd, target);
    if (!guard.evaluate(jump_point, params_.eps_eval)) {
        PointQueryResult res;
        res.status = PointQueryResult::Status::Unreached;
        res.reason = "pre-jump point violates the guard";
        last_ = Trajectory{vars_, params_.h, Direction::Backward, {}};
        return res;
    }
    return sat_point(pre, ode, stay, jump_point);
}

RefuteOutcome Discharger::refute(const CrpObligation& ob)
{
    RefuteOutcome out;
    if (is_zero_field(ob.ode)) {
        auto r = solver_.check(ob.pre && ob.target);
        out = r.unsat() ? RefuteOutcome{true, "stationary"} : RefuteOutcome{false, r.sat() ? "satisfiable" : "solver unknown"};
    } else {
        out = query_unsat_invariance(solver_, ob.pre, ob.ode, ob.stay, ob.target, r_);
        if (!out.unsat && out.method != "pre and target overlap" &&
            solver_.check(ob.stay && ob.target).unsat())
            out = {true, "target lies outside the stay condition"};
        if (!out.unsat && out.method != "pre and target overlap") {
            std::string key = ob.ode.to_string();
            if (!integrals_.count(key))
                integrals_[key] = polynomial_first_integrals(ob.ode, vars_);
            if (!integrals_[key].empty()) {
                auto fi = query_unsat_first_integral(solver_, vars_, ob.pre, ob.ode, ob.stay, ob.target);
                if (fi.unsat)
                    out = fi;
            }
        }
    }
    if (out.unsat)
        unsat_log_.push_back({ob, out.method});
    return out;
}

ProbeResult probe_obligation(SmtSolver& solver, const std::vector<Var>& vars, const CrpObligation& ob,
                             std::size_t trajectories, const SimParams& params, std::mt19937& rng)
{
    ProbeResult res;
    std::vector<Valuation> starts;
    std::uniform_real_distribution<double> centre(-2.5, 2.5);
    std::uniform_int_distribution<int> width_pick(0, 2);
    const double widths[] = {0.05, 0.5, 3.0};
    for (int k = 0; k < 24; ++k) {
        std::vector<Formula> box{ob.pre};
        double w = widths[width_pick(rng)];
        for (const auto& v : vars) {
            double c = centre(rng);
            box.push_back(Formula::atom(Term::constant(c - w), CmpOp::Le, Term::var(v)));
            box.push_back(Formula::atom(Term::var(v), CmpOp::Le, Term::constant(c + w)));
        }
        auto r = solver.check(Formula::conjunction(std::move(box)), std::set<Var>(vars.begin(), vars.end()));
        if (r.sat()) {
            Valuation s;
            for (const auto& v : vars)
                s.set(v, r.model.at(v));
            if (ob.pre.evaluate(s, params.eps_eval))
                starts.push_back(s);
        }
    }
    std::uniform_real_distribution<double> anywhere(-3.0, 3.0);
    for (int k = 0; k < 4000 && starts.size() < 400; ++k) {
        Valuation s;
        for (const auto& v : vars)
            s.set(v, anywhere(rng));
        if (ob.pre.evaluate(s))
            starts.push_back(s);
    }
    if (auto any = solver.check(ob.pre, std::set<Var>(vars.begin(), vars.end())); any.sat()) {
        Valuation s;
        for (const auto& v : vars)
            s.set(v, any.model.at(v));
        starts.push_back(s);
    }
    res.start_points = starts.size();
    if (starts.empty())
        return res;
    VectorField f(ob.ode, vars);
    std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
    std::uniform_int_distribution<int> length(1, std::max(1, params.horizon));
    for (std::size_t n = 0; n < trajectories && !res.counterexample; ++n) {
        SimParams p = params;
        p.horizon = length(rng);
        const Valuation& start = starts[pick(rng)];
        ++res.trajectories;
        try {
            simulate(f, start, p, Direction::Forward, [&](int i, std::span<const double> x) {
                Valuation s = f.to_valuation(x);
                if (i > 0 && !ob.stay.evaluate(s, params.eps_eval))
                    return false;
                if (ob.target.evaluate(s)) {
                    res.counterexample = s;
                    return false;
                }
                return true;
            });
        } catch (const SimulationDiverged&) {
        }
    }
    return res;
}

}  // namespace hypdr
