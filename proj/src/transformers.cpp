#include "hypdr/transformers.hpp"

#include <atomic>

namespace hypdr {

Frame constant_frame(const HybridAutomaton& ha, const Formula& phi)
{
    Frame f;
    for (const auto& l : ha.locations)
        f[l.id] = phi;
    return f;
}

Frame initial_frame(const HybridAutomaton& ha)
{
    Frame f = constant_frame(ha, Formula::bottom());
    f[ha.initial_location] = ha.init;
    return f;
}

Frame conjoin(const Frame& a, const Frame& b)
{
    Frame out = a;
    for (const auto& [q, phi] : b)
        out[q] = out.count(q) ? (out[q] && phi) : phi;
    return out;
}

std::string to_string(const Frame& frame)
{
    std::string s;
    for (const auto& [q, phi] : frame) {
        if (!s.empty())
            s += "; ";
        s += q + " -> " + phi.to_string();
    }
    return s;
}

int fresh_instance()
{
    static std::atomic<int> next{1};
    return next++;
}

std::vector<Var> fresh_copy(const std::vector<Var>& vars, int instance)
{
    std::vector<Var> out;
    for (const auto& v : vars)
        out.emplace_back(v.name, 2, instance);
    return out;
}

std::map<Var, Term> to_copy(const std::vector<Var>& vars, int instance)
{
    std::map<Var, Term> m;
    for (const auto& v : vars)
        m[v] = Term::var(Var(v.name, 2, instance));
    return m;
}

namespace {

Ode rename_ode(const Ode& ode, const std::map<Var, Term>& m)
{
    Ode out;
    for (const auto& [v, t] : ode.rhs)
        out.rhs[Var(v.name, 2, m.at(v).variable().instance)] = t.substitute(m);
    return out;
}

// φc[x/x′, x″/x]: post-state on x, pre-state on the copy.
Formula command_on_copy(const HybridAutomaton& ha, const Command& cmd, const std::map<Var, Term>& copy)
{
    std::map<Var, Term> m = copy;
    for (const auto& v : ha.vars)
        m[v.primed(1)] = Term::var(v);
    return cmd.as_formula(ha.vars).substitute(m);
}

}  // namespace

Formula predtrans_discrete(const HybridAutomaton& ha, const Frame& R, const LocationId& q)
{
    auto copy = to_copy(ha.vars, fresh_instance());
    std::vector<Formula> disjuncts;
    if (q == ha.initial_location)
        disjuncts.push_back(ha.init);
    for (const auto& t : ha.transitions) {
        if (t.to != q)
            continue;
        disjuncts.push_back(Formula::conjunction(
            {R.at(t.from).substitute(copy), t.guard.substitute(copy), command_on_copy(ha, t.cmd, copy)}));
    }
    return Formula::disjunction(std::move(disjuncts));
}

HybridImage predtrans_hybrid(const HybridAutomaton& ha, const Frame& R, const LocationId& q)
{
    HybridImage img;
    img.init = q == ha.initial_location ? ha.init : Formula::bottom();
    for (std::size_t k = 0; k < ha.transitions.size(); ++k) {
        const auto& t = ha.transitions[k];
        if (t.to != q)
            continue;
        int inst = fresh_instance();
        auto copy = to_copy(ha.vars, inst);
        CrpQuery c;
        c.pre = R.at(t.from).substitute(copy);
        c.ode = rename_ode(ha.flow(t.from), copy);
        c.stay = ha.stay(t.from).substitute(copy);
        c.target = t.guard.substitute(copy) && command_on_copy(ha, t.cmd, copy);
        c.copy = fresh_copy(ha.vars, inst);
        c.transition = k;
        img.crps.push_back(std::move(c));
    }
    return img;
}

CrpQuery predtrans_cont(const HybridAutomaton& ha, const Frame& R, const LocationId& q)
{
    int inst = fresh_instance();
    auto copy = to_copy(ha.vars, inst);
    CrpQuery c;
    c.pre = R.at(q).substitute(copy);
    c.ode = rename_ode(ha.flow(q), copy);
    c.stay = ha.stay(q).substitute(copy);
    std::vector<Formula> eqs;
    for (const auto& v : ha.vars)
        eqs.push_back(Formula::atom(Term::var(v), CmpOp::Eq, copy.at(v)));
    c.target = Formula::conjunction(std::move(eqs));
    c.copy = fresh_copy(ha.vars, inst);
    return c;
}

Formula post_image(const HybridAutomaton& ha, const JumpTransition& t, const Formula& psi)
{
    auto fwd = t.cmd.forward_terms(ha.vars);
    std::map<Var, Term> m;
    for (const auto& v : ha.vars)
        m[v] = Polynomial::from_term(fwd.at(v.primed(1))).to_term();
    return psi.substitute(m);
}

Formula command_preimage(const HybridAutomaton& ha, const JumpTransition& t, const Formula& phi)
{
    auto inv = t.cmd.inverse_terms(ha.vars);
    std::map<Var, Term> back;
    for (const auto& v : ha.vars)
        back[v.primed(1)] = Term::var(v);
    std::map<Var, Term> m;
    for (const auto& v : ha.vars)
        m[v] = Polynomial::from_term(inv.at(v).substitute(back)).to_term();
    return phi.substitute(m);
}

CrpObligation closure_obligation(const HybridAutomaton& ha, const Formula& pre, const JumpTransition& t,
                                 const Formula& psi)
{
    return CrpObligation{pre, ha.flow(t.from), ha.stay(t.from), t.guard && !post_image(ha, t, psi)};
}

CrpObligation flow_obligation(const HybridAutomaton& ha, const Formula& pre, const LocationId& q,
                              const Formula& psi)
{
    return CrpObligation{pre, ha.flow(q), ha.stay(q), !psi};
}

}  // namespace hypdr
