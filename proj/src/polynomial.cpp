#include "hypdr/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hypdr {

namespace {

Polynomial::Monomial multiply(const Polynomial::Monomial& a, const Polynomial::Monomial& b)
{
    std::map<Var, int> acc;
    for (const auto& [v, k] : a)
        acc[v] += k;
    for (const auto& [v, k] : b)
        acc[v] += k;
    return {acc.begin(), acc.end()};
}

}  // namespace

void Polynomial::add_term(const Monomial& m, double c)
{
    if (c == 0.0)
        return;
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0.0)
            terms_.erase(it);
    }
}

Polynomial Polynomial::constant(double c)
{
    Polynomial p;
    p.add_term({}, c);
    return p;
}

Polynomial Polynomial::variable(const Var& v)
{
    Polynomial p;
    p.add_term({{v, 1}}, 1.0);
    return p;
}

Polynomial Polynomial::from_term(const Term& t)
{
    switch (t.kind()) {
    case Term::Kind::Const: return constant(t.value());
    case Term::Kind::VarRef: return variable(t.variable());
    case Term::Kind::Add: return from_term(t.lhs()) + from_term(t.rhs());
    case Term::Kind::Sub: return from_term(t.lhs()) - from_term(t.rhs());
    case Term::Kind::Mul: return from_term(t.lhs()) * from_term(t.rhs());
    case Term::Kind::Neg: return -1.0 * from_term(t.operand());
    }
    throw std::logic_error("unknown term kind");
}

Term Polynomial::to_term() const
{
    if (terms_.empty())
        return Term::constant(0.0);
    std::optional<Term> acc;
    // Highest-degree monomials first reads more naturally.
    std::vector<std::pair<Monomial, double>> ordered(terms_.begin(), terms_.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        int da = 0, db = 0;
        for (const auto& f : a.first) da += f.second;
        for (const auto& f : b.first) db += f.second;
        return da > db;
    });
    for (const auto& [m, c] : ordered) {
        std::optional<Term> mono;
        for (const auto& [v, k] : m)
            for (int i = 0; i < k; ++i)
                mono = mono ? *mono * Term::var(v) : Term::var(v);
        double mag = std::fabs(c);
        Term piece = mono ? (mag == 1.0 ? *mono : Term::constant(mag) * *mono) : Term::constant(mag);
        if (!acc)
            acc = c < 0 ? (mono ? -piece : Term::constant(c)) : piece;
        else
            acc = c < 0 ? *acc - piece : *acc + piece;
    }
    return *acc;
}

bool Polynomial::is_constant() const
{
    return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.empty());
}

double Polynomial::constant_value() const
{
    auto it = terms_.find(Monomial{});
    return it == terms_.end() ? 0.0 : it->second;
}

int Polynomial::degree() const
{
    int d = 0;
    for (const auto& [m, c] : terms_) {
        int md = 0;
        for (const auto& f : m)
            md += f.second;
        d = std::max(d, md);
    }
    return d;
}

int Polynomial::degree_in(const Var& v) const
{
    int d = 0;
    for (const auto& [m, c] : terms_)
        for (const auto& [w, k] : m)
            if (w == v)
                d = std::max(d, k);
    return d;
}

Polynomial Polynomial::coefficient(const Var& v, int k) const
{
    Polynomial out;
    for (const auto& [m, c] : terms_) {
        int exp = 0;
        Monomial rest;
        for (const auto& f : m) {
            if (f.first == v)
                exp = f.second;
            else
                rest.push_back(f);
        }
        if (exp == k)
            out.add_term(rest, c);
    }
    return out;
}

Polynomial Polynomial::derivative(const Var& v) const
{
    Polynomial out;
    for (const auto& [m, c] : terms_) {
        Monomial dm;
        int exp = 0;
        for (const auto& f : m) {
            if (f.first == v) {
                exp = f.second;
                if (f.second > 1)
                    dm.push_back({v, f.second - 1});
            } else {
                dm.push_back(f);
            }
        }
        if (exp > 0)
            out.add_term(dm, c * exp);
    }
    return out;
}

Polynomial Polynomial::lie_derivative(const std::map<Var, Polynomial>& field) const
{
    Polynomial out;
    for (const auto& [v, f] : field)
        out = out + derivative(v) * f;
    return out;
}

double Polynomial::evaluate(const Valuation& sigma) const
{
    double acc = 0.0;
    for (const auto& [m, c] : terms_) {
        double prod = c;
        for (const auto& [v, k] : m)
            prod *= std::pow(sigma.at(v), k);
        acc += prod;
    }
    return acc;
}

Polynomial operator+(const Polynomial& a, const Polynomial& b)
{
    Polynomial out = a;
    for (const auto& [m, c] : b.terms_)
        out.add_term(m, c);
    return out;
}

Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-1.0 * b); }

Polynomial operator*(const Polynomial& a, const Polynomial& b)
{
    Polynomial out;
    for (const auto& [ma, ca] : a.terms_)
        for (const auto& [mb, cb] : b.terms_)
            out.add_term(multiply(ma, mb), ca * cb);
    return out;
}

Polynomial operator*(double s, const Polynomial& a)
{
    Polynomial out;
    for (const auto& [m, c] : a.terms_)
        out.add_term(m, s * c);
    return out;
}

CompiledPolynomial::CompiledPolynomial(const Polynomial& p, const std::vector<Var>& order)
{
    for (const auto& [m, c] : p.terms()) {
        Mono mono{c, {}};
        for (const auto& [v, k] : m) {
            auto it = std::find(order.begin(), order.end(), v);
            if (it == order.end())
                throw UndeclaredVariable(v);
            mono.factors.emplace_back(static_cast<std::size_t>(it - order.begin()), k);
        }
        monos_.push_back(std::move(mono));
    }
}

double CompiledPolynomial::operator()(std::span<const double> state) const
{
    double acc = 0.0;
    for (const auto& m : monos_) {
        double prod = m.coef;
        for (const auto& [idx, k] : m.factors)
            for (int i = 0; i < k; ++i)
                prod *= state[idx];
        acc += prod;
    }
    return acc;
}

}  // namespace hypdr
