#include "hypdr/formula.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace hypdr {

std::string Var::to_string() const
{
    std::string s = name;
    s.append(static_cast<std::size_t>(prime), '\'');
    if (instance != 0)
        s += "#" + std::to_string(instance);
    return s;
}

double Valuation::at(const Var& v) const
{
    auto it = values_.find(v);
    if (it == values_.end())
        throw UndeclaredVariable(v);
    return it->second;
}

std::optional<double> Valuation::find(const Var& v) const
{
    auto it = values_.find(v);
    if (it == values_.end())
        return std::nullopt;
    return it->second;
}

Valuation Valuation::updated(const Var& v, double value) const
{
    Valuation out = *this;
    out.set(v, value);
    return out;
}

Valuation Valuation::primed(int level) const
{
    Valuation out;
    for (const auto& [v, value] : values_)
        out.set(v.primed(level), value);
    return out;
}

Valuation Valuation::merged(const Valuation& other) const
{
    Valuation out = *this;
    for (const auto& [v, value] : other.values_)
        out.set(v, value);
    return out;
}

std::string Valuation::to_string() const
{
    std::string s = "{";
    bool first = true;
    for (const auto& [v, value] : values_) {
        if (!first)
            s += ", ";
        first = false;
        s += v.to_string() + " -> " + format_number(value);
    }
    return s + "}";
}

std::string format_number(double value)
{
    if (!std::isfinite(value))
        throw std::invalid_argument("non-finite constant");
    if (value == 0.0)
        return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    std::string s(buf, res.ptr);
    if (s.find('e') == std::string::npos)
        return s;
    // Expand exponent notation by hand so the text stays in the grammar.
    bool negative = s[0] == '-';
    if (negative)
        s.erase(0, 1);
    auto epos = s.find('e');
    int exponent = std::stoi(s.substr(epos + 1));
    std::string mantissa = s.substr(0, epos);
    std::string digits;
    int point = static_cast<int>(mantissa.size());
    for (std::size_t i = 0; i < mantissa.size(); ++i) {
        if (mantissa[i] == '.')
            point = static_cast<int>(i);
        else
            digits += mantissa[i];
    }
    point += exponent;
    std::string out;
    if (point <= 0) {
        out = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
    } else if (point >= static_cast<int>(digits.size())) {
        out = digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
    } else {
        out = digits.substr(0, static_cast<std::size_t>(point)) + "." +
              digits.substr(static_cast<std::size_t>(point));
    }
    return negative ? "-" + out : out;
}

// ---------------------------------------------------------------- Term

Term Term::make(Kind k, std::vector<Term> children)
{
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->children = std::move(children);
    return Term(std::move(n));
}

Term Term::constant(double value)
{
    if (!std::isfinite(value))
        throw std::invalid_argument("term constants must be finite");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Const;
    n->value = value;
    return Term(std::move(n));
}

Term Term::var(Var v)
{
    auto n = std::make_shared<Node>();
    n->kind = Kind::VarRef;
    n->var = std::move(v);
    return Term(std::move(n));
}

Term operator+(const Term& a, const Term& b) { return Term::make(Term::Kind::Add, {a, b}); }
Term operator-(const Term& a, const Term& b) { return Term::make(Term::Kind::Sub, {a, b}); }
Term operator*(const Term& a, const Term& b) { return Term::make(Term::Kind::Mul, {a, b}); }
Term operator-(const Term& a) { return Term::make(Term::Kind::Neg, {a}); }

double Term::evaluate(const Valuation& sigma) const
{
    switch (kind()) {
    case Kind::Const: return value();
    case Kind::VarRef: return sigma.at(variable());
    case Kind::Add: return lhs().evaluate(sigma) + rhs().evaluate(sigma);
    case Kind::Sub: return lhs().evaluate(sigma) - rhs().evaluate(sigma);
    case Kind::Mul: return lhs().evaluate(sigma) * rhs().evaluate(sigma);
    case Kind::Neg: return -operand().evaluate(sigma);
    }
    return 0.0;
}

void Term::collect_vars(std::set<Var>& out) const
{
    if (kind() == Kind::VarRef)
        out.insert(variable());
    for (const auto& c : node_->children)
        c.collect_vars(out);
}

Term Term::substitute(const std::map<Var, Term>& mapping) const
{
    switch (kind()) {
    case Kind::Const: return *this;
    case Kind::VarRef: {
        auto it = mapping.find(variable());
        return it == mapping.end() ? *this : it->second;
    }
    default: {
        std::vector<Term> cs;
        cs.reserve(node_->children.size());
        for (const auto& c : node_->children)
            cs.push_back(c.substitute(mapping));
        return make(kind(), std::move(cs));
    }
    }
}

namespace {

int term_precedence(const Term& t)
{
    switch (t.kind()) {
    case Term::Kind::Add:
    case Term::Kind::Sub: return 1;
    case Term::Kind::Mul: return 2;
    case Term::Kind::Neg: return 3;
    case Term::Kind::Const: return t.value() < 0 ? 3 : 4;
    case Term::Kind::VarRef: return 4;
    }
    return 4;
}

std::string wrap(const Term& t, int min_prec)
{
    std::string s = t.to_string();
    return term_precedence(t) < min_prec ? "(" + s + ")" : s;
}

}  // namespace

std::string Term::to_string() const
{
    switch (kind()) {
    case Kind::Const: return format_number(value());
    case Kind::VarRef: return variable().to_string();
    case Kind::Add: return wrap(lhs(), 1) + " + " + wrap(rhs(), 2);
    case Kind::Sub: return wrap(lhs(), 1) + " - " + wrap(rhs(), 2);
    case Kind::Mul: return wrap(lhs(), 2) + "*" + wrap(rhs(), 3);
    case Kind::Neg: return "-" + wrap(operand(), 4);
    }
    return {};
}

bool Term::structurally_equal(const Term& other) const
{
    if (node_ == other.node_)
        return true;
    if (kind() != other.kind())
        return false;
    if (kind() == Kind::Const)
        return value() == other.value();
    if (kind() == Kind::VarRef)
        return variable() == other.variable();
    for (std::size_t i = 0; i < node_->children.size(); ++i)
        if (!node_->children[i].structurally_equal(other.node_->children[i]))
            return false;
    return true;
}

// ---------------------------------------------------------------- Formula

const char* to_string(CmpOp op)
{
    switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
    }
    return "?";
}

CmpOp negate(CmpOp op)
{
    switch (op) {
    case CmpOp::Lt: return CmpOp::Ge;
    case CmpOp::Le: return CmpOp::Gt;
    case CmpOp::Ge: return CmpOp::Lt;
    case CmpOp::Gt: return CmpOp::Le;
    case CmpOp::Eq: break;
    }
    throw std::logic_error("equality has no single-atom negation");
}

Formula Formula::top()
{
    static const Formula t(std::make_shared<Node>(Node{Kind::True, CmpOp::Eq, {}, {}}));
    return t;
}

Formula Formula::bottom()
{
    static const Formula f(std::make_shared<Node>(Node{Kind::False, CmpOp::Eq, {}, {}}));
    return f;
}

Formula Formula::atom(Term lhs, CmpOp op, Term rhs)
{
    return Formula(std::make_shared<Node>(Node{Kind::Atom, op, {std::move(lhs), std::move(rhs)}, {}}));
}

Formula Formula::negation(Formula f)
{
    return Formula(std::make_shared<Node>(Node{Kind::Not, CmpOp::Eq, {}, {std::move(f)}}));
}

Formula Formula::conjunction(std::vector<Formula> fs)
{
    if (fs.empty())
        return top();
    if (fs.size() == 1)
        return fs.front();
    return Formula(std::make_shared<Node>(Node{Kind::And, CmpOp::Eq, {}, std::move(fs)}));
}

Formula Formula::disjunction(std::vector<Formula> fs)
{
    if (fs.empty())
        return bottom();
    if (fs.size() == 1)
        return fs.front();
    return Formula(std::make_shared<Node>(Node{Kind::Or, CmpOp::Eq, {}, std::move(fs)}));
}

Formula Formula::implication(Formula a, Formula b)
{
    return Formula(std::make_shared<Node>(Node{Kind::Implies, CmpOp::Eq, {}, {std::move(a), std::move(b)}}));
}

bool Formula::evaluate(const Valuation& sigma, double eps) const
{
    return eval_polarity(sigma, eps, true);
}

bool Formula::eval_polarity(const Valuation& sigma, double eps, bool positive) const
{
    switch (kind()) {
    case Kind::True: return positive;
    case Kind::False: return !positive;
    case Kind::Atom: {
        double l = lhs().evaluate(sigma);
        double r = rhs().evaluate(sigma);
        double d = l - r;
        if (positive) {
            switch (op()) {
            case CmpOp::Lt: return d < eps;
            case CmpOp::Le: return d <= eps;
            case CmpOp::Eq: return std::fabs(d) <= eps;
            case CmpOp::Ge: return d >= -eps;
            case CmpOp::Gt: return d > -eps;
            }
        } else {
            switch (op()) {
            case CmpOp::Lt: return d >= -eps;
            case CmpOp::Le: return d > -eps;
            case CmpOp::Eq: return std::fabs(d) > 0.0 || eps > 0.0;
            case CmpOp::Ge: return d < eps;
            case CmpOp::Gt: return d <= eps;
            }
        }
        return false;
    }
    case Kind::Not: return children()[0].eval_polarity(sigma, eps, !positive);
    case Kind::And:
        if (positive) {
            for (const auto& c : children())
                if (!c.eval_polarity(sigma, eps, true))
                    return false;
            return true;
        }
        for (const auto& c : children())
            if (c.eval_polarity(sigma, eps, false))
                return true;
        return false;
    case Kind::Or:
        if (positive) {
            for (const auto& c : children())
                if (c.eval_polarity(sigma, eps, true))
                    return true;
            return false;
        }
        for (const auto& c : children())
            if (!c.eval_polarity(sigma, eps, false))
                return false;
        return true;
    case Kind::Implies:
        if (positive)
            return children()[0].eval_polarity(sigma, eps, false) ||
                   children()[1].eval_polarity(sigma, eps, true);
        return children()[0].eval_polarity(sigma, eps, true) &&
               children()[1].eval_polarity(sigma, eps, false);
    }
    return false;
}

void Formula::collect_vars(std::set<Var>& out) const
{
    for (const auto& t : node_->terms)
        t.collect_vars(out);
    for (const auto& c : node_->children)
        c.collect_vars(out);
}

std::set<Var> Formula::free_vars() const
{
    std::set<Var> out;
    collect_vars(out);
    return out;
}

Formula Formula::substitute(const std::map<Var, Term>& mapping) const
{
    switch (kind()) {
    case Kind::True:
    case Kind::False: return *this;
    case Kind::Atom: return atom(lhs().substitute(mapping), op(), rhs().substitute(mapping));
    default: {
        auto n = std::make_shared<Node>(*node_);
        for (auto& c : n->children)
            c = c.substitute(mapping);
        return Formula(std::move(n));
    }
    }
}

Formula Formula::reprime(int from, int to) const
{
    std::map<Var, Term> mapping;
    for (const auto& v : free_vars())
        if (v.prime == from)
            mapping.emplace(v, Term::var(Var(v.name, to, v.instance)));
    return substitute(mapping);
}

Formula Formula::with_instance(int prime, int instance) const
{
    std::map<Var, Term> mapping;
    for (const auto& v : free_vars())
        if (v.prime == prime)
            mapping.emplace(v, Term::var(Var(v.name, v.prime, instance)));
    return substitute(mapping);
}

namespace {

int formula_precedence(const Formula& f)
{
    switch (f.kind()) {
    case Formula::Kind::Implies: return 1;
    case Formula::Kind::Or: return 2;
    case Formula::Kind::And: return 3;
    case Formula::Kind::Not: return 4;
    default: return 5;
    }
}

std::string wrap(const Formula& f, int min_prec)
{
    std::string s = f.to_string();
    return formula_precedence(f) < min_prec ? "(" + s + ")" : s;
}

}  // namespace

std::string Formula::to_string() const
{
    switch (kind()) {
    case Kind::True: return "true";
    case Kind::False: return "false";
    case Kind::Atom: return lhs().to_string() + " " + hypdr::to_string(op()) + " " + rhs().to_string();
    case Kind::Not: return "!" + wrap(children()[0], 5);
    case Kind::And:
    case Kind::Or: {
        const char* sep = kind() == Kind::And ? " & " : " | ";
        // Children of equal precedence are parenthesized so the tree shape
        // survives a parse round trip.
        int prec = formula_precedence(*this) + 1;
        std::string s;
        for (std::size_t i = 0; i < children().size(); ++i) {
            if (i)
                s += sep;
            s += wrap(children()[i], prec);
        }
        return s;
    }
    case Kind::Implies: return wrap(children()[0], 2) + " -> " + wrap(children()[1], 1);
    }
    return {};
}

bool Formula::structurally_equal(const Formula& other) const
{
    if (node_ == other.node_)
        return true;
    if (kind() != other.kind() || children().size() != other.children().size())
        return false;
    if (kind() == Kind::Atom)
        return op() == other.op() && lhs().structurally_equal(other.lhs()) &&
               rhs().structurally_equal(other.rhs());
    for (std::size_t i = 0; i < children().size(); ++i)
        if (!children()[i].structurally_equal(other.children()[i]))
            return false;
    return true;
}

Formula valuation_to_formula(const Valuation& sigma)
{
    std::vector<Formula> eqs;
    for (const auto& [v, value] : sigma.values())
        eqs.push_back(Formula::atom(Term::var(v), CmpOp::Eq, Term::constant(value)));
    return Formula::conjunction(std::move(eqs));
}

namespace {

void split(const Formula& phi, std::vector<Formula>& out)
{
    if (phi.kind() == Formula::Kind::And) {
        for (const auto& c : phi.children())
            split(c, out);
    } else {
        out.push_back(phi);
    }
}

}  // namespace

std::vector<Formula> conjuncts(const Formula& phi)
{
    std::vector<Formula> out;
    split(phi, out);
    return out;
}

}  // namespace hypdr
