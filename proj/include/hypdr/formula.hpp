#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hypdr {

/// A variable copy: `x` (prime 0), `x'` (prime 1) or `x''` (prime 2).
/// `instance` > 0 marks a fresh copy introduced when an existential over
/// the double-primed variables is eliminated; it never appears in user text.
struct Var {
    std::string name;
    int prime = 0;
    int instance = 0;

    Var() = default;
    Var(std::string n, int p = 0, int inst = 0) : name(std::move(n)), prime(p), instance(inst) {}

    Var primed(int level) const { return Var(name, level, instance); }

    auto operator<=>(const Var&) const = default;
    bool operator==(const Var&) const = default;

    std::string to_string() const;
};

class UndeclaredVariable : public std::runtime_error {
public:
    explicit UndeclaredVariable(const Var& v)
        : std::runtime_error("undeclared variable: " + v.to_string()), var(v) {}
    Var var;
};

/// Total map from variables to reals.
class Valuation {
public:
    Valuation() = default;
    Valuation(std::initializer_list<std::pair<const Var, double>> init) : values_(init) {}

    void set(const Var& v, double value) { values_[v] = value; }
    double at(const Var& v) const;
    bool contains(const Var& v) const { return values_.count(v) != 0; }
    std::optional<double> find(const Var& v) const;

    /// σ[x ↦ r]
    Valuation updated(const Var& v, double value) const;
    /// Copies every binding to prime level `level` (σ ↦ σ′ / σ″).
    Valuation primed(int level) const;
    /// Union of two valuations; bindings of `other` win on overlap.
    Valuation merged(const Valuation& other) const;

    const std::map<Var, double>& values() const { return values_; }
    bool empty() const { return values_.empty(); }
    std::size_t size() const { return values_.size(); }

    bool operator==(const Valuation&) const = default;

    std::string to_string() const;

private:
    std::map<Var, double> values_;
};

class Term {
public:
    enum class Kind : std::uint8_t { Const, VarRef, Add, Sub, Mul, Neg };

    Term() : Term(constant(0.0)) {}

    static Term constant(double value);
    static Term var(Var v);
    static Term var(const std::string& name, int prime = 0) { return var(Var(name, prime)); }

    Kind kind() const { return node_->kind; }
    double value() const { return node_->value; }
    const Var& variable() const { return node_->var; }
    const Term& lhs() const { return node_->children[0]; }
    const Term& rhs() const { return node_->children[1]; }
    const Term& operand() const { return node_->children[0]; }

    double evaluate(const Valuation& sigma) const;
    void collect_vars(std::set<Var>& out) const;
    Term substitute(const std::map<Var, Term>& mapping) const;

    std::string to_string() const;
    bool structurally_equal(const Term& other) const;

    friend Term operator+(const Term& a, const Term& b);
    friend Term operator-(const Term& a, const Term& b);
    friend Term operator*(const Term& a, const Term& b);
    friend Term operator-(const Term& a);

private:
    struct Node {
        Kind kind;
        double value = 0.0;
        Var var;
        std::vector<Term> children;
    };
    explicit Term(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    static Term make(Kind k, std::vector<Term> children);

    std::shared_ptr<const Node> node_;
};

enum class CmpOp : std::uint8_t { Lt, Le, Eq, Ge, Gt };

const char* to_string(CmpOp op);
CmpOp negate(CmpOp op);

class Formula {
public:
    enum class Kind : std::uint8_t { True, False, Atom, Not, And, Or, Implies };

    Formula() : Formula(top()) {}

    static Formula top();
    static Formula bottom();
    static Formula atom(Term lhs, CmpOp op, Term rhs);
    static Formula negation(Formula f);
    /// n-ary; an empty list is `true`, a singleton is returned unchanged.
    static Formula conjunction(std::vector<Formula> fs);
    /// n-ary; an empty list is `false`, a singleton is returned unchanged.
    static Formula disjunction(std::vector<Formula> fs);
    static Formula implication(Formula a, Formula b);

    Kind kind() const { return node_->kind; }
    bool is_true() const { return kind() == Kind::True; }
    bool is_false() const { return kind() == Kind::False; }
    CmpOp op() const { return node_->op; }
    const Term& lhs() const { return node_->terms[0]; }
    const Term& rhs() const { return node_->terms[1]; }
    const std::vector<Formula>& children() const { return node_->children; }

    /// Truth of the formula under `sigma`. Comparisons are relaxed by `eps`
    /// in the direction of the atom's polarity (negations are pushed to atoms
    /// first), so eps = 0 is exact evaluation.
    bool evaluate(const Valuation& sigma, double eps = 0.0) const;

    std::set<Var> free_vars() const;
    void collect_vars(std::set<Var>& out) const;
    /// Simultaneous substitution.
    Formula substitute(const std::map<Var, Term>& mapping) const;
    /// Simultaneous renaming of every variable with prime level `from` to `to`.
    Formula reprime(int from, int to) const;
    /// Renames every variable with prime level 2 to the given fresh instance.
    Formula with_instance(int prime, int instance) const;

    std::string to_string() const;
    bool structurally_equal(const Formula& other) const;

    friend Formula operator&&(const Formula& a, const Formula& b) { return conjunction({a, b}); }
    friend Formula operator||(const Formula& a, const Formula& b) { return disjunction({a, b}); }
    friend Formula operator!(const Formula& a) { return negation(a); }

private:
    struct Node {
        Kind kind;
        CmpOp op = CmpOp::Eq;
        std::vector<Term> terms;
        std::vector<Formula> children;
    };
    explicit Formula(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    bool eval_polarity(const Valuation& sigma, double eps, bool positive) const;

    std::shared_ptr<const Node> node_;
};

/// ⋀_{x} x = σ(x) over the bindings of `sigma`.
Formula valuation_to_formula(const Valuation& sigma);

/// Top-level conjunct decomposition (recursive through nested ∧).
std::vector<Formula> conjuncts(const Formula& phi);

/// Formats a double as the shortest decimal that round-trips, never in
/// exponent notation.
std::string format_number(double value);

inline Term operator+(const Term& a, double b) { return a + Term::constant(b); }
inline Term operator*(double a, const Term& b) { return Term::constant(a) * b; }

}  // namespace hypdr
