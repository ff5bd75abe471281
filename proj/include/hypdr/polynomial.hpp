#pragma once

#include <map>
#include <span>
#include <vector>

#include "hypdr/formula.hpp"

namespace hypdr {

/// Sparse multivariate polynomial with real coefficients, normalized so
/// that no monomial carries a zero coefficient.
class Polynomial {
public:
    /// Sorted (variable, exponent) pairs; the empty monomial is the constant.
    using Monomial = std::vector<std::pair<Var, int>>;

    Polynomial() = default;
    static Polynomial constant(double c);
    static Polynomial variable(const Var& v);
    static Polynomial from_term(const Term& t);

    Term to_term() const;

    const std::map<Monomial, double>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    bool is_constant() const;
    double constant_value() const;
    int degree() const;
    int degree_in(const Var& v) const;
    bool mentions(const Var& v) const { return degree_in(v) > 0; }

    /// Coefficient of v^k as a polynomial in the remaining variables.
    Polynomial coefficient(const Var& v, int k) const;
    Polynomial derivative(const Var& v) const;
    /// ∑_x (∂p/∂x)·f_x
    Polynomial lie_derivative(const std::map<Var, Polynomial>& field) const;

    double evaluate(const Valuation& sigma) const;

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b);
    friend Polynomial operator-(const Polynomial& a, const Polynomial& b);
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
    friend Polynomial operator*(double s, const Polynomial& a);

    bool operator==(const Polynomial&) const = default;

private:
    void add_term(const Monomial& m, double c);
    std::map<Monomial, double> terms_;
};

/// A polynomial compiled against a fixed variable ordering, for fast
/// repeated evaluation on dense states.
class CompiledPolynomial {
public:
    CompiledPolynomial() = default;
    CompiledPolynomial(const Polynomial& p, const std::vector<Var>& order);

    double operator()(std::span<const double> state) const;

private:
    struct Mono {
        double coef;
        std::vector<std::pair<std::size_t, int>> factors;
    };
    std::vector<Mono> monos_;
};

}  // namespace hypdr
