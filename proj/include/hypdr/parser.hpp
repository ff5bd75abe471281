#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "hypdr/formula.hpp"

namespace hypdr {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int column)
        : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line(line), column(column) {}
    int line;
    int column;
};

/// Parses the formula text grammar: atoms `t (< | <= | = | >= | >) t`
/// (chains such as `a <= x <= b` read as conjunctions), connectives `&`,
/// `|`, `!`, `->`, parentheses, decimal literals, identifiers with `'`/`''`.
Formula parse_formula(std::string_view text);
Term parse_term(std::string_view text);

/// Throws UndeclaredVariable when `phi` mentions a name outside `names`
/// or a prime level above `max_prime`.
void check_declared(const Formula& phi, const std::set<std::string>& names, int max_prime = 2);
void check_declared(const Term& t, const std::set<std::string>& names, int max_prime = 2);

}  // namespace hypdr
