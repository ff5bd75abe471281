#include "hypdr/parser.hpp"

#include <cctype>
#include <cstdlib>
#include <optional>
#include <vector>

namespace hypdr {

namespace {

enum class Tok { Num, Ident, Op, LParen, RParen, End };

struct Token {
    Tok kind;
    std::string text;
    int line;
    int column;
};

std::vector<Token> tokenize(std::string_view s)
{
    std::vector<Token> out;
    int line = 1;
    int col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            if (s[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };
    while (i < s.size()) {
        char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        int tl = line;
        int tc = col;
        if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            std::size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])))
                ++j;
            if (j < s.size() && s[j] == '.') {
                ++j;
                while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])))
                    ++j;
            }
            out.push_back({Tok::Num, std::string(s.substr(i, j - i)), tl, tc});
            advance(j - i);
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_'))
                ++j;
            while (j < s.size() && s[j] == '\'')
                ++j;
            out.push_back({Tok::Ident, std::string(s.substr(i, j - i)), tl, tc});
            advance(j - i);
            continue;
        }
        if (c == '(') {
            out.push_back({Tok::LParen, "(", tl, tc});
            advance(1);
            continue;
        }
        if (c == ')') {
            out.push_back({Tok::RParen, ")", tl, tc});
            advance(1);
            continue;
        }
        static const char* two[] = {"<=", ">=", "->", "&&", "||", "=="};
        bool matched = false;
        for (const char* op : two) {
            if (s.substr(i, 2) == op) {
                std::string t = op;
                if (t == "&&") t = "&";
                if (t == "||") t = "|";
                if (t == "==") t = "=";
                out.push_back({Tok::Op, t, tl, tc});
                advance(2);
                matched = true;
                break;
            }
        }
        if (matched)
            continue;
        if (std::string_view("<>=&|!+-*").find(c) != std::string_view::npos) {
            out.push_back({Tok::Op, std::string(1, c), tl, tc});
            advance(1);
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", tl, tc);
    }
    out.push_back({Tok::End, "", line, col});
    return out;
}

std::optional<CmpOp> as_cmp(const Token& t)
{
    if (t.kind != Tok::Op)
        return std::nullopt;
    if (t.text == "<") return CmpOp::Lt;
    if (t.text == "<=") return CmpOp::Le;
    if (t.text == "=") return CmpOp::Eq;
    if (t.text == ">=") return CmpOp::Ge;
    if (t.text == ">") return CmpOp::Gt;
    return std::nullopt;
}

class Parser {
public:
    explicit Parser(std::string_view text) : toks_(tokenize(text)) {}

    Formula formula_eof()
    {
        Formula f = implication();
        expect_end();
        return f;
    }

    Term term_eof()
    {
        Term t = sum();
        expect_end();
        return t;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    bool is_op(const char* op) const { return peek().kind == Tok::Op && peek().text == op; }

    [[noreturn]] void fail(const std::string& msg) const
    {
        const Token& t = peek();
        throw ParseError(msg + (t.kind == Tok::End ? " at end of input" : " near '" + t.text + "'"), t.line, t.column);
    }

    void expect_end()
    {
        if (peek().kind != Tok::End)
            fail("trailing input");
    }

    Formula implication()
    {
        Formula lhs = disjunction();
        if (is_op("->")) {
            ++pos_;
            return Formula::implication(lhs, implication());
        }
        return lhs;
    }

    Formula disjunction()
    {
        std::vector<Formula> parts{conjunction()};
        while (is_op("|")) {
            ++pos_;
            parts.push_back(conjunction());
        }
        return Formula::disjunction(std::move(parts));
    }

    Formula conjunction()
    {
        std::vector<Formula> parts{unary()};
        while (is_op("&")) {
            ++pos_;
            parts.push_back(unary());
        }
        return Formula::conjunction(std::move(parts));
    }

    Formula unary()
    {
        if (is_op("!")) {
            ++pos_;
            return Formula::negation(unary());
        }
        return primary();
    }

    Formula primary()
    {
        const Token& t = peek();
        if (t.kind == Tok::Ident && (t.text == "true" || t.text == "false")) {
            ++pos_;
            return t.text == "true" ? Formula::top() : Formula::bottom();
        }
        if (t.kind == Tok::LParen) {
            std::size_t saved = pos_;
            try {
                ++pos_;
                Formula inner = implication();
                if (peek().kind == Tok::RParen) {
                    ++pos_;
                    const Token& next = peek();
                    bool continues_term = as_cmp(next).has_value() ||
                                          (next.kind == Tok::Op && (next.text == "+" || next.text == "-" || next.text == "*"));
                    if (!continues_term)
                        return inner;
                }
            } catch (const ParseError&) {
            }
            pos_ = saved;
        }
        return comparison();
    }

    Formula comparison()
    {
        Term lhs = sum();
        auto op = as_cmp(peek());
        if (!op)
            fail("expected comparison operator");
        std::vector<Formula> chain;
        while (op) {
            ++pos_;
            Term rhs = sum();
            chain.push_back(Formula::atom(lhs, *op, rhs));
            lhs = rhs;
            op = as_cmp(peek());
        }
        return Formula::conjunction(std::move(chain));
    }

    Term sum()
    {
        Term acc = product();
        while (is_op("+") || is_op("-")) {
            bool plus = peek().text == "+";
            ++pos_;
            Term rhs = product();
            acc = plus ? acc + rhs : acc - rhs;
        }
        return acc;
    }

    Term product()
    {
        Term acc = factor();
        while (is_op("*")) {
            ++pos_;
            acc = acc * factor();
        }
        return acc;
    }

    Term factor()
    {
        const Token& t = peek();
        if (is_op("-")) {
            ++pos_;
            Term inner = factor();
            if (inner.kind() == Term::Kind::Const)
                return Term::constant(-inner.value());
            return -inner;
        }
        if (t.kind == Tok::Num) {
            ++pos_;
            return Term::constant(std::strtod(t.text.c_str(), nullptr));
        }
        if (t.kind == Tok::Ident) {
            if (t.text == "true" || t.text == "false")
                fail("boolean literal in arithmetic position");
            ++pos_;
            std::string name = t.text;
            int primes = 0;
            while (!name.empty() && name.back() == '\'') {
                name.pop_back();
                ++primes;
            }
            if (primes > 2)
                throw ParseError("at most two primes are allowed", t.line, t.column);
            return Term::var(Var(name, primes));
        }
        if (t.kind == Tok::LParen) {
            ++pos_;
            Term inner = sum();
            if (peek().kind != Tok::RParen)
                fail("expected ')'");
            ++pos_;
            return inner;
        }
        fail("expected term");
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

Formula parse_formula(std::string_view text) { return Parser(text).formula_eof(); }

Term parse_term(std::string_view text) { return Parser(text).term_eof(); }

void check_declared(const Term& t, const std::set<std::string>& names, int max_prime)
{
    std::set<Var> vars;
    t.collect_vars(vars);
    for (const auto& v : vars)
        if (!names.count(v.name) || v.prime > max_prime)
            throw UndeclaredVariable(v);
}

void check_declared(const Formula& phi, const std::set<std::string>& names, int max_prime)
{
    for (const auto& v : phi.free_vars())
        if (!names.count(v.name) || v.prime > max_prime)
            throw UndeclaredVariable(v);
}

}  // namespace hypdr
