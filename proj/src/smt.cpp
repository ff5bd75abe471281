#include "hypdr/smt.hpp"

#include <cctype>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace hypdr {

std::string smt_symbol(const Var& v)
{
    std::string s = "|" + v.name;
    s.append(static_cast<std::size_t>(v.prime), '\'');
    if (v.instance != 0)
        s += "#" + std::to_string(v.instance);
    return s + "|";
}

namespace {

std::string smt_number(double value)
{
    std::string digits = format_number(value < 0 ? -value : value);
    if (digits.find('.') == std::string::npos)
        digits += ".0";
    return value < 0 ? "(- " + digits + ")" : digits;
}

}  // namespace

std::string to_smtlib(const Term& t)
{
    switch (t.kind()) {
    case Term::Kind::Const: return smt_number(t.value());
    case Term::Kind::VarRef: return smt_symbol(t.variable());
    case Term::Kind::Add: return "(+ " + to_smtlib(t.lhs()) + " " + to_smtlib(t.rhs()) + ")";
    case Term::Kind::Sub: return "(- " + to_smtlib(t.lhs()) + " " + to_smtlib(t.rhs()) + ")";
    case Term::Kind::Mul: return "(* " + to_smtlib(t.lhs()) + " " + to_smtlib(t.rhs()) + ")";
    case Term::Kind::Neg: return "(- " + to_smtlib(t.operand()) + ")";
    }
    return {};
}

std::string to_smtlib(const Formula& phi)
{
    switch (phi.kind()) {
    case Formula::Kind::True: return "true";
    case Formula::Kind::False: return "false";
    case Formula::Kind::Atom:
        return std::string("(") + to_string(phi.op()) + " " + to_smtlib(phi.lhs()) + " " + to_smtlib(phi.rhs()) + ")";
    case Formula::Kind::Not: return "(not " + to_smtlib(phi.children()[0]) + ")";
    case Formula::Kind::And:
    case Formula::Kind::Or: {
        std::string s = phi.kind() == Formula::Kind::And ? "(and" : "(or";
        for (const auto& c : phi.children())
            s += " " + to_smtlib(c);
        return s + ")";
    }
    case Formula::Kind::Implies:
        return "(=> " + to_smtlib(phi.children()[0]) + " " + to_smtlib(phi.children()[1]) + ")";
    }
    return {};
}

std::string default_solver_command()
{
    if (const char* env = std::getenv("HYPDR_SOLVER"); env && *env)
        return env;
    return "z3 -in";
}

// ---------------------------------------------------------------- s-expressions

namespace {

struct SExpr {
    std::string atom;
    std::vector<SExpr> list;
    bool is_list = false;
};

SExpr parse_sexpr(const std::string& s, std::size_t& i)
{
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
        ++i;
    if (i >= s.size())
        throw SolverError("truncated solver response");
    SExpr e;
    if (s[i] == '(') {
        e.is_list = true;
        ++i;
        for (;;) {
            while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
                ++i;
            if (i >= s.size())
                throw SolverError("unbalanced solver response");
            if (s[i] == ')') {
                ++i;
                break;
            }
            e.list.push_back(parse_sexpr(s, i));
        }
        return e;
    }
    if (s[i] == '|') {
        std::size_t j = s.find('|', i + 1);
        if (j == std::string::npos)
            throw SolverError("unterminated quoted symbol");
        e.atom = s.substr(i, j - i + 1);
        i = j + 1;
        return e;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) && s[j] != '(' && s[j] != ')')
        ++j;
    e.atom = s.substr(i, j - i);
    i = j;
    return e;
}

double eval_value(const SExpr& e)
{
    if (!e.is_list) {
        std::string a = e.atom;
        if (!a.empty() && a.back() == '?')
            a.pop_back();
        char* end = nullptr;
        double v = std::strtod(a.c_str(), &end);
        if (end == a.c_str())
            throw SolverError("unexpected model value '" + e.atom + "'");
        return v;
    }
    if (e.list.empty())
        throw SolverError("empty model value");
    const std::string& head = e.list[0].atom;
    if (head == "-" && e.list.size() == 2)
        return -eval_value(e.list[1]);
    if (head == "-" && e.list.size() == 3)
        return eval_value(e.list[1]) - eval_value(e.list[2]);
    if (head == "/" && e.list.size() == 3)
        return eval_value(e.list[1]) / eval_value(e.list[2]);
    if (head == "+") {
        double acc = 0.0;
        for (std::size_t k = 1; k < e.list.size(); ++k)
            acc += eval_value(e.list[k]);
        return acc;
    }
    if (head == "*") {
        double acc = 1.0;
        for (std::size_t k = 1; k < e.list.size(); ++k)
            acc *= eval_value(e.list[k]);
        return acc;
    }
    throw SolverError("unsupported model value form '" + head + "'");
}

}  // namespace

// ---------------------------------------------------------------- process

SmtSolver::SmtSolver(std::string command, int timeout_ms)
    : command_(std::move(command)), timeout_ms_(timeout_ms)
{
    std::signal(SIGPIPE, SIG_IGN);
    start();
}

SmtSolver::~SmtSolver() { stop(); }

void SmtSolver::start()
{
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw SolverError(std::string("pipe: ") + std::strerror(errno));
    pid_t pid = fork();
    if (pid < 0)
        throw SolverError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        std::string cmd = "exec " + command_;
        execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    buffer_.clear();

    send("(set-option :print-success false)\n"
         "(set-option :produce-models true)\n"
         "(set-option :pp.decimal true)\n"
         "(set-option :pp.decimal_precision 20)\n"
         "(set-option :timeout " + std::to_string(timeout_ms_) + ")\n"
         "(set-logic QF_NRA)\n");
    // Round-trip once so a missing solver binary surfaces immediately.
    send("(echo \"ready\")\n");
    std::string r = read_response(std::chrono::milliseconds(10000));
    if (r.find("ready") == std::string::npos)
        throw SolverError("solver '" + command_ + "' did not start: " + r);
    for (const auto& v : declared_)
        send("(declare-fun " + smt_symbol(v) + " () Real)\n");
}

void SmtSolver::stop()
{
    if (pid_ <= 0)
        return;
    if (to_child_ >= 0) {
        std::string bye = "(exit)\n";
        [[maybe_unused]] auto n = ::write(to_child_, bye.data(), bye.size());
        close(to_child_);
    }
    if (from_child_ >= 0)
        close(from_child_);
    kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
    to_child_ = from_child_ = -1;
}

void SmtSolver::send(const std::string& text)
{
    std::size_t off = 0;
    while (off < text.size()) {
        ssize_t n = ::write(to_child_, text.data() + off, text.size() - off);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw SolverError("solver process closed its input");
        }
        off += static_cast<std::size_t>(n);
    }
}

std::string SmtSolver::read_response(std::chrono::milliseconds budget)
{
    auto deadline = std::chrono::steady_clock::now() + budget;
    for (;;) {
        // A response is either a bare word terminated by a newline or one
        // balanced parenthesized expression.
        std::size_t start = buffer_.find_first_not_of(" \t\r\n");
        if (start != std::string::npos) {
            if (buffer_[start] == '(') {
                int depth = 0;
                bool quoted = false;
                bool in_string = false;
                for (std::size_t i = start; i < buffer_.size(); ++i) {
                    char c = buffer_[i];
                    if (in_string) {
                        if (c == '"') in_string = false;
                        continue;
                    }
                    if (quoted) {
                        if (c == '|') quoted = false;
                        continue;
                    }
                    if (c == '"') in_string = true;
                    else if (c == '|') quoted = true;
                    else if (c == '(') ++depth;
                    else if (c == ')' && --depth == 0) {
                        std::string r = buffer_.substr(start, i - start + 1);
                        buffer_.erase(0, i + 1);
                        return r;
                    }
                }
            } else {
                std::size_t nl = buffer_.find('\n', start);
                if (nl != std::string::npos) {
                    std::string r = buffer_.substr(start, nl - start);
                    buffer_.erase(0, nl + 1);
                    return r;
                }
            }
        }
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline)
            throw SolverError("solver response timed out");
        pollfd pfd{from_child_, POLLIN, 0};
        int wait_ms = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        int rc = poll(&pfd, 1, wait_ms);
        if (rc < 0 && errno == EINTR)
            continue;
        if (rc <= 0)
            continue;
        char buf[4096];
        ssize_t n = ::read(from_child_, buf, sizeof buf);
        if (n <= 0)
            throw SolverError("solver process exited");
        buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

void SmtSolver::declare(const Var& v)
{
    if (declared_.insert(v).second)
        send("(declare-fun " + smt_symbol(v) + " () Real)\n");
}

SmtResult SmtSolver::run_query(const Formula& phi, const std::set<Var>& vars)
{
    if (pid_ <= 0) {
        ++stats_.restarts;
        start();
    }
    for (const auto& v : vars)
        declare(v);
    send("(push 1)\n(assert " + to_smtlib(phi) + ")\n(check-sat)\n");
    auto budget = std::chrono::milliseconds(timeout_ms_ + 5000);
    std::string verdict = read_response(budget);
    SmtResult result;
    if (verdict == "sat") {
        result.status = SmtResult::Status::Sat;
        if (!vars.empty()) {
            std::string req = "(get-value (";
            for (const auto& v : vars)
                req += smt_symbol(v) + " ";
            req += "))\n";
            send(req);
            std::string values = read_response(budget);
            std::size_t i = 0;
            SExpr e = parse_sexpr(values, i);
            if (!e.is_list)
                throw SolverError("unexpected get-value response: " + values);
            std::map<std::string, Var> by_symbol;
            for (const auto& v : vars)
                by_symbol.emplace(smt_symbol(v), v);
            for (const auto& pair : e.list) {
                if (!pair.is_list || pair.list.size() != 2)
                    throw SolverError("unexpected get-value entry in: " + values);
                auto it = by_symbol.find(pair.list[0].atom);
                if (it != by_symbol.end())
                    result.model.set(it->second, eval_value(pair.list[1]));
            }
        }
    } else if (verdict == "unsat") {
        result.status = SmtResult::Status::Unsat;
    } else {
        result.status = SmtResult::Status::Unknown;
        result.reason = verdict;
    }
    send("(pop 1)\n");
    return result;
}

SmtResult SmtSolver::check(const Formula& phi, const std::set<Var>& extra)
{
    std::set<Var> vars = phi.free_vars();
    vars.insert(extra.begin(), extra.end());
    std::string key = to_smtlib(phi);
    for (const auto& v : vars)
        key += " " + smt_symbol(v);
    ++stats_.queries;
    if (auto it = cache_.find(key); it != cache_.end()) {
        ++stats_.cache_hits;
        return it->second;
    }
    auto t0 = std::chrono::steady_clock::now();
    SmtResult result;
    try {
        result = run_query(phi, vars);
    } catch (const SolverError& e) {
        // Crash or hang: restart with declarations replayed, report Unknown.
        stop();
        result.status = SmtResult::Status::Unknown;
        result.reason = e.what();
    }
    stats_.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    switch (result.status) {
    case SmtResult::Status::Sat: ++stats_.sat; break;
    case SmtResult::Status::Unsat: ++stats_.unsat; break;
    case SmtResult::Status::Unknown: ++stats_.unknown; break;
    }
    if (!result.unknown())
        cache_.emplace(std::move(key), result);
    return result;
}

bool SmtSolver::implies(const Formula& lhs, const Formula& rhs)
{
    return check(lhs && !rhs).unsat();
}

}  // namespace hypdr
