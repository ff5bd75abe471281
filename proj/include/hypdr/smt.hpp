#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "hypdr/formula.hpp"

namespace hypdr {

/// SMT-LIB v2 symbol for a variable copy. Every symbol is quoted so model
/// names can never clash with SMT-LIB keywords or with fresh copies.
std::string smt_symbol(const Var& v);
std::string to_smtlib(const Term& t);
std::string to_smtlib(const Formula& phi);

struct SmtResult {
    enum class Status { Sat, Unsat, Unknown };
    Status status = Status::Unknown;
    Valuation model;     // populated on Sat
    std::string reason;  // populated on Unknown

    bool sat() const { return status == Status::Sat; }
    bool unsat() const { return status == Status::Unsat; }
    bool unknown() const { return status == Status::Unknown; }
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Default solver command line: `$HYPDR_SOLVER` if set, else `z3 -in`.
std::string default_solver_command();

/// A persistent SMT-LIB v2 solver process (logic QF_NRA) driven over its
/// standard input/output. Each query runs inside push/pop; declarations
/// live at the base level and are replayed if the process has to be
/// restarted.
class SmtSolver {
public:
    explicit SmtSolver(std::string command = default_solver_command(), int timeout_ms = 10000);
    ~SmtSolver();
    SmtSolver(const SmtSolver&) = delete;
    SmtSolver& operator=(const SmtSolver&) = delete;

    /// Satisfiability of `phi`. On Sat the model binds every free variable
    /// of `phi` plus every variable in `extra`.
    SmtResult check(const Formula& phi, const std::set<Var>& extra = {});

    /// ⊨ lhs ⇒ rhs, i.e. lhs ∧ ¬rhs is Unsat. Unknown counts as "not proved".
    bool implies(const Formula& lhs, const Formula& rhs);
    bool satisfiable(const Formula& phi) { return check(phi).sat(); }

    struct Stats {
        std::size_t queries = 0;
        std::size_t cache_hits = 0;
        std::size_t sat = 0;
        std::size_t unsat = 0;
        std::size_t unknown = 0;
        std::size_t restarts = 0;
        double seconds = 0.0;
    };
    const Stats& stats() const { return stats_; }
    const std::string& command() const { return command_; }
    int timeout_ms() const { return timeout_ms_; }

private:
    void start();
    void stop();
    void send(const std::string& text);
    std::string read_response(std::chrono::milliseconds budget);
    void declare(const Var& v);
    SmtResult run_query(const Formula& phi, const std::set<Var>& vars);

    std::string command_;
    int timeout_ms_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::set<Var> declared_;
    std::map<std::string, SmtResult> cache_;
    Stats stats_;
};

}  // namespace hypdr
