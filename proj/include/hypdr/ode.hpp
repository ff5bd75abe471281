#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hypdr/model.hpp"
#include "hypdr/polynomial.hpp"

namespace hypdr {

struct SimParams {
    double h = 1e-3;               // RK4 step, seconds
    int horizon = 20000;           // number of samples T
    double eps_eval = 1e-9;        // tolerance when evaluating formulas at samples
};

class SimulationDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Direction { Forward, Backward };

/// A polynomial vector field compiled against a fixed variable order.
class VectorField {
public:
    VectorField(const Ode& ode, const std::vector<Var>& order);

    void operator()(std::span<const double> x, std::span<double> dx) const;
    std::size_t dimension() const { return rhs_.size(); }
    const std::vector<Var>& order() const { return order_; }

    std::vector<double> to_state(const Valuation& sigma) const;
    Valuation to_valuation(std::span<const double> state) const;

private:
    std::vector<Var> order_;
    std::vector<CompiledPolynomial> rhs_;
};

/// One classical RK4 step of size h (negative h integrates backwards).
void rk4_step(const VectorField& f, std::vector<double>& x, double h);

/// Samples σ_0 … σ_{T−1} at spacing h; σ_0 is the start. The backward
/// direction integrates the time-inverted field −f. `visit` sees every
/// sample in order and may stop the integration by returning false.
/// Returns the number of samples visited.
int simulate(const VectorField& f, const Valuation& start, const SimParams& params, Direction dir,
             const std::function<bool(int, std::span<const double>)>& visit);

struct Trajectory {
    std::vector<Var> vars;
    double h = 0.0;
    Direction direction = Direction::Forward;
    std::vector<std::vector<double>> samples;

    Valuation at(std::size_t i) const;
    /// Line-delimited `t,x1,…,xn` records.
    std::string dump() const;
};

Trajectory simulate_ode(const Ode& ode, const std::vector<Var>& vars, const Valuation& start,
                        const SimParams& params, Direction dir);

}  // namespace hypdr
