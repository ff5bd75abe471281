#include "hypdr/ode.hpp"

#include <cmath>
#include <string>

namespace hypdr {

VectorField::VectorField(const Ode& ode, const std::vector<Var>& order) : order_(order)
{
    auto field = ode.field();
    for (const auto& v : order_) {
        auto it = field.find(v);
        rhs_.emplace_back(it == field.end() ? Polynomial{} : it->second, order_);
    }
}

void VectorField::operator()(std::span<const double> x, std::span<double> dx) const
{
    for (std::size_t i = 0; i < rhs_.size(); ++i)
        dx[i] = rhs_[i](x);
}

std::vector<double> VectorField::to_state(const Valuation& sigma) const
{
    std::vector<double> s;
    s.reserve(order_.size());
    for (const auto& v : order_)
        s.push_back(sigma.at(v));
    return s;
}

Valuation VectorField::to_valuation(std::span<const double> state) const
{
    Valuation out;
    for (std::size_t i = 0; i < order_.size(); ++i)
        out.set(order_[i], state[i]);
    return out;
}

void rk4_step(const VectorField& f, std::vector<double>& x, double h)
{
    const std::size_t n = x.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    f(x, k1);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = x[i] + 0.5 * h * k1[i];
    f(tmp, k2);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = x[i] + 0.5 * h * k2[i];
    f(tmp, k3);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = x[i] + h * k3[i];
    f(tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

int simulate(const VectorField& f, const Valuation& start, const SimParams& params, Direction dir,
             const std::function<bool(int, std::span<const double>)>& visit)
{
    if (params.h <= 0.0 || params.horizon < 1)
        throw std::invalid_argument("simulation needs h > 0 and T >= 1");
    std::vector<double> x = f.to_state(start);
    const double step = dir == Direction::Forward ? params.h : -params.h;
    for (int i = 0; i < params.horizon; ++i) {
        if (i > 0) {
            rk4_step(f, x, step);
            for (double c : x)
                if (!std::isfinite(c) || std::fabs(c) > 1e12)
                    throw SimulationDiverged("numeric overflow after " + std::to_string(i) + " steps");
        }
        if (!visit(i, x))
            return i + 1;
    }
    return params.horizon;
}

Valuation Trajectory::at(std::size_t i) const
{
    Valuation out;
    for (std::size_t k = 0; k < vars.size(); ++k)
        out.set(vars[k], samples.at(i)[k]);
    return out;
}

std::string Trajectory::dump() const
{
    std::string out;
    const double sign = direction == Direction::Forward ? 1.0 : -1.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out += format_number(i == 0 ? 0.0 : sign * h * static_cast<double>(i));
        for (double c : samples[i])
            out += "," + format_number(c);
        out += "\n";
    }
    return out;
}

Trajectory simulate_ode(const Ode& ode, const std::vector<Var>& vars, const Valuation& start,
                        const SimParams& params, Direction dir)
{
    VectorField f(ode, vars);
    Trajectory traj{vars, params.h, dir, {}};
    traj.samples.reserve(static_cast<std::size_t>(params.horizon));
    simulate(f, start, params, dir, [&](int, std::span<const double> x) {
        traj.samples.emplace_back(x.begin(), x.end());
        return true;
    });
    return traj;
}

}  // namespace hypdr
