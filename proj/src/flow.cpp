#include "pdmp/flow.hpp"

#include <cmath>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "pdmp/quadrature.hpp"

namespace pdmp {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

// dy/dt = sign * b(y), optionally augmented with d(log J)/dt = sign * a(y).
struct FlowSystem {
  const FlowModel& model;
  double sign;
  bool with_log_cocycle;

  void operator()(const State& y, State& dy, double /*t*/) const
  {
    Point p(model.dim);
    for (std::size_t i = 0; i < model.dim; ++i)
      p[i] = y[i];
    Point b = model.vector_field(p);
    for (std::size_t i = 0; i < model.dim; ++i)
      dy[i] = sign * b[i];
    if (with_log_cocycle)
      dy[model.dim] = sign * model.divergence(p);
  }
};

Point to_point(const State& y, std::size_t dim)
{
  Point p(dim);
  for (std::size_t i = 0; i < dim; ++i)
    p[i] = y[i];
  return p;
}

State integrate_numeric(
  const FlowModel& model, const Point& x, double t, bool with_log_cocycle)
{
  if (!model.vector_field)
    throw PreconditionError("flow model has neither closed form nor vector field");
  if (with_log_cocycle && !model.divergence)
    throw PreconditionError("flow model has neither closed-form cocycle nor divergence");
  State y(model.dim + (with_log_cocycle ? 1 : 0), 0.0);
  for (std::size_t i = 0; i < model.dim; ++i)
    y[i] = x[i];
  if (t == 0.0)
    return y;
  FlowSystem sys {model, t > 0 ? 1.0 : -1.0, with_log_cocycle};
  auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(
    model.ode.absolute, model.ode.relative);
  double span = std::abs(t);
  double dt = std::min(span, 1e-3);
  try {
    odeint::integrate_adaptive(stepper, sys, y, 0.0, span, dt);
  } catch (const std::exception& e) {
    throw NumericError(std::string("ODE integration failed: ") + e.what());
  }
  for (double v : y)
    if (!std::isfinite(v))
      throw NumericError("ODE integration produced a non-finite state");
  return y;
}

double numeric_hit_time(
  const FlowModel& model, const Point& x, Direction direction)
{
  if (!model.inside)
    throw PreconditionError("numeric hitting times need the domain indicator");
  double sign = direction == Direction::Forward ? 1.0 : -1.0;
  FlowSystem sys {model, sign, false};

  State y(model.dim);
  for (std::size_t i = 0; i < model.dim; ++i)
    y[i] = x[i];
  double offset = 0.0;
  if (!model.inside(x)) {
    // On the boundary: either the flow enters E⁰ immediately, or x already
    // lies on the boundary being sought.
    constexpr double probe = 1e-9;
    State z = integrate_numeric(model, x, sign * probe, false);
    if (!model.inside(to_point(z, model.dim)))
      return 0.0;
    y = z;
    offset = probe;
  }

  auto stepper = odeint::make_dense_output(
    model.ode.absolute, model.ode.relative, odeint::runge_kutta_dopri5<State>());
  stepper.initialize(y, 0.0, 1e-3);
  const double horizon = model.hit_search_horizon;
  std::size_t steps = 0;
  try {
    while (stepper.current_time() < horizon) {
      stepper.do_step(sys);
      if (++steps > 10'000'000)
        throw NumericError("hitting-time search exceeded the step budget");
      if (model.inside(to_point(stepper.current_state(), model.dim)))
        continue;
      double lo = stepper.previous_time();
      double hi = stepper.current_time();
      State probe_state(model.dim);
      while (hi - lo > model.hit_time_tolerance) {
        double mid = 0.5 * (lo + hi);
        stepper.calc_state(mid, probe_state);
        if (model.inside(to_point(probe_state, model.dim)))
          lo = mid;
        else
          hi = mid;
        if (mid == lo && mid == hi)
          break;
      }
      return offset + 0.5 * (lo + hi);
    }
  } catch (const NumericError&) {
    throw;
  } catch (const std::exception& e) {
    throw NumericError(std::string("hitting-time integration failed: ") + e.what());
  }
  return kInfinity;
}

} // namespace

HazardSpec zero_hazard()
{
  HazardSpec hz;
  hz.rate = [](const Point&) { return 0.0; };
  hz.cumulative = [](const Point&, double) { return 0.0; };
  hz.inverse_forward = [](const Point&, double) { return kInfinity; };
  hz.identically_zero = true;
  return hz;
}

Point flow_unchecked(const FlowModel& model, const Point& x, double t)
{
  if (t == 0.0)
    return x;
  if (model.analytic_flow)
    return model.analytic_flow(t, x);
  return to_point(integrate_numeric(model, x, t, false), model.dim);
}

Point flow_advance(const FlowModel& model, const Point& x, double t)
{
  if (t == 0.0)
    return x;
  double limit = hit_time(model, x, t > 0 ? Direction::Forward : Direction::Backward);
  double slack = model.hit_time_tolerance + 1e-12 * std::abs(t);
  if (std::abs(t) > limit + slack)
    throw BoundaryCrossingError("trajectory leaves the closure of E at time "
      + std::to_string(t > 0 ? limit : -limit) + " before "
      + std::to_string(t));
  return flow_unchecked(model, x, t);
}

double cocycle(const FlowModel& model, const Point& x, double t)
{
  if (t == 0.0)
    return 1.0;
  if (model.analytic_cocycle)
    return model.analytic_cocycle(t, x);
  State y = integrate_numeric(model, x, t, true);
  return std::exp(y[model.dim]);
}

double hit_time(const FlowModel& model, const Point& x, Direction direction)
{
  if (model.analytic_hit_time)
    return model.analytic_hit_time(x, direction);
  return numeric_hit_time(model, x, direction);
}

double cumulative_hazard(
  const HazardSpec& hz, const FlowModel& model, const Point& x, double t)
{
  require(t >= 0.0, "cumulative_hazard: negative time");
  if (hz.identically_zero || t == 0.0)
    return 0.0;
  if (hz.cumulative)
    return hz.cumulative(x, t);
  if (std::isinf(t)) {
    if (hz.lower_bound > 0.0)
      return kInfinity;
    throw PreconditionError("cumulative_hazard over an infinite horizon needs a closed form");
  }
  std::size_t panels = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(t)));
  return integrate(
    [&](double r) { return hz.rate(flow_unchecked(model, x, -r)); }, 0.0, t,
    panels, 8);
}

double forward_cumulative_hazard(
  const HazardSpec& hz, const FlowModel& model, const Point& x, double t)
{
  require(t >= 0.0, "forward_cumulative_hazard: negative time");
  if (hz.identically_zero || t == 0.0)
    return 0.0;
  if (hz.cumulative && std::isfinite(t))
    return hz.cumulative(flow_unchecked(model, x, t), t);
  std::size_t panels = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(t)));
  return integrate(
    [&](double r) { return hz.rate(flow_unchecked(model, x, r)); }, 0.0, t,
    panels, 8);
}

} // namespace pdmp
