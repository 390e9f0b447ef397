#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pdmp/common.hpp"

namespace pdmp {

enum class Direction { Forward, Backward };

// Parametrized family of characteristic anchors. Entering families are
// pieces of the incoming boundary Γ⁻ together with the density of m⁻;
// interior families anchor trajectories that never meet Γ⁻ (t₋ = ∞), with
// the transverse measure that disintegrates m along them.
struct AnchorFamily {
  enum class Kind { Discrete, Segment };

  std::string label;
  Kind kind {Kind::Discrete};
  bool entering {true};

  // Discrete: explicit points with their transverse weights.
  std::vector<Point> points;
  std::vector<double> weights;

  // Segment: u in (lower, upper) maps to point(u), carrying density(u) du.
  double lower {0.0};
  double upper {0.0};
  std::function<Point(double)> point;
  std::function<double(double)> density;
};

struct OdeTolerances {
  double absolute {1e-10};
  double relative {1e-8};
};

// Deterministic skeleton of the process: vector field b, its divergence a,
// optional closed forms, and the boundary description.
struct FlowModel {
  std::size_t dim {0};
  std::function<Point(const Point&)> vector_field;
  std::function<double(const Point&)> divergence;

  // Optional closed forms; the ODE integrator is used when absent.
  std::function<Point(double, const Point&)> analytic_flow;
  std::function<double(double, const Point&)> analytic_cocycle;
  std::function<double(const Point&, Direction)> analytic_hit_time;

  // Indicator of the open set E⁰, used by the numeric hitting-time solver.
  std::function<bool(const Point&)> inside;

  std::vector<AnchorFamily> anchors;

  OdeTolerances ode;
  double hit_search_horizon {1e3};
  double hit_time_tolerance {1e-12};
};

// Jump rate q and its cumulative integral along backward trajectories.
struct HazardSpec {
  std::function<double(const Point&)> rate;

  // Optional closed form of  ∫₀ᵗ q(φ₋ᵣ(x)) dr.
  std::function<double(const Point&, double)> cumulative;

  // Optional closed-form inverse of the forward cumulative hazard: the t with
  // ∫₀ᵗ q(φᵣ(x)) dr = e, or +∞ when the total hazard never reaches e.
  std::function<double(const Point&, double)> inverse_forward;

  // Essential infimum of q (q₀); certifies tails on infinite characteristics.
  double lower_bound {0.0};
  bool identically_zero {false};
};

HazardSpec zero_hazard();

/// φ_t(x). Throws BoundaryCrossingError when the trajectory leaves the
/// closure of E within [0, t], NumericError on integrator failure.
Point flow_advance(const FlowModel& model, const Point& x, double t);

// φ_t(x) without the boundary check; closed form when available.
Point flow_unchecked(const FlowModel& model, const Point& x, double t);

double cocycle(const FlowModel& model, const Point& x, double t);

// t₊(x) (forward) or t₋(x) (backward); 0 on the respective boundary and +∞
// when the trajectory never reaches it within the search horizon.
double hit_time(const FlowModel& model, const Point& x, Direction direction);

// ∫₀ᵗ q(φ₋ᵣ(x)) dr, closed form when available, else Gauss–Legendre.
double cumulative_hazard(const HazardSpec& hz, const FlowModel& model,
  const Point& x, double t);

// ∫₀ᵗ q(φᵣ(x)) dr.
double forward_cumulative_hazard(const HazardSpec& hz, const FlowModel& model,
  const Point& x, double t);

} // namespace pdmp
