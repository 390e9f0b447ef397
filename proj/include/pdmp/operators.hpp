#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pdmp/grid.hpp"
#include "pdmp/kernel.hpp"

namespace pdmp {

// Telemetry of one characteristic-wise resolvent evaluation.
struct ResolveTelemetry {
  // Mass carried past the grid horizon on characteristics with t₊ = ∞,
  // Σ W_c |I_c(horizon)|.
  double horizon_leak {0.0};
  // Bound on the resolvent mass beyond the horizon, horizon_leak/(λ + q₀).
  double tail_bound {0.0};
  std::size_t pieces {0};

  void merge(const ResolveTelemetry& o)
  {
    horizon_leak += o.horizon_leak;
    tail_bound += o.tail_bound;
    pieces += o.pieces;
  }
};

// Bulk density together with its outgoing trace, the latter evaluated from
// the integral formula instead of by extrapolation.
struct LiftedDensity {
  GridDensity bulk;
  BoundaryDensity plus;
};

/// R(λ,A₀)g + Ψ(λ)g∂ and its Γ⁺ trace, λ ≥ 0. Either source may be null.
/// At λ = 0 this is R₀(g, g∂).
LiftedDensity resolve_sources(const Discretization& disc, double lambda,
  const GridDensity* g, const BoundaryDensity* g_minus,
  ResolveTelemetry* telemetry = nullptr);

GridDensity semigroup_S0(double t, const GridDensity& f, const Discretization& disc);

GridDensity psi_lambda(double lambda, const BoundaryDensity& f_minus,
  const Discretization& disc);
BoundaryDensity trace_plus_psi_lambda(double lambda, const BoundaryDensity& f_minus,
  const Discretization& disc);

GridDensity resolvent_A0(double lambda, const GridDensity& f,
  const Discretization& disc, ResolveTelemetry* telemetry = nullptr);
BoundaryDensity trace_plus_resolvent_A0(double lambda, const GridDensity& f,
  const Discretization& disc);

struct TraceResult {
  BoundaryDensity value;
  std::vector<bool> non_traceable;
  std::size_t flagged {0};
};

// One-sided limit of f·J onto Γ∓ by quadratic extrapolation in s from the
// three nodes nearest the boundary. Falls back to the nearest node value and
// flags the node when the linear and quadratic extrapolants disagree.
TraceResult trace(const GridDensity& f, Side side);

GridDensity apply_B(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc);
BoundaryDensity apply_Psi(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc);
GridDensity apply_B(const LiftedDensity& f, const JumpKernel& kernel,
  const Discretization& disc);
BoundaryDensity apply_Psi(const LiftedDensity& f, const JumpKernel& kernel,
  const Discretization& disc);

LiftedDensity R0_combined(const GridDensity& f, const BoundaryDensity& f_minus,
  const Discretization& disc, ResolveTelemetry* telemetry = nullptr);

struct SourcePair {
  GridDensity bulk;
  BoundaryDensity minus;
  double norm() const { return bulk.norm() + minus.norm(); }
};

SourcePair K_apply(const GridDensity& f, const BoundaryDensity& f_minus,
  const JumpKernel& kernel, const Discretization& disc);

// Jump step applied to a lifted density: (B f, Ψ f).
SourcePair jump_sources(const LiftedDensity& f, const JumpKernel& kernel,
  const Discretization& disc);

//==============================================================================
// Transport checks
//==============================================================================

struct TransportDifference {
  GridDensity value;       // T g = -(1/J) dF/ds at valid nodes
  std::vector<bool> valid; // false on the first node of each characteristic
};

// First-order backward difference along characteristics.
TransportDifference transport_backward_difference(const GridDensity& g);

struct KernelResidual {
  double residual {0.0};  // Σ_valid W |λg - (Tg - qg)|
  double relative {0.0};  // residual / ‖g‖
};

// Residual of (λ - A)Ψ(λ)f∂ = 0 with A = T - q.
KernelResidual psi_kernel_residual(double lambda, const BoundaryDensity& f_minus,
  const Discretization& disc);

struct GreenResult {
  double bulk {0.0};  // ∫ T_max f dm
  double minus {0.0}; // ∫ Tr⁻ f dm⁻
  double plus {0.0};  // ∫ Tr⁺ f dm⁺
  double residual {0.0};
  std::size_t flagged {0};
};

// Green's identity for a smooth test function: T_max f by fourth-order
// central differences of the exact function along characteristics, traces by
// extrapolation of the sampled density.
GreenResult green_identity(const std::function<double(const Point&)>& f,
  const Discretization& disc);

} // namespace pdmp
