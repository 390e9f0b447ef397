#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pdmp/grid.hpp"
#include "pdmp/kernel.hpp"
#include "pdmp/operators.hpp"

namespace pdmp {

struct SeriesConfig {
  double lambda {1.0};
  std::size_t max_terms {200};
  double term_tol {1e-12}; // relative to ‖f‖
  bool record_defect {true};
};

enum class Verdict { HonestEvidence, DishonestEvidence, Inconclusive };
std::string to_string(Verdict v);

struct HonestyThresholds {
  double floor {1e-8};          // honest once the iterate norm is below floor·‖input‖
  double stabilization {1e-6};  // dishonest when the relative change over `window` steps is below this
  std::size_t window {10};
};

struct Diagnostics {
  double lambda {1.0};
  double input_norm {0.0};
  std::vector<double> term_norms;      // ‖n-th series term‖
  std::vector<double> defect_sequence; // ‖iteration^n u‖, n = 0, 1, ...
  std::vector<double> partial_mass;    // λ‖R_N u‖ for N = 0, 1, ...
  double mass_defect {0.0};            // ‖u‖ - λ‖R_N u‖ at the final N
  double norm_estimate_of_PsiPsi {std::numeric_limits<double>::quiet_NaN()};
  double spectral_radius {std::numeric_limits<double>::quiet_NaN()};
  Verdict verdict {Verdict::Inconclusive};
  double floor_estimate {0.0};
  std::size_t terms_used {0};
  bool hit_max_terms {false};
  std::string stop_reason;
  ResolveTelemetry telemetry;
  HonestyThresholds thresholds;
};

Verdict classify_decay(const std::vector<double>& sequence, double input_norm,
  const HonestyThresholds& thresholds);

struct SeriesResult {
  GridDensity value;
  Diagnostics diagnostics;
};

/// Truncated Σ (R(λ,A₀)B + Ψ(λ)Ψ)ⁿ R(λ,A₀) f.
SeriesResult dyson_resolvent_G(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc, const SeriesConfig& cfg,
  const HonestyThresholds& thresholds = {});

/// Truncated R(λ,A₀)f + Σ Ψ(λ)(ΨΨ(λ))ⁿ Ψ R(λ,A₀)f. Requires B = 0.
SeriesResult resolvent_G_Psi(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc, const SeriesConfig& cfg,
  const HonestyThresholds& thresholds = {});

/// Norms of iterates of the jump-resolvent map on (u, f∂). With u = 0 and
/// B = 0 these are ‖(ΨΨ(λ))ⁿ f∂‖.
Diagnostics honesty_power_decay(const GridDensity* u, const BoundaryDensity* f_minus,
  const JumpKernel& kernel, const Discretization& disc, double lambda,
  std::size_t n_max, const HonestyThresholds& thresholds = {});

struct PsiPsiNorm {
  double norm {0.0};            // weighted L¹ operator norm (max column)
  double spectral_radius {0.0}; // power-iteration estimate
  std::size_t argmax {0};
};

PsiPsiNorm norm_PsiPsi(double lambda, const JumpKernel& kernel,
  const Discretization& disc);

struct EvolveOptions {
  SeriesConfig series;     // lambda is overwritten by steps / t_final
  std::size_t record_stride {1}; // 0 keeps only the initial and final densities
  // Called at every step k = 0..steps with t_k and u_k.
  std::function<void(std::size_t, double, const GridDensity&)> observer;
};

struct EvolveResult {
  double dt {0.0};
  std::vector<double> times;
  std::vector<double> mass;          // ∫ u_k dm at every step
  std::vector<double> record_times;
  std::vector<GridDensity> records;  // densities at the stride
  bool inconclusive {false};
  bool positive {true};
  std::size_t max_terms_used {0};
  double horizon_leak {0.0};
};

/// u_{k+1} = λ R(λ,G) u_k with λ = steps / t_final.
EvolveResult evolve(const GridDensity& u0, double t_final, std::size_t steps,
  const JumpKernel& kernel, const Discretization& disc, const EvolveOptions& opts = {});

struct InequalityReport {
  bool pass {false};
  double max_violation {0.0}; // max(lhs - rhs); ≤ slack when passing
  std::string where;          // "bulk", "minus" or "plus"
  std::ptrdiff_t index {-1};
  Point position;
  double slack {0.0};
};

/// B(R₀(f,f∂)) ≤ f and Ψ(R₀(f,f∂)) ≤ f∂ nodewise, with slack
/// slack·max(1, |rhs|). f may vanish when the kernel has no B part.
InequalityReport closure_qi_check(const GridDensity& f, const BoundaryDensity& f_minus,
  const JumpKernel& kernel, const Discretization& disc, double slack = 1e-10);

struct Cpert1Report {
  bool pass {false};
  double min_t_plus {kInfinity};
  double threshold {1e-6};
  std::ptrdiff_t argmin {-1};
  Point position;
};

Cpert1Report cpert1_check(const Discretization& disc, double threshold = 1e-6);

/// H(f₊)(φ_{-t₋}x) J_{-t₋}(x) e^{-∫q} 1{t₋<∞} ≤ f₊(x) on Γ⁺.
InequalityReport cperturb2_check(const BoundaryDensity& f_plus,
  const JumpKernel& kernel, const Discretization& disc, double slack = 1e-10);

} // namespace pdmp
