#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "pdmp/common.hpp"
#include "pdmp/flow.hpp"

namespace pdmp {

struct GridResolution {
  std::size_t panel_order {8};
  // Fixed panel count per characteristic; 0 selects max_panel_length.
  std::size_t panels_per_characteristic {0};
  double max_panel_length {1.0};
  std::size_t grading_levels {3};
  // Arc-time cut for characteristics that never reach Γ⁺ (or Γ⁻).
  double horizon {50.0};
  std::size_t transverse_panels {8};
  std::size_t transverse_order {8};
};

// One characteristic: anchor a, arc-time range [s_begin, s_end], and the
// contiguous block of bulk nodes φ_s(a) on it.
struct Characteristic {
  Point anchor;
  bool entering {true};
  double weight {0.0}; // transverse weight W_c (m⁻ mass of the anchor cell)
  double s_begin {0.0};
  double s_end {0.0};
  bool exits {false};  // s_end = t₊(anchor) < ∞
  std::vector<double> breaks;
  std::size_t first {0};
  std::size_t count {0};
  std::ptrdiff_t minus_node {-1};
  std::ptrdiff_t plus_node {-1};
  double cocycle_end {1.0};
  std::size_t family {0};
  std::size_t member {0}; // index within the anchor family
};

struct BoundaryNodes {
  std::vector<Point> position;
  std::vector<double> weight;
  std::vector<std::size_t> characteristic;
  std::size_t size() const { return position.size(); }
};

class CharGrid {
public:
  std::size_t dim {0};
  GridResolution resolution;
  std::vector<Characteristic> chars;

  // Bulk nodes.
  std::vector<double> s;
  std::vector<Point> position;
  std::vector<double> weight;
  std::vector<double> cocycle; // J_s(anchor)
  std::vector<double> t_minus;
  std::vector<double> t_plus;
  std::vector<std::size_t> char_of;

  BoundaryNodes minus;
  BoundaryNodes plus;

  std::size_t size() const { return s.size(); }

  // Panel containing arc-time s on characteristic c (clamped to the range).
  std::size_t panel_of(std::size_t c, double s_value) const;
  std::size_t panel_count(std::size_t c) const
  {
    return chars[c].breaks.size() - 1;
  }

  // Reference barycentric weights for the panel rule.
  const std::vector<double>& barycentric() const { return bary_; }

private:
  friend CharGrid build_char_grid(const FlowModel&, const GridResolution&);
  std::vector<double> bary_;
};

/// Characteristic-coordinate quadrature of E. Throws ConfigError when the
/// anchor families do not describe a usable geometry.
CharGrid build_char_grid(const FlowModel& model, const GridResolution& res);

// Interpolate the characteristic density F (nodal values F_j) of
// characteristic c at arc-time s. Zero outside [s_begin, s_end].
double interpolate_along(const CharGrid& grid, std::size_t c,
  const std::vector<double>& F, double s_value);

//==============================================================================
// Discretization: flow + hazard + grid, with per-node hazard data cached.
//==============================================================================

class Discretization {
public:
  Discretization(FlowModel flow, HazardSpec hazard, CharGrid grid);
  // Densities keep a pointer to grid(); the object must stay put.
  Discretization(const Discretization&) = delete;
  Discretization& operator=(const Discretization&) = delete;

  const FlowModel& flow() const { return flow_; }
  const HazardSpec& hazard() const { return hazard_; }
  const CharGrid& grid() const { return grid_; }

  // q at bulk nodes.
  const std::vector<double>& rate() const { return rate_; }
  // Λ_c(s_j) = ∫_{s_begin}^{s_j} q(φ_u(a)) du at bulk nodes.
  const std::vector<double>& node_hazard() const { return node_hazard_; }
  // Λ_c at arbitrary arc-time on characteristic c.
  double char_hazard(std::size_t c, double s_value) const;
  double end_hazard(std::size_t c) const { return end_hazard_[c]; }

private:
  FlowModel flow_;
  HazardSpec hazard_;
  CharGrid grid_;
  std::vector<double> rate_;
  std::vector<double> node_hazard_;
  std::vector<double> end_hazard_;
};

//==============================================================================
// Densities
//==============================================================================

struct GridDensity {
  const CharGrid* grid {nullptr};
  std::vector<double> values;

  static GridDensity zeros(const CharGrid& g);
  static GridDensity sample(const CharGrid& g,
    const std::function<double(const Point&)>& f);

  double norm() const;     // Σ |v_j| w_j
  double integral() const; // Σ v_j w_j
  bool nonnegative() const;
};

enum class Side { Minus, Plus };

struct BoundaryDensity {
  const CharGrid* grid {nullptr};
  Side side {Side::Minus};
  std::vector<double> values;

  static BoundaryDensity zeros(const CharGrid& g, Side side);
  static BoundaryDensity sample(const CharGrid& g, Side side,
    const std::function<double(const Point&)>& f);

  const BoundaryNodes& nodes() const
  {
    return side == Side::Minus ? grid->minus : grid->plus;
  }
  double norm() const;
  double integral() const;
};

// L¹ norm of a - b on the shared grid.
double l1_distance(const GridDensity& a, const GridDensity& b);
double l1_distance(const BoundaryDensity& a, const BoundaryDensity& b);

} // namespace pdmp
