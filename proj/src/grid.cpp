#include "pdmp/grid.hpp"

#include <algorithm>
#include <cmath>

// pchip.hpp in Boost 1.74 calls isnan unqualified.
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include "pdmp/quadrature.hpp"

namespace pdmp {

namespace {

struct AnchorSample {
  Point point;
  double weight;
  std::size_t family;
  std::size_t member;
  bool entering;
};

std::vector<AnchorSample> expand_anchors(
  const FlowModel& model, const GridResolution& res)
{
  std::vector<AnchorSample> out;
  for (std::size_t f = 0; f < model.anchors.size(); ++f) {
    const auto& fam = model.anchors[f];
    if (fam.kind == AnchorFamily::Kind::Discrete) {
      if (fam.points.size() != fam.weights.size())
        throw ConfigError("anchor family '" + fam.label
          + "': points and weights differ in length");
      for (std::size_t i = 0; i < fam.points.size(); ++i)
        out.push_back({fam.points[i], fam.weights[i], f, i, fam.entering});
    } else {
      if (!(fam.upper > fam.lower) || !fam.point || !fam.density)
        throw ConfigError("anchor family '" + fam.label + "': bad segment");
      auto breaks = graded_breaks(fam.lower, fam.upper, res.transverse_panels, 0,
        false, false);
      auto rule = composite_gauss_legendre(breaks, res.transverse_order);
      for (std::size_t i = 0; i < rule.size(); ++i) {
        double u = rule.nodes[i];
        out.push_back(
          {fam.point(u), rule.weights[i] * fam.density(u), f, i, fam.entering});
      }
    }
  }
  return out;
}

bool finite_point(const Point& p)
{
  for (double v : p)
    if (!std::isfinite(v))
      return false;
  return true;
}

} // namespace

std::size_t CharGrid::panel_of(std::size_t c, double s_value) const
{
  const auto& b = chars[c].breaks;
  auto it = std::upper_bound(b.begin(), b.end(), s_value);
  std::ptrdiff_t p = (it - b.begin()) - 1;
  p = std::clamp<std::ptrdiff_t>(p, 0, static_cast<std::ptrdiff_t>(b.size()) - 2);
  return static_cast<std::size_t>(p);
}

CharGrid build_char_grid(const FlowModel& model, const GridResolution& res)
{
  if (res.panel_order < 1 || res.transverse_order < 1 || res.transverse_panels < 1)
    throw ConfigError("grid resolution must be positive");
  if (!(res.horizon > 0.0))
    throw ConfigError("grid horizon must be positive");
  if (res.panels_per_characteristic == 0 && !(res.max_panel_length > 0.0))
    throw ConfigError("either panels_per_characteristic or max_panel_length must be set");
  if (model.anchors.empty())
    throw ConfigError("flow model has no characteristic anchors");

  CharGrid grid;
  grid.dim = model.dim;
  grid.resolution = res;

  const auto& ref = gauss_legendre(res.panel_order);
  grid.bary_.resize(res.panel_order);
  for (std::size_t k = 0; k < res.panel_order; ++k) {
    double x = ref.nodes[k];
    double w = std::sqrt(std::max(0.0, (1.0 - x * x) * ref.weights[k]));
    grid.bary_[k] = (k % 2 == 0) ? w : -w;
  }

  for (const auto& a : expand_anchors(model, res)) {
    if (!finite_point(a.point) || !(a.weight >= 0.0) || !std::isfinite(a.weight))
      throw ConfigError("anchor with non-finite coordinates or weight");
    if (a.weight == 0.0)
      continue;
    Characteristic ch;
    ch.anchor = a.point;
    ch.entering = a.entering;
    ch.weight = a.weight;
    ch.family = a.family;
    ch.member = a.member;

    double tp = hit_time(model, a.point, Direction::Forward);
    if (a.entering) {
      double tm = hit_time(model, a.point, Direction::Backward);
      if (tm > 1e-9)
        throw ConfigError("entering anchor does not lie on the incoming boundary");
      // Grazing points (on both Γ⁻ and Γ⁺) are not part of E.
      if (tp <= 0.0)
        continue;
      ch.s_begin = 0.0;
    } else {
      ch.s_begin = -res.horizon;
    }
    ch.exits = std::isfinite(tp);
    ch.s_end = ch.exits ? tp : res.horizon;
    if (!(ch.s_end > ch.s_begin))
      continue;

    double len = ch.s_end - ch.s_begin;
    std::size_t panels = res.panels_per_characteristic;
    if (panels == 0)
      panels = std::max<std::size_t>(1,
        static_cast<std::size_t>(std::ceil(len / res.max_panel_length - 1e-9)));
    ch.breaks = graded_breaks(ch.s_begin, ch.s_end, panels, res.grading_levels,
      ch.entering, ch.exits);

    std::size_t c = grid.chars.size();
    ch.first = grid.s.size();
    for (std::size_t p = 0; p + 1 < ch.breaks.size(); ++p) {
      auto rule = gauss_legendre(res.panel_order, ch.breaks[p], ch.breaks[p + 1]);
      for (std::size_t i = 0; i < rule.size(); ++i) {
        double s = rule.nodes[i];
        Point x = flow_unchecked(model, a.point, s);
        double J = cocycle(model, a.point, s);
        double w = a.weight * rule.weights[i] * J;
        if (!finite_point(x) || !std::isfinite(w) || w < 0.0)
          throw ConfigError("characteristic node with non-finite data");
        grid.s.push_back(s);
        grid.position.push_back(x);
        grid.weight.push_back(w);
        grid.cocycle.push_back(J);
        grid.t_minus.push_back(ch.entering ? s - ch.s_begin : kInfinity);
        grid.t_plus.push_back(ch.exits ? ch.s_end - s : kInfinity);
        grid.char_of.push_back(c);
      }
    }
    ch.count = grid.s.size() - ch.first;
    ch.cocycle_end = cocycle(model, a.point, ch.s_end);

    if (ch.entering) {
      ch.minus_node = static_cast<std::ptrdiff_t>(grid.minus.size());
      grid.minus.position.push_back(a.point);
      grid.minus.weight.push_back(a.weight);
      grid.minus.characteristic.push_back(c);
    }
    if (ch.exits) {
      ch.plus_node = static_cast<std::ptrdiff_t>(grid.plus.size());
      grid.plus.position.push_back(flow_unchecked(model, a.point, ch.s_end));
      grid.plus.weight.push_back(a.weight * ch.cocycle_end);
      grid.plus.characteristic.push_back(c);
    }
    grid.chars.push_back(std::move(ch));
  }
  if (grid.chars.empty())
    throw ConfigError("characteristic grid is empty");
  return grid;
}

double interpolate_along(const CharGrid& grid, std::size_t c,
  const std::vector<double>& F, double s_value)
{
  const auto& ch = grid.chars[c];
  if (s_value < ch.s_begin || s_value > ch.s_end)
    return 0.0;
  const std::size_t n = grid.resolution.panel_order;
  std::size_t p = grid.panel_of(c, s_value);
  std::size_t base = ch.first + p * n;
  double a = ch.breaks[p];
  double b = ch.breaks[p + 1];
  double t = (2.0 * s_value - (a + b)) / (b - a);
  const auto& ref = gauss_legendre(n);
  const auto& bw = grid.barycentric();

  double num = 0.0;
  double den = 0.0;
  bool all_nonnegative = true;
  for (std::size_t k = 0; k < n; ++k) {
    double fk = F[base + k];
    all_nonnegative = all_nonnegative && fk >= 0.0;
    double d = t - ref.nodes[k];
    if (d == 0.0)
      return fk;
    double r = bw[k] / d;
    num += r * fk;
    den += r;
  }
  double value = num / den;
  if (value >= 0.0 || !all_nonnegative)
    return value;

  // Lagrange undershoot on nonnegative data: monotone cubic instead.
  double lo = grid.s[base];
  double hi = grid.s[base + n - 1];
  if (s_value <= lo)
    return F[base];
  if (s_value >= hi)
    return F[base + n - 1];
  if (n < 4) {
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (s_value <= grid.s[base + k + 1]) {
        double th = (s_value - grid.s[base + k]) / (grid.s[base + k + 1] - grid.s[base + k]);
        return (1.0 - th) * F[base + k] + th * F[base + k + 1];
      }
    }
    return F[base + n - 1];
  }
  std::vector<double> xs(grid.s.begin() + base, grid.s.begin() + base + n);
  std::vector<double> ys(F.begin() + base, F.begin() + base + n);
  boost::math::interpolators::pchip<std::vector<double>> spline(
    std::move(xs), std::move(ys));
  return std::max(0.0, spline(s_value));
}

//==============================================================================
// Discretization
//==============================================================================

Discretization::Discretization(FlowModel flow, HazardSpec hazard, CharGrid grid)
  : flow_ {std::move(flow)}, hazard_ {std::move(hazard)}, grid_ {std::move(grid)}
{
  const std::size_t n = grid_.size();
  rate_.resize(n);
  node_hazard_.resize(n);
  end_hazard_.resize(grid_.chars.size());
  for (std::size_t j = 0; j < n; ++j) {
    double q = hazard_.identically_zero ? 0.0 : hazard_.rate(grid_.position[j]);
    if (!(q >= 0.0) || !std::isfinite(q))
      throw ConfigError("hazard rate is negative or non-finite at a grid node");
    rate_[j] = q;
  }
  for (std::size_t c = 0; c < grid_.chars.size(); ++c) {
    const auto& ch = grid_.chars[c];
    for (std::size_t j = ch.first; j < ch.first + ch.count; ++j)
      node_hazard_[j] = char_hazard(c, grid_.s[j]);
    end_hazard_[c] = char_hazard(c, ch.s_end);
  }
}

double Discretization::char_hazard(std::size_t c, double s_value) const
{
  if (hazard_.identically_zero)
    return 0.0;
  const auto& ch = grid_.chars[c];
  double span = s_value - ch.s_begin;
  if (span <= 0.0)
    return 0.0;
  Point x = flow_unchecked(flow_, ch.anchor, s_value);
  return cumulative_hazard(hazard_, flow_, x, span);
}

//==============================================================================
// Densities
//==============================================================================

GridDensity GridDensity::zeros(const CharGrid& g)
{
  return {&g, std::vector<double>(g.size(), 0.0)};
}

GridDensity GridDensity::sample(const CharGrid& g,
  const std::function<double(const Point&)>& f)
{
  GridDensity d = zeros(g);
  for (std::size_t j = 0; j < g.size(); ++j)
    d.values[j] = f(g.position[j]);
  return d;
}

double GridDensity::norm() const
{
  double sum = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j)
    sum += std::abs(values[j]) * grid->weight[j];
  return sum;
}

double GridDensity::integral() const
{
  double sum = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j)
    sum += values[j] * grid->weight[j];
  return sum;
}

bool GridDensity::nonnegative() const
{
  return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0; });
}

BoundaryDensity BoundaryDensity::zeros(const CharGrid& g, Side side)
{
  std::size_t n = side == Side::Minus ? g.minus.size() : g.plus.size();
  return {&g, side, std::vector<double>(n, 0.0)};
}

BoundaryDensity BoundaryDensity::sample(const CharGrid& g, Side side,
  const std::function<double(const Point&)>& f)
{
  BoundaryDensity d = zeros(g, side);
  const auto& nodes = d.nodes();
  for (std::size_t k = 0; k < nodes.size(); ++k)
    d.values[k] = f(nodes.position[k]);
  return d;
}

double BoundaryDensity::norm() const
{
  const auto& w = nodes().weight;
  double sum = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k)
    sum += std::abs(values[k]) * w[k];
  return sum;
}

double BoundaryDensity::integral() const
{
  const auto& w = nodes().weight;
  double sum = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k)
    sum += values[k] * w[k];
  return sum;
}

double l1_distance(const GridDensity& a, const GridDensity& b)
{
  require(a.grid == b.grid, "l1_distance: densities live on different grids");
  double sum = 0.0;
  for (std::size_t j = 0; j < a.values.size(); ++j)
    sum += std::abs(a.values[j] - b.values[j]) * a.grid->weight[j];
  return sum;
}

double l1_distance(const BoundaryDensity& a, const BoundaryDensity& b)
{
  require(a.grid == b.grid && a.side == b.side,
    "l1_distance: boundary densities do not match");
  const auto& w = a.nodes().weight;
  double sum = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k)
    sum += std::abs(a.values[k] - b.values[k]) * w[k];
  return sum;
}

} // namespace pdmp
