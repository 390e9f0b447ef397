#include "pdmp/operators.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

// pchip.hpp in Boost 1.74 calls isnan unqualified.
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include "pdmp/quadrature.hpp"

namespace pdmp {

namespace {

constexpr std::size_t kSegmentOrder = 8;
// e^{-46} < 1e-19: pieces damped beyond this contribute nothing.
constexpr double kNegligibleExponent = 46.0;

std::vector<double> char_density(const GridDensity& f)
{
  std::vector<double> F(f.values.size());
  for (std::size_t j = 0; j < F.size(); ++j)
    F[j] = f.values[j] * f.grid->cocycle[j];
  return F;
}

bool zero_on(const std::vector<double>& F, const Characteristic& ch)
{
  for (std::size_t j = ch.first; j < ch.first + ch.count; ++j)
    if (F[j] != 0.0)
      return false;
  return true;
}

// ∫_a^b exp(-λ(b-r) - (Λ(b) - Λ(r))) F(r) dr on characteristic c.
// Monotone cubic through every node of one characteristic, held constant
// between the end nodes and the characteristic ends. Each resolvent step
// only shifts data by about 1/λ, and panel-local Lagrange stencils are not
// stable under many such small shifts.
class CharSpline {
public:
  CharSpline(const CharGrid& grid, std::size_t c, const std::vector<double>& F)
  {
    const auto& ch = grid.chars[c];
    std::vector<double> xs(grid.s.begin() + ch.first, grid.s.begin() + ch.first + ch.count);
    std::vector<double> ys(F.begin() + ch.first, F.begin() + ch.first + ch.count);
    lo_ = xs.front();
    hi_ = xs.back();
    f_lo_ = ys.front();
    f_hi_ = ys.back();
    if (xs.size() >= 4)
      spline_.emplace(std::move(xs), std::move(ys));
    else
      linear_ = {std::move(xs), std::move(ys)};
  }

  double operator()(double r) const
  {
    if (r <= lo_)
      return f_lo_;
    if (r >= hi_)
      return f_hi_;
    if (spline_)
      return (*spline_)(r);
    const auto& [xs, ys] = linear_;
    std::size_t k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), r) - xs.begin());
    double th = (r - xs[k - 1]) / (xs[k] - xs[k - 1]);
    return (1.0 - th) * ys[k - 1] + th * ys[k];
  }

private:
  double lo_ {0.0}, hi_ {0.0}, f_lo_ {0.0}, f_hi_ {0.0};
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> spline_;
  std::pair<std::vector<double>, std::vector<double>> linear_;
};

double segment(const Discretization& disc, std::size_t c,
  const CharSpline& F, double lambda, double a, double b,
  double La, double Lb, std::size_t& pieces)
{
  if (!(b > a))
    return 0.0;
  const bool hazard_free = disc.hazard().identically_zero;
  double stiffness = lambda * (b - a) + std::max(0.0, Lb - La);
  auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(stiffness / 2.0)));
  double h = (b - a) / m;
  const auto& ref = gauss_legendre(kSegmentOrder);
  double sum = 0.0;
  for (std::size_t p = m; p-- > 0;) {
    double lo = a + p * h;
    double hi = (p + 1 == m) ? b : lo + h;
    if (p + 1 < m) {
      double Lhi = hazard_free ? 0.0 : disc.char_hazard(c, hi);
      if (lambda * (b - hi) + (Lb - Lhi) > kNegligibleExponent)
        break;
    }
    double half = 0.5 * (hi - lo);
    double mid = 0.5 * (hi + lo);
    double part = 0.0;
    for (std::size_t i = 0; i < kSegmentOrder; ++i) {
      double r = mid + half * ref.nodes[i];
      double Lr = hazard_free ? 0.0 : disc.char_hazard(c, r);
      double fr = F(r);
      if (fr != 0.0)
        part += ref.weights[i] * std::exp(-lambda * (b - r) - (Lb - Lr)) * fr;
    }
    sum += half * part;
    ++pieces;
  }
  return sum;
}

double kernel_factor(double lambda, double ds, double dL)
{
  return std::exp(-lambda * ds - dL);
}

// Quadratic extrapolation through (x_i, y_i) evaluated at x0, plus the
// linear extrapolant through the two nearest points.
std::pair<double, double> extrapolate(const double* x, const double* y,
  std::size_t n, double x0)
{
  if (n == 1)
    return {y[0], y[0]};
  double lin = y[0] + (y[1] - y[0]) * (x0 - x[0]) / (x[1] - x[0]);
  if (n == 2)
    return {lin, lin};
  double quad = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double l = 1.0;
    for (std::size_t k = 0; k < 3; ++k)
      if (k != i)
        l *= (x0 - x[k]) / (x[i] - x[k]);
    quad += l * y[i];
  }
  return {quad, lin};
}

// Nodal values are exact for the interpolated source, but their quadrature
// mass is not. Rescale each panel so that
//   Σ w (λ + q) R = Σ w f + W (R(a) - R(b))
// holds on [a, b], with R(a), R(b) the values at the breaks in
// characteristic units. Panel masses then telescope to the total balance.
void balance_panels(const Discretization& disc, std::size_t c, double lambda,
  const GridDensity* g, const std::vector<double>& at_breaks, GridDensity& bulk)
{
  const auto& grid = disc.grid();
  const auto& ch = grid.chars[c];
  const auto& q = disc.rate();
  const std::size_t n = grid.resolution.panel_order;
  const std::size_t panels = ch.count / n;
  for (std::size_t p = 0; p < panels; ++p) {
    double inflow = ch.weight * at_breaks[p];
    double outflow = ch.weight * at_breaks[p + 1];
    if (inflow < 0.0 || outflow < 0.0)
      continue;
    double source = 0.0;
    double loss = 0.0;
    bool signed_data = false;
    for (std::size_t j = ch.first + p * n; j < ch.first + (p + 1) * n; ++j) {
      if (g) {
        signed_data = signed_data || g->values[j] < 0.0;
        source += grid.weight[j] * g->values[j];
      }
      double rate = lambda + (q.empty() ? 0.0 : q[j]);
      loss += grid.weight[j] * rate * bulk.values[j];
    }
    if (signed_data || !(loss > 0.0))
      continue;
    double alpha = (source + inflow - outflow) / loss;
    if (!(alpha > 0.5 && alpha < 2.0))
      continue;
    for (std::size_t j = ch.first + p * n; j < ch.first + (p + 1) * n; ++j)
      bulk.values[j] *= alpha;
  }
}

} // namespace

LiftedDensity resolve_sources(const Discretization& disc, double lambda,
  const GridDensity* g, const BoundaryDensity* g_minus,
  ResolveTelemetry* telemetry)
{
  require(lambda >= 0.0, "resolvent: lambda must be nonnegative");
  const auto& grid = disc.grid();
  if (g)
    require(g->grid == &grid, "resolvent: bulk source on a different grid");
  if (g_minus)
    require(g_minus->grid == &grid && g_minus->side == Side::Minus,
      "resolvent: boundary source must be a Γ⁻ density on this grid");

  LiftedDensity out {GridDensity::zeros(grid), BoundaryDensity::zeros(grid, Side::Plus)};
  std::vector<double> F;
  if (g)
    F = char_density(*g);
  const auto& L = disc.node_hazard();
  double q0 = disc.hazard().identically_zero ? 0.0 : disc.hazard().lower_bound;
  const bool hazard_free = disc.hazard().identically_zero;
  ResolveTelemetry tel;

  for (std::size_t c = 0; c < grid.chars.size(); ++c) {
    const auto& ch = grid.chars[c];
    double G = (g_minus && ch.minus_node >= 0) ? g_minus->values[ch.minus_node] : 0.0;
    bool bulk_source = g && !zero_on(F, ch);
    if (!bulk_source && G == 0.0)
      continue;
    std::optional<CharSpline> spline;
    if (bulk_source)
      spline.emplace(grid, c, F);

    // Boundary contribution: closed form at every node.
    // Bulk contribution: node-to-node recursion of the factorized kernel,
    // passing through every panel break.
    const std::size_t n = grid.resolution.panel_order;
    std::vector<double> at_breaks(ch.breaks.size(), 0.0);
    at_breaks[0] = G;
    double I_bulk = 0.0;
    double prev_s = ch.s_begin;
    double prev_L = 0.0;
    auto advance = [&](double to, double L_to) {
      if (bulk_source)
        I_bulk = kernel_factor(lambda, to - prev_s, L_to - prev_L) * I_bulk
          + segment(disc, c, *spline, lambda, prev_s, to, prev_L, L_to, tel.pieces);
      prev_s = to;
      prev_L = L_to;
    };
    auto boundary_part = [&](double at, double L_at) {
      return G != 0.0 ? G * kernel_factor(lambda, at - ch.s_begin, L_at) : 0.0;
    };
    for (std::size_t j = ch.first; j < ch.first + ch.count; ++j) {
      std::size_t k = j - ch.first;
      if (k > 0 && k % n == 0) {
        double b = ch.breaks[k / n];
        double Lb = hazard_free ? 0.0 : disc.char_hazard(c, b);
        advance(b, Lb);
        at_breaks[k / n] = I_bulk + boundary_part(b, Lb);
      }
      advance(grid.s[j], L[j]);
      out.bulk.values[j] = (I_bulk + boundary_part(grid.s[j], L[j])) / grid.cocycle[j];
    }
    double Lend = disc.end_hazard(c);
    advance(ch.s_end, Lend);
    double I_end = I_bulk + boundary_part(ch.s_end, Lend);
    at_breaks.back() = I_end;
    if (ch.plus_node >= 0) {
      out.plus.values[ch.plus_node] = I_end / ch.cocycle_end;
    } else {
      double leak = ch.weight * std::abs(I_end);
      tel.horizon_leak += leak;
      if (leak > 0.0)
        tel.tail_bound += (lambda + q0) > 0.0 ? leak / (lambda + q0) : kInfinity;
    }
    balance_panels(disc, c, lambda, g, at_breaks, out.bulk);
  }
  if (telemetry)
    telemetry->merge(tel);
  return out;
}

GridDensity semigroup_S0(double t, const GridDensity& f, const Discretization& disc)
{
  require(t >= 0.0, "semigroup_S0: negative time");
  const auto& grid = disc.grid();
  require(f.grid == &grid, "semigroup_S0: density on a different grid");
  if (t == 0.0)
    return f;
  GridDensity out = GridDensity::zeros(grid);
  auto F = char_density(f);
  const auto& L = disc.node_hazard();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    std::size_t c = grid.char_of[j];
    double r = grid.s[j] - t;
    if (r < grid.chars[c].s_begin)
      continue;
    double Fr = interpolate_along(grid, c, F, r);
    if (Fr == 0.0)
      continue;
    double dL = L[j] - disc.char_hazard(c, r);
    out.values[j] = Fr * std::exp(-dL) / grid.cocycle[j];
  }
  return out;
}

GridDensity psi_lambda(double lambda, const BoundaryDensity& f_minus,
  const Discretization& disc)
{
  require(lambda > 0.0, "psi_lambda: lambda must be positive");
  return resolve_sources(disc, lambda, nullptr, &f_minus).bulk;
}

BoundaryDensity trace_plus_psi_lambda(double lambda, const BoundaryDensity& f_minus,
  const Discretization& disc)
{
  require(lambda > 0.0, "trace_plus_psi_lambda: lambda must be positive");
  return resolve_sources(disc, lambda, nullptr, &f_minus).plus;
}

GridDensity resolvent_A0(double lambda, const GridDensity& f,
  const Discretization& disc, ResolveTelemetry* telemetry)
{
  require(lambda > 0.0, "resolvent_A0: lambda must be positive");
  return resolve_sources(disc, lambda, &f, nullptr, telemetry).bulk;
}

BoundaryDensity trace_plus_resolvent_A0(double lambda, const GridDensity& f,
  const Discretization& disc)
{
  require(lambda > 0.0, "trace_plus_resolvent_A0: lambda must be positive");
  return resolve_sources(disc, lambda, &f, nullptr).plus;
}

TraceResult trace(const GridDensity& f, Side side)
{
  const CharGrid& grid = *f.grid;
  TraceResult r {BoundaryDensity::zeros(grid, side), {}, 0};
  const auto& nodes = r.value.nodes();
  r.non_traceable.assign(nodes.size(), false);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& ch = grid.chars[nodes.characteristic[k]];
    std::size_t n = std::min<std::size_t>(3, ch.count);
    double xs[3] {};
    double ys[3] {};
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = side == Side::Minus ? ch.first + i : ch.first + ch.count - 1 - i;
      xs[i] = grid.s[j];
      ys[i] = f.values[j] * grid.cocycle[j];
    }
    double s0 = side == Side::Minus ? ch.s_begin : ch.s_end;
    double J0 = side == Side::Minus ? 1.0 : ch.cocycle_end;
    auto [quad, lin] = extrapolate(xs, ys, n, s0);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      scale = std::max(scale, std::abs(ys[i]));
    bool ok = std::isfinite(quad) && std::abs(quad - lin) <= 1e-2 * scale + 1e-300;
    if (!ok) {
      r.non_traceable[k] = true;
      ++r.flagged;
      quad = ys[0];
    }
    r.value.values[k] = quad / J0;
  }
  return r;
}

namespace {

GridDensity rate_times(const GridDensity& f, const Discretization& disc)
{
  GridDensity g = f;
  const auto& q = disc.rate();
  for (std::size_t j = 0; j < g.values.size(); ++j)
    g.values[j] *= q[j];
  return g;
}

} // namespace

GridDensity apply_B(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc)
{
  return apply_P0(kernel, rate_times(f, disc), trace(f, Side::Plus).value);
}

BoundaryDensity apply_Psi(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc)
{
  return apply_Pd(kernel, rate_times(f, disc), trace(f, Side::Plus).value);
}

GridDensity apply_B(const LiftedDensity& f, const JumpKernel& kernel,
  const Discretization& disc)
{
  return apply_P0(kernel, rate_times(f.bulk, disc), f.plus);
}

BoundaryDensity apply_Psi(const LiftedDensity& f, const JumpKernel& kernel,
  const Discretization& disc)
{
  return apply_Pd(kernel, rate_times(f.bulk, disc), f.plus);
}

LiftedDensity R0_combined(const GridDensity& f, const BoundaryDensity& f_minus,
  const Discretization& disc, ResolveTelemetry* telemetry)
{
  return resolve_sources(disc, 0.0, &f, &f_minus, telemetry);
}

SourcePair jump_sources(const LiftedDensity& f, const JumpKernel& kernel,
  const Discretization& disc)
{
  GridDensity qf = rate_times(f.bulk, disc);
  return {apply_P0(kernel, qf, f.plus), apply_Pd(kernel, qf, f.plus)};
}

SourcePair K_apply(const GridDensity& f, const BoundaryDensity& f_minus,
  const JumpKernel& kernel, const Discretization& disc)
{
  return jump_sources(R0_combined(f, f_minus, disc), kernel, disc);
}

TransportDifference transport_backward_difference(const GridDensity& g)
{
  const CharGrid& grid = *g.grid;
  TransportDifference out {GridDensity::zeros(grid), std::vector<bool>(grid.size(), false)};
  for (const auto& ch : grid.chars) {
    for (std::size_t j = ch.first + 1; j < ch.first + ch.count; ++j) {
      double F1 = g.values[j] * grid.cocycle[j];
      double F0 = g.values[j - 1] * grid.cocycle[j - 1];
      double dF = (F1 - F0) / (grid.s[j] - grid.s[j - 1]);
      out.value.values[j] = -dF / grid.cocycle[j];
      out.valid[j] = true;
    }
  }
  return out;
}

KernelResidual psi_kernel_residual(double lambda, const BoundaryDensity& f_minus,
  const Discretization& disc)
{
  GridDensity g = psi_lambda(lambda, f_minus, disc);
  auto Tg = transport_backward_difference(g);
  const auto& grid = disc.grid();
  const auto& q = disc.rate();
  KernelResidual r;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!Tg.valid[j])
      continue;
    double res = lambda * g.values[j] - (Tg.value.values[j] - q[j] * g.values[j]);
    r.residual += std::abs(res) * grid.weight[j];
  }
  double n = g.norm();
  r.relative = n > 0.0 ? r.residual / n : 0.0;
  return r;
}

GreenResult green_identity(const std::function<double(const Point&)>& f,
  const Discretization& disc)
{
  const auto& grid = disc.grid();
  const auto& flow = disc.flow();
  GreenResult r;
  for (std::size_t c = 0; c < grid.chars.size(); ++c) {
    const auto& ch = grid.chars[c];
    double len = ch.s_end - ch.s_begin;
    auto F = [&](double s) {
      return f(flow_unchecked(flow, ch.anchor, s)) * cocycle(flow, ch.anchor, s);
    };
    for (std::size_t j = ch.first; j < ch.first + ch.count; ++j) {
      double s = grid.s[j];
      double room = std::min(s - ch.s_begin, ch.s_end - s);
      double d = std::min(1e-3 * std::min(1.0, len), room / 2.5);
      double dF = (F(s - 2 * d) - 8 * F(s - d) + 8 * F(s + d) - F(s + 2 * d)) / (12 * d);
      r.bulk += -grid.weight[j] / grid.cocycle[j] * dF;
    }
  }
  GridDensity sampled = GridDensity::sample(grid, f);
  auto tm = trace(sampled, Side::Minus);
  auto tp = trace(sampled, Side::Plus);
  r.minus = tm.value.integral();
  r.plus = tp.value.integral();
  r.flagged = tm.flagged + tp.flagged;
  r.residual = r.bulk - r.minus + r.plus;
  return r;
}

} // namespace pdmp
