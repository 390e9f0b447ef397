#include "pdmp/solver.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace pdmp {

std::string to_string(Verdict v)
{
  switch (v) {
  case Verdict::HonestEvidence:
    return "honest-evidence";
  case Verdict::DishonestEvidence:
    return "dishonest-evidence";
  case Verdict::Inconclusive:
    break;
  }
  return "inconclusive";
}

Verdict classify_decay(const std::vector<double>& seq, double input_norm,
  const HonestyThresholds& th)
{
  if (input_norm == 0.0 || seq.empty())
    return Verdict::HonestEvidence;
  double last = seq.back();
  if (last < th.floor * input_norm)
    return Verdict::HonestEvidence;
  if (seq.size() > th.window) {
    double prev = seq[seq.size() - 1 - th.window];
    if (std::abs(last - prev) < th.stabilization * last)
      return Verdict::DishonestEvidence;
  }
  return Verdict::Inconclusive;
}

namespace {

void add_into(GridDensity& acc, const GridDensity& x)
{
  for (std::size_t j = 0; j < acc.values.size(); ++j)
    acc.values[j] += x.values[j];
}

void finish(Diagnostics& d, const GridDensity& sum, const HonestyThresholds& th)
{
  d.mass_defect = d.input_norm - d.lambda * sum.norm();
  d.thresholds = th;
  d.verdict = classify_decay(d.defect_sequence, d.input_norm, th);
  d.floor_estimate = d.defect_sequence.empty() ? 0.0 : d.defect_sequence.back();
}

} // namespace

SeriesResult dyson_resolvent_G(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc, const SeriesConfig& cfg, const HonestyThresholds& th)
{
  require(cfg.lambda > 0.0, "series: lambda must be positive");
  require(cfg.max_terms >= 1, "series: max_terms must be at least 1");
  const auto& grid = disc.grid();
  SeriesResult r {GridDensity::zeros(grid), {}};
  auto& d = r.diagnostics;
  d.lambda = cfg.lambda;
  d.input_norm = f.norm();
  d.stop_reason = "max_terms";
  d.hit_max_terms = true;

  SourcePair u {f, BoundaryDensity::zeros(grid, Side::Minus)};
  d.defect_sequence.push_back(u.norm());
  double scale = d.input_norm;
  for (std::size_t n = 0; n < cfg.max_terms; ++n) {
    LiftedDensity v = resolve_sources(disc, cfg.lambda, &u.bulk, &u.minus, &d.telemetry);
    add_into(r.value, v.bulk);
    double tn = v.bulk.norm();
    d.term_norms.push_back(tn);
    d.partial_mass.push_back(cfg.lambda * r.value.norm());
    d.terms_used = n + 1;
    u = jump_sources(v, kernel, disc);
    double un = u.norm();
    if (cfg.record_defect || n + 1 == cfg.max_terms)
      d.defect_sequence.push_back(un);
    if (un == 0.0) {
      d.stop_reason = "exhausted";
      d.hit_max_terms = false;
      break;
    }
    if (tn < cfg.term_tol * scale) {
      d.stop_reason = "term_tol";
      d.hit_max_terms = false;
      break;
    }
  }
  finish(d, r.value, th);
  return r;
}

SeriesResult resolvent_G_Psi(const GridDensity& f, const JumpKernel& kernel,
  const Discretization& disc, const SeriesConfig& cfg, const HonestyThresholds& th)
{
  require(cfg.lambda > 0.0, "series: lambda must be positive");
  require(cfg.max_terms >= 1, "series: max_terms must be at least 1");
  require(!kernel.has_B(), "resolvent_G_Psi requires B = 0");
  const auto& grid = disc.grid();
  SeriesResult r {GridDensity::zeros(grid), {}};
  auto& d = r.diagnostics;
  d.lambda = cfg.lambda;
  d.input_norm = f.norm();
  d.stop_reason = "max_terms";
  d.hit_max_terms = true;
  d.defect_sequence.push_back(d.input_norm);

  LiftedDensity v = resolve_sources(disc, cfg.lambda, &f, nullptr, &d.telemetry);
  for (std::size_t n = 0; n < cfg.max_terms; ++n) {
    add_into(r.value, v.bulk);
    double tn = v.bulk.norm();
    d.term_norms.push_back(tn);
    d.partial_mass.push_back(cfg.lambda * r.value.norm());
    d.terms_used = n + 1;
    BoundaryDensity b = apply_Psi(v, kernel, disc);
    double bn = b.norm();
    d.defect_sequence.push_back(bn);
    if (bn == 0.0) {
      d.stop_reason = "exhausted";
      d.hit_max_terms = false;
      break;
    }
    if (tn < cfg.term_tol * d.input_norm) {
      d.stop_reason = "term_tol";
      d.hit_max_terms = false;
      break;
    }
    if (n + 1 < cfg.max_terms)
      v = resolve_sources(disc, cfg.lambda, nullptr, &b, &d.telemetry);
  }
  finish(d, r.value, th);
  return r;
}

Diagnostics honesty_power_decay(const GridDensity* u, const BoundaryDensity* f_minus,
  const JumpKernel& kernel, const Discretization& disc, double lambda,
  std::size_t n_max, const HonestyThresholds& th)
{
  require(lambda > 0.0, "honesty_power_decay: lambda must be positive");
  require(n_max >= 1, "honesty_power_decay: n_max must be at least 1");
  const auto& grid = disc.grid();
  SourcePair x {u ? *u : GridDensity::zeros(grid),
    f_minus ? *f_minus : BoundaryDensity::zeros(grid, Side::Minus)};
  Diagnostics d;
  d.lambda = lambda;
  d.input_norm = x.norm();
  d.defect_sequence.push_back(d.input_norm);
  d.stop_reason = "n_max";
  for (std::size_t n = 0; n < n_max; ++n) {
    if (x.norm() == 0.0) {
      d.defect_sequence.push_back(0.0);
      continue;
    }
    LiftedDensity v = resolve_sources(disc, lambda, &x.bulk, &x.minus, &d.telemetry);
    x = jump_sources(v, kernel, disc);
    d.defect_sequence.push_back(x.norm());
  }
  d.terms_used = n_max;
  d.thresholds = th;
  d.verdict = classify_decay(d.defect_sequence, d.input_norm, th);
  d.floor_estimate = d.defect_sequence.back();
  return d;
}

PsiPsiNorm norm_PsiPsi(double lambda, const JumpKernel& kernel,
  const Discretization& disc)
{
  require(lambda > 0.0, "norm_PsiPsi: lambda must be positive");
  const auto& grid = disc.grid();
  const std::size_t n = grid.minus.size();
  PsiPsiNorm out;
  if (n == 0 || !kernel.has_Psi())
    return out;
  const auto& w = grid.minus.weight;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
    static_cast<Eigen::Index>(n));
  BoundaryDensity e = BoundaryDensity::zeros(grid, Side::Minus);
  for (std::size_t k = 0; k < n; ++k) {
    if (w[k] <= 0.0)
      continue;
    std::fill(e.values.begin(), e.values.end(), 0.0);
    e.values[k] = 1.0;
    LiftedDensity v = resolve_sources(disc, lambda, nullptr, &e);
    BoundaryDensity col = apply_Psi(v, kernel, disc);
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = col.values[i];
      mass += std::abs(col.values[i]) * w[i];
    }
    double cn = mass / w[k];
    if (cn > out.norm) {
      out.norm = cn;
      out.argmax = k;
    }
  }

  // Power iteration in the weighted L¹ norm.
  auto wnorm = [&](const Eigen::VectorXd& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += std::abs(x(static_cast<Eigen::Index>(i))) * w[i];
    return s;
  };
  Eigen::VectorXd x = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  x /= wnorm(x);
  Eigen::MatrixXd A = M.cwiseAbs();
  double rho = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd y = A * x;
    double ny = wnorm(y);
    if (ny == 0.0) {
      rho = 0.0;
      break;
    }
    bool converged = std::abs(ny - rho) <= 1e-14 * ny;
    rho = ny;
    x = y / ny;
    if (converged)
      break;
  }
  out.spectral_radius = rho;
  return out;
}

EvolveResult evolve(const GridDensity& u0, double t_final, std::size_t steps,
  const JumpKernel& kernel, const Discretization& disc, const EvolveOptions& opts)
{
  require(t_final > 0.0, "evolve: t_final must be positive");
  require(steps >= 1, "evolve: steps must be at least 1");
  EvolveResult r;
  r.dt = t_final / static_cast<double>(steps);
  SeriesConfig cfg = opts.series;
  cfg.lambda = 1.0 / r.dt;
  cfg.record_defect = false;

  GridDensity u = u0;
  r.times.push_back(0.0);
  r.mass.push_back(u.integral());
  r.record_times.push_back(0.0);
  r.records.push_back(u);
  if (opts.observer)
    opts.observer(0, 0.0, u);
  bool input_nonnegative = u0.nonnegative();
  for (std::size_t k = 1; k <= steps; ++k) {
    auto step = dyson_resolvent_G(u, kernel, disc, cfg);
    u = std::move(step.value);
    for (double& v : u.values)
      v *= cfg.lambda;
    r.inconclusive = r.inconclusive || step.diagnostics.hit_max_terms;
    r.max_terms_used = std::max(r.max_terms_used, step.diagnostics.terms_used);
    r.horizon_leak += step.diagnostics.telemetry.horizon_leak * cfg.lambda;
    if (input_nonnegative && !u.nonnegative())
      r.positive = false;
    double t = k == steps ? t_final : k * r.dt;
    r.times.push_back(t);
    r.mass.push_back(u.integral());
    if ((opts.record_stride > 0 && k % opts.record_stride == 0) || k == steps) {
      r.record_times.push_back(t);
      r.records.push_back(u);
    }
    if (opts.observer)
      opts.observer(k, t, u);
  }
  return r;
}

namespace {

void check_le(InequalityReport& r, const char* where, std::size_t i, double lhs,
  double rhs, const Point& pos, double slack)
{
  double v = lhs - rhs;
  bool first = r.index < 0;
  if (first || v > r.max_violation) {
    r.max_violation = v;
    r.where = where;
    r.index = static_cast<std::ptrdiff_t>(i);
    r.position = pos;
  }
  if (v > slack * std::max(1.0, std::abs(rhs)))
    r.pass = false;
}

} // namespace

InequalityReport closure_qi_check(const GridDensity& f, const BoundaryDensity& f_minus,
  const JumpKernel& kernel, const Discretization& disc, double slack)
{
  const auto& grid = disc.grid();
  bool need_f = kernel.has_B();
  for (double v : f.values)
    if (need_f ? !(v > 0.0) : !(v >= 0.0))
      throw PreconditionError(need_f
          ? "closure_qi_check: candidate f must be strictly positive"
          : "closure_qi_check: candidate f must be nonnegative");
  for (double v : f_minus.values)
    if (!(v > 0.0))
      throw PreconditionError("closure_qi_check: candidate f∂ must be strictly positive");

  LiftedDensity r0 = R0_combined(f, f_minus, disc);
  SourcePair k = jump_sources(r0, kernel, disc);
  InequalityReport rep;
  rep.pass = true;
  rep.slack = slack;
  for (std::size_t j = 0; j < grid.size(); ++j)
    check_le(rep, "bulk", j, k.bulk.values[j], f.values[j], grid.position[j], slack);
  for (std::size_t i = 0; i < grid.minus.size(); ++i)
    check_le(rep, "minus", i, k.minus.values[i], f_minus.values[i],
      grid.minus.position[i], slack);
  return rep;
}

Cpert1Report cpert1_check(const Discretization& disc, double threshold)
{
  const auto& grid = disc.grid();
  Cpert1Report r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < grid.minus.size(); ++i) {
    const auto& ch = grid.chars[grid.minus.characteristic[i]];
    double tp = ch.exits ? ch.s_end - ch.s_begin : kInfinity;
    if (r.argmin < 0 || tp < r.min_t_plus) {
      r.min_t_plus = tp;
      r.argmin = static_cast<std::ptrdiff_t>(i);
      r.position = grid.minus.position[i];
    }
  }
  r.pass = r.argmin >= 0 && r.min_t_plus > threshold;
  return r;
}

InequalityReport cperturb2_check(const BoundaryDensity& f_plus,
  const JumpKernel& kernel, const Discretization& disc, double slack)
{
  require(kernel.boundary_only(), "cperturb2_check requires Ψ = H∘Tr⁺");
  require(f_plus.side == Side::Plus, "cperturb2_check: candidate must live on Γ⁺");
  const auto& grid = disc.grid();
  for (double v : f_plus.values)
    if (!(v > 0.0))
      throw PreconditionError("cperturb2_check: candidate must be strictly positive");
  BoundaryDensity h = apply_Pd(kernel, GridDensity::zeros(grid), f_plus);
  InequalityReport rep;
  rep.pass = true;
  rep.slack = slack;
  for (std::size_t k = 0; k < grid.plus.size(); ++k) {
    std::size_t c = grid.plus.characteristic[k];
    const auto& ch = grid.chars[c];
    double lhs = 0.0;
    if (ch.entering && ch.minus_node >= 0)
      lhs = h.values[ch.minus_node] / ch.cocycle_end * std::exp(-disc.end_hazard(c));
    check_le(rep, "plus", k, lhs, f_plus.values[k], grid.plus.position[k], slack);
  }
  return rep;
}

} // namespace pdmp
