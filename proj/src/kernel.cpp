#include "pdmp/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace pdmp {

namespace {

using Triplet = Eigen::Triplet<double>;

Eigen::Map<const Eigen::VectorXd> as_vector(const std::vector<double>& v)
{
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

} // namespace

JumpKernel JumpKernel::zero(const CharGrid& grid)
{
  auto nb = static_cast<Eigen::Index>(grid.size());
  auto nm = static_cast<Eigen::Index>(grid.minus.size());
  auto np = static_cast<Eigen::Index>(grid.plus.size());
  JumpKernel k;
  k.p0_bulk.resize(nb, nb);
  k.p0_plus.resize(nb, np);
  k.pd_bulk.resize(nm, nb);
  k.pd_plus.resize(nm, np);
  return k;
}

void KernelBuilder::add(KernelTarget target, std::size_t to, KernelSource source,
  std::size_t from, double fraction)
{
  if (!(fraction >= 0.0) || !std::isfinite(fraction))
    throw ConfigError("jump kernel mass fraction must be finite and nonnegative");
  if (fraction == 0.0)
    return;
  std::size_t tmax = target == KernelTarget::Bulk ? grid_->size() : grid_->minus.size();
  std::size_t smax = source == KernelSource::Bulk ? grid_->size() : grid_->plus.size();
  require(to < tmax && from < smax, "KernelBuilder: node index out of range");
  entries_.push_back({target, to, source, from, fraction});
}

JumpKernel KernelBuilder::build() const
{
  JumpKernel k = JumpKernel::zero(*grid_);
  std::vector<Triplet> t0b, t0p, tdb, tdp;
  for (const auto& e : entries_) {
    double w_from = e.source == KernelSource::Bulk ? grid_->weight[e.from]
                                                   : grid_->plus.weight[e.from];
    double w_to = e.target == KernelTarget::Bulk ? grid_->weight[e.to]
                                                 : grid_->minus.weight[e.to];
    if (w_to <= 0.0)
      throw ConfigError("jump kernel targets a node of zero weight");
    double value = e.fraction * w_from / w_to;
    auto row = static_cast<Eigen::Index>(e.to);
    auto col = static_cast<Eigen::Index>(e.from);
    if (e.target == KernelTarget::Bulk)
      (e.source == KernelSource::Bulk ? t0b : t0p).emplace_back(row, col, value);
    else
      (e.source == KernelSource::Bulk ? tdb : tdp).emplace_back(row, col, value);
  }
  k.p0_bulk.setFromTriplets(t0b.begin(), t0b.end());
  k.p0_plus.setFromTriplets(t0p.begin(), t0p.end());
  k.pd_bulk.setFromTriplets(tdb.begin(), tdb.end());
  k.pd_plus.setFromTriplets(tdp.begin(), tdp.end());
  return k;
}

KernelReport check_kernel(const JumpKernel& kernel, const CharGrid& grid,
  double tolerance)
{
  KernelReport r;
  auto scan = [&](const SparseMatrix& m) {
    for (int col = 0; col < m.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(m, col); it; ++it)
        if (it.value() < 0.0)
          r.positive = false;
  };
  scan(kernel.p0_bulk);
  scan(kernel.p0_plus);
  scan(kernel.pd_bulk);
  scan(kernel.pd_plus);

  // Mass leaving source column j: Σ_i K_ij w_i / w_j over both targets.
  auto column_mass = [&](const SparseMatrix& to_bulk, const SparseMatrix& to_minus,
                       const std::vector<double>& w_src, std::vector<double>& mass) {
    mass.assign(w_src.size(), 0.0);
    for (int col = 0; col < to_bulk.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(to_bulk, col); it; ++it)
        mass[col] += it.value() * grid.weight[it.row()];
    for (int col = 0; col < to_minus.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(to_minus, col); it; ++it)
        mass[col] += it.value() * grid.minus.weight[it.row()];
    for (std::size_t j = 0; j < mass.size(); ++j)
      mass[j] = w_src[j] > 0.0 ? mass[j] / w_src[j] : 0.0;
  };
  std::vector<double> mb, mp;
  column_mass(kernel.p0_bulk, kernel.pd_bulk, grid.weight, mb);
  column_mass(kernel.p0_plus, kernel.pd_plus, grid.plus.weight, mp);
  // A source kind with any outgoing mass must send mass from every column.
  bool any_active = false;
  bool every_column = true;
  for (const auto* m : {&mb, &mp}) {
    bool kind_active = std::any_of(m->begin(), m->end(), [](double v) { return v > 0.0; });
    for (double v : *m) {
      if (kind_active && std::abs(v - 1.0) > tolerance)
        every_column = false;
      r.max_column_mass = std::max(r.max_column_mass, v);
      if (v > 0.0) {
        any_active = true;
        r.min_active_column_mass = std::min(r.min_active_column_mass, v);
      }
    }
  }
  if (!any_active)
    r.min_active_column_mass = 0.0;
  r.substochastic = r.positive && r.max_column_mass <= 1.0 + tolerance;
  r.conservative = r.substochastic && any_active && every_column;
  return r;
}

GridDensity apply_P0(const JumpKernel& kernel, const GridDensity& g,
  const BoundaryDensity& g_plus)
{
  GridDensity out = GridDensity::zeros(*g.grid);
  Eigen::Map<Eigen::VectorXd> y(out.values.data(), static_cast<Eigen::Index>(out.values.size()));
  if (kernel.p0_bulk.nonZeros() > 0)
    y += kernel.p0_bulk * as_vector(g.values);
  if (kernel.p0_plus.nonZeros() > 0)
    y += kernel.p0_plus * as_vector(g_plus.values);
  return out;
}

BoundaryDensity apply_Pd(const JumpKernel& kernel, const GridDensity& g,
  const BoundaryDensity& g_plus)
{
  BoundaryDensity out = BoundaryDensity::zeros(*g.grid, Side::Minus);
  Eigen::Map<Eigen::VectorXd> y(out.values.data(), static_cast<Eigen::Index>(out.values.size()));
  if (kernel.pd_bulk.nonZeros() > 0)
    y += kernel.pd_bulk * as_vector(g.values);
  if (kernel.pd_plus.nonZeros() > 0)
    y += kernel.pd_plus * as_vector(g_plus.values);
  return out;
}

} // namespace pdmp
