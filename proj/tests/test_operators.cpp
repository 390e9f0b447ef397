#include <doctest.h>

#include <cmath>

#include "pdmp/grid.hpp"
#include "pdmp/kernel.hpp"
#include "pdmp/models.hpp"
#include "pdmp/operators.hpp"

using namespace pdmp;

namespace {

const ModelSpec& network()
{
  static auto m = build_model({{"family", "network"}});
  return *m;
}

const ModelSpec& gene()
{
  static auto m = build_model({{"family", "gene"}});
  return *m;
}

double bump1(double x, double c, double r)
{
  double u = (x - c) / r;
  if (std::abs(u) >= 1.0)
    return 0.0;
  double b = 0.5 * (1.0 + std::cos(M_PI * u));
  return b * b;
}

} // namespace

TEST_CASE("network grid: disintegration of m")
{
  const auto& g = network().grid();
  CHECK(g.chars.size() == 2);
  CHECK(g.minus.size() == 2);
  CHECK(g.plus.size() == 2);
  for (const auto& ch : g.chars) {
    double v = ch.anchor[1];
    CHECK(ch.weight == doctest::Approx(v));
    CHECK(ch.s_end == doctest::Approx(1.0 / v));
    double total = 0.0;
    for (std::size_t j = ch.first; j < ch.first + ch.count; ++j)
      total += g.weight[j];
    // Lebesgue measure of (0,1) x {v}.
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  }
  // ∫ x² dm = 2/3 over two unit-weight velocities.
  auto f = GridDensity::sample(g, [](const Point& x) { return x[0] * x[0]; });
  CHECK(f.integral() == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("gene grid: empty outgoing boundary and integrals")
{
  const auto& g = gene().grid();
  CHECK(g.plus.size() == 0);
  CHECK(g.minus.size() > 0);
  // ∫∫ e^{-x-2s} over x < z_max e^{-s}, s < H; with w = e^{-s} this is
  // ∫_a^1 w (1 - e^{-20 w}) dw, a = e^{-H}.
  double a = std::exp(-g.resolution.horizon);
  auto prim = [](double w) { return -std::exp(-20.0 * w) * (20.0 * w + 1.0) / 400.0; };
  double exact = 0.5 * (1.0 - a * a) - (prim(1.0) - prim(a));
  auto f = GridDensity::sample(g, [](const Point& x) { return std::exp(-x[0] - 2.0 * x[1]); });
  CHECK(f.integral() == doctest::Approx(exact).epsilon(1e-8));
}

TEST_CASE("zero inputs give zero")
{
  const auto& m = network();
  const auto& g = m.grid();
  auto z = GridDensity::zeros(g);
  auto zm = BoundaryDensity::zeros(g, Side::Minus);
  CHECK(semigroup_S0(0.5, z, *m.disc).norm() == 0.0);
  CHECK(psi_lambda(1.0, zm, *m.disc).norm() == 0.0);
  CHECK(trace_plus_psi_lambda(1.0, zm, *m.disc).norm() == 0.0);
  CHECK(resolvent_A0(1.0, z, *m.disc).norm() == 0.0);
  CHECK(trace_plus_resolvent_A0(1.0, z, *m.disc).norm() == 0.0);
  auto k = K_apply(z, zm, m.kernel, *m.disc);
  CHECK(k.norm() == 0.0);
  CHECK(trace_plus_resolvent_A0(1.0, GridDensity::zeros(gene().grid()), *gene().disc).values.empty());
}

TEST_CASE("semigroup_S0 on free transport")
{
  const auto& m = network();
  const auto& g = m.grid();
  auto f = [](const Point& x) { return bump1(x[0], 0.3, 0.2) * (x[1] == 1.0 ? 1.0 : 2.0); };
  auto u = GridDensity::sample(g, f);
  auto same = semigroup_S0(0.0, u, *m.disc);
  CHECK(same.values == u.values);
  double t = 0.15;
  auto st = semigroup_S0(t, u, *m.disc);
  double err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    Point x = g.position[j];
    Point back {x[0] - x[1] * t, x[1]};
    double expect = back[0] > 0.0 ? f(back) : 0.0;
    err = std::max(err, std::abs(st.values[j] - expect));
  }
  CHECK(err < 1e-4);
}

TEST_CASE("psi_lambda and resolvent against closed forms")
{
  const auto& m = network();
  const auto& g = m.grid();
  const double lambda = 1.7;
  auto fm = BoundaryDensity::sample(g, Side::Minus, [](const Point& z) { return 1.0 + z[1]; });
  auto psi = psi_lambda(lambda, fm, *m.disc);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.position[j][0], v = g.position[j][1];
    CHECK(psi.values[j] == doctest::Approx((1.0 + v) * std::exp(-lambda * x / v)).epsilon(1e-12));
  }
  auto tp = trace_plus_psi_lambda(lambda, fm, *m.disc);
  for (std::size_t k = 0; k < g.plus.size(); ++k) {
    double v = g.plus.position[k][1];
    CHECK(tp.values[k] == doctest::Approx((1.0 + v) * std::exp(-lambda / v)).epsilon(1e-12));
  }
  // R(λ,A₀)1 = (1 - e^{-λ x/v})/λ.
  auto one = GridDensity::sample(g, [](const Point&) { return 1.0; });
  auto r = resolvent_A0(lambda, one, *m.disc);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.position[j][0], v = g.position[j][1];
    CHECK(r.values[j] == doctest::Approx((1.0 - std::exp(-lambda * x / v)) / lambda).epsilon(1e-9));
  }
  auto rp = trace_plus_resolvent_A0(lambda, one, *m.disc);
  for (std::size_t k = 0; k < g.plus.size(); ++k) {
    double v = g.plus.position[k][1];
    CHECK(rp.values[k] == doctest::Approx((1.0 - std::exp(-lambda / v)) / lambda).epsilon(1e-9));
  }
}

TEST_CASE("gene psi_lambda carries the Liouville factor and the hazard")
{
  const auto& m = gene();
  const auto& g = m.grid();
  auto fm = BoundaryDensity::sample(g, Side::Minus, [](const Point& z) { return std::exp(-z[0]); });
  auto psi = psi_lambda(1.0, fm, *m.disc);
  double worst = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    double x = g.position[j][0], s = g.position[j][1];
    if (s > 5.0)
      continue;
    double expect = std::exp(-x * std::exp(s)) * std::exp(s) * std::exp(-2.0 * s);
    worst = std::max(worst, std::abs(psi.values[j] - expect) / std::max(1e-300, expect));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("trace: right inverse and direct limits")
{
  const auto& m = network();
  const auto& g = m.grid();
  auto fm = BoundaryDensity::sample(g, Side::Minus, [](const Point& z) { return 0.5 + z[1]; });
  auto tr = trace(psi_lambda(1.0, fm, *m.disc), Side::Minus);
  CHECK(tr.flagged == 0);
  CHECK(l1_distance(tr.value, fm) < 1e-6);

  auto x = GridDensity::sample(g, [](const Point& p) { return p[0]; });
  auto tm = trace(x, Side::Minus);
  auto tp = trace(x, Side::Plus);
  for (double v : tm.value.values)
    CHECK(v == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  for (double v : tp.value.values)
    CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  auto compact = GridDensity::sample(g, [](const Point& p) { return bump1(p[0], 0.5, 0.2); });
  CHECK(trace(compact, Side::Minus).value.norm() == 0.0);
  CHECK(trace(compact, Side::Plus).value.norm() == 0.0);
}

TEST_CASE("Green's identity on smooth test functions")
{
  for (const ModelSpec* m : {&network(), &gene()}) {
    auto f = m->family == "gene"
      ? std::function<double(const Point&)>([](const Point& p) { return std::exp(-p[0]) * std::exp(-p[1]) * (1 + p[1]); })
      : std::function<double(const Point&)>([](const Point& p) { return std::sin(2 * p[0]) + p[1] * p[0] * p[0]; });
    auto r = green_identity(f, *m->disc);
    CHECK(r.flagged == 0);
    CHECK(std::abs(r.residual) < 1e-6);
  }
}

TEST_CASE("kernel residual of the lift is first order")
{
  auto coarse = build_model({{"family", "network"}, {"grid", {{"panels_per_characteristic", 8}}}});
  auto fine = build_model({{"family", "network"}, {"grid", {{"panels_per_characteristic", 16}}}});
  auto f = [](const Point& z) { return z[1]; };
  auto rc = psi_kernel_residual(1.0, BoundaryDensity::sample(coarse->grid(), Side::Minus, f), *coarse->disc);
  auto rf = psi_kernel_residual(1.0, BoundaryDensity::sample(fine->grid(), Side::Minus, f), *fine->disc);
  CHECK(rf.residual < rc.residual);
  CHECK(std::log2(rc.residual / rf.residual) >= 0.9);
}

TEST_CASE("kernel assembly")
{
  const auto& net = network();
  auto rep = check_kernel(net.kernel, net.grid());
  CHECK(rep.positive);
  CHECK(rep.conservative);
  CHECK(net.kernel.boundary_only());
  CHECK_FALSE(net.kernel.has_B());

  // P∂ moves Γ⁺ mass to Γ⁻ with the stated fractions: total mass is kept.
  auto gp = BoundaryDensity::sample(net.grid(), Side::Plus, [](const Point& z) { return z[1] == 1.0 ? 3.0 : 1.0; });
  auto out = apply_Pd(net.kernel, GridDensity::zeros(net.grid()), gp);
  CHECK(out.integral() == doctest::Approx(gp.integral()).epsilon(1e-14));

  auto doubling = build_model({{"family", "network"},
    {"parameters", {{"velocities", {{"type", "doubling"}, {"levels", 6}}}}}});
  auto drep = check_kernel(doubling->kernel, doubling->grid());
  CHECK(drep.substochastic);
  CHECK_FALSE(drep.conservative);

  auto gk = check_kernel(gene().kernel, gene().grid());
  CHECK(gk.conservative);
}
