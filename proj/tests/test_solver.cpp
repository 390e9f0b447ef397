#include <doctest.h>

#include <cmath>

#include "pdmp/models.hpp"
#include "pdmp/solver.hpp"

using namespace pdmp;

namespace {

const ModelSpec& gene()
{
  static auto m = build_model({{"family", "gene"}});
  return *m;
}

const ModelSpec& network()
{
  static auto m = build_model({{"family", "network"}});
  return *m;
}

const ModelSpec& doubling()
{
  static auto m = build_model({{"family", "network"},
    {"parameters", {{"velocities", {{"type", "doubling"}, {"levels", 48}}}}}});
  return *m;
}

// V = {1,2,4} with a positive-recurrent switching matrix and its stationary
// law, computed by hand from πP = π.
const ModelSpec& chain()
{
  static auto m = build_model({{"family", "network"},
    {"parameters", {{"velocities", {1.0, 2.0, 4.0}},
                     {"transition", {{0.2, 0.5, 0.3}, {0.4, 0.2, 0.4}, {0.5, 0.25, 0.25}}}}}});
  return *m;
}
const double kPi[3] = {50.0 / 139.0, 45.0 / 139.0, 44.0 / 139.0};

GridDensity gene_u0(const CharGrid& g)
{
  return GridDensity::sample(g, [](const Point& x) {
    double a = (x[0] - 2.0), b = (x[1] - 1.0);
    return std::exp(-a * a - 2.0 * b * b);
  });
}

} // namespace

TEST_CASE("classify_decay")
{
  HonestyThresholds th;
  CHECK(classify_decay({1.0, 0.0}, 1.0, th) == Verdict::HonestEvidence);
  CHECK(classify_decay({}, 0.0, th) == Verdict::HonestEvidence);
  std::vector<double> flat(20, 0.3);
  CHECK(classify_decay(flat, 1.0, th) == Verdict::DishonestEvidence);
  std::vector<double> slow;
  for (int n = 0; n < 20; ++n)
    slow.push_back(std::pow(0.9, n));
  CHECK(classify_decay(slow, 1.0, th) == Verdict::Inconclusive);
  CHECK(to_string(Verdict::DishonestEvidence) == "dishonest-evidence");
}

TEST_CASE("norm_PsiPsi is the Laplace transform of h_T")
{
  for (double lambda : {0.5, 1.0, 2.0}) {
    auto r = norm_PsiPsi(lambda, gene().kernel, *gene().disc);
    CHECK(r.norm == doctest::Approx(1.0 / (1.0 + lambda)).epsilon(1e-9));
  }
  auto zero = norm_PsiPsi(1.0, JumpKernel::zero(network().grid()), *network().disc);
  CHECK(zero.norm == 0.0);
  // Network {1,2}, p = 1/2: columns carry e^{-1/v}, the larger is e^{-1/2}.
  auto net = norm_PsiPsi(1.0, network().kernel, *network().disc);
  CHECK(net.norm == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("honesty_power_decay")
{
  SUBCASE("zero input")
  {
    auto d = honesty_power_decay(nullptr, nullptr, gene().kernel, *gene().disc, 1.0, 5);
    CHECK(d.verdict == Verdict::HonestEvidence);
    for (double x : d.defect_sequence)
      CHECK(x == 0.0);
  }
  SUBCASE("gene: geometric decay with ratio 1/2")
  {
    const auto& g = gene().grid();
    auto fm = BoundaryDensity::sample(g, Side::Minus, [](const Point& z) { return std::exp(-z[0]); });
    auto d = honesty_power_decay(nullptr, &fm, gene().kernel, *gene().disc, 1.0, 30);
    for (std::size_t n = 0; n <= 20; ++n)
      CHECK(d.defect_sequence[n] / d.input_norm == doctest::Approx(std::ldexp(1.0, -static_cast<int>(n))).epsilon(1e-9));
    CHECK(d.verdict == Verdict::HonestEvidence);
  }
  SUBCASE("doubling chain from v = 1 stabilizes at exp(-2 lambda)")
  {
    const auto& g = doubling().grid();
    auto fm = BoundaryDensity::zeros(g, Side::Minus);
    for (std::size_t k = 0; k < g.minus.size(); ++k)
      if (g.minus.position[k][1] == 1.0)
        fm.values[k] = 1.0 / g.minus.weight[k];
    auto d = honesty_power_decay(nullptr, &fm, doubling().kernel, *doubling().disc, 1.0, 40);
    CHECK(d.verdict == Verdict::DishonestEvidence);
    // Oracle: ∏_{k<40} e^{-2^{-k}}.
    double expect = std::exp(-(2.0 - std::ldexp(1.0, -39)));
    CHECK(d.floor_estimate == doctest::Approx(expect).epsilon(1e-12));
    CHECK(d.floor_estimate >= std::exp(-2.0) * (1 - 1e-2));
  }
  SUBCASE("honest at lambda = 1 stays honest at lambda = 2")
  {
    const auto& g = gene().grid();
    auto fm = BoundaryDensity::sample(g, Side::Minus, [](const Point& z) { return 1.0 + z[0]; });
    auto d1 = honesty_power_decay(nullptr, &fm, gene().kernel, *gene().disc, 1.0, 40);
    auto d2 = honesty_power_decay(nullptr, &fm, gene().kernel, *gene().disc, 2.0, 40);
    CHECK(d1.verdict == Verdict::HonestEvidence);
    CHECK(d2.verdict == Verdict::HonestEvidence);
  }
}

TEST_CASE("Dyson series: mass identity and monotone partial sums")
{
  // The identity is exact up to quadrature; panels of length 1/4 resolve it to ~1e-10.
  auto fine = build_model({{"family", "gene"}, {"grid", {{"max_panel_length", 0.25}}}});
  const auto& m = *fine;
  auto u = gene_u0(m.grid());
  SeriesConfig cfg;
  cfg.max_terms = 21;
  cfg.term_tol = 0.0;
  auto r = dyson_resolvent_G(u, m.kernel, *m.disc, cfg);
  const auto& d = r.diagnostics;
  REQUIRE(d.partial_mass.size() == 21);
  for (std::size_t N = 0; N <= 20; ++N) {
    CHECK(std::abs(d.partial_mass[N] + d.defect_sequence[N + 1] - u.norm()) <= 1e-8);
    CHECK(d.partial_mass[N] <= u.norm() + 1e-8);
    if (N > 0)
      CHECK(d.partial_mass[N] >= d.partial_mass[N - 1]);
  }
  // Nodewise monotone in N.
  cfg.max_terms = 5;
  auto r5 = dyson_resolvent_G(u, m.kernel, *m.disc, cfg);
  cfg.max_terms = 6;
  auto r6 = dyson_resolvent_G(u, m.kernel, *m.disc, cfg);
  for (std::size_t j = 0; j < u.values.size(); ++j)
    CHECK(r6.value.values[j] >= r5.value.values[j]);
}

TEST_CASE("Dyson series without jumps is one resolvent")
{
  const auto& m = network();
  auto u = GridDensity::sample(m.grid(), [](const Point& x) { return 1.0 + x[0]; });
  auto r = dyson_resolvent_G(u, JumpKernel::zero(m.grid()), *m.disc, {});
  CHECK(r.diagnostics.terms_used == 1);
  CHECK(l1_distance(r.value, resolvent_A0(1.0, u, *m.disc)) == 0.0);
}

TEST_CASE("resolvent_G_Psi agrees with the Dyson series when B = 0")
{
  // Fine gene panels, as for the mass identity above.
  auto fine_gene = build_model({{"family", "gene"}, {"grid", {{"max_panel_length", 0.25}}}});
  for (const ModelSpec* m : {static_cast<const ModelSpec*>(fine_gene.get()), &network(), &chain()}) {
    auto u = m->family == "gene" ? gene_u0(m->grid())
                                : GridDensity::sample(m->grid(), [](const Point& x) { return x[0] * (2 - x[0]); });
    SeriesConfig cfg;
    auto a = dyson_resolvent_G(u, m->kernel, *m->disc, cfg);
    auto b = resolvent_G_Psi(u, m->kernel, *m->disc, cfg);
    CHECK(l1_distance(a.value, b.value) <= 1e-10 * u.norm());
    // Honest and conservative: λ‖R(λ,G)u‖ = ‖u‖.
    CHECK(a.diagnostics.partial_mass.back() == doctest::Approx(u.norm()).epsilon(1e-9));
  }
}

TEST_CASE("evolve")
{
  const auto& m = network();
  SUBCASE("zero initial density")
  {
    auto r = evolve(GridDensity::zeros(m.grid()), 0.1, 10, m.kernel, *m.disc);
    for (double x : r.mass)
      CHECK(x == 0.0);
  }
  SUBCASE("conservative honest model keeps mass, positivity")
  {
    auto u0 = GridDensity::sample(m.grid(), [](const Point&) { return 0.5; });
    EvolveOptions opt;
    opt.record_stride = 0;
    std::size_t calls = 0;
    opt.observer = [&](std::size_t, double, const GridDensity& u) {
      ++calls;
      CHECK(u.nonnegative());
    };
    auto r = evolve(u0, 0.5, 50, m.kernel, *m.disc, opt);
    CHECK(calls == 51);
    CHECK(r.records.size() == 2);
    CHECK_FALSE(r.inconclusive);
    for (double x : r.mass)
      CHECK(x == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("mass is nonincreasing on the doubling chain")
  {
    const auto& d = doubling();
    auto u0 = GridDensity::sample(d.grid(), [](const Point& x) { return x[1] == 1.0 ? 1.0 : 0.0; });
    auto r = evolve(u0, 1.0, 50, d.kernel, *d.disc);
    for (std::size_t k = 1; k < r.mass.size(); ++k)
      CHECK(r.mass[k] <= r.mass[k - 1] * (1 + 1e-12));
    CHECK(r.positive);
  }
}

TEST_CASE("closure_qi_check")
{
  const auto& m = chain();
  const auto& g = m.grid();
  // B = 0; with f∂ = π/v the boundary inequality holds with equality.
  auto fm = BoundaryDensity::sample(g, Side::Minus, [](const Point& z) {
    int i = z[1] == 1.0 ? 0 : (z[1] == 2.0 ? 1 : 2);
    return kPi[i] / z[1];
  });
  auto rep = closure_qi_check(GridDensity::zeros(g), fm, m.kernel, *m.disc);
  CHECK(rep.pass);
  // Halving one node breaks it there.
  auto bad = fm;
  bad.values[1] *= 0.5;
  auto rb = closure_qi_check(GridDensity::zeros(g), bad, m.kernel, *m.disc);
  CHECK_FALSE(rb.pass);
  CHECK(rb.where == "minus");
  CHECK(rb.index == 1);
  CHECK(rb.max_violation > 0.0);
}

TEST_CASE("cpert1 and cperturb2")
{
  auto c = cpert1_check(*network().disc);
  CHECK(c.pass);
  CHECK(c.min_t_plus == doctest::Approx(0.5));
  auto d = cpert1_check(*doubling().disc);
  CHECK_FALSE(d.pass);
  CHECK(d.min_t_plus == doctest::Approx(std::ldexp(1.0, -47)));

  const auto& m = chain();
  auto fp = BoundaryDensity::sample(m.grid(), Side::Plus, [](const Point& z) {
    int i = z[1] == 1.0 ? 0 : (z[1] == 2.0 ? 1 : 2);
    return kPi[i] / z[1];
  });
  CHECK(cperturb2_check(fp, m.kernel, *m.disc).pass);
  auto ones = BoundaryDensity::sample(m.grid(), Side::Plus, [](const Point&) { return 1.0; });
  CHECK_FALSE(cperturb2_check(ones, m.kernel, *m.disc).pass);
}
