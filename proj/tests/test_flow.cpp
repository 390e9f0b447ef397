#include <doctest.h>

#include <cmath>

#include "pdmp/distributions.hpp"
#include "pdmp/flow.hpp"
#include "pdmp/models.hpp"
#include "pdmp/quadrature.hpp"

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

// Linear decay with only the vector field set, so the integrator path is used.
FlowModel numeric_decay(double g)
{
  FlowModel f;
  f.dim = 2;
  f.vector_field = [g](const Point& x) { return Point {-g * x[0], 1.0}; };
  f.divergence = [g](const Point&) { return -g; };
  f.inside = [](const Point& x) { return x[0] > 0.0 && x[1] > 0.0; };
  return f;
}

// Free transport on (0,1) without closed forms.
FlowModel numeric_transport()
{
  FlowModel f;
  f.dim = 2;
  f.vector_field = [](const Point& x) { return Point {x[1], 0.0}; };
  f.divergence = [](const Point&) { return 0.0; };
  f.inside = [](const Point& x) { return x[0] > 0.0 && x[0] < 1.0; };
  return f;
}

} // namespace

TEST_CASE("gene flow: closed-form values")
{
  const auto& flow = gene().disc->flow();
  auto y = flow_advance(flow, Point {2.0, 0.0}, std::log(2.0));
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(cocycle(flow, Point {2.0, 0.0}, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::isinf(hit_time(flow, Point {3.0, 1.5}, Direction::Forward)));
  CHECK(hit_time(flow, Point {3.0, 1.5}, Direction::Backward) == doctest::Approx(1.5));
}

TEST_CASE("network flow: transport and exit times")
{
  const auto& flow = network().disc->flow();
  auto y = flow_advance(flow, Point {0.25, 2.0}, 0.25);
  CHECK(y[0] == doctest::Approx(0.75));
  CHECK(y[1] == 2.0);
  CHECK(hit_time(flow, Point {0.5, 2.0}, Direction::Backward) == doctest::Approx(0.25));
  CHECK(hit_time(flow, Point {0.5, 2.0}, Direction::Forward) == doctest::Approx(0.25));
  CHECK(cocycle(flow, Point {0.3, 1.0}, 0.4) == 1.0);
  CHECK_THROWS_AS(flow_advance(flow, Point {0.5, 2.0}, 0.3), BoundaryCrossingError);
}

TEST_CASE("identity at t = 0")
{
  for (const ModelSpec* m : {&gene(), &network()}) {
    Point x = m->family == "gene" ? Point {1.3, 0.7} : Point {0.4, 1.0};
    CHECK(flow_advance(m->disc->flow(), x, 0.0) == x);
    CHECK(cocycle(m->disc->flow(), x, 0.0) == 1.0);
  }
}

TEST_CASE("integrator agrees with the exponential solution")
{
  auto f = numeric_decay(0.7);
  Point x {2.0, 0.1};
  for (double t : {0.3, 1.0, -0.05, 2.5}) {
    auto y = flow_advance(f, x, t);
    CHECK(y[0] == doctest::Approx(2.0 * std::exp(-0.7 * t)).epsilon(1e-7));
    CHECK(y[1] == doctest::Approx(0.1 + t).epsilon(1e-9));
    CHECK(cocycle(f, x, t) == doctest::Approx(std::exp(-0.7 * t)).epsilon(1e-7));
  }
}

TEST_CASE("group property and cocycle identity")
{
  auto f = numeric_decay(1.3);
  Point x {1.5, 0.2};
  double s = 0.4, t = 0.9;
  auto a = flow_advance(f, flow_advance(f, x, s), t);
  auto b = flow_advance(f, x, s + t);
  CHECK(max_abs_diff(a, b) < 1e-7);
  double lhs = cocycle(f, x, s + t);
  double rhs = cocycle(f, flow_advance(f, x, s), t) * cocycle(f, x, s);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7));
}

TEST_CASE("numeric hit times match x/v and (1-x)/v")
{
  auto f = numeric_transport();
  for (double v : {0.5, 1.0, 3.0}) {
    for (double x : {0.1, 0.5, 0.9}) {
      CHECK(hit_time(f, Point {x, v}, Direction::Backward) == doctest::Approx(x / v).epsilon(1e-9));
      CHECK(hit_time(f, Point {x, v}, Direction::Forward) == doctest::Approx((1 - x) / v).epsilon(1e-9));
      // Consistency: t₊(φ_t x) = t₊(x) - t.
      double tp = hit_time(f, Point {x, v}, Direction::Forward);
      auto y = flow_advance(f, Point {x, v}, 0.5 * tp);
      CHECK(hit_time(f, y, Direction::Forward) == doctest::Approx(0.5 * tp).epsilon(1e-8));
    }
  }
  CHECK(std::isinf(hit_time(f, Point {0.5, 0.0}, Direction::Forward)));
}

TEST_CASE("cumulative hazard")
{
  const auto& net = network();
  CHECK(cumulative_hazard(net.disc->hazard(), net.disc->flow(), Point {0.5, 1.0}, 0.3) == 0.0);

  SUBCASE("exponential rate is constant")
  {
    auto m = build_model({{"family", "gene"},
      {"parameters", {{"interjump", {{"type", "exponential"}, {"rate", 2.5}}}}}});
    for (double t : {0.0, 0.5, 3.0})
      CHECK(cumulative_hazard(m->disc->hazard(), m->disc->flow(), Point {1.0, 4.0}, t)
        == doctest::Approx(2.5 * t));
  }
  SUBCASE("gamma(2,1): t - ln(1+t) forward from s = 0")
  {
    auto m = build_model({{"family", "gene"},
      {"parameters", {{"interjump", {{"type", "gamma"}, {"shape", 2.0}, {"scale", 1.0}}}}}});
    const auto& hz = m->disc->hazard();
    const auto& fl = m->disc->flow();
    for (double t : {0.25, 1.0, 4.0}) {
      // Backward from (x, t) reaches s = 0 after time t.
      CHECK(cumulative_hazard(hz, fl, Point {1.0, t}, t) == doctest::Approx(t - std::log1p(t)).epsilon(1e-10));
      CHECK(forward_cumulative_hazard(hz, fl, Point {1.0, 0.0}, t)
        == doctest::Approx(t - std::log1p(t)).epsilon(1e-9));
      CHECK(hz.rate(Point {1.0, t}) == doctest::Approx(t / (1 + t)).epsilon(1e-10));
    }
  }
}

TEST_CASE("quadrature")
{
  const auto& r = gauss_legendre(8);
  double p14 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i)
    p14 += r.weights[i] * std::pow(r.nodes[i], 14);
  CHECK(p14 == doctest::Approx(2.0 / 15.0).epsilon(1e-14));
  CHECK(integrate([](double x) { return std::exp(-x); }, 0.0, 5.0) == doctest::Approx(1 - std::exp(-5.0)).epsilon(1e-14));
  auto b = graded_breaks(0.0, 1.0, 4, 3, true, false);
  CHECK(b.front() == 0.0);
  CHECK(b.back() == 1.0);
  CHECK(b[1] == doctest::Approx(0.25 / 64));
  for (std::size_t i = 1; i < b.size(); ++i)
    CHECK(b[i] > b[i - 1]);
}

TEST_CASE("distributions against closed forms")
{
  auto g = Distribution::gamma(2.0, 1.0);
  CHECK(g.survival(1.5) == doctest::Approx(2.5 * std::exp(-1.5)).epsilon(1e-14));
  CHECK(g.laplace(1.0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(g.quantile(g.cdf(0.8)) == doctest::Approx(0.8).epsilon(1e-12));
  auto e = Distribution::exponential(3.0);
  CHECK(e.laplace(1.0) == doctest::Approx(0.75));
  CHECK(e.hazard_lower_bound() == doctest::Approx(3.0));
  auto u = Distribution::uniform(1.0, 2.0);
  CHECK_FALSE(u.unbounded_support());
  CHECK_THROWS_AS(Distribution::from_json({{"type", "exponential"}, {"rate", -1.0}}), ConfigError);
  CHECK_THROWS_AS(build_model({{"family", "gene"},
                    {"parameters", {{"interjump", {{"type", "uniform"}, {"a", 0.5}, {"b", 1.0}}}}}}),
    ConfigError);
}
