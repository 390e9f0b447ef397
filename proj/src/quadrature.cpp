#include "pdmp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "pdmp/common.hpp"

namespace pdmp {

namespace {

QuadratureRule compute_gauss_legendre(std::size_t n)
{
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    // Recompute derivative at the converged node.
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1)
    rule.nodes[n / 2] = 0.0;
  return rule;
}

} // namespace

const QuadratureRule& gauss_legendre(std::size_t n)
{
  require(n >= 1, "Gauss-Legendre order must be positive");
  static std::mutex mutex;
  static std::map<std::size_t, QuadratureRule> cache;
  std::lock_guard lock {mutex};
  auto it = cache.find(n);
  if (it == cache.end()) {
    if (n == 1)
      it = cache.emplace(n, QuadratureRule {{0.0}, {2.0}}).first;
    else
      it = cache.emplace(n, compute_gauss_legendre(n)).first;
  }
  return it->second;
}

QuadratureRule gauss_legendre(std::size_t n, double a, double b)
{
  const auto& ref = gauss_legendre(n);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double half = 0.5 * (b - a);
  double mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * ref.nodes[i];
    rule.weights[i] = half * ref.weights[i];
  }
  return rule;
}

QuadratureRule composite_gauss_legendre(std::span<const double> breaks,
  std::size_t n)
{
  QuadratureRule out;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    auto panel = gauss_legendre(n, breaks[p], breaks[p + 1]);
    out.nodes.insert(out.nodes.end(), panel.nodes.begin(), panel.nodes.end());
    out.weights.insert(
      out.weights.end(), panel.weights.begin(), panel.weights.end());
  }
  return out;
}

std::vector<double> graded_breaks(double a, double b, std::size_t panels,
  std::size_t grading_levels, bool grade_left, bool grade_right)
{
  require(b > a, "graded_breaks: empty interval");
  require(panels >= 1, "graded_breaks: need at least one panel");
  double h = (b - a) / panels;
  std::vector<double> breaks;
  breaks.push_back(a);
  if (grade_left) {
    double len = h;
    std::vector<double> inner;
    for (std::size_t l = 0; l < grading_levels; ++l) {
      len /= 4.0;
      inner.push_back(a + len);
    }
    breaks.insert(breaks.end(), inner.rbegin(), inner.rend());
  }
  for (std::size_t p = 1; p < panels; ++p)
    breaks.push_back(a + p * h);
  if (grade_right) {
    double len = h;
    for (std::size_t l = 0; l < grading_levels; ++l) {
      len /= 4.0;
      breaks.push_back(b - len);
    }
  }
  breaks.push_back(b);
  // Single-panel grids graded at both ends interleave.
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  return breaks;
}

double integrate(const std::function<double(double)>& f, double a, double b,
  std::size_t panels, std::size_t n)
{
  const auto& ref = gauss_legendre(n);
  double h = (b - a) / panels;
  double sum = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    double lo = a + p * h;
    double mid = lo + 0.5 * h;
    double part = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      part += ref.weights[i] * f(mid + 0.5 * h * ref.nodes[i]);
    sum += 0.5 * h * part;
  }
  return sum;
}

} // namespace pdmp
