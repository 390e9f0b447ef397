#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pdmp {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

// Gauss–Legendre rule with n points on [-1, 1].
const QuadratureRule& gauss_legendre(std::size_t n);

// Gauss–Legendre rule mapped to [a, b].
QuadratureRule gauss_legendre(std::size_t n, double a, double b);

// Composite Gauss–Legendre over the given breakpoints (ascending), n points
// per panel.
QuadratureRule composite_gauss_legendre(std::span<const double> breaks,
  std::size_t n);

// Panel breakpoints for [a, b]: `panels` equal panels, with the outermost
// panel at each graded end split geometrically `grading_levels` times by a
// factor 4. Symmetric when both ends are graded.
std::vector<double> graded_breaks(double a, double b, std::size_t panels,
  std::size_t grading_levels, bool grade_left, bool grade_right);

// Integral of f over [a, b] with composite Gauss–Legendre (`panels` x `n`).
double integrate(const std::function<double(double)>& f, double a, double b,
  std::size_t panels = 16, std::size_t n = 16);

} // namespace pdmp
