#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>

namespace pdmp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kMaxDim = 6;

//==============================================================================
// Error hierarchy. Each class maps onto one C-API status code.
//==============================================================================

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent user input (configs, model parameters).
class ConfigError : public Error {
public:
  using Error::Error;
};

// A numerical procedure failed (step underflow, bracketing failure).
class NumericError : public Error {
public:
  using Error::Error;
};

// A trajectory left the closure of E inside a requested interval.
class BoundaryCrossingError : public NumericError {
public:
  using NumericError::NumericError;
};

// Operation called outside its precondition (wrong grid, wrong kernel shape).
class PreconditionError : public Error {
public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what)
{
  if (!cond)
    throw PreconditionError(what);
}

//==============================================================================
// Point: a fixed-capacity point of the phase space, no heap allocation.
//==============================================================================

class Point {
public:
  Point() = default;
  explicit Point(std::size_t n) : n_ {n}
  {
    if (n > kMaxDim)
      throw PreconditionError("phase-space dimension exceeds kMaxDim");
    v_.fill(0.0);
  }
  Point(std::initializer_list<double> values) : Point(values.size())
  {
    std::size_t i = 0;
    for (double x : values)
      v_[i++] = x;
  }

  std::size_t size() const { return n_; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  const double* data() const { return v_.data(); }
  double* data() { return v_.data(); }
  const double* begin() const { return v_.data(); }
  const double* end() const { return v_.data() + n_; }

  Point& operator+=(const Point& o)
  {
    for (std::size_t i = 0; i < n_; ++i)
      v_[i] += o.v_[i];
    return *this;
  }
  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator*(double c, Point a)
  {
    for (std::size_t i = 0; i < a.n_; ++i)
      a.v_[i] *= c;
    return a;
  }
  friend bool operator==(const Point& a, const Point& b)
  {
    if (a.n_ != b.n_)
      return false;
    for (std::size_t i = 0; i < a.n_; ++i)
      if (a.v_[i] != b.v_[i])
        return false;
    return true;
  }

private:
  std::array<double, kMaxDim> v_ {};
  std::size_t n_ {0};
};

inline double max_abs_diff(const Point& a, const Point& b)
{
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// exp(-x) with exp(-inf) := 0, the convention used for infinite hitting times.
inline double damp(double x)
{
  return std::isinf(x) ? 0.0 : std::exp(-x);
}

} // namespace pdmp
