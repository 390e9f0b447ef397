#include "pdmp/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "pdmp/common.hpp"

namespace pdmp {

Distribution Distribution::exponential(double rate)
{
  if (!(rate > 0.0) || !std::isfinite(rate))
    throw ConfigError("exponential rate must be positive");
  Distribution d;
  d.kind_ = Kind::Exponential;
  d.a_ = rate;
  return d;
}

Distribution Distribution::gamma(double shape, double scale)
{
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale))
    throw ConfigError("gamma shape and scale must be positive");
  Distribution d;
  d.kind_ = Kind::Gamma;
  d.a_ = shape;
  d.b_ = scale;
  return d;
}

Distribution Distribution::uniform(double a, double b)
{
  if (!(a >= 0.0) || !(b > a) || !std::isfinite(b))
    throw ConfigError("uniform bounds must satisfy 0 <= a < b");
  Distribution d;
  d.kind_ = Kind::Uniform;
  d.a_ = a;
  d.b_ = b;
  return d;
}

Distribution Distribution::tabulated(std::vector<double> edges, std::vector<double> mass)
{
  if (edges.size() < 2 || mass.size() + 1 != edges.size())
    throw ConfigError("tabulated density needs n+1 edges for n bins");
  if (edges.front() < 0.0)
    throw ConfigError("tabulated density must live on (0, ∞)");
  double total = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (!(edges[i + 1] > edges[i]))
      throw ConfigError("tabulated edges must be increasing");
    if (!(mass[i] >= 0.0))
      throw ConfigError("tabulated bin masses must be nonnegative");
    total += mass[i];
  }
  if (!(total > 0.0))
    throw ConfigError("tabulated density has zero mass");
  Distribution d;
  d.kind_ = Kind::Tabulated;
  d.edges_ = std::move(edges);
  d.cumulative_.assign(1, 0.0);
  for (double m : mass)
    d.cumulative_.push_back(d.cumulative_.back() + m / total);
  d.cumulative_.back() = 1.0;
  return d;
}

Distribution Distribution::from_json(const nlohmann::json& j)
{
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ConfigError("distribution must be an object with a string 'type'");
  const std::string type = j["type"];
  auto number = [&](const char* key, double fallback, bool required) {
    if (!j.contains(key)) {
      if (required)
        throw ConfigError("distribution '" + type + "' needs '" + key + "'");
      return fallback;
    }
    if (!j[key].is_number())
      throw ConfigError(std::string("distribution field '") + key + "' must be a number");
    return j[key].get<double>();
  };
  if (type == "exponential")
    return exponential(number("rate", 1.0, true));
  if (type == "gamma")
    return gamma(number("shape", 1.0, true), number("scale", 1.0, false));
  if (type == "uniform")
    return uniform(number("a", 0.0, true), number("b", 1.0, true));
  if (type == "tabulated") {
    if (!j.contains("edges") || !j.contains("mass"))
      throw ConfigError("tabulated distribution needs 'edges' and 'mass'");
    try {
      return tabulated(j["edges"].get<std::vector<double>>(), j["mass"].get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("tabulated distribution: ") + e.what());
    }
  }
  throw ConfigError("unknown distribution type '" + type + "'");
}

nlohmann::json Distribution::to_json() const
{
  switch (kind_) {
  case Kind::Exponential:
    return {{"type", "exponential"}, {"rate", a_}};
  case Kind::Gamma:
    return {{"type", "gamma"}, {"shape", a_}, {"scale", b_}};
  case Kind::Uniform:
    return {{"type", "uniform"}, {"a", a_}, {"b", b_}};
  case Kind::Tabulated: {
    std::vector<double> mass;
    for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
      mass.push_back(cumulative_[i + 1] - cumulative_[i]);
    return {{"type", "tabulated"}, {"edges", edges_}, {"mass", mass}};
  }
  }
  return {};
}

std::string Distribution::describe() const
{
  std::ostringstream os;
  switch (kind_) {
  case Kind::Exponential:
    os << "exponential(" << a_ << ")";
    break;
  case Kind::Gamma:
    os << "gamma(" << a_ << "," << b_ << ")";
    break;
  case Kind::Uniform:
    os << "uniform(" << a_ << "," << b_ << ")";
    break;
  case Kind::Tabulated:
    os << "tabulated(" << edges_.size() - 1 << " bins)";
    break;
  }
  return os.str();
}

double Distribution::pdf(double x) const
{
  if (x < 0.0)
    return 0.0;
  switch (kind_) {
  case Kind::Exponential:
    return a_ * std::exp(-a_ * x);
  case Kind::Gamma:
    if (x == 0.0)
      return a_ == 1.0 ? 1.0 / b_ : (a_ < 1.0 ? kInfinity : 0.0);
    return boost::math::gamma_p_derivative(a_, x / b_) / b_;
  case Kind::Uniform:
    return (x >= a_ && x <= b_) ? 1.0 / (b_ - a_) : 0.0;
  case Kind::Tabulated: {
    if (x < edges_.front() || x >= edges_.back())
      return 0.0;
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - edges_.begin()) - 1;
    return (cumulative_[i + 1] - cumulative_[i]) / (edges_[i + 1] - edges_[i]);
  }
  }
  return 0.0;
}

double Distribution::cdf(double x) const
{
  if (x <= 0.0)
    return 0.0;
  switch (kind_) {
  case Kind::Exponential:
    return -std::expm1(-a_ * x);
  case Kind::Gamma:
    return boost::math::gamma_p(a_, x / b_);
  case Kind::Uniform:
    return std::clamp((x - a_) / (b_ - a_), 0.0, 1.0);
  case Kind::Tabulated: {
    if (x <= edges_.front())
      return 0.0;
    if (x >= edges_.back())
      return 1.0;
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - edges_.begin()) - 1;
    double th = (x - edges_[i]) / (edges_[i + 1] - edges_[i]);
    return cumulative_[i] + th * (cumulative_[i + 1] - cumulative_[i]);
  }
  }
  return 0.0;
}

double Distribution::survival(double x) const
{
  if (x <= 0.0)
    return 1.0;
  switch (kind_) {
  case Kind::Exponential:
    return std::exp(-a_ * x);
  case Kind::Gamma:
    return boost::math::gamma_q(a_, x / b_);
  default:
    return 1.0 - cdf(x);
  }
}

double Distribution::log_survival(double x) const
{
  if (x <= 0.0)
    return 0.0;
  if (kind_ == Kind::Exponential)
    return -a_ * x;
  double s = survival(x);
  return s > 0.0 ? std::log(s) : -kInfinity;
}

double Distribution::quantile(double u) const
{
  require(u >= 0.0 && u <= 1.0, "quantile: probability outside [0,1]");
  switch (kind_) {
  case Kind::Exponential:
    return -std::log1p(-u) / a_;
  case Kind::Gamma:
    if (u == 0.0)
      return 0.0;
    if (u == 1.0)
      return kInfinity;
    return boost::math::gamma_p_inv(a_, u) * b_;
  case Kind::Uniform:
    return a_ + u * (b_ - a_);
  case Kind::Tabulated: {
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t i = std::max<std::size_t>(1, static_cast<std::size_t>(it - cumulative_.begin()));
    i = std::min(i, cumulative_.size() - 1);
    double dm = cumulative_[i] - cumulative_[i - 1];
    double th = dm > 0.0 ? (u - cumulative_[i - 1]) / dm : 0.0;
    return edges_[i - 1] + th * (edges_[i] - edges_[i - 1]);
  }
  }
  return 0.0;
}

double Distribution::survival_quantile(double p) const
{
  require(p >= 0.0 && p <= 1.0, "survival_quantile: probability outside [0,1]");
  if (p == 0.0)
    return unbounded_support() ? kInfinity : quantile(1.0);
  switch (kind_) {
  case Kind::Exponential:
    return -std::log(p) / a_;
  case Kind::Gamma:
    if (p == 1.0)
      return 0.0;
    return boost::math::gamma_q_inv(a_, p) * b_;
  default:
    return quantile(1.0 - p);
  }
}

double Distribution::mean() const
{
  switch (kind_) {
  case Kind::Exponential:
    return 1.0 / a_;
  case Kind::Gamma:
    return a_ * b_;
  case Kind::Uniform:
    return 0.5 * (a_ + b_);
  case Kind::Tabulated: {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < edges_.size(); ++i)
      m += (cumulative_[i + 1] - cumulative_[i]) * 0.5 * (edges_[i] + edges_[i + 1]);
    return m;
  }
  }
  return 0.0;
}

double Distribution::laplace(double lambda) const
{
  require(lambda >= 0.0, "laplace: lambda must be nonnegative");
  switch (kind_) {
  case Kind::Exponential:
    return a_ / (lambda + a_);
  case Kind::Gamma:
    return std::pow(1.0 + lambda * b_, -a_);
  case Kind::Uniform:
    if (lambda == 0.0)
      return 1.0;
    return (std::exp(-lambda * a_) - std::exp(-lambda * b_)) / (lambda * (b_ - a_));
  case Kind::Tabulated: {
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < edges_.size(); ++i) {
      double lo = edges_[i];
      double hi = edges_[i + 1];
      double dens = (cumulative_[i + 1] - cumulative_[i]) / (hi - lo);
      sum += lambda == 0.0 ? dens * (hi - lo)
                           : dens * (std::exp(-lambda * lo) - std::exp(-lambda * hi)) / lambda;
    }
    return sum;
  }
  }
  return 0.0;
}

bool Distribution::unbounded_support() const
{
  return kind_ == Kind::Exponential || kind_ == Kind::Gamma;
}

double Distribution::hazard_lower_bound() const
{
  switch (kind_) {
  case Kind::Exponential:
    return a_;
  case Kind::Gamma:
    // Hazard increases from 0 to 1/scale for shape > 1, decreases to it below.
    return a_ > 1.0 ? 0.0 : 1.0 / b_;
  default:
    return 0.0;
  }
}

} // namespace pdmp
