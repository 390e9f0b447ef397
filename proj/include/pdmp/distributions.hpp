#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace pdmp {

// Probability density on (0, ∞): exponential(rate), gamma(shape, scale),
// uniform(a, b) or a tabulated histogram on explicit bin edges.
class Distribution {
public:
  enum class Kind { Exponential, Gamma, Uniform, Tabulated };

  static Distribution exponential(double rate);
  static Distribution gamma(double shape, double scale);
  static Distribution uniform(double a, double b);
  static Distribution tabulated(std::vector<double> edges, std::vector<double> mass);
  static Distribution from_json(const nlohmann::json& j);

  Kind kind() const { return kind_; }
  nlohmann::json to_json() const;
  std::string describe() const;

  double pdf(double x) const;
  double cdf(double x) const;
  double survival(double x) const;
  double log_survival(double x) const;
  double quantile(double u) const;
  // Smallest x with survival(x) <= p.
  double survival_quantile(double p) const;
  double mean() const;
  // ∫₀^∞ e^{-λs} pdf(s) ds, closed form where available.
  double laplace(double lambda) const;
  // Survival stays positive on (0, ∞), so the hazard pdf/survival is finite.
  bool unbounded_support() const;
  // Essential infimum of the hazard pdf/survival.
  double hazard_lower_bound() const;

private:
  Kind kind_ {Kind::Exponential};
  double a_ {1.0};
  double b_ {1.0};
  std::vector<double> edges_;
  std::vector<double> cumulative_; // CDF at edges_
};

} // namespace pdmp
