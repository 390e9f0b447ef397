#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pdmp/flow.hpp"
#include "pdmp/rng.hpp"

namespace pdmp {

using Rng = Philox4x32;

enum class JumpCause { Hazard, Boundary };
std::string to_string(JumpCause c);

// Draws the post-jump state from the pre-jump state (a point of E⁰ for
// hazard jumps, of Γ⁺ for boundary jumps). nullopt kills the path.
using JumpSampler = std::function<std::optional<Point>(const Point&, JumpCause, Rng&)>;

// Characteristics (φ, q, P) as seen by the simulator.
struct McModel {
  FlowModel flow;
  HazardSpec hazard;
  JumpSampler jump;
  // Declared majorant of q along trajectories; enables thinning when q has
  // no closed-form inverse cumulative hazard.
  std::optional<double> thinning_bound;
};

struct PathConfig {
  double t_final {1.0};
  std::size_t max_jumps {1'000'000};
  std::uint64_t rng_seed {0};
  std::optional<double> thinning_bound;
  std::size_t zeno_window {100};
  double zeno_threshold {1e-9};
};

enum class PathEnd { Horizon, Killed, ExplodedCap, ExplodedZeno };
std::string to_string(PathEnd e);

struct PathRecord {
  std::vector<double> times;     // τ₀ = 0 < τ₁ < ...
  std::vector<Point> states;     // post-jump states X₀, X₁, ...
  std::vector<JumpCause> causes; // cause of jump n (n ≥ 1), aligned with times[1..]
  PathEnd end {PathEnd::Horizon};
  double end_time {0.0};         // t_final, killing time or explosion proxy
};

struct InterjumpSample {
  double time {kInfinity};
  JumpCause cause {JumpCause::Hazard};
};

/// min(T_hazard, t₊(x)); inversion when hazard.inverse_forward is set,
/// thinning against `thinning_bound` otherwise.
InterjumpSample sample_interjump_time(const Point& x, const HazardSpec& hz,
  const FlowModel& flow, Rng& rng, std::optional<double> thinning_bound = std::nullopt);

Point sample_jump(const Point& x, JumpCause cause, const McModel& model, Rng& rng,
  bool* killed = nullptr);

PathRecord simulate_path(const Point& x0, const PathConfig& cfg, const McModel& model,
  std::uint64_t path_index = 0);

// State of the minimal process at time t, nullopt for the cemetery Δ.
std::optional<Point> state_at(const PathRecord& path, const McModel& model, double t);

struct TestFunction {
  std::string name;
  std::function<double(const Point&)> f;
};

struct McEstimate {
  std::vector<double> times;
  std::vector<std::string> names;
  // [function][time]
  std::vector<std::vector<double>> estimate;
  std::vector<std::vector<double>> std_error;
  std::vector<double> explosion_fraction; // exploded by time t
  std::vector<double> killed_fraction;
  std::size_t paths {0};
  std::size_t cap_explosions {0};
  std::size_t zeno_explosions {0};
  std::size_t workers {1};
};

struct McRun {
  std::size_t n_paths {100'000};
  PathConfig path;
  // When set, the first `dump_paths` paths are written as CSV rows.
  std::string dump_file;
  std::size_t dump_paths {0};
};

/// E[f(X(t)); t < τ_∞] for X(0) ~ initial, all functions and times in one pass.
McEstimate mc_expectation(const std::vector<TestFunction>& tests,
  const std::vector<double>& times, const std::function<Point(Rng&)>& initial,
  const McModel& model, const McRun& run);

// Worker count from PDMP_WORKERS, else hardware concurrency.
std::size_t worker_count();

// Pairwise (cascade) summation.
double pairwise_sum(const double* x, std::size_t n);

} // namespace pdmp
