#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdmp/distributions.hpp"
#include "pdmp/grid.hpp"
#include "pdmp/kernel.hpp"
#include "pdmp/montecarlo.hpp"

namespace pdmp {

struct KnownAnswer {
  std::string quantity;
  double value {0.0};
  std::string expression; // closed form, when the value depends on parameters
  std::string provenance;
};

// Initial law u0·m: density with respect to m (unit mass) and a sampler.
struct InitialCondition {
  std::string description;
  std::function<double(const Point&)> density;
  std::function<Point(Rng&)> sample;
};

struct ModelSpec {
  std::string name;
  std::string family; // gene | network | slab
  std::string description;
  nlohmann::json parameters; // every default materialized
  nlohmann::json grid_parameters;
  std::shared_ptr<const Discretization> disc;
  JumpKernel kernel;
  McModel mc;
  // Kernel columns carry unit mass wherever jumps originate.
  bool conservative {false};
  nlohmann::json truncation; // truncation levels and leaks, empty when none
  std::vector<KnownAnswer> known_answers;

  const CharGrid& grid() const { return disc->grid(); }
  InitialCondition initial(const nlohmann::json& spec) const;

  // Family-specific data used by initial conditions and checks.
  std::vector<double> velocities; // network, slab
  std::vector<double> velocity_weights;
  std::vector<double> maxwellian; // slab
  std::vector<double> collision_rate;
};

//==============================================================================
// Builders
//==============================================================================

struct GeneParams {
  double gamma {1.0};
  Distribution burst {Distribution::exponential(1.0)};
  Distribution interjump {Distribution::exponential(1.0)};
  double z_max {20.0}; // transverse cut of Γ⁻ = (0, z_max) x {0}
};

struct NetworkParams {
  std::vector<double> velocities {1.0, 2.0};
  std::vector<std::vector<double>> transition {{0.5, 0.5}, {0.5, 0.5}};
  // Doubling chain V = {base·2^k}, p(v, 2v) = 1, truncated at `levels`.
  bool doubling {false};
  std::size_t levels {48};
  double base {1.0};
};

struct SlabParams {
  std::vector<double> velocities {-1.0, 1.0};
  std::vector<double> weights {1.0, 1.0};       // ν
  std::vector<double> collision_rate {1.0, 1.0}; // q(v)
  // κ(v, v'), row v; empty selects the isotropic kernel q(v')/ν(V).
  std::vector<std::vector<double>> kappa;
  std::string boundary {"specular"}; // specular | diffuse | maxwell
  double accommodation {0.5};        // α for maxwell
  std::vector<double> maxwellian {0.5, 0.5};
};

GridResolution default_resolution(const std::string& family);
GridResolution resolution_from_json(const nlohmann::json& j, GridResolution base);
nlohmann::json resolution_to_json(const GridResolution& r);

std::shared_ptr<ModelSpec> gene_bursting(const GeneParams& p, const GridResolution& res);
std::shared_ptr<ModelSpec> network_transport(const NetworkParams& p, const GridResolution& res);
std::shared_ptr<ModelSpec> boltzmann_slab(const SlabParams& p, const GridResolution& res);

// Build from a definition {"family", "parameters", "grid"}.
std::shared_ptr<ModelSpec> build_model(const nlohmann::json& definition,
  const std::string& name = "");

// Test function from {"type": one | coordinate | indicator | interval | bump, ...}.
TestFunction test_function_from_json(const nlohmann::json& j);

//==============================================================================
// Registry
//==============================================================================

struct ModelEntry {
  std::string name;
  std::string source; // "builtin" or the file path
  nlohmann::json definition;
};

class ModelRegistry {
public:
  // Built-ins plus every file listed in PDMP_MODEL_PATH (colon separated,
  // files or directories of *.json).
  static ModelRegistry& instance();

  std::vector<ModelEntry> entries() const;
  std::optional<ModelEntry> find(const std::string& name) const;
  // Returns the registered name.
  std::string register_file(const std::string& path);
  std::string register_definition(const nlohmann::json& definition, const std::string& source);

  // Definition of `name` with parameter and grid overrides merged in.
  nlohmann::json resolve(const std::string& name, const nlohmann::json& overrides = {}) const;

private:
  ModelRegistry();
  mutable std::mutex mutex_;
  std::vector<ModelEntry> entries_;
};

} // namespace pdmp
