// Command-line front end over the C interface.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdmp/pdmp.h"

namespace {

using nlohmann::json;

// Exit codes shared with pdmp_run_config_file.
constexpr int kUsage = 1;
constexpr int kConfig = 2;
constexpr int kInternal = 4;

struct Owned {
  char* p {nullptr};
  ~Owned() { pdmp_string_free(p); }
};

int status_exit(pdmp_status s)
{
  switch (s) {
  case PDMP_OK:
    return 0;
  case PDMP_ERR_CONFIG:
  case PDMP_ERR_ARGUMENT:
    return kConfig;
  case PDMP_ERR_INCONCLUSIVE:
    return 3;
  default:
    return kInternal;
  }
}

std::string value_text(const json& v)
{
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  if (v.is_string())
    return v.get<std::string>();
  return v.dump();
}

void print_catalog(const json& list)
{
  std::cout << list.size() << " model(s)\n";
  for (const auto& m : list) {
    std::cout << "\n" << m["name"].get<std::string>() << "  [" << m["family"].get<std::string>()
              << ", " << m["source"].get<std::string>() << "]\n";
    std::cout << "  " << m["description"].get<std::string>() << "\n";
    std::cout << "  parameters: " << m["parameters"].dump() << "\n";
    std::cout << "  grid: " << m["bulk_nodes"] << " bulk nodes, " << m["minus_nodes"] << " incoming, "
              << m["plus_nodes"] << " outgoing\n";
    if (!m["truncation"].is_null() && !m["truncation"].empty())
      std::cout << "  truncation: " << m["truncation"].dump() << "\n";
    std::cout << "  known answers:\n";
    for (const auto& k : m["known_answers"])
      std::cout << "    " << k["quantity"].get<std::string>() << " = " << value_text(k["value"])
                << "   (" << k["expression"].get<std::string>() << "; provenance: "
                << k["provenance"].get<std::string>() << ")\n";
  }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app {"Density solver and Monte Carlo simulator for piecewise deterministic Markov processes"};
  app.set_version_flag("--version", std::string(pdmp_version()));
  app.require_subcommand(1);

  std::string run_path;
  bool run_quiet = false;
  auto* run = app.add_subcommand("run", "Run an experiment config and write its artifacts");
  run->add_option("config", run_path, "Config file (JSON)")->required();
  run->add_flag("-q,--quiet", run_quiet, "Print nothing on success");

  std::vector<std::string> register_files;
  bool list_json = false;
  auto* list = app.add_subcommand("list-models", "Print the model catalog");
  list->add_option("--register", register_files, "Model file to register first (repeatable)");
  list->add_flag("--json", list_json, "Print the catalog as JSON");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "Check a config without running it");
  validate->add_option("config", validate_path, "Config file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*run) {
    int code = kInternal;
    Owned report;
    pdmp_status s = pdmp_run_config_file(run_path.c_str(), &code, &report.p);
    if (s != PDMP_OK && s != PDMP_ERR_INCONCLUSIVE) {
      std::cerr << "error (" << pdmp_status_name(s) << "): " << pdmp_last_error() << "\n";
      return code != 0 ? code : status_exit(s);
    }
    if (s == PDMP_ERR_INCONCLUSIVE)
      std::cerr << "inconclusive: " << pdmp_last_error() << "\n";
    if (!run_quiet && report.p) {
      json rep = json::parse(report.p);
      std::cout << "experiment: " << rep["experiment"].get<std::string>() << "\n";
      std::cout << "results: " << rep["results"].dump() << "\n";
      for (const auto& f : rep["files"])
        std::cout << "wrote " << f.get<std::string>() << "\n";
    }
    return code;
  }

  if (*list) {
    for (const auto& f : register_files) {
      Owned name;
      pdmp_status s = pdmp_register_model_file(f.c_str(), &name.p);
      if (s != PDMP_OK) {
        std::cerr << "cannot register " << f << ": " << pdmp_last_error() << "\n";
        return status_exit(s);
      }
    }
    Owned out;
    pdmp_status s = pdmp_list_models(&out.p);
    if (s != PDMP_OK) {
      std::cerr << "error: " << pdmp_last_error() << "\n";
      return status_exit(s);
    }
    if (list_json)
      std::cout << out.p << "\n";
    else
      print_catalog(json::parse(out.p));
    return 0;
  }

  if (*validate) {
    Owned report;
    pdmp_status s = pdmp_validate_config_file(validate_path.c_str(), &report.p);
    if (s != PDMP_OK) {
      std::cerr << "invalid config: " << pdmp_last_error() << "\n";
      return status_exit(s);
    }
    std::cout << "valid\n";
    return 0;
  }
  return kUsage;
}
