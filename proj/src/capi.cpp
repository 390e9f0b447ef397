#include "pdmp/pdmp.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "pdmp/experiment.hpp"
#include "pdmp/models.hpp"
#include "pdmp/solver.hpp"

using nlohmann::json;

struct pdmp_model {
  std::shared_ptr<pdmp::ModelSpec> spec;
};

namespace {

thread_local std::string g_last_error;

pdmp_status fail(pdmp_status s, const std::string& msg)
{
  g_last_error = msg;
  return s;
}

template <class F>
pdmp_status guarded(F&& f)
{
  try {
    g_last_error.clear();
    return f();
  } catch (const pdmp::ConfigError& e) {
    return fail(PDMP_ERR_CONFIG, e.what());
  } catch (const pdmp::BoundaryCrossingError& e) {
    return fail(PDMP_ERR_BOUNDARY, e.what());
  } catch (const pdmp::NumericError& e) {
    return fail(PDMP_ERR_NUMERIC, e.what());
  } catch (const pdmp::PreconditionError& e) {
    return fail(PDMP_ERR_PRECONDITION, e.what());
  } catch (const json::exception& e) {
    return fail(PDMP_ERR_CONFIG, std::string("JSON: ") + e.what());
  } catch (const std::exception& e) {
    return fail(PDMP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(PDMP_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s)
{
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p)
    throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

pdmp::Point to_point(const pdmp_model* m, const double* x, std::size_t dim)
{
  if (dim != m->spec->grid().dim)
    throw pdmp::PreconditionError("point dimension does not match the model");
  pdmp::Point p(dim);
  for (std::size_t i = 0; i < dim; ++i)
    p[i] = x[i];
  return p;
}

#define PDMP_CHECK_ARG(cond, what)                                                                 \
  do {                                                                                             \
    if (!(cond))                                                                                   \
      return fail(PDMP_ERR_ARGUMENT, what);                                                        \
  } while (0)

} // namespace

extern "C" {

const char* pdmp_version(void) { return pdmp::library_version(); }

const char* pdmp_last_error(void) { return g_last_error.c_str(); }

const char* pdmp_status_name(pdmp_status status)
{
  switch (status) {
  case PDMP_OK:
    return "ok";
  case PDMP_ERR_USAGE:
    return "usage";
  case PDMP_ERR_CONFIG:
    return "config";
  case PDMP_ERR_INCONCLUSIVE:
    return "inconclusive";
  case PDMP_ERR_INTERNAL:
    return "internal";
  case PDMP_ERR_NUMERIC:
    return "numeric";
  case PDMP_ERR_BOUNDARY:
    return "boundary-crossing";
  case PDMP_ERR_PRECONDITION:
    return "precondition";
  case PDMP_ERR_ARGUMENT:
    return "argument";
  }
  return "unknown";
}

void pdmp_string_free(char* s) { std::free(s); }

pdmp_status pdmp_model_create(const char* spec, pdmp_model** out)
{
  PDMP_CHECK_ARG(spec && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    std::string s(spec);
    std::shared_ptr<pdmp::ModelSpec> m;
    auto first = s.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && s[first] == '{') {
      json def;
      try {
        def = json::parse(s);
      } catch (const json::parse_error& e) {
        throw pdmp::ConfigError(std::string("model definition is not valid JSON: ") + e.what());
      }
      m = pdmp::build_model(def);
    } else {
      m = pdmp::build_model(pdmp::ModelRegistry::instance().resolve(s), s);
    }
    *out = new pdmp_model {std::move(m)};
    return PDMP_OK;
  });
}

void pdmp_model_destroy(pdmp_model* model) { delete model; }

pdmp_status pdmp_model_info(const pdmp_model* model, char** json_out)
{
  PDMP_CHECK_ARG(model && json_out, "null argument");
  return guarded([&] {
    *json_out = dup_string(pdmp::model_to_json(*model->spec).dump(2));
    return PDMP_OK;
  });
}

pdmp_status pdmp_model_dim(const pdmp_model* model, size_t* dim)
{
  PDMP_CHECK_ARG(model && dim, "null argument");
  *dim = model->spec->grid().dim;
  return PDMP_OK;
}

pdmp_status pdmp_flow_advance(const pdmp_model* model, const double* x, size_t dim, double t,
  double* out)
{
  PDMP_CHECK_ARG(model && x && out, "null argument");
  return guarded([&] {
    auto y = pdmp::flow_advance(model->spec->disc->flow(), to_point(model, x, dim), t);
    for (std::size_t i = 0; i < dim; ++i)
      out[i] = y[i];
    return PDMP_OK;
  });
}

pdmp_status pdmp_cocycle(const pdmp_model* model, const double* x, size_t dim, double t, double* out)
{
  PDMP_CHECK_ARG(model && x && out, "null argument");
  return guarded([&] {
    *out = pdmp::cocycle(model->spec->disc->flow(), to_point(model, x, dim), t);
    return PDMP_OK;
  });
}

pdmp_status pdmp_hit_time(const pdmp_model* model, const double* x, size_t dim, int forward,
  double* out)
{
  PDMP_CHECK_ARG(model && x && out, "null argument");
  return guarded([&] {
    *out = pdmp::hit_time(model->spec->disc->flow(), to_point(model, x, dim),
      forward ? pdmp::Direction::Forward : pdmp::Direction::Backward);
    return PDMP_OK;
  });
}

pdmp_status pdmp_cumulative_hazard(const pdmp_model* model, const double* x, size_t dim, double t,
  double* out)
{
  PDMP_CHECK_ARG(model && x && out, "null argument");
  return guarded([&] {
    const auto& d = *model->spec->disc;
    *out = pdmp::cumulative_hazard(d.hazard(), d.flow(), to_point(model, x, dim), t);
    return PDMP_OK;
  });
}

pdmp_status pdmp_norm_psipsi(const pdmp_model* model, double lambda, double* norm,
  double* spectral_radius)
{
  PDMP_CHECK_ARG(model && norm, "null argument");
  return guarded([&] {
    auto r = pdmp::norm_PsiPsi(lambda, model->spec->kernel, *model->spec->disc);
    *norm = r.norm;
    if (spectral_radius)
      *spectral_radius = r.spectral_radius;
    return PDMP_OK;
  });
}

pdmp_status pdmp_mc_expectation(const pdmp_model* model, const char* request_json, char** result_json)
{
  PDMP_CHECK_ARG(model && request_json && result_json, "null argument");
  return guarded([&] {
    json req;
    try {
      req = json::parse(request_json);
    } catch (const json::parse_error& e) {
      throw pdmp::ConfigError(std::string("request is not valid JSON: ") + e.what());
    }
    const auto& m = *model->spec;
    auto times = req.value("times", std::vector<double> {1.0});
    std::vector<pdmp::TestFunction> tests;
    for (const auto& f : req.value("test_functions", json::array({"1"})))
      tests.push_back(pdmp::test_function_from_json(f));
    json init = req.value("initial", m.family == "gene"
        ? json {{"type", "bump"}, {"center", {2.0, 1.0}}, {"radius", {1.0, 0.5}}}
        : json {{"type", "uniform"}});
    auto ic = m.initial(init);
    pdmp::McRun run;
    run.n_paths = req.value("paths", std::size_t {10000});
    run.path.rng_seed = req.value("seed", std::uint64_t {1});
    run.path.max_jumps = req.value("max_jumps", std::size_t {1000000});
    auto e = pdmp::mc_expectation(tests, times, ic.sample, m.mc, run);
    json out = {{"times", e.times}, {"functions", e.names}, {"estimate", e.estimate},
      {"std_error", e.std_error}, {"explosion_fraction", e.explosion_fraction},
      {"killed_fraction", e.killed_fraction}, {"paths", e.paths}};
    *result_json = dup_string(out.dump());
    return PDMP_OK;
  });
}

pdmp_status pdmp_run_config_file(const char* path, int* exit_code, char** report_json)
{
  PDMP_CHECK_ARG(path && exit_code, "null argument");
  return guarded([&] {
    pdmp::RunOutput r = pdmp::run_config_file(path);
    *exit_code = static_cast<int>(r.status);
    json rep = r.manifest.is_null() ? json {{"status", *exit_code}, {"message", r.message}} : r.manifest;
    if (report_json)
      *report_json = dup_string(rep.dump(2));
    if (r.status != pdmp::ExitCode::Ok && r.status != pdmp::ExitCode::Inconclusive)
      return fail(static_cast<pdmp_status>(r.status), r.message);
    if (r.status == pdmp::ExitCode::Inconclusive)
      g_last_error = r.message;
    return r.status == pdmp::ExitCode::Ok ? PDMP_OK : PDMP_ERR_INCONCLUSIVE;
  });
}

pdmp_status pdmp_validate_config_file(const char* path, char** report_json)
{
  PDMP_CHECK_ARG(path, "null argument");
  return guarded([&] {
    pdmp::RunOutput r = pdmp::validate_config_file(path);
    if (report_json)
      *report_json = dup_string(r.status == pdmp::ExitCode::Ok ? r.manifest.dump(2)
                                                               : json {{"error", r.message}}.dump(2));
    if (r.status != pdmp::ExitCode::Ok)
      return fail(static_cast<pdmp_status>(r.status), r.message);
    return PDMP_OK;
  });
}

pdmp_status pdmp_list_models(char** json_out)
{
  PDMP_CHECK_ARG(json_out, "null argument");
  return guarded([&] {
    json list = json::array();
    for (const auto& e : pdmp::ModelRegistry::instance().entries()) {
      auto m = pdmp::build_model(e.definition, e.name);
      json info = pdmp::model_to_json(*m);
      info["source"] = e.source;
      list.push_back(info);
    }
    *json_out = dup_string(list.dump(2));
    return PDMP_OK;
  });
}

pdmp_status pdmp_register_model_file(const char* path, char** name_out)
{
  PDMP_CHECK_ARG(path, "null argument");
  return guarded([&] {
    std::string name = pdmp::ModelRegistry::instance().register_file(path);
    if (name_out)
      *name_out = dup_string(name);
    return PDMP_OK;
  });
}

} // extern "C"
