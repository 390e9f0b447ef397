#include "pdmp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "pdmp/montecarlo.hpp"

namespace pdmp {

using nlohmann::json;

const char* library_version() { return "1.0.0"; }

namespace {

const std::set<std::string> kExperiments {"diagnose", "evolve", "mc", "duality", "criteria"};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
  if (!j.is_object())
    throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

double number(const json& j, const char* key, double fallback, const std::string& where)
{
  if (!j.contains(key))
    return fallback;
  if (!j[key].is_number())
    throw ConfigError(where + "." + key + " must be a number");
  double v = j[key].get<double>();
  if (!std::isfinite(v))
    throw ConfigError(where + "." + key + " must be finite");
  return v;
}

std::uint64_t count(const json& j, const char* key, std::uint64_t fallback, const std::string& where)
{
  if (!j.contains(key))
    return fallback;
  if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 0)
    throw ConfigError(where + "." + key + " must be a nonnegative integer");
  return j[key].get<std::uint64_t>();
}

std::string fmt(double v)
{
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Model reference in normalized form: {"name", "overrides"} or {"definition"}.
json normalize_model(const json& m, const json& grid)
{
  json out;
  if (m.is_string()) {
    out = {{"name", m}, {"overrides", json::object()}};
  } else if (m.is_object() && m.contains("family")) {
    out = {{"definition", m}};
  } else if (m.is_object()) {
    check_keys(m, {"name", "parameters", "grid"}, "model");
    if (!m.contains("name") || !m["name"].is_string())
      throw ConfigError("model needs a registered 'name' or an inline 'family'");
    json ov = json::object();
    if (m.contains("parameters"))
      ov["parameters"] = m["parameters"];
    if (m.contains("grid"))
      ov["grid"] = m["grid"];
    out = {{"name", m["name"]}, {"overrides", ov}};
  } else {
    throw ConfigError("model must be a name or an object");
  }
  if (!grid.is_null()) {
    if (!grid.is_object())
      throw ConfigError("grid must be an object");
    if (out.contains("definition")) {
      if (!out["definition"].contains("grid"))
        out["definition"]["grid"] = json::object();
      out["definition"]["grid"].merge_patch(grid);
    } else {
      if (!out["overrides"].contains("grid"))
        out["overrides"]["grid"] = json::object();
      out["overrides"]["grid"].merge_patch(grid);
    }
  }
  return out;
}

json model_definition(const json& model)
{
  if (model.contains("definition"))
    return model["definition"];
  return ModelRegistry::instance().resolve(model["name"], model["overrides"]);
}

std::string definition_name(const json& model)
{
  if (model.contains("name"))
    return model["name"];
  return model["definition"].value("name", model["definition"].value("family", std::string("inline")));
}

std::string timestamp_utc()
{
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm {};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

//==============================================================================
// Validation
//==============================================================================

json validate_config(const json& raw)
{
  check_keys(raw, {"experiment", "model", "grid", "lambda", "series", "honesty", "initial",
                    "times", "dt", "test_functions", "mc", "duality", "criteria", "output"},
    "config");
  if (!raw.contains("experiment") || !raw["experiment"].is_string())
    throw ConfigError("config needs a string 'experiment'");
  const std::string exp = raw["experiment"];
  if (!kExperiments.count(exp))
    throw ConfigError("unknown experiment '" + exp + "' (diagnose, evolve, mc, duality, criteria)");
  if (!raw.contains("model"))
    throw ConfigError("config needs a 'model'");

  json c;
  c["experiment"] = exp;
  c["model"] = normalize_model(raw["model"], raw.value("grid", json()));
  json def = model_definition(c["model"]);
  const std::string family = def.value("family", std::string());

  c["lambda"] = number(raw, "lambda", 1.0, "config");
  if (!(c["lambda"].get<double>() > 0.0))
    throw ConfigError("lambda must be positive");

  json s = raw.value("series", json::object());
  check_keys(s, {"max_terms", "term_tol"}, "series");
  c["series"] = {{"max_terms", count(s, "max_terms", 200, "series")},
    {"term_tol", number(s, "term_tol", 1e-12, "series")}};
  if (c["series"]["max_terms"].get<std::uint64_t>() < 1 || c["series"]["term_tol"].get<double>() < 0.0)
    throw ConfigError("series: max_terms >= 1 and term_tol >= 0 required");

  json h = raw.value("honesty", json::object());
  check_keys(h, {"n_max", "floor", "stabilization", "window", "velocities"}, "honesty");
  c["honesty"] = {{"n_max", count(h, "n_max", 40, "honesty")},
    {"floor", number(h, "floor", 1e-8, "honesty")},
    {"stabilization", number(h, "stabilization", 1e-6, "honesty")},
    {"window", count(h, "window", 10, "honesty")}};
  if (h.contains("velocities")) {
    if (family == "gene")
      throw ConfigError("honesty.velocities: the gene model has no velocity coordinate");
    c["honesty"]["velocities"] = h["velocities"];
  }
  if (c["honesty"]["n_max"].get<std::uint64_t>() < 1 || c["honesty"]["window"].get<std::uint64_t>() < 1)
    throw ConfigError("honesty: n_max and window must be positive");

  if (raw.contains("initial"))
    c["initial"] = raw["initial"];
  else if (family == "gene")
    c["initial"] = {{"type", "bump"}, {"center", {2.0, 1.0}}, {"radius", {1.0, 0.5}}};
  else
    c["initial"] = {{"type", "uniform"}};

  std::vector<double> times {0.5, 1.0, 2.0};
  if (raw.contains("times")) {
    try {
      times = raw["times"].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("times must be a list of numbers");
    }
  }
  if (times.empty())
    throw ConfigError("times must not be empty");
  for (std::size_t i = 0; i < times.size(); ++i)
    if (!(times[i] > 0.0) || !std::isfinite(times[i]) || (i > 0 && !(times[i] > times[i - 1])))
      throw ConfigError("times must be positive and increasing");
  c["times"] = times;
  double dt = number(raw, "dt", 1e-3, "config");
  if (!(dt > 0.0))
    throw ConfigError("dt must be positive");
  for (double t : times) {
    double k = t / dt;
    if (std::abs(k - std::round(k)) > 1e-6 * std::max(1.0, k))
      throw ConfigError("every time must be an integer multiple of dt");
  }
  c["dt"] = dt;

  json tf = raw.value("test_functions", json::array({"1", "x"}));
  if (!tf.is_array() || tf.empty())
    throw ConfigError("test_functions must be a nonempty list");
  for (const auto& f : tf)
    test_function_from_json(f);
  c["test_functions"] = tf;

  json m = raw.value("mc", json::object());
  check_keys(m, {"paths", "seed", "max_jumps", "zeno_window", "zeno_threshold", "thinning_bound",
                  "dump_paths"},
    "mc");
  c["mc"] = {{"paths", count(m, "paths", 100000, "mc")}, {"seed", count(m, "seed", 1, "mc")},
    {"max_jumps", count(m, "max_jumps", 1000000, "mc")},
    {"zeno_window", count(m, "zeno_window", 100, "mc")},
    {"zeno_threshold", number(m, "zeno_threshold", 1e-9, "mc")},
    {"thinning_bound", m.contains("thinning_bound") ? m["thinning_bound"] : json()},
    {"dump_paths", count(m, "dump_paths", 0, "mc")}};
  if (c["mc"]["paths"].get<std::uint64_t>() < 2)
    throw ConfigError("mc.paths must be at least 2");
  if (c["mc"]["max_jumps"].get<std::uint64_t>() < 1)
    throw ConfigError("mc.max_jumps must be at least 1");
  if (!c["mc"]["thinning_bound"].is_null()
      && !(c["mc"]["thinning_bound"].is_number() && c["mc"]["thinning_bound"].get<double>() > 0.0))
    throw ConfigError("mc.thinning_bound must be a positive number");

  json d = raw.value("duality", json::object());
  check_keys(d, {"solver_tolerance", "sigma"}, "duality");
  json tol = d.value("solver_tolerance", json("richardson"));
  if (!(tol == "richardson" || (tol.is_number() && tol.get<double>() >= 0.0)))
    throw ConfigError("duality.solver_tolerance must be 'richardson' or a nonnegative number");
  c["duality"] = {{"solver_tolerance", tol}, {"sigma", number(d, "sigma", 3.0, "duality")}};

  json cr = raw.value("criteria", json::object());
  check_keys(cr, {"cpert1_threshold", "slack", "closure", "pi"}, "criteria");
  c["criteria"] = {{"cpert1_threshold", number(cr, "cpert1_threshold", 1e-6, "criteria")},
    {"slack", number(cr, "slack", 1e-10, "criteria")}};
  json closure = cr.value("closure", json::object());
  check_keys(closure, {"f", "f_minus"}, "criteria.closure");
  json cf = closure.value("f", family == "slab" ? json("q_maxwellian") : json("zero"));
  json cm = closure.value("f_minus", family == "slab" ? json("maxwellian") : json(1.0));
  for (const auto& v : {cf, cm})
    if (!(v.is_number() || v == "q_maxwellian" || v == "maxwellian" || v == "zero"))
      throw ConfigError("criteria.closure entries must be numbers, 'zero', 'maxwellian' or 'q_maxwellian'");
  c["criteria"]["closure"] = {{"f", cf}, {"f_minus", cm}};
  if (cr.contains("pi")) {
    if (family != "network")
      throw ConfigError("criteria.pi applies to network models only");
    c["criteria"]["pi"] = cr["pi"];
  }

  json o = raw.value("output", json::object());
  check_keys(o, {"directory", "prefix"}, "output");
  c["output"] = {{"directory", o.value("directory", std::string("."))},
    {"prefix", o.value("prefix", exp)}};
  if (!c["output"]["directory"].is_string() || !c["output"]["prefix"].is_string()
      || c["output"]["prefix"].get<std::string>().empty())
    throw ConfigError("output.directory and output.prefix must be strings");
  return c;
}

std::shared_ptr<ModelSpec> model_for_config(const json& config)
{
  return build_model(model_definition(config["model"]), definition_name(config["model"]));
}

//==============================================================================
// Helpers
//==============================================================================

double functional(const GridDensity& u, const std::function<double(const Point&)>& f)
{
  const auto& g = *u.grid;
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j)
    s += f(g.position[j]) * u.values[j] * g.weight[j];
  return s;
}

json diagnostics_to_json(const Diagnostics& d)
{
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(); };
  return {{"lambda", d.lambda}, {"input_norm", d.input_norm}, {"term_norms", d.term_norms},
    {"defect_sequence", d.defect_sequence}, {"partial_mass", d.partial_mass},
    {"mass_defect", d.mass_defect}, {"norm_estimate_of_PsiPsi", num(d.norm_estimate_of_PsiPsi)},
    {"spectral_radius", num(d.spectral_radius)}, {"verdict", to_string(d.verdict)},
    {"floor_estimate", d.floor_estimate}, {"terms_used", d.terms_used},
    {"hit_max_terms", d.hit_max_terms}, {"stop_reason", d.stop_reason},
    {"telemetry", {{"horizon_leak", d.telemetry.horizon_leak}, {"tail_bound", d.telemetry.tail_bound},
                    {"pieces", d.telemetry.pieces}}},
    {"thresholds", {{"floor", d.thresholds.floor}, {"stabilization", d.thresholds.stabilization},
                     {"window", d.thresholds.window}}}};
}

namespace {

struct Context {
  const json& config;
  std::shared_ptr<ModelSpec> model;
  std::string prefix;
  RunOutput out;
  json results;

  const Discretization& disc() const { return *model->disc; }
  const CharGrid& grid() const { return model->grid(); }

  void add_file(const std::string& suffix, std::string content)
  {
    std::filesystem::path dir = config["output"]["directory"].get<std::string>();
    out.files.emplace_back((dir / (prefix + suffix)).string(), std::move(content));
  }

  SeriesConfig series() const
  {
    SeriesConfig s;
    s.lambda = config["lambda"];
    s.max_terms = config["series"]["max_terms"];
    s.term_tol = config["series"]["term_tol"];
    return s;
  }

  HonestyThresholds thresholds() const
  {
    return {config["honesty"]["floor"], config["honesty"]["stabilization"],
      config["honesty"]["window"]};
  }

  std::vector<TestFunction> tests() const
  {
    std::vector<TestFunction> t;
    for (const auto& f : config["test_functions"])
      t.push_back(test_function_from_json(f));
    return t;
  }

  // ∫ u0 = 1 is enforced on the grid by rescaling the sampled density.
  GridDensity initial_density(const InitialCondition& ic) const
  {
    GridDensity u = GridDensity::sample(grid(), ic.density);
    double mass = u.integral();
    if (!(mass > 0.0))
      throw ConfigError("initial density has no mass on the grid");
    for (double& v : u.values)
      v /= mass;
    return u;
  }

  BoundaryDensity honesty_input() const
  {
    const auto& h = config["honesty"];
    if (!h.contains("velocities"))
      return BoundaryDensity::sample(grid(), Side::Minus, [](const Point&) { return 1.0; });
    auto vs = h["velocities"].get<std::vector<double>>();
    auto bd = BoundaryDensity::sample(grid(), Side::Minus, [vs](const Point& x) {
      for (double v : vs)
        if (std::abs(x[1] - v) <= 1e-12 * std::abs(v))
          return 1.0;
      return 0.0;
    });
    if (!(bd.norm() > 0.0))
      throw ConfigError("honesty.velocities selects no incoming boundary node");
    return bd;
  }

  std::size_t steps_to(double t) const
  {
    return static_cast<std::size_t>(std::llround(t / config["dt"].get<double>()));
  }
};

// Functionals of the evolved density at the configured times.
struct SolverSeries {
  std::vector<std::vector<double>> value; // [function][time]
  std::vector<double> mass;               // at every step
  std::vector<double> step_times;
  std::vector<GridDensity> snapshots;     // at the configured times
  bool inconclusive {false};
  bool positive {true};
  std::size_t max_terms_used {0};
  double horizon_leak {0.0};
};

SolverSeries run_solver(const Context& ctx, const GridDensity& u0, std::size_t refine,
  bool keep_snapshots)
{
  const auto times = ctx.config["times"].get<std::vector<double>>();
  const auto tests = ctx.tests();
  const std::size_t steps = ctx.steps_to(times.back()) * refine;
  std::vector<std::size_t> marks;
  for (double t : times)
    marks.push_back(ctx.steps_to(t) * refine);

  SolverSeries s;
  s.value.assign(tests.size(), std::vector<double>(times.size(), 0.0));
  EvolveOptions opts;
  opts.series = ctx.series();
  opts.record_stride = 0;
  std::size_t next = 0;
  opts.observer = [&](std::size_t k, double, const GridDensity& u) {
    while (next < marks.size() && marks[next] == k) {
      for (std::size_t f = 0; f < tests.size(); ++f)
        s.value[f][next] = functional(u, tests[f].f);
      if (keep_snapshots)
        s.snapshots.push_back(u);
      ++next;
    }
  };
  EvolveResult r = evolve(u0, times.back(), steps, ctx.model->kernel, ctx.disc(), opts);
  s.mass = r.mass;
  s.step_times = r.times;
  s.inconclusive = r.inconclusive;
  s.positive = r.positive;
  s.max_terms_used = r.max_terms_used;
  s.horizon_leak = r.horizon_leak;
  return s;
}

McEstimate run_mc(Context& ctx, const InitialCondition& ic, std::string* dump_path)
{
  const auto& m = ctx.config["mc"];
  McRun run;
  run.n_paths = m["paths"];
  run.path.rng_seed = m["seed"];
  run.path.max_jumps = m["max_jumps"];
  run.path.zeno_window = m["zeno_window"];
  run.path.zeno_threshold = m["zeno_threshold"];
  if (!m["thinning_bound"].is_null())
    run.path.thinning_bound = m["thinning_bound"].get<double>();
  run.dump_paths = m["dump_paths"];
  if (run.dump_paths > 0 && dump_path) {
    std::filesystem::path dir = ctx.config["output"]["directory"].get<std::string>();
    *dump_path = (dir / (ctx.prefix + ".paths.csv")).string();
    run.dump_file = *dump_path + ".partial";
  }
  auto times = ctx.config["times"].get<std::vector<double>>();
  return mc_expectation(ctx.tests(), times, ic.sample, ctx.model->mc, run);
}

json mc_to_json(const McEstimate& e)
{
  return {{"times", e.times}, {"functions", e.names}, {"estimate", e.estimate},
    {"std_error", e.std_error}, {"explosion_fraction", e.explosion_fraction},
    {"killed_fraction", e.killed_fraction}, {"paths", e.paths},
    {"cap_explosions", e.cap_explosions}, {"zeno_explosions", e.zeno_explosions}};
}

json report_to_json(const InequalityReport& r)
{
  json pos = json::array();
  for (double v : r.position)
    pos.push_back(v);
  return {{"pass", r.pass}, {"max_violation", r.max_violation}, {"where", r.where},
    {"index", r.index}, {"position", pos}, {"slack", r.slack}};
}

json kernel_json(const ModelSpec& m)
{
  auto rep = check_kernel(m.kernel, m.grid());
  return {{"positive", rep.positive}, {"max_column_mass", rep.max_column_mass},
    {"min_active_column_mass", rep.min_active_column_mass}, {"substochastic", rep.substochastic},
    {"conservative", rep.conservative}, {"renormalization_error", m.kernel.renormalization_error}};
}

//==============================================================================
// Experiments
//==============================================================================

void experiment_diagnose(Context& ctx)
{
  const double lambda = ctx.config["lambda"];
  auto nn = norm_PsiPsi(lambda, ctx.model->kernel, ctx.disc());
  auto fd = ctx.honesty_input();
  const std::size_t n_max = ctx.config["honesty"]["n_max"];
  Diagnostics hon = honesty_power_decay(nullptr, &fd, ctx.model->kernel, ctx.disc(), lambda, n_max,
    ctx.thresholds());
  hon.norm_estimate_of_PsiPsi = nn.norm;
  hon.spectral_radius = nn.spectral_radius;
  json notes = json::array();
  if (ctx.model->truncation.contains("levels")
      && n_max >= ctx.model->truncation["levels"].get<std::size_t>()
      && hon.verdict == Verdict::HonestEvidence) {
    hon.verdict = Verdict::Inconclusive;
    notes.push_back("honesty iterations reach the velocity truncation; decay may be truncation leak");
  }

  auto ic = ctx.model->initial(ctx.config["initial"]);
  GridDensity u0 = ctx.initial_density(ic);
  SeriesResult res = dyson_resolvent_G(u0, ctx.model->kernel, ctx.disc(), ctx.series(), ctx.thresholds());
  res.diagnostics.norm_estimate_of_PsiPsi = nn.norm;
  res.diagnostics.spectral_radius = nn.spectral_radius;
  auto cp = cpert1_check(ctx.disc(), ctx.config["criteria"]["cpert1_threshold"]);

  json out = {{"norm_PsiPsi", nn.norm}, {"spectral_radius", nn.spectral_radius},
    {"norm_argmax", nn.argmax}, {"verdict", to_string(hon.verdict)}, {"honesty", diagnostics_to_json(hon)},
    {"resolvent", diagnostics_to_json(res.diagnostics)}, {"kernel", kernel_json(*ctx.model)},
    {"cpert1", {{"pass", cp.pass}, {"min_t_plus", std::isfinite(cp.min_t_plus) ? json(cp.min_t_plus) : json()},
                 {"threshold", cp.threshold}}},
    {"notes", notes}};
  ctx.add_file(".diagnostics.json", out.dump(2) + "\n");
  ctx.results = {{"verdict", to_string(hon.verdict)}, {"norm_PsiPsi", nn.norm}};
  if (hon.verdict == Verdict::Inconclusive || res.diagnostics.hit_max_terms) {
    ctx.out.status = ExitCode::Inconclusive;
    ctx.out.message = hon.verdict == Verdict::Inconclusive ? "honesty verdict inconclusive"
                                                           : "resolvent series hit max_terms";
  }
}

void experiment_evolve(Context& ctx)
{
  auto ic = ctx.model->initial(ctx.config["initial"]);
  GridDensity u0 = ctx.initial_density(ic);
  SolverSeries s = run_solver(ctx, u0, 1, true);
  const auto times = ctx.config["times"].get<std::vector<double>>();
  const auto tests = ctx.tests();

  std::ostringstream mass;
  mass << "t,mass\n";
  for (std::size_t k = 0; k < s.mass.size(); ++k)
    mass << fmt(s.step_times[k]) << ',' << fmt(s.mass[k]) << '\n';
  ctx.add_file(".mass.csv", mass.str());

  const auto& g = ctx.grid();
  std::ostringstream dens;
  dens << "t,node,characteristic";
  for (std::size_t i = 0; i < g.dim; ++i)
    dens << ",x" << i;
  dens << ",weight,value\n";
  for (std::size_t t = 0; t < s.snapshots.size(); ++t)
    for (std::size_t j = 0; j < g.size(); ++j) {
      dens << fmt(times[t]) << ',' << j << ',' << g.char_of[j];
      for (double v : g.position[j])
        dens << ',' << fmt(v);
      dens << ',' << fmt(g.weight[j]) << ',' << fmt(s.snapshots[t].values[j]) << '\n';
    }
  ctx.add_file(".density.csv", dens.str());

  json fn = json::object();
  for (std::size_t f = 0; f < tests.size(); ++f)
    fn[tests[f].name] = s.value[f];
  json out = {{"times", times}, {"dt", ctx.config["dt"]}, {"functionals", fn},
    {"final_mass", s.mass.back()}, {"inconclusive", s.inconclusive}, {"positive", s.positive},
    {"max_terms_used", s.max_terms_used}, {"horizon_leak", s.horizon_leak}};
  ctx.add_file(".evolve.json", out.dump(2) + "\n");
  ctx.results = {{"final_mass", s.mass.back()}, {"inconclusive", s.inconclusive}};
  if (s.inconclusive) {
    ctx.out.status = ExitCode::Inconclusive;
    ctx.out.message = "resolvent series hit max_terms during evolve";
  }
}

void experiment_mc(Context& ctx, std::vector<std::string>& partials)
{
  auto ic = ctx.model->initial(ctx.config["initial"]);
  std::string dump;
  McEstimate e = run_mc(ctx, ic, &dump);
  if (!dump.empty())
    partials.push_back(dump);
  std::ostringstream csv;
  csv << "t,function,estimate,std_error,explosion_fraction,killed_fraction\n";
  for (std::size_t t = 0; t < e.times.size(); ++t)
    for (std::size_t f = 0; f < e.names.size(); ++f)
      csv << fmt(e.times[t]) << ',' << e.names[f] << ',' << fmt(e.estimate[f][t]) << ','
          << fmt(e.std_error[f][t]) << ',' << fmt(e.explosion_fraction[t]) << ','
          << fmt(e.killed_fraction[t]) << '\n';
  ctx.add_file(".mc.csv", csv.str());
  ctx.add_file(".mc.json", mc_to_json(e).dump(2) + "\n");
  ctx.results = mc_to_json(e);
}

void experiment_duality(Context& ctx)
{
  auto ic = ctx.model->initial(ctx.config["initial"]);
  GridDensity u0 = ctx.initial_density(ic);
  const auto& tol_cfg = ctx.config["duality"]["solver_tolerance"];
  const double sigma = ctx.config["duality"]["sigma"];
  const bool richardson = tol_cfg.is_string();
  // Richardson mode runs dt, dt/2 and dt/4 and extrapolates to dt = 0.
  SolverSeries fine = run_solver(ctx, u0, richardson ? 4 : 1, false);
  SolverSeries mid, coarse;
  if (richardson) {
    mid = run_solver(ctx, u0, 2, false);
    coarse = run_solver(ctx, u0, 1, false);
  }
  const std::size_t fine_steps = ctx.steps_to(ctx.config["times"].back().get<double>()) * (richardson ? 4 : 1);
  const double series_floor = static_cast<double>(fine_steps)
    * (ctx.config["series"]["term_tol"].get<double>() + std::numeric_limits<double>::epsilon());
  McEstimate e = run_mc(ctx, ic, nullptr);
  const auto times = ctx.config["times"].get<std::vector<double>>();

  std::ostringstream csv;
  csv << "t,function,solver,solver_tolerance,solver_finest,mc,std_error,band,within\n";
  bool all = true;
  json rows = json::array();
  for (std::size_t t = 0; t < times.size(); ++t)
    for (std::size_t f = 0; f < e.names.size(); ++f) {
      double finest = fine.value[f][t];
      double sv = finest;
      double tol = tol_cfg.is_string() ? 0.0 : tol_cfg.get<double>();
      if (richardson) {
        // Backward Euler on data with an inflow jump has the error expansion
        // a sqrt(dt) + b dt. Extrapolate in u = sqrt(dt / dt_coarse) at
        // u = 1, 1/sqrt2, 1/2; the gap to the two-level value bounds the error.
        const double u[3] = {1.0, std::sqrt(0.5), 0.5};
        const double E[3] = {coarse.value[f][t], mid.value[f][t], finest};
        double three = 0.0;
        for (int i = 0; i < 3; ++i) {
          double w = 1.0;
          for (int k = 0; k < 3; ++k)
            if (k != i)
              w *= u[k] / (u[k] - u[i]);
          three += w * E[i];
        }
        double two = (u[1] * E[2] - u[2] * E[1]) / (u[1] - u[2]);
        sv = three;
        tol = std::abs(three - two) + series_floor * std::max(1.0, std::abs(sv));
      }
      double mc = e.estimate[f][t];
      double band = sigma * e.std_error[f][t] + tol;
      bool ok = std::abs(mc - sv) <= band;
      all = all && ok;
      csv << fmt(times[t]) << ',' << e.names[f] << ',' << fmt(sv) << ',' << fmt(tol) << ',' << fmt(finest)
          << ',' << fmt(mc)
          << ',' << fmt(e.std_error[f][t]) << ',' << fmt(band) << ',' << (ok ? 1 : 0) << '\n';
      rows.push_back({{"t", times[t]}, {"function", e.names[f]}, {"solver", sv}, {"solver_tolerance", tol},
        {"solver_finest", finest}, {"mc", mc}, {"std_error", e.std_error[f][t]}, {"band", band}, {"within", ok}});
    }
  ctx.add_file(".duality.csv", csv.str());
  json out = {{"rows", rows}, {"all_within_band", all}, {"sigma", sigma},
    {"solver_dt", ctx.config["dt"].get<double>() / (richardson ? 4.0 : 1.0)},
    {"solver_inconclusive", fine.inconclusive || mid.inconclusive || coarse.inconclusive},
    {"mc", mc_to_json(e)}};
  ctx.add_file(".duality.json", out.dump(2) + "\n");
  ctx.results = {{"all_within_band", all}};
  if (fine.inconclusive || mid.inconclusive || coarse.inconclusive) {
    ctx.out.status = ExitCode::Inconclusive;
    ctx.out.message = "resolvent series hit max_terms during evolve";
  }
}

void experiment_criteria(Context& ctx)
{
  const auto& cr = ctx.config["criteria"];
  const double slack = cr["slack"];
  const auto& m = *ctx.model;
  auto cp = cpert1_check(ctx.disc(), cr["cpert1_threshold"]);
  json out;
  out["cpert1"] = {{"pass", cp.pass}, {"min_t_plus", std::isfinite(cp.min_t_plus) ? json(cp.min_t_plus) : json()},
    {"threshold", cp.threshold}};

  auto velocity_value = [&](const json& spec, bool times_q) -> std::function<double(const Point&)> {
    if (spec.is_number()) {
      double c = spec;
      return [c](const Point&) { return c; };
    }
    if (spec == "zero")
      return [](const Point&) { return 0.0; };
    if (m.family != "slab")
      throw ConfigError("criteria.closure: Maxwellian candidates need a slab model");
    auto V = m.velocities;
    auto M = m.maxwellian;
    auto q = m.collision_rate;
    bool mult = times_q || spec == "q_maxwellian";
    return [V, M, q, mult](const Point& x) {
      for (std::size_t i = 0; i < V.size(); ++i)
        if (std::abs(V[i] - x[1]) <= 1e-12 * std::abs(V[i]))
          return mult ? q[i] * M[i] : M[i];
      return 0.0;
    };
  };
  try {
    GridDensity f = GridDensity::sample(ctx.grid(), velocity_value(cr["closure"]["f"], false));
    BoundaryDensity fm
      = BoundaryDensity::sample(ctx.grid(), Side::Minus, velocity_value(cr["closure"]["f_minus"], false));
    out["closure_qi"] = report_to_json(closure_qi_check(f, fm, m.kernel, ctx.disc(), slack));
  } catch (const PreconditionError& e) {
    out["closure_qi"] = {{"pass", false}, {"inapplicable", e.what()}};
  }
  if (cr.contains("pi")) {
    std::vector<double> pi;
    try {
      pi = cr["pi"].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("criteria.pi must be a list of numbers");
    }
    if (pi.size() != m.velocities.size())
      throw ConfigError("criteria.pi must have one entry per velocity");
    auto V = m.velocities;
    auto fp = BoundaryDensity::sample(ctx.grid(), Side::Plus, [V, pi](const Point& x) {
      for (std::size_t i = 0; i < V.size(); ++i)
        if (std::abs(V[i] - x[1]) <= 1e-12 * V[i])
          return pi[i] / V[i];
      return 0.0;
    });
    try {
      out["cperturb2"] = report_to_json(cperturb2_check(fp, m.kernel, ctx.disc(), slack));
    } catch (const PreconditionError& e) {
      out["cperturb2"] = {{"pass", false}, {"inapplicable", e.what()}};
    }
  }
  out["kernel"] = kernel_json(m);
  ctx.add_file(".criteria.json", out.dump(2) + "\n");
  ctx.results = out;
}

json model_json_impl(const ModelSpec& m)
{
  json ka = json::array();
  for (const auto& k : m.known_answers)
    ka.push_back({{"quantity", k.quantity}, {"value", std::isfinite(k.value) ? json(k.value) : json(k.expression)},
      {"expression", k.expression}, {"provenance", k.provenance}});
  return {{"name", m.name}, {"family", m.family}, {"description", m.description},
    {"parameters", m.parameters}, {"grid", m.grid_parameters}, {"truncation", m.truncation},
    {"conservative", m.conservative}, {"bulk_nodes", m.grid().size()},
    {"minus_nodes", m.grid().minus.size()}, {"plus_nodes", m.grid().plus.size()},
    {"kernel", kernel_json(m)}, {"known_answers", ka}};
}

void write_all(RunOutput& out, const std::vector<std::string>& partials)
{
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  try {
    for (const auto& [path, content] : out.files) {
      fs::path p(path);
      if (p.has_parent_path())
        fs::create_directories(p.parent_path());
      std::string tmp = path + ".partial";
      std::ofstream os(tmp, std::ios::binary);
      os << content;
      os.close();
      if (!os)
        throw Error("cannot write " + tmp);
      written.push_back(tmp);
    }
    for (const auto& [path, content] : out.files)
      fs::rename(path + ".partial", path);
    for (const auto& p : partials)
      fs::rename(p + ".partial", p);
  } catch (...) {
    std::error_code ec;
    for (const auto& w : written)
      fs::remove(w, ec);
    for (const auto& p : partials)
      fs::remove(p + ".partial", ec);
    throw;
  }
}

RunOutput failure(ExitCode code, const std::string& msg)
{
  RunOutput o;
  o.status = code;
  o.message = msg;
  return o;
}

RunOutput run_impl(const json& config, std::vector<std::string>& partials)
{
  Context ctx {config, model_for_config(config), config["output"]["prefix"], {}, {}};
  const std::string exp = config["experiment"];
  auto t0 = std::chrono::steady_clock::now();
  if (exp == "diagnose")
    experiment_diagnose(ctx);
  else if (exp == "evolve")
    experiment_evolve(ctx);
  else if (exp == "mc")
    experiment_mc(ctx, partials);
  else if (exp == "duality")
    experiment_duality(ctx);
  else
    experiment_criteria(ctx);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json files = json::array();
  for (const auto& f : ctx.out.files)
    files.push_back(f.first);
  for (const auto& p : partials)
    files.push_back(p);
  std::filesystem::path dir = config["output"]["directory"].get<std::string>();
  std::string manifest_path = (dir / (ctx.prefix + ".manifest.json")).string();
  files.push_back(manifest_path);
  ctx.out.manifest = {{"version", library_version()}, {"timestamp", timestamp_utc()},
    {"elapsed_seconds", elapsed}, {"experiment", exp}, {"config", config},
    {"model", model_json_impl(*ctx.model)}, {"workers", worker_count()},
    {"status", static_cast<int>(ctx.out.status)}, {"message", ctx.out.message},
    {"results", ctx.results}, {"files", files}};
  ctx.out.files.emplace_back(manifest_path, ctx.out.manifest.dump(2) + "\n");
  return ctx.out;
}

} // namespace

json model_to_json(const ModelSpec& m) { return model_json_impl(m); }

RunOutput run_experiment(const json& config)
{
  std::vector<std::string> partials;
  return run_impl(config, partials);
}

namespace {

json read_config(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

} // namespace

RunOutput run_config_file(const std::string& path)
{
  std::vector<std::string> partials;
  try {
    json config = validate_config(read_config(path));
    RunOutput out = run_impl(config, partials);
    write_all(out, partials);
    return out;
  } catch (const ConfigError& e) {
    std::error_code ec;
    for (const auto& p : partials)
      std::filesystem::remove(p + ".partial", ec);
    return failure(ExitCode::Config, e.what());
  } catch (const std::exception& e) {
    std::error_code ec;
    for (const auto& p : partials)
      std::filesystem::remove(p + ".partial", ec);
    return failure(ExitCode::Internal, e.what());
  }
}

RunOutput validate_config_file(const std::string& path)
{
  try {
    json config = validate_config(read_config(path));
    auto model = model_for_config(config);
    model->initial(config["initial"]);
    RunOutput o;
    o.manifest = config;
    o.message = "valid";
    return o;
  } catch (const ConfigError& e) {
    return failure(ExitCode::Config, e.what());
  } catch (const std::exception& e) {
    return failure(ExitCode::Internal, e.what());
  }
}

} // namespace pdmp
