#include "pdmp/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <thread>

namespace pdmp {

std::string to_string(JumpCause c)
{
  return c == JumpCause::Hazard ? "hazard" : "boundary";
}

std::string to_string(PathEnd e)
{
  switch (e) {
  case PathEnd::Horizon:
    return "horizon";
  case PathEnd::Killed:
    return "killed";
  case PathEnd::ExplodedCap:
    return "exploded-cap";
  case PathEnd::ExplodedZeno:
    return "exploded-zeno";
  }
  return "unknown";
}

InterjumpSample sample_interjump_time(const Point& x, const HazardSpec& hz,
  const FlowModel& flow, Rng& rng, std::optional<double> thinning_bound)
{
  double t_plus = hit_time(flow, x, Direction::Forward);
  double t_hazard = kInfinity;
  if (hz.identically_zero) {
    t_hazard = kInfinity;
  } else if (hz.inverse_forward) {
    t_hazard = hz.inverse_forward(x, rng.exponential());
  } else if (thinning_bound) {
    double qbar = *thinning_bound;
    if (!(qbar > 0.0))
      throw ConfigError("thinning bound must be positive");
    double t = 0.0;
    for (std::size_t iter = 0;; ++iter) {
      if (iter > 10'000'000)
        throw NumericError("thinning did not accept within the iteration budget");
      t += rng.exponential() / qbar;
      if (t >= t_plus)
        break;
      double q = hz.rate(flow_unchecked(flow, x, t));
      if (q > qbar * (1.0 + 1e-12))
        throw ConfigError("hazard exceeds the declared thinning bound");
      if (rng.uniform() * qbar < q) {
        t_hazard = t;
        break;
      }
    }
  } else {
    throw ConfigError("hazard has no closed-form inverse and no thinning bound was declared");
  }
  if (t_plus <= t_hazard)
    return {t_plus, JumpCause::Boundary};
  return {t_hazard, JumpCause::Hazard};
}

Point sample_jump(const Point& x, JumpCause cause, const McModel& model, Rng& rng,
  bool* killed)
{
  auto y = model.jump(x, cause, rng);
  if (killed)
    *killed = !y.has_value();
  if (!y)
    return x;
  if (model.flow.inside && !model.flow.inside(*y)) {
    // Landing on Γ⁻ is allowed: the flow must then enter E⁰ immediately.
    double tp = hit_time(model.flow, *y, Direction::Forward);
    if (!(tp > 0.0) && !std::isinf(tp))
      throw NumericError("jump sampler returned a point outside E");
  }
  return *y;
}

namespace {

struct SegmentSink {
  virtual ~SegmentSink() = default;
  // The process sits on the flow line from `x` during [t0, t1).
  virtual void segment(double t0, const Point& x, double t1) = 0;
  virtual void jump(double, const Point&, JumpCause) {}
};

std::pair<PathEnd, double> run_path(const Point& x0, const PathConfig& cfg,
  const McModel& model, Rng& rng, SegmentSink& sink)
{
  std::optional<double> bound = cfg.thinning_bound ? cfg.thinning_bound : model.thinning_bound;
  std::vector<double> window(std::max<std::size_t>(1, cfg.zeno_window), 0.0);
  std::size_t filled = 0;
  std::size_t head = 0;
  double window_sum = 0.0;

  double t = 0.0;
  Point x = x0;
  for (std::size_t jumps = 0;; ++jumps) {
    if (jumps >= cfg.max_jumps)
      return {PathEnd::ExplodedCap, t};
    auto s = sample_interjump_time(x, model.hazard, model.flow, rng, bound);
    if (t + s.time >= cfg.t_final) {
      sink.segment(t, x, kInfinity);
      return {PathEnd::Horizon, cfg.t_final};
    }
    sink.segment(t, x, t + s.time);
    Point y = flow_unchecked(model.flow, x, s.time);
    t += s.time;
    bool killed = false;
    x = sample_jump(y, s.cause, model, rng, &killed);
    if (killed)
      return {PathEnd::Killed, t};
    sink.jump(t, x, s.cause);

    window_sum += s.time - window[head];
    window[head] = s.time;
    head = (head + 1) % window.size();
    filled = std::min(filled + 1, window.size());
    if (filled == window.size() && cfg.zeno_window > 0) {
      // Recompute to avoid drift in the running sum.
      double exact = 0.0;
      for (double v : window)
        exact += v;
      window_sum = exact;
      if (window_sum < cfg.zeno_threshold)
        return {PathEnd::ExplodedZeno, t};
    }
  }
}

struct RecordSink : SegmentSink {
  PathRecord* rec;
  explicit RecordSink(PathRecord& r) : rec {&r} {}
  void segment(double, const Point&, double) override {}
  void jump(double t, const Point& x, JumpCause c) override
  {
    rec->times.push_back(t);
    rec->states.push_back(x);
    rec->causes.push_back(c);
  }
};

} // namespace

PathRecord simulate_path(const Point& x0, const PathConfig& cfg, const McModel& model,
  std::uint64_t path_index)
{
  require(cfg.t_final > 0.0, "simulate_path: t_final must be positive");
  require(cfg.max_jumps >= 1, "simulate_path: max_jumps must be at least 1");
  Rng rng(cfg.rng_seed, path_index);
  PathRecord rec;
  rec.times.push_back(0.0);
  rec.states.push_back(x0);
  RecordSink sink(rec);
  auto [end, end_time] = run_path(x0, cfg, model, rng, sink);
  rec.end = end;
  rec.end_time = end_time;
  return rec;
}

std::optional<Point> state_at(const PathRecord& path, const McModel& model, double t)
{
  if (path.end != PathEnd::Horizon && t >= path.end_time)
    return std::nullopt;
  auto it = std::upper_bound(path.times.begin(), path.times.end(), t);
  std::size_t n = static_cast<std::size_t>(it - path.times.begin()) - 1;
  return flow_unchecked(model.flow, path.states[n], t - path.times[n]);
}

std::size_t worker_count()
{
  if (const char* env = std::getenv("PDMP_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1)
      return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double pairwise_sum(const double* x, std::size_t n)
{
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += x[i];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

namespace {

struct QuerySink : SegmentSink {
  const std::vector<TestFunction>* tests;
  const std::vector<double>* times; // ascending
  const McModel* model;
  double* out;                      // [function][time]
  std::size_t next {0};

  void segment(double t0, const Point& x, double t1) override
  {
    const auto& ts = *times;
    while (next < ts.size() && ts[next] < t1) {
      if (ts[next] >= t0) {
        Point y = flow_unchecked(model->flow, x, ts[next] - t0);
        for (std::size_t f = 0; f < tests->size(); ++f)
          out[f * ts.size() + next] = (*tests)[f].f(y);
      }
      ++next;
    }
  }
};

void write_dump(const std::string& file, std::size_t count, const std::function<Point(Rng&)>& initial,
  const McModel& model, const McRun& run)
{
  std::ofstream os(file);
  if (!os)
    throw ConfigError("cannot open path dump file " + file);
  os << std::setprecision(17);
  os << "path_id,jump_index,tau";
  for (std::size_t i = 0; i < model.flow.dim; ++i)
    os << ",x" << i;
  os << ",cause\n";
  for (std::size_t p = 0; p < count; ++p) {
    Rng init(run.path.rng_seed ^ 0x9E3779B97F4A7C15ull, p);
    Point x0 = initial(init);
    PathRecord rec = simulate_path(x0, run.path, model, p);
    for (std::size_t n = 0; n < rec.times.size(); ++n) {
      os << p << ',' << n << ',' << rec.times[n];
      for (double v : rec.states[n])
        os << ',' << v;
      os << ',' << (n == 0 ? std::string("initial") : to_string(rec.causes[n - 1])) << '\n';
    }
    os << p << ',' << rec.times.size() << ',' << rec.end_time;
    for (std::size_t i = 0; i < model.flow.dim; ++i)
      os << ',';
    os << ',' << to_string(rec.end) << '\n';
  }
}

} // namespace

McEstimate mc_expectation(const std::vector<TestFunction>& tests,
  const std::vector<double>& times, const std::function<Point(Rng&)>& initial,
  const McModel& model, const McRun& run)
{
  require(!times.empty() && !tests.empty(), "mc_expectation: need times and test functions");
  require(run.n_paths >= 2, "mc_expectation: need at least two paths");
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  require(sorted.front() >= 0.0, "mc_expectation: negative query time");

  const std::size_t nf = tests.size();
  const std::size_t nt = sorted.size();
  const std::size_t stride = nf * nt;
  std::vector<double> values(run.n_paths * stride, 0.0);
  std::vector<PathEnd> ends(run.n_paths, PathEnd::Horizon);
  std::vector<double> end_times(run.n_paths, 0.0);

  PathConfig cfg = run.path;
  cfg.t_final = std::nextafter(sorted.back(), kInfinity);

  std::atomic<std::size_t> next {0};
  std::size_t workers = std::min(worker_count(), run.n_paths);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t p = next++; p < run.n_paths; p = next++) {
        // Separate substream for the initial draw keeps path draws aligned
        // with simulate_path(path_index = p).
        Rng init(cfg.rng_seed ^ 0x9E3779B97F4A7C15ull, p);
        Point x0 = initial(init);
        Rng rng(cfg.rng_seed, p);
        QuerySink sink;
        sink.tests = &tests;
        sink.times = &sorted;
        sink.model = &model;
        sink.out = values.data() + p * stride;
        auto [end, end_time] = run_path(x0, cfg, model, rng, sink);
        ends[p] = end;
        end_times[p] = end_time;
      }
    } catch (...) {
      errors[w] = std::current_exception();
      next = run.n_paths;
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(work, w);
    for (auto& th : pool)
      th.join();
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);

  McEstimate est;
  est.times = sorted;
  est.paths = run.n_paths;
  est.workers = workers;
  for (const auto& t : tests)
    est.names.push_back(t.name);
  est.estimate.assign(nf, std::vector<double>(nt, 0.0));
  est.std_error.assign(nf, std::vector<double>(nt, 0.0));
  est.explosion_fraction.assign(nt, 0.0);
  est.killed_fraction.assign(nt, 0.0);

  const double n = static_cast<double>(run.n_paths);
  std::vector<double> column(run.n_paths);
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t p = 0; p < run.n_paths; ++p)
        column[p] = values[p * stride + f * nt + t];
      double mean = pairwise_sum(column.data(), column.size()) / n;
      for (double& v : column)
        v = (v - mean) * (v - mean);
      double var = pairwise_sum(column.data(), column.size()) / (n - 1.0);
      est.estimate[f][t] = mean;
      est.std_error[f][t] = std::sqrt(var / n);
    }
  }
  for (std::size_t p = 0; p < run.n_paths; ++p) {
    if (ends[p] == PathEnd::ExplodedCap)
      ++est.cap_explosions;
    if (ends[p] == PathEnd::ExplodedZeno)
      ++est.zeno_explosions;
    for (std::size_t t = 0; t < nt; ++t) {
      if (ends[p] == PathEnd::Horizon || sorted[t] < end_times[p])
        continue;
      if (ends[p] == PathEnd::Killed)
        est.killed_fraction[t] += 1.0;
      else
        est.explosion_fraction[t] += 1.0;
    }
  }
  for (std::size_t t = 0; t < nt; ++t) {
    est.explosion_fraction[t] /= n;
    est.killed_fraction[t] /= n;
  }

  if (!run.dump_file.empty() && run.dump_paths > 0)
    write_dump(run.dump_file, std::min(run.dump_paths, run.n_paths), initial, model, run);
  return est;
}

} // namespace pdmp
