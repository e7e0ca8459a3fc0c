#include "mtcb/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mtcb/csv.hpp"
#include "mtcb/error.hpp"
#include "mtcb/similarity.hpp"
#include "mtcb/version.hpp"

namespace mtcb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs fn(i) for i in [0, count) on a small pool. The first failure is
/// rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t count, std::size_t threads, F fn) {
  const std::size_t workers = worker_count(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed) {
        const std::size_t i = next++;
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of_values(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

template <class E>
[[noreturn]] void rethrow_with_seed(const E& e, std::uint64_t seed) {
  throw E(fmt::format("seed {}: {}", seed, e.what()));
}

}  // namespace

OutputFormat parse_output_format(std::string_view name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "json") return OutputFormat::json;
  throw ConfigError("unknown output format '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

double SweepResult::mean(std::size_t i) const { return mean_of(mse.at(i)); }

double SweepResult::stderr_of(std::size_t i) const { return stderr_of_values(mse.at(i)); }

double SweepResult::paired_stderr(std::size_t i, std::size_t j) const {
  std::vector<double> diff(mse.at(i).size());
  for (std::size_t d = 0; d < diff.size(); ++d) diff[d] = mse[i][d] - mse.at(j)[d];
  return stderr_of_values(diff);
}

std::size_t SweepResult::argmin() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (mean(i) < mean(best)) best = i;
  }
  return best;
}

std::size_t SweepResult::index_of(double value) const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid[i] - value) < std::abs(grid[best] - value)) best = i;
  }
  return best;
}

double multitask_test_mse(const std::vector<GpTaskSplit>& split, const KernelSpec& kx,
                          double sim_train, double lambda) {
  const std::size_t tasks = split.size();
  std::vector<AugmentedContext> train;
  std::vector<double> train_y;
  for (std::size_t m = 0; m < tasks; ++m) {
    for (std::size_t i = 0; i < split[m].train.size(); ++i) {
      train.push_back({m, split[m].train.x[i]});
      train_y.push_back(split[m].train.y[i]);
    }
  }
  const auto similarity = SimilarityMatrix::uniform(tasks, sim_train);
  double total = 0.0;
  for (std::size_t m = 0; m < tasks; ++m) {
    std::vector<AugmentedContext> test;
    for (const auto& x : split[m].test.x) test.push_back({m, x});
    const auto pred = fit_predict_multitask(train, train_y, test, kx, similarity, lambda);
    double se = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      se += (pred[i] - split[m].test.y[i]) * (pred[i] - split[m].test.y[i]);
    }
    total += se / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(tasks);
}

SweepResult run_sim_sweep(const SweepSettings& settings, std::size_t threads) {
  settings.gp.validate();
  if (settings.gp.train_size >= settings.gp.points_per_task) {
    throw ConfigError("gp.train_size must leave test points");
  }
  const GpTaskGenerator generator(settings.gp);
  const KernelSpec kx = KernelSpec::gaussian(settings.gp.lengthscale);
  const double lambda = settings.lambda.value_or(settings.gp.noise_variance);

  SweepResult result;
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / settings.grid_step));
  for (std::size_t i = 0; i <= steps; ++i) {
    result.grid.push_back(std::min(1.0, static_cast<double>(i) * settings.grid_step));
  }
  if (result.grid.back() < 1.0) result.grid.push_back(1.0);
  result.mse.assign(result.grid.size(), std::vector<double>(settings.draws));

  parallel_for(settings.draws, threads, [&](std::size_t d) {
    const auto split = generator.draw(d);
    for (std::size_t i = 0; i < result.grid.size(); ++i) {
      result.mse[i][d] = multitask_test_mse(split, kx, result.grid[i], lambda);
    }
  });
  return result;
}

// ---------------------------------------------------------------------------

std::vector<double> MethodRun::mean_curve() const {
  if (seeds.empty()) return {};
  std::vector<double> out(seeds.front().curve.size(), 0.0);
  for (const auto& s : seeds) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s.curve.at(i);
  }
  for (auto& v : out) v /= static_cast<double>(seeds.size());
  return out;
}

double MethodRun::final_mean() const {
  std::vector<double> finals;
  for (const auto& s : seeds) finals.push_back(s.curve.back());
  return mean_of(finals);
}

double MethodRun::final_stderr() const {
  std::vector<double> finals;
  for (const auto& s : seeds) finals.push_back(s.curve.back());
  return stderr_of_values(finals);
}

const MethodRun* BanditResult::find(SimilarityMethod method, RunMode mode) const {
  for (const auto& r : runs) {
    if (r.method == method && r.mode == mode) return &r;
  }
  return nullptr;
}

BanditSetup::BanditSetup(const ExperimentConfig& config) : config_(config) {
  if (config.kind == ExperimentKind::trace_bandit ||
      (config.kind == ExperimentKind::similarity && !config.trace.path.empty())) {
    auto ingested = ingest_traces(config.trace.path, config.trace.schema);
    std::vector<std::string> stations = config.trace.stations;
    if (stations.empty()) {
      stations = station_ids(ingested.records);
      if (stations.size() > config.trace.max_stations) stations.resize(config.trace.max_stations);
    }
    auto sim = std::make_shared<const KnnSimulator>(std::move(ingested.records), config.trace.k);
    auto env = std::make_unique<TraceBanditEnv>(sim, stations, config.trace.schema,
                                                config.trace.source);
    logged_ = env->logged_datasets();
    env_ = std::move(env);
  } else {
    env_ = std::make_unique<SyntheticBanditEnv>(config.synthetic_tasks);
  }
}

std::vector<TaskDataset> BanditSetup::similarity_data(std::uint64_t seed) const {
  std::vector<TaskDataset> data;
  if (!logged_.empty()) {
    data = logged_;
  } else {
    const auto samples = static_cast<std::size_t>(
        std::ceil(config_.similarity.warmup_fraction * static_cast<double>(config_.horizon)));
    data = collect_warmup_datasets(*env_, seed, std::max<std::size_t>(samples, 2));
  }
  if (const auto cap = config_.similarity.max_points_per_task; cap > 0) {
    for (auto& d : data) {
      if (d.size() > cap) {
        d.x.resize(cap);
        d.y.resize(cap);
      }
    }
  }
  return data;
}

KernelSpec BanditSetup::context_kernel(const std::vector<TaskDataset>& data) const {
  const auto& p = config_.policy;
  if (p.kernel == KernelFamily::linear) return KernelSpec::linear(p.output_scale);
  const double ell = p.lengthscale ? *p.lengthscale : default_context_kernel(data).lengthscale;
  return KernelSpec::gaussian(ell, p.output_scale);
}

SimilarityMatrix BanditSetup::estimate_similarity(SimilarityMethod method,
                                                  const std::vector<TaskDataset>& data,
                                                  const KernelSpec& kx) const {
  const std::size_t tasks = env_->task_count();
  SimilarityMatrix k = SimilarityMatrix::identity(tasks);
  switch (method) {
    case SimilarityMethod::identity:
      return k;
    case SimilarityMethod::cke:
      if (tasks < 2) return k;
      k = cke_similarity(data, kx, default_target_kernel(data), config_.similarity.cke);
      break;
    case SimilarityMethod::r2:
      if (tasks < 2) return k;
      k = r2_similarity(data, kx, config_.similarity.r2_lambda, config_.similarity.r2_floor);
      break;
    case SimilarityMethod::file:
      k = read_similarity_csv(config_.similarity.file);
      if (k.size() != tasks) {
        throw ConfigError(fmt::format("similarity file {} is {}x{}, environment has {} tasks",
                                      config_.similarity.file.string(), k.size(), k.size(), tasks));
      }
      break;
  }
  if (config_.similarity.psd_projection) {
    const double min_ev = k.min_eigenvalue();
    if (min_ev < 0.0) {
      spdlog::info("{} similarity has min eigenvalue {}; projecting to PSD", to_string(method), min_ev);
      k = project_to_psd(k);
    }
  }
  return k;
}

std::vector<RoundLog> run_independent(const Environment& env, const PolicyConfig& config,
                                      RunMode mode, std::size_t horizon, std::uint64_t seed) {
  const std::size_t tasks = env.task_count();
  PolicyConfig single = config;
  single.similarity = SimilarityMatrix::identity(1);
  std::vector<std::vector<RoundLog>> per_task(tasks);
  for (std::size_t m = 0; m < tasks; ++m) {
    const TaskSubsetEnvironment sub(env, {m});
    per_task[m] = mode == RunMode::parallel ? run_parallel(sub, single, horizon, seed)
                                            : run_sequential(sub, single, horizon, seed);
  }
  std::vector<RoundLog> merged;
  merged.reserve(tasks * horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t m = 0; m < tasks; ++m) {
      RoundLog log = std::move(per_task[m][t]);
      log.task = m;
      log.time = mode == RunMode::parallel ? t : t * tasks + m;
      merged.push_back(std::move(log));
    }
  }
  return merged;
}

BanditResult run_bandit_experiment(const ExperimentConfig& config) {
  config.validate();
  const BanditSetup setup(config);
  const Environment& env = setup.environment();
  const std::size_t tasks = env.task_count();

  BanditResult result;
  result.tasks = tasks;
  for (const auto mode : config.modes) {
    for (const auto method : config.methods) {
      MethodRun run;
      run.method = method;
      run.mode = mode;
      run.seeds.resize(config.seeds.size());
      result.runs.push_back(std::move(run));
    }
  }

  const std::size_t per_run = config.seeds.size();
  parallel_for(result.runs.size() * per_run, config.threads, [&](std::size_t job) {
    MethodRun& run = result.runs[job / per_run];
    SeedRun& out = run.seeds[job % per_run];
    out.seed = config.seeds[job % per_run];
    try {
      const auto data = setup.similarity_data(out.seed);
      out.kx = setup.context_kernel(data);
      out.similarity = setup.estimate_similarity(run.method, data, out.kx);

      PolicyConfig policy;
      policy.beta = config.policy.beta;
      policy.lambda = config.policy.lambda;
      policy.kx = out.kx;
      policy.similarity = out.similarity;
      policy.model = config.policy.model;

      if (run.method == SimilarityMethod::identity) {
        out.logs = run_independent(env, policy, run.mode, config.horizon, out.seed);
      } else if (run.mode == RunMode::parallel) {
        out.logs = run_parallel(env, policy, config.horizon, out.seed);
      } else {
        out.logs = run_sequential(env, policy, config.horizon * tasks, out.seed);
      }
      out.curve = regret_by_round(out.logs);
    } catch (const ConfigError& e) {
      rethrow_with_seed(e, out.seed);
    } catch (const DataError& e) {
      rethrow_with_seed(e, out.seed);
    } catch (const Error& e) {
      rethrow_with_seed(e, out.seed);
    }
    spdlog::debug("{} {} seed {}: final regret {}", to_string(run.mode), to_string(run.method),
                  out.seed, out.curve.back());
  });
  return result;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> write_sweep_outputs(const SweepResult& result, const fs::path& dir,
                                          OutputFormat format) {
  std::vector<fs::path> files;
  const std::size_t at0 = result.index_of(0.0);
  const std::size_t at1 = result.index_of(1.0);
  if (format == OutputFormat::csv) {
    auto out = open_output(dir / "sweep.csv");
    out << "sim_train,mean_mse,stderr\n";
    for (std::size_t i = 0; i < result.grid.size(); ++i) {
      out << format_real(result.grid[i]) << ',' << format_real(result.mean(i)) << ','
          << format_real(result.stderr_of(i)) << '\n';
    }
    files.emplace_back("sweep.csv");
  } else {
    json rows = json::array();
    for (std::size_t i = 0; i < result.grid.size(); ++i) {
      rows.push_back({{"sim_train", result.grid[i]},
                      {"mean_mse", result.mean(i)},
                      {"stderr", result.stderr_of(i)}});
    }
    write_json(dir / "sweep.json", rows);
    files.emplace_back("sweep.json");
  }
  const std::size_t best = result.argmin();
  json summary = {{"argmin_sim_train", result.grid[best]},
                  {"min_mean_mse", result.mean(best)},
                  {"draws", result.mse.empty() ? 0 : result.mse.front().size()},
                  {"mean_mse_at_0", result.mean(at0)},
                  {"mean_mse_at_1", result.mean(at1)}};
  write_json(dir / "sweep_summary.json", summary);
  files.emplace_back("sweep_summary.json");
  return files;
}

std::vector<fs::path> write_bandit_outputs(const BanditResult& result, const fs::path& dir,
                                           OutputFormat format) {
  std::vector<fs::path> files;
  fs::create_directories(dir / "logs");
  fs::create_directories(dir / "similarity");

  for (const auto& run : result.runs) {
    for (const auto& s : run.seeds) {
      const fs::path log_name = fs::path("logs") / fmt::format("{}_{}_seed{}.csv", to_string(run.mode),
                                                               to_string(run.method), s.seed);
      auto out = open_output(dir / log_name);
      write_round_logs_csv(out, s.logs);
      files.push_back(log_name);
      if (run.method != SimilarityMethod::identity && run.mode == result.runs.front().mode) {
        const fs::path sim_name =
            fs::path("similarity") / fmt::format("{}_seed{}.csv", to_string(run.method), s.seed);
        write_similarity_csv(s.similarity, dir / sim_name);
        files.push_back(sim_name);
      }
    }
  }

  auto samples_at = [&](const MethodRun& run, std::size_t step) {
    return run.mode == RunMode::parallel ? (step + 1) * result.tasks : step + 1;
  };
  auto identity_final = [&](RunMode mode) -> double {
    const auto* base = result.find(SimilarityMethod::identity, mode);
    return base ? base->final_mean() : std::nan("");
  };

  if (format == OutputFormat::csv) {
    auto curves = open_output(dir / "regret_curves.csv");
    curves << "mode,method,step,samples,mean_regret,stderr\n";
    for (const auto& run : result.runs) {
      const auto mean = run.mean_curve();
      for (std::size_t i = 0; i < mean.size(); ++i) {
        std::vector<double> at(run.seeds.size());
        for (std::size_t s = 0; s < at.size(); ++s) at[s] = run.seeds[s].curve[i];
        curves << to_string(run.mode) << ',' << to_string(run.method) << ',' << i + 1 << ','
               << samples_at(run, i) << ',' << format_real(mean[i]) << ','
               << format_real(stderr_of_values(at)) << '\n';
      }
    }
    files.emplace_back("regret_curves.csv");

    auto summary = open_output(dir / "summary.csv");
    summary << "mode,method,seeds,final_mean_regret,final_stderr,ratio_to_identity\n";
    for (const auto& run : result.runs) {
      summary << to_string(run.mode) << ',' << to_string(run.method) << ',' << run.seeds.size()
              << ',' << format_real(run.final_mean()) << ',' << format_real(run.final_stderr())
              << ',' << format_real(run.final_mean() / identity_final(run.mode)) << '\n';
    }
    files.emplace_back("summary.csv");
  } else {
    json curves = json::array();
    json summary = json::array();
    for (const auto& run : result.runs) {
      curves.push_back({{"mode", to_string(run.mode)},
                        {"method", to_string(run.method)},
                        {"mean_regret", run.mean_curve()}});
      json entry = {{"mode", to_string(run.mode)},
                    {"method", to_string(run.method)},
                    {"seeds", run.seeds.size()},
                    {"final_mean_regret", run.final_mean()},
                    {"final_stderr", run.final_stderr()}};
      const double base = identity_final(run.mode);
      entry["ratio_to_identity"] = std::isnan(base) ? json(nullptr) : json(run.final_mean() / base);
      summary.push_back(std::move(entry));
    }
    write_json(dir / "regret_curves.json", curves);
    write_json(dir / "summary.json", summary);
    files.emplace_back("regret_curves.json");
    files.emplace_back("summary.json");
  }
  return files;
}

std::vector<fs::path> write_theory_outputs(const TheoryReport& report, const fs::path& dir,
                                           OutputFormat format) {
  std::vector<fs::path> files;
  if (format == OutputFormat::csv) {
    auto rank = open_output(dir / "theory_rank.csv");
    rank << "instance,log_g,rank_z,rank_x,kernel_bound,bound,holds\n";
    for (std::size_t i = 0; i < report.rank_checks.size(); ++i) {
      const auto& c = report.rank_checks[i];
      rank << i << ',' << format_real(c.log_g) << ',' << c.rank_z << ',' << c.rank_x << ','
           << format_real(c.kernel_bound) << ',' << format_real(c.bound) << ','
           << (c.holds() ? "true" : "false") << '\n';
    }
    auto mono = open_output(dir / "theory_monotonicity.csv");
    mono << "set,mu,log_g\n";
    for (std::size_t i = 0; i < report.monotonicity.size(); ++i) {
      const auto& m = report.monotonicity[i];
      for (std::size_t j = 0; j < m.mu.size(); ++j) {
        mono << i << ',' << format_real(m.mu[j]) << ',' << format_real(m.log_g[j]) << '\n';
      }
    }
    files.emplace_back("theory_rank.csv");
    files.emplace_back("theory_monotonicity.csv");
  }
  json doc;
  doc["lambda"] = report.lambda;
  doc["rank_violations"] = report.rank_violations();
  doc["monotonicity_violations"] = report.monotonicity_violations();
  json rank = json::array();
  for (const auto& c : report.rank_checks) {
    rank.push_back({{"log_g", c.log_g},
                    {"g", std::exp(c.log_g)},
                    {"rank_z", c.rank_z},
                    {"rank_x", c.rank_x},
                    {"kernel_bound", c.kernel_bound},
                    {"bound", c.bound},
                    {"holds", c.holds()}});
  }
  doc["rank_bound"] = std::move(rank);
  json mono = json::array();
  for (const auto& m : report.monotonicity) {
    json g = json::array();
    for (const double v : m.log_g) g.push_back(std::exp(v));
    mono.push_back({{"mu", m.mu}, {"log_g", m.log_g}, {"g", g}, {"violations", m.violations}});
  }
  doc["monotonicity"] = std::move(mono);
  write_json(dir / "theory.json", doc);
  files.emplace_back("theory.json");
  return files;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const ExperimentConfig& config, const std::vector<fs::path>& outputs) {
  json doc;
  doc["tool"] = "mtcb";
  doc["version"] = kVersion;
  doc["command"] = command;
  doc["seeds"] = config.seeds;
  json cfg = json::object();
  for (const auto& [section, entries] : to_sections(config)) {
    for (const auto& [key, value] : entries) cfg[section][key] = value;
  }
  doc["config"] = std::move(cfg);
  json files = json::array();
  for (const auto& p : outputs) files.push_back(p.generic_string());
  doc["outputs"] = std::move(files);
  write_json(dir / "manifest.json", doc);
}

std::vector<fs::path> run_experiment(const ExperimentConfig& config, const fs::path& dir,
                                     OutputFormat format) {
  config.validate();
  std::vector<fs::path> files;
  // Compute first, create the output directory only once everything succeeded.
  switch (config.kind) {
    case ExperimentKind::sim_sweep: {
      const auto result = run_sim_sweep(config.sweep, config.threads);
      fs::create_directories(dir);
      files = write_sweep_outputs(result, dir, format);
      break;
    }
    case ExperimentKind::synthetic_bandit:
    case ExperimentKind::trace_bandit: {
      const auto result = run_bandit_experiment(config);
      fs::create_directories(dir);
      files = write_bandit_outputs(result, dir, format);
      break;
    }
    case ExperimentKind::theory_checks: {
      const auto report = run_theory_checks(config.theory, config.seeds.front());
      fs::create_directories(dir);
      files = write_theory_outputs(report, dir, format);
      break;
    }
    case ExperimentKind::similarity: {
      const BanditSetup setup(config);
      const std::uint64_t seed = config.seeds.front();
      const auto data = setup.similarity_data(seed);
      const KernelSpec kx = setup.context_kernel(data);
      const auto k = setup.estimate_similarity(config.similarity.method, data, kx);
      fs::create_directories(dir);
      write_similarity_csv(k, dir / "similarity.csv");
      files.emplace_back("similarity.csv");
      if (format == OutputFormat::json) {
        json rows = json::array();
        for (std::size_t i = 0; i < k.size(); ++i) {
          json row = json::array();
          for (std::size_t j = 0; j < k.size(); ++j) row.push_back(k(i, j));
          rows.push_back(std::move(row));
        }
        write_json(dir / "similarity.json",
                   {{"method", to_string(config.similarity.method)},
                    {"min_eigenvalue", k.min_eigenvalue()},
                    {"context_lengthscale", kx.lengthscale},
                    {"matrix", rows}});
        files.emplace_back("similarity.json");
      }
      break;
    }
  }
  const std::string command = [&] {
    switch (config.kind) {
      case ExperimentKind::sim_sweep: return "sim-sweep";
      case ExperimentKind::synthetic_bandit: return "bandit";
      case ExperimentKind::trace_bandit: return "trace";
      case ExperimentKind::theory_checks: return "theory";
      case ExperimentKind::similarity: return "similarity";
    }
    return "";
  }();
  write_manifest(dir, command, config, files);
  return files;
}

}  // namespace mtcb
