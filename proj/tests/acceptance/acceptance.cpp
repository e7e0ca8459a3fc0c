// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "mtcb/bandit.hpp"
#include "mtcb/config.hpp"
#include "mtcb/envs.hpp"
#include "mtcb/experiments.hpp"
#include "mtcb/krr.hpp"
#include "mtcb/similarity.hpp"
#include "mtcb/theory.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using mtcb::AugmentedContext;
using mtcb::KernelSpec;
using mtcb::SimilarityMatrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Sweep on the GP generator at its defaults.
Outcome criterion_sweep() {
  const auto start = Clock::now();
  mtcb::SweepSettings s;
  s.gp.sim_g = 0.8;
  s.gp.points_per_task = 100;
  s.gp.train_size = 5;
  s.gp.lengthscale = 0.5;
  s.gp.noise_variance = 0.05;
  s.draws = 100;
  s.grid_step = 0.01;
  const auto r = mtcb::run_sim_sweep(s);
  const double secs = seconds_since(start);
  const std::size_t best = r.argmin();
  const std::size_t i08 = r.index_of(0.8);
  const std::size_t i0 = r.index_of(0.0);
  const std::size_t i1 = r.index_of(1.0);
  const double gap0 = r.mean(i0) - r.mean(i08);
  const double gap1 = r.mean(i1) - r.mean(i08);
  const double se0 = r.paired_stderr(i0, i08);
  const double se1 = r.paired_stderr(i1, i08);
  const bool ok = r.grid[best] >= 0.65 - 1e-12 && r.grid[best] <= 0.95 + 1e-12 && gap0 >= 3.0 * se0 &&
                  gap1 >= 3.0 * se1 && secs <= 300.0;
  return {ok, fmt::format("argmin={:.2f} mse(0.8)={:.5f} mse(0)-mse(0.8)={:.5f} (3se={:.5f}) "
                          "mse(1)-mse(0.8)={:.5f} (3se={:.5f}) unpaired se(0.8)={:.5f} time={:.1f}s",
                          r.grid[best], r.mean(i08), gap0, 3.0 * se0, gap1, 3.0 * se1, r.stderr_of(i08),
                          secs)};
}

// Synthetic bandit with the shipped config.
Outcome criterion_regret() {
  const auto start = Clock::now();
  const auto config = mtcb::load_config(fs::path(MTCB_CONFIGS_DIR) / "synthetic.ini");
  if (config.horizon != 1000 || config.seeds.size() != 10 || config.synthetic_tasks != 5) {
    return {false, "configs/synthetic.ini does not describe M=5, T=1000, 10 seeds"};
  }
  const auto result = mtcb::run_bandit_experiment(config);
  const double secs = seconds_since(start);
  const auto* id = result.find(mtcb::SimilarityMethod::identity, mtcb::RunMode::parallel);
  const auto* cke = result.find(mtcb::SimilarityMethod::cke, mtcb::RunMode::parallel);
  const auto* r2 = result.find(mtcb::SimilarityMethod::r2, mtcb::RunMode::parallel);
  if (!id || !cke || !r2) return {false, "config must run identity, cke and r2 in parallel mode"};
  const double base = id->final_mean();
  const double ratio_cke = cke->final_mean() / base;
  const double ratio_r2 = r2->final_mean() / base;
  const bool ok = ratio_cke <= 0.6 && ratio_r2 < 1.0 && secs <= 600.0;
  return {ok, fmt::format("identity={:.2f}±{:.2f} cke={:.2f}±{:.2f} (ratio {:.3f}, need <= 0.6) "
                          "r2={:.2f}±{:.2f} (ratio {:.3f}, need < 1) time={:.1f}s",
                          base, id->final_stderr(), cke->final_mean(), cke->final_stderr(), ratio_cke,
                          r2->final_mean(), r2->final_stderr(), ratio_r2, secs)};
}

std::vector<std::size_t> arms_of(const std::vector<mtcb::RoundLog>& logs, std::size_t task) {
  std::vector<std::size_t> out;
  for (const auto& l : logs)
    if (l.task == task) out.push_back(l.arm);
  return out;
}

Outcome criterion_identity() {
  mtcb::SyntheticBanditEnv env(5);
  std::size_t mismatched = 0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    mtcb::PolicyConfig joint_cfg;
    joint_cfg.kx = KernelSpec::gaussian(0.45);
    joint_cfg.similarity = SimilarityMatrix::identity(5);
    const auto joint = mtcb::run_parallel(env, joint_cfg, 200, seed);
    for (std::size_t m = 0; m < 5; ++m) {
      mtcb::TaskSubsetEnvironment one(env, {m});
      auto cfg = joint_cfg;
      cfg.similarity = SimilarityMatrix::identity(1);
      if (arms_of(joint, m) != arms_of(mtcb::run_parallel(one, cfg, 200, seed), 0)) ++mismatched;
    }
  }
  return {mismatched == 0, fmt::format("{} of 15 (seed, task) arm sequences differ", mismatched)};
}

Outcome criterion_schur() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd kz(3, 3);
  kz << 1.0, 0.6, 0.2, 0.6, 1.0, 0.4, 0.2, 0.4, 1.0;
  const SimilarityMatrix sim(kz);
  const auto kx = KernelSpec::gaussian(0.5);
  mtcb::MultiTaskModel model(kx, sim, 1.0, {.refresh_interval = 0});
  auto point = [&] {
    mtcb::ContextVector x(4);
    for (int d = 0; d < 4; ++d) x[d] = unit(rng);
    return AugmentedContext{static_cast<std::size_t>(rng() % 3), x};
  };
  std::vector<AugmentedContext> xs;
  std::vector<double> ys;
  for (int i = 0; i < 300; ++i) {
    xs.push_back(point());
    ys.push_back(unit(rng));
    model.append(xs.back(), ys.back());
  }
  const auto dense = oracle::dense_inverse(oracle::augmented_gram(kx, kz, xs), model.ridge());
  const double inv_err = (model.inverse() - dense).cwiseAbs().maxCoeff();
  double pred_err = 0.0;
  for (int q = 0; q < 50; ++q) {
    const auto x = point();
    const auto got = model.predict(x);
    const auto ref = oracle::dense_predict(kx, kz, xs, ys, model.ridge(), x);
    pred_err = std::max({pred_err, std::abs(got.mean - ref.mean), std::abs(got.width - ref.width)});
  }
  return {inv_err <= 1e-6 && pred_err <= 1e-6,
          fmt::format("inverse max-abs {:.2e}, predict max-abs {:.2e} (limit 1e-6)", inv_err, pred_err)};
}

Outcome criterion_cke() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> size(1, 4);
  std::uniform_real_distribution<double> lam(0.05, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto draw = [&](std::vector<double>& x, std::vector<double>& y, mtcb::TaskDataset& d) {
      const int n = size(rng);
      for (int j = 0; j < n; ++j) {
        x.push_back(unit(rng));
        y.push_back(unit(rng));
        d.add(mtcb::ContextVector::Constant(1, x.back()), y.back());
      }
    };
    std::vector<double> xm, ym, xn, yn;
    mtcb::TaskDataset dm, dn;
    draw(xm, ym, dm);
    draw(xn, yn, dn);
    const double lambda = lam(rng);
    const double got = mtcb::cke_distance_sq(dm, dn, KernelSpec::linear(), KernelSpec::linear(), lambda);
    const double want = oracle::cke_linear_1d(xm, ym, xn, yn, lambda);
    worst = std::max(worst, std::abs(got - want));
  }
  return {worst <= 1e-8, fmt::format("max |difference| {:.2e} over 100 instances (limit 1e-8)", worst)};
}
// log g from an LU log-determinant of the entry-by-entry Gram matrix.
double dense_log_g(const KernelSpec& kx, const Eigen::MatrixXd& kz,
                   const std::vector<AugmentedContext>& history, double lambda) {
  const Eigen::MatrixXd k = oracle::augmented_gram(kx, kz, history);
  const auto n = static_cast<Eigen::Index>(history.size());
  const Eigen::MatrixXd scaled = k / lambda + Eigen::MatrixXd::Identity(n, n);
  return scaled.fullPivLu().matrixLU().diagonal().array().abs().log().sum();
}

std::size_t eigen_rank(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  std::size_t r = 0;
  for (double e : ev)
    if (e > 1e-9 * top) ++r;
  return r;
}

Outcome criterion_rank_bound() {
  std::size_t violations = 0;
  double worst_route_gap = 0.0;
  double tightest = -1e300;
  std::vector<std::size_t> rz_seen(4, 0);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto inst = mtcb::random_theory_instance(11, i, 3, 20);
    const auto check = mtcb::check_rank_bound(inst.history, inst.similarity, inst.kx, 1.0);
    const double dense = dense_log_g(inst.kx, inst.similarity.matrix(), inst.history, 1.0);
    worst_route_gap = std::max(worst_route_gap, std::abs(dense - check.log_g));
    // bound rebuilt from independently computed ranks and kernel bound
    Eigen::MatrixXd kxg(inst.history.size(), inst.history.size());
    double c = 0.0;
    for (std::size_t a = 0; a < inst.history.size(); ++a) {
      for (std::size_t b = 0; b < inst.history.size(); ++b)
        kxg(a, b) = oracle::kernel(inst.kx, inst.history[a].context, inst.history[b].context);
      c = std::max(c, inst.similarity(inst.history[a].task, inst.history[a].task) * kxg(a, a));
    }
    const std::size_t rz = eigen_rank(inst.similarity.matrix());
    const std::size_t rx = eigen_rank(kxg);
    const double bound = static_cast<double>(rz * rx) * std::log((21.0 * c + 1.0) / 1.0);
    ++rz_seen[std::min<std::size_t>(rz, 3)];
    if (!(dense <= bound) || !check.holds()) ++violations;
    tightest = std::max(tightest, dense / bound);
  }
  const bool mixed = rz_seen[1] > 0 && (rz_seen[2] + rz_seen[3]) > 0;
  return {violations == 0 && worst_route_gap <= 1e-8 && mixed,
          fmt::format("{} violations in 50 instances, largest log_g/bound {:.3f}, "
                      "rank_z counts 1:{} 2:{} 3:{}, library vs dense log g {:.1e}",
                      violations, tightest, rz_seen[1], rz_seen[2], rz_seen[3], worst_route_gap)};
}

Outcome criterion_monotonicity() {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  const auto kx = KernelSpec::gaussian(0.5);
  std::size_t violations = 0;
  double worst_rise = -1e300;
  for (int set = 0; set < 20; ++set) {
    std::vector<AugmentedContext> h;
    for (std::size_t t = 0; t < 21; ++t) {
      mtcb::ContextVector x(2);
      x << unit(rng), unit(rng);
      h.push_back({t % 3, x});
    }
    const auto check = mtcb::check_monotonicity(grid, h, 3, kx, 1.0, 1e-9);
    violations += check.violations.size();
    double prev = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      Eigen::MatrixXd kz = Eigen::MatrixXd::Constant(3, 3, grid[i]);
      kz.diagonal().setOnes();
      const double g = dense_log_g(kx, kz, h, 1.0);
      if (i > 0) {
        const double rise = (g - prev) / std::max(1.0, std::abs(prev));
        worst_rise = std::max(worst_rise, rise);
        if (rise > 1e-9) ++violations;
      }
      prev = g;
    }
  }
  return {violations == 0,
          fmt::format("{} violations over 20 sets x 11 mu values, largest relative rise {:.2e} (limit 1e-9)",
                      violations, worst_rise)};
}

Outcome criterion_trace_pipeline() {
  const auto result = mtcb::ingest_traces(fs::path(MTCB_FIXTURES_DIR) / "table1.csv");
  const std::vector<double> want = {0.9078014184, 0.8255813953, 0.8406884082, 0.6258613608};
  if (result.records.size() != 4) return {false, fmt::format("{} records", result.records.size())};
  double err = 0.0;
  for (std::size_t i = 0; i < 4; ++i) err = std::max(err, std::abs(result.records[i].reward - want[i]));
  mtcb::KnnSimulator sim(result.records, 1);
  std::size_t self_miss = 0;
  for (const auto& r : result.records)
    if (sim.reward(r.state, r.action) != r.reward) ++self_miss;
  return {err <= 1e-12 && self_miss == 0,
          fmt::format("4 records, reward max error {:.1e}, k=1 self-query mismatches {}", err, self_miss)};
}

Outcome criterion_trace_demo() {
  const auto start = Clock::now();
  const auto config = mtcb::load_config(fs::path(MTCB_CONFIGS_DIR) / "trace_demo.ini");
  const auto result = mtcb::run_bandit_experiment(config);
  const auto* id = result.find(mtcb::SimilarityMethod::identity, mtcb::RunMode::parallel);
  if (!id || config.seeds.size() != 5) return {false, "trace demo config must run identity with 5 seeds"};
  bool ok = true;
  std::string detail = fmt::format("identity={:.3f}", id->final_mean());
  for (const auto& run : result.runs) {
    if (run.method == mtcb::SimilarityMethod::identity || run.mode != mtcb::RunMode::parallel) continue;
    const double ratio = run.final_mean() / id->final_mean();
    ok = ok && run.final_mean() <= id->final_mean();
    detail += fmt::format(" {}={:.3f} (ratio {:.3f})", mtcb::to_string(run.method), run.final_mean(), ratio);
  }
  return {ok, detail + fmt::format(" stations={} T={} time={:.1f}s", result.tasks, config.horizon,
                                   seconds_since(start))};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"1 similarity sweep minimum and margins", criterion_sweep},
      {"2 synthetic multi-task regret reduction", criterion_regret},
      {"3 identity similarity equals independent runs", criterion_identity},
      {"4 incremental inverse after 300 appends", criterion_schur},
      {"5 CKE distance vs explicit operator", criterion_cke},
      {"6 information-gain rank bound", criterion_rank_bound},
      {"7 information gain non-increasing in mu", criterion_monotonicity},
      {"8 trace ingest and k=1 simulator", criterion_trace_pipeline},
      {"9 trace demo multi-task vs identity", criterion_trace_demo},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failed;
    std::printf("%s  criterion %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
