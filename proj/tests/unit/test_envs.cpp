#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "mtcb/envs.hpp"
#include "mtcb/error.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using mtcb::SyntheticBanditEnv;

namespace {

const fs::path fixtures = MTCB_FIXTURES_DIR;

fs::path temp_file(const std::string& name, const std::string& content) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream(path) << content;
  return path;
}

// Sample covariance with known zero mean and its Monte-Carlo standard error.
struct Moment {
  double value;
  double stderr_;
};

Moment sample_cov(const std::vector<Eigen::VectorXd>& draws, Eigen::Index i, Eigen::Index j,
                  double sii, double sjj, double sij) {
  double s = 0.0;
  for (const auto& y : draws) s += y(i) * y(j);
  const double n = static_cast<double>(draws.size());
  return {s / n, std::sqrt((sii * sjj + sij * sij) / n)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic bandit
// ---------------------------------------------------------------------------

TEST(SyntheticEnv, RewardExample) {
  EXPECT_NEAR(SyntheticBanditEnv::reward(0.5, 3, 0), 0.99, 1e-15);
}

TEST(SyntheticEnv, BestArmByExhaustiveSearch) {
  SyntheticBanditEnv env;
  const auto round = env.round_for({0.5, 0.5}, 0);
  std::size_t best = 0;
  for (std::size_t a = 1; a < 5; ++a)
    if (round.expected[a] > round.expected[best]) best = a;
  // a = 3 and a = 4 (1-based) both reach 0.99; the first index wins.
  EXPECT_NEAR(round.expected[2], 0.99, 1e-12);
  EXPECT_NEAR(round.expected[3], 0.99, 1e-12);
  EXPECT_EQ(round.best_arm(), best);
  EXPECT_EQ(round.best_arm(), 2u);
  EXPECT_NEAR(round.best_expected(), 0.99, 1e-12);
}

TEST(SyntheticEnv, ContextsFollowFormula) {
  const Eigen::Vector2d u(0.3, 0.8);
  for (std::size_t m = 0; m < 5; ++m) {
    for (std::size_t a = 0; a < 5; ++a) {
      const double ad = static_cast<double>(a + 1);
      const double md = static_cast<double>(m + 1);
      const auto x = SyntheticBanditEnv::context(u, a, m);
      EXPECT_DOUBLE_EQ(x(0), 0.3 * std::cos(M_PI / 2 * (ad / 5 + md / 10)));
      EXPECT_DOUBLE_EQ(x(1), 0.8 * std::sin(M_PI / 2 * (ad / 5)));
      const double d = 0.3 - ad / 5 + 0.3 - md / 10;
      EXPECT_DOUBLE_EQ(SyntheticBanditEnv::reward(0.3, a, m), 1 - d * d);
    }
  }
}

TEST(SyntheticEnv, HiddenParameterSharedAcrossTasksAndDeterministic) {
  SyntheticBanditEnv env;
  for (std::size_t slot = 0; slot < 50; ++slot) {
    const auto u = env.hidden(7, slot);
    EXPECT_GE(u.minCoeff(), 0.0);
    EXPECT_LE(u.maxCoeff(), 1.0);
    for (std::size_t m = 0; m < 5; ++m) {
      const auto a = env.observe(7, slot, m);
      const auto b = env.round_for(u, m);
      EXPECT_EQ(a.expected, b.expected);
      EXPECT_EQ(a.rewards, a.expected);
      for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(a.contexts[k], b.contexts[k]);
    }
  }
  EXPECT_NE(env.hidden(7, 0), env.hidden(8, 0));
}

TEST(SyntheticEnv, RewardRangeOverManyDraws) {
  SyntheticBanditEnv env;
  std::size_t below = 0;
  std::size_t total = 0;
  double lowest = 1.0;
  for (std::size_t slot = 0; slot < 10000; ++slot) {
    for (std::size_t m = 0; m < 5; ++m) {
      for (double r : env.observe(3, slot, m).rewards) {
        EXPECT_LE(r, 1.0);
        lowest = std::min(lowest, r);
        below += r < 0.0;
        ++total;
      }
    }
  }
  // Tasks 4 and 5 leave [0, 1] for small u0; report how often.
  const double rate = static_cast<double>(below) / static_cast<double>(total);
  RecordProperty("negative_reward_rate", std::to_string(rate));
  RecordProperty("lowest_reward", std::to_string(lowest));
  EXPECT_GE(lowest, -0.44 - 1e-12);
  EXPECT_GT(below, 0u);
  EXPECT_LT(rate, 0.05);
}

TEST(SyntheticEnv, RejectsZeroTasks) {
  EXPECT_THROW(SyntheticBanditEnv(0), mtcb::ConfigError);
  SyntheticBanditEnv env(2);
  EXPECT_THROW(env.observe(0, 0, 2), mtcb::Error);
}

TEST(TaskSubset, RenumbersTasks) {
  SyntheticBanditEnv env;
  mtcb::TaskSubsetEnvironment sub(env, {3, 1});
  EXPECT_EQ(sub.task_count(), 2u);
  EXPECT_EQ(sub.observe(4, 9, 0).expected, env.observe(4, 9, 3).expected);
  EXPECT_EQ(sub.observe(4, 9, 1).expected, env.observe(4, 9, 1).expected);
}

TEST(Warmup, DatasetsAreSizedAndDisjointFromEvaluation) {
  SyntheticBanditEnv env;
  const auto data = mtcb::collect_warmup_datasets(env, 5, 30);
  ASSERT_EQ(data.size(), 5u);
  for (const auto& d : data) EXPECT_EQ(d.size(), 30u);
  EXPECT_EQ(mtcb::collect_warmup_datasets(env, 5, 30)[2].y, data[2].y);
  // The first evaluation slot's contexts do not show up among the warmup data.
  const auto first = env.observe(5, 0, 0);
  for (const auto& x : data[0].x)
    for (const auto& c : first.contexts) EXPECT_NE(x, c);
}

// ---------------------------------------------------------------------------
// GP-sampled regression tasks
// ---------------------------------------------------------------------------

TEST(GpTasks, FullSimilarityNoNoiseMakesTasksCoincide) {
  mtcb::GpRegressionConfig cfg;
  cfg.sim_g = 1.0;
  cfg.noise_variance = 0.0;
  cfg.points_per_task = 30;
  const auto split = mtcb::generate_gp_tasks(cfg);
  ASSERT_EQ(split.size(), 2u);
  for (std::size_t i = 0; i < split[0].train.size(); ++i)
    EXPECT_NEAR(split[0].train.y[i], split[1].train.y[i], 1e-6);
  for (std::size_t i = 0; i < split[0].test.size(); ++i)
    EXPECT_NEAR(split[0].test.y[i], split[1].test.y[i], 1e-6);
  EXPECT_EQ(split[0].train.size(), 5u);
  EXPECT_EQ(split[0].test.size(), 25u);
}

TEST(GpTasks, ZeroSimilarityGivesUncorrelatedTasks) {
  mtcb::GpRegressionConfig cfg;
  cfg.sim_g = 0.0;
  cfg.points_per_task = 6;
  cfg.seed = 11;
  mtcb::GpTaskGenerator gen(cfg);
  const auto sigma = gen.covariance();
  std::vector<Eigen::VectorXd> draws;
  for (std::size_t d = 0; d < 200; ++d) draws.push_back(gen.draw_targets(d));
  for (Eigen::Index i = 0; i < 6; ++i) {
    const auto c = sample_cov(draws, i, 6 + i, sigma(i, i), sigma(6 + i, 6 + i), 0.0);
    EXPECT_LE(std::abs(c.value), 3.0 * c.stderr_) << i;
  }
}

TEST(GpTasks, SampleCovarianceMatchesKronecker) {
  mtcb::GpRegressionConfig cfg;
  cfg.points_per_task = 3;
  cfg.train_size = 1;
  cfg.seed = 5;
  mtcb::GpTaskGenerator gen(cfg);
  const auto& design = gen.designs()[0];
  Eigen::MatrixXd kx(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      kx(i, j) = oracle::kernel(mtcb::KernelSpec::gaussian(0.5), design[static_cast<std::size_t>(i)],
                                design[static_cast<std::size_t>(j)]);
  Eigen::MatrixXd kz(2, 2);
  kz << 1, 0.8, 0.8, 1;
  Eigen::MatrixXd want(6, 6);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) want.block(3 * a, 3 * b, 3, 3) = kz(a, b) * kx;
  want.diagonal().array() += 0.05;
  EXPECT_LT((gen.covariance() - want).cwiseAbs().maxCoeff(), 1e-12);

  std::vector<Eigen::VectorXd> draws;
  for (std::size_t d = 0; d < 500; ++d) draws.push_back(gen.draw_targets(d));
  int outside = 0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto c = sample_cov(draws, i, j, want(i, i), want(j, j), want(i, j));
      if (std::abs(c.value - want(i, j)) > 3.0 * c.stderr_) ++outside;
    }
  }
  // 21 entries at 3 sigma: more than one excursion would be a real mismatch.
  EXPECT_LE(outside, 1);
}

TEST(GpTasks, SeedDeterministic) {
  mtcb::GpRegressionConfig cfg;
  cfg.seed = 3;
  const auto a = mtcb::generate_gp_tasks(cfg);
  const auto b = mtcb::generate_gp_tasks(cfg);
  EXPECT_EQ(a[1].test.y, b[1].test.y);
  cfg.seed = 4;
  EXPECT_NE(mtcb::generate_gp_tasks(cfg)[1].test.y, a[1].test.y);
}

TEST(GpTasks, PerTaskDesignCovariance) {
  mtcb::GpRegressionConfig cfg;
  cfg.shared_design = false;
  cfg.points_per_task = 4;
  cfg.train_size = 2;
  mtcb::GpTaskGenerator gen(cfg);
  const auto& d = gen.designs();
  EXPECT_NE(d[0][0], d[1][0]);
  const auto sigma = gen.covariance();
  EXPECT_NEAR(sigma(0, 4), 0.8 * oracle::kernel(mtcb::KernelSpec::gaussian(0.5), d[0][0], d[1][0]), 1e-12);
}

TEST(GpTasks, ConfigValidation) {
  mtcb::GpRegressionConfig cfg;
  cfg.sim_g = 1.5;
  EXPECT_THROW(cfg.validate(), mtcb::ConfigError);
  cfg.sim_g = 0.5;
  cfg.noise_variance = -1.0;
  EXPECT_THROW(cfg.validate(), mtcb::ConfigError);
  cfg.noise_variance = 0.05;
  cfg.train_size = 200;
  EXPECT_THROW(cfg.validate(), mtcb::ConfigError);
}

TEST(GpTasks, PsdFactor) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 1, 1, 1;
  const auto f = mtcb::psd_factor(m);
  EXPECT_LT((f * f.transpose() - m).cwiseAbs().maxCoeff(), 1e-12);
  m << 1, 2, 2, 1;
  EXPECT_THROW(mtcb::psd_factor(m), mtcb::DataError);
}

// ---------------------------------------------------------------------------
// Trace ingestion
// ---------------------------------------------------------------------------

TEST(Ingest, TableOneRows) {
  const auto result = mtcb::ingest_traces(fixtures / "table1.csv");
  ASSERT_EQ(result.records.size(), 4u);
  const std::vector<double> want = {0.9078014184, 0.8255813953, 0.8406884082, 0.6258613608};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(result.records[i].reward, want[i], 1e-12);
  EXPECT_EQ(result.records[0].bs_id, "3714");
  EXPECT_EQ(result.records[0].action, -93);
  EXPECT_DOUBLE_EQ(result.records[3].state[4], 100.42472);
  EXPECT_TRUE(result.rejects.empty());
}

TEST(Ingest, RejectsBadRows) {
  const auto result = mtcb::ingest_traces(fixtures / "rejects.csv");
  EXPECT_EQ(result.records.size(), 2u);
  ASSERT_EQ(result.rejects.size(), 4u);
  EXPECT_NE(result.rejects[0].find("line 3"), std::string::npos) << result.rejects[0];
}

TEST(Ingest, FatalErrors) {
  EXPECT_THROW(mtcb::ingest_traces(fixtures / "does_not_exist.csv"), mtcb::DataError);
  EXPECT_THROW(mtcb::ingest_traces(temp_file("mtcb_empty.csv", "")), mtcb::DataError);
  const std::string header =
      "BS ID,# Active users,% CQI,%Small packet SDUs,%Small packet volume,# Users,Threshold handover,%Users throughput>=5Mbps\n";
  EXPECT_THROW(mtcb::ingest_traces(temp_file("mtcb_header_only.csv", header)), mtcb::DataError);
  EXPECT_THROW(mtcb::ingest_traces(temp_file("mtcb_all_bad.csv", header + "1,1,1,1,1,1,-200,50\n")),
               mtcb::DataError);
  mtcb::TraceSchema schema;
  schema.reward = "Throughput";
  EXPECT_THROW(mtcb::ingest_traces(fixtures / "table1.csv", schema), mtcb::DataError);
}

TEST(Ingest, RoundTripToTenSignificantDigits) {
  const auto first = mtcb::ingest_traces(fixtures / "demo_trace.csv");
  std::ostringstream out;
  mtcb::write_traces_csv(out, first.records);
  const auto path = temp_file("mtcb_roundtrip.csv", out.str());
  const auto second = mtcb::ingest_traces(path);
  ASSERT_EQ(first.records.size(), second.records.size());
  auto close = [](double a, double b) { return std::abs(a - b) <= 5e-10 * std::max(1.0, std::abs(a)); };
  for (std::size_t i = 0; i < first.records.size(); ++i) {
    const auto& a = first.records[i];
    const auto& b = second.records[i];
    EXPECT_EQ(a.bs_id, b.bs_id);
    EXPECT_EQ(a.action, b.action);
    EXPECT_TRUE(close(a.reward, b.reward));
    for (std::size_t c = 0; c < mtcb::kStateDim; ++c) EXPECT_TRUE(close(a.state[c], b.state[c]));
  }
  fs::remove(path);
}

TEST(Ingest, ColumnStats) {
  const auto result = mtcb::ingest_traces(fixtures / "knn_small.csv");
  EXPECT_NEAR(result.stats.mean[0], (0.1 + 0.4 + 1.2 + 1.5 + 0.9) / 5, 1e-12);
  EXPECT_NEAR(result.stats.mean[5], (-93 - 95 - 99 - 102 - 88) / 5.0, 1e-12);
  mtcb::TraceRecord r;
  const std::vector<mtcb::TraceRecord> same = {r, r};
  const auto stats = mtcb::compute_column_stats(same);
  for (double s : stats.stddev) EXPECT_EQ(s, 1.0);
}

// ---------------------------------------------------------------------------
// k-NN simulator
// ---------------------------------------------------------------------------

TEST(Knn, SingleRecord) {
  mtcb::TraceRecord r;
  r.state = {1, 2, 3, 4, 5};
  r.action = -100;
  r.reward = 0.37;
  mtcb::KnnSimulator sim({r}, 1);
  EXPECT_EQ(sim.reward({9, 9, 9, 9, 9}, -84), 0.37);
  EXPECT_EQ(sim.reward(r.state, r.action), 0.37);
}

TEST(Knn, OwnQueryReturnsOwnReward) {
  const auto records = mtcb::ingest_traces(fixtures / "table1.csv").records;
  mtcb::KnnSimulator sim(records, 1);
  for (const auto& r : records) EXPECT_EQ(sim.reward(r.state, r.action), r.reward);
}

TEST(Knn, MatchesBruteForceOracle) {
  const auto records = mtcb::ingest_traces(fixtures / "knn_small.csv").records;
  mtcb::KnnSimulator sim(records, 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> action(-112, -84);
  for (int q = 0; q < 50; ++q) {
    mtcb::TraceState s{unit(rng) * 2, unit(rng), 20 + 50 * unit(rng), 20 + 30 * unit(rng), 100 * unit(rng)};
    const int a = action(rng);
    EXPECT_NEAR(sim.reward(s, a), oracle::knn_reward(records, 3, s, a), 1e-12);
  }
}

TEST(Knn, ShuffleInvariantWithoutTies) {
  auto records = mtcb::ingest_traces(fixtures / "demo_trace.csv").records;
  mtcb::KnnSimulator sim(records, 5);
  std::mt19937_64 rng(2);
  std::shuffle(records.begin(), records.end(), rng);
  mtcb::KnnSimulator shuffled(records, 5);
  std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
  std::uniform_int_distribution<int> action(-112, -84);
  for (int q = 0; q < 100; ++q) {
    auto s = records[pick(rng)].state;
    s[0] += 0.01;
    const int a = action(rng);
    EXPECT_NEAR(sim.reward(s, a), shuffled.reward(s, a), 1e-12);
  }
}

TEST(Knn, TieBreakByRecordOrder) {
  mtcb::TraceRecord a;
  a.state = {0, 0, 0, 0, 0};
  a.action = -100;
  a.reward = 0.2;
  mtcb::TraceRecord b = a;
  b.reward = 0.8;
  mtcb::KnnSimulator first({a, b}, 1);
  mtcb::KnnSimulator second({b, a}, 1);
  EXPECT_EQ(first.reward(a.state, a.action), 0.2);
  EXPECT_EQ(second.reward(a.state, a.action), 0.8);
}

TEST(Knn, KMustFitRecords) {
  mtcb::TraceRecord r;
  EXPECT_THROW(mtcb::KnnSimulator({r}, 2), mtcb::ConfigError);
  EXPECT_THROW(mtcb::KnnSimulator({r}, 0), mtcb::ConfigError);
  EXPECT_THROW(mtcb::KnnSimulator({}, 1), mtcb::DataError);
}

// ---------------------------------------------------------------------------
// Trace bandit environment
// ---------------------------------------------------------------------------

class TraceEnvTest : public ::testing::Test {
 protected:
  void SetUp() override {
    records_ = mtcb::ingest_traces(fixtures / "demo_trace.csv").records;
    sim_ = std::make_shared<mtcb::KnnSimulator>(records_, 5);
    ids_ = mtcb::station_ids(records_);
  }
  std::vector<mtcb::TraceRecord> records_;
  std::shared_ptr<mtcb::KnnSimulator> sim_;
  std::vector<std::string> ids_;
};

TEST_F(TraceEnvTest, TwentyNineArmsMatchDirectQueries) {
  mtcb::TraceBanditEnv env(sim_, ids_);
  EXPECT_EQ(env.arm_count(), 29u);
  EXPECT_EQ(env.context_dim(), 6u);
  for (std::size_t slot = 0; slot < 5; ++slot) {
    const auto round = env.observe(1, slot, 2);
    const auto& state = env.state_for(1, slot, 2);
    ASSERT_EQ(round.expected.size(), 29u);
    for (std::size_t a = 0; a < 29; ++a) {
      const int action = -112 + static_cast<int>(a);
      EXPECT_EQ(round.expected[a], sim_->reward(state, action));
      EXPECT_EQ(round.contexts[a], sim_->normalize(state, action));
      EXPECT_GE(round.best_expected(), round.expected[a]);
    }
  }
}

TEST_F(TraceEnvTest, StatesComeFromTheStation) {
  for (auto source : {mtcb::StateSource::replay, mtcb::StateSource::sample}) {
    mtcb::TraceBanditEnv env(sim_, ids_, {}, source);
    for (std::size_t slot = 0; slot < 20; ++slot) {
      const auto& s = env.state_for(4, slot, 1);
      const bool found = std::any_of(records_.begin(), records_.end(), [&](const auto& r) {
        return r.bs_id == ids_[1] && r.state == s;
      });
      EXPECT_TRUE(found);
    }
  }
}

TEST_F(TraceEnvTest, SameStateSameRewards) {
  mtcb::TraceBanditEnv env(sim_, ids_);
  // Replay cycles through the station's rows, so slot and slot + rows repeat.
  std::size_t rows = 0;
  for (const auto& r : records_) rows += r.bs_id == ids_[0];
  const auto a = env.observe(9, 3, 0);
  const auto b = env.observe(9, 3 + rows, 0);
  EXPECT_EQ(env.state_for(9, 3, 0), env.state_for(9, 3 + rows, 0));
  EXPECT_EQ(a.expected, b.expected);
}

TEST_F(TraceEnvTest, LoggedDatasetsPerStation) {
  mtcb::TraceBanditEnv env(sim_, {ids_[0], ids_[3]});
  const auto logged = env.logged_datasets();
  ASSERT_EQ(logged.size(), 2u);
  std::size_t rows = 0;
  for (const auto& r : records_) rows += r.bs_id == ids_[3];
  EXPECT_EQ(logged[1].size(), rows);
  EXPECT_EQ(logged[1].x[0].size(), 6);
}

TEST_F(TraceEnvTest, UnknownStationIsAnError) {
  EXPECT_THROW(mtcb::TraceBanditEnv(sim_, {"nope"}), mtcb::Error);
  EXPECT_THROW(mtcb::parse_state_source("random"), mtcb::ConfigError);
}
