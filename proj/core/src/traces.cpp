#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mtcb/csv.hpp"
#include "mtcb/envs.hpp"
#include "mtcb/error.hpp"
#include "mtcb/rng.hpp"

namespace mtcb {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

bool parse_double(const std::string& field, double& out) {
  if (field.empty()) return false;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int(const std::string& field, int& out) {
  double v = 0.0;
  if (!parse_double(field, v)) return false;
  if (v != std::floor(v)) return false;
  out = static_cast<int>(v);
  return true;
}

std::size_t column_of(const std::vector<std::string>& header, const std::string& name,
                      const std::filesystem::path& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw DataError(fmt::format("{}: schema column '{}' not found in header", path.string(), name));
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

ColumnStats compute_column_stats(std::span<const TraceRecord> records) {
  ColumnStats stats;
  if (records.empty()) return stats;
  const double n = static_cast<double>(records.size());
  for (std::size_t c = 0; c <= kStateDim; ++c) {
    auto value = [c](const TraceRecord& r) {
      return c < kStateDim ? r.state[c] : static_cast<double>(r.action);
    };
    double mean = 0.0;
    for (const auto& r : records) mean += value(r);
    mean /= n;
    double var = 0.0;
    for (const auto& r : records) var += (value(r) - mean) * (value(r) - mean);
    var /= n;
    stats.mean[c] = mean;
    stats.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

IngestResult ingest_traces(const std::filesystem::path& path, const TraceSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read trace file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty trace file");
  std::vector<std::string> header;
  for (const auto& f : split_csv_line(line)) header.push_back(trim(f));

  const std::size_t col_id = column_of(header, schema.bs_id, path);
  std::array<std::size_t, kStateDim> col_state{};
  for (std::size_t i = 0; i < kStateDim; ++i) col_state[i] = column_of(header, schema.state[i], path);
  const std::size_t col_action = column_of(header, schema.action, path);
  const std::size_t col_reward = column_of(header, schema.reward, path);
  const std::size_t needed =
      1 + std::max({col_id, col_action, col_reward,
                    *std::max_element(col_state.begin(), col_state.end())});

  IngestResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line) == "\r") continue;
    std::vector<std::string> fields;
    for (const auto& f : split_csv_line(line)) fields.push_back(trim(f));
    auto reject = [&](const std::string& why) {
      result.rejects.push_back(fmt::format("line {}: {}", line_no, why));
    };
    if (fields.size() < needed) {
      reject("missing fields");
      continue;
    }
    TraceRecord rec;
    rec.bs_id = fields[col_id];
    if (rec.bs_id.empty()) {
      reject("missing station id");
      continue;
    }
    bool ok = true;
    for (std::size_t i = 0; i < kStateDim && ok; ++i) {
      if (!parse_double(fields[col_state[i]], rec.state[i])) {
        reject(fmt::format("bad value '{}' in column '{}'", fields[col_state[i]], schema.state[i]));
        ok = false;
      }
    }
    if (!ok) continue;
    if (!parse_int(fields[col_action], rec.action)) {
      reject(fmt::format("bad action '{}'", fields[col_action]));
      continue;
    }
    if (rec.action < schema.action_min || rec.action > schema.action_max) {
      reject(fmt::format("action {} outside [{}, {}]", rec.action, schema.action_min,
                         schema.action_max));
      continue;
    }
    double raw = 0.0;
    if (!parse_double(fields[col_reward], raw)) {
      reject(fmt::format("bad reward '{}'", fields[col_reward]));
      continue;
    }
    rec.reward = raw / schema.reward_scale;
    if (rec.reward < 0.0 || rec.reward > 1.0) {
      reject(fmt::format("reward {} outside [0, 1] after scaling", rec.reward));
      continue;
    }
    result.records.push_back(std::move(rec));
  }

  for (const auto& r : result.rejects) spdlog::debug("{}: rejected {}", path.string(), r);
  if (!result.rejects.empty()) {
    spdlog::info("{}: {} rows rejected, {} accepted", path.string(), result.rejects.size(),
                 result.records.size());
  }
  if (result.records.empty()) throw DataError(path.string() + ": no valid trace rows");
  result.stats = compute_column_stats(result.records);
  return result;
}

void write_traces_csv(std::ostream& out, std::span<const TraceRecord> records,
                      const TraceSchema& schema) {
  out << csv_escape(schema.bs_id);
  for (const auto& s : schema.state) out << ',' << csv_escape(s);
  out << ',' << csv_escape(schema.action) << ',' << csv_escape(schema.reward) << '\n';
  for (const auto& r : records) {
    out << csv_escape(r.bs_id);
    for (const double v : r.state) out << ',' << format_real(v);
    out << ',' << r.action << ',' << format_real(r.reward * schema.reward_scale) << '\n';
  }
}

// ---------------------------------------------------------------------------

KnnSimulator::KnnSimulator(std::vector<TraceRecord> records, std::size_t k)
    : records_(std::move(records)), k_(k), stats_(compute_column_stats(records_)) {
  if (records_.empty()) throw DataError("KnnSimulator: no records");
  if (k_ == 0 || k_ > records_.size()) {
    throw ConfigError(fmt::format("KnnSimulator: k = {} must lie in [1, {}]", k_, records_.size()));
  }
  features_.resize(kStateDim + 1, static_cast<Eigen::Index>(records_.size()));
  for (std::size_t i = 0; i < records_.size(); ++i) {
    features_.col(static_cast<Eigen::Index>(i)) = normalize(records_[i].state, records_[i].action);
  }
}

ContextVector KnnSimulator::normalize(const TraceState& state, int action) const {
  ContextVector z(kStateDim + 1);
  for (std::size_t c = 0; c < kStateDim; ++c) {
    z(static_cast<Eigen::Index>(c)) = (state[c] - stats_.mean[c]) / stats_.stddev[c];
  }
  z(kStateDim) = (static_cast<double>(action) - stats_.mean[kStateDim]) / stats_.stddev[kStateDim];
  return z;
}

double KnnSimulator::reward(const TraceState& state, int action) const {
  const ContextVector q = normalize(state, action);
  const Eigen::VectorXd d2 = (features_.colwise() - q).colwise().squaredNorm().transpose();
  std::vector<std::size_t> order(records_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto less = [&d2](std::size_t a, std::size_t b) {
    const double da = d2(static_cast<Eigen::Index>(a));
    const double db = d2(static_cast<Eigen::Index>(b));
    return da < db || (da == db && a < b);
  };
  const auto kth = order.begin() + static_cast<std::ptrdiff_t>(k_);
  std::nth_element(order.begin(), kth - 1, order.end(), less);
  double sum = 0.0;
  for (auto it = order.begin(); it != kth; ++it) sum += records_[*it].reward;
  return sum / static_cast<double>(k_);
}

// ---------------------------------------------------------------------------

StateSource parse_state_source(std::string_view name) {
  if (name == "replay") return StateSource::replay;
  if (name == "sample") return StateSource::sample;
  throw ConfigError("unknown state source '" + std::string(name) + "'");
}

std::vector<std::string> station_ids(std::span<const TraceRecord> records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (std::find(ids.begin(), ids.end(), r.bs_id) == ids.end()) ids.push_back(r.bs_id);
  }
  return ids;
}

TraceBanditEnv::TraceBanditEnv(std::shared_ptr<const KnnSimulator> simulator,
                               std::vector<std::string> bs_ids, TraceSchema schema,
                               StateSource source)
    : simulator_(std::move(simulator)),
      bs_ids_(std::move(bs_ids)),
      schema_(std::move(schema)),
      source_(source) {
  if (!simulator_) throw ConfigError("TraceBanditEnv: no simulator");
  if (bs_ids_.empty()) throw ConfigError("TraceBanditEnv: no stations selected");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t t = 0; t < bs_ids_.size(); ++t) index.emplace(bs_ids_[t], t);
  rows_.resize(bs_ids_.size());
  const auto& recs = simulator_->records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (const auto it = index.find(recs[i].bs_id); it != index.end()) rows_[it->second].push_back(i);
  }
  for (std::size_t t = 0; t < bs_ids_.size(); ++t) {
    if (rows_[t].empty()) throw ConfigError("TraceBanditEnv: station '" + bs_ids_[t] + "' has no rows");
  }
}

const TraceState& TraceBanditEnv::state_for(std::uint64_t seed, std::size_t slot,
                                            std::size_t task) const {
  const auto& rows = rows_.at(task);
  std::size_t pick = 0;
  if (source_ == StateSource::replay) {
    const std::size_t offset = mix_seed(seed, streams::trace_state, task) % rows.size();
    pick = (offset + slot) % rows.size();
  } else {
    auto rng = make_rng(mix_seed(seed, streams::trace_state, task), streams::trace_state, slot);
    pick = std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng);
  }
  return simulator_->records()[rows[pick]].state;
}

RoundData TraceBanditEnv::observe(std::uint64_t seed, std::size_t slot, std::size_t task) const {
  const TraceState& state = state_for(seed, slot, task);
  RoundData round;
  const std::size_t arms = arm_count();
  round.contexts.reserve(arms);
  round.expected.reserve(arms);
  for (std::size_t a = 0; a < arms; ++a) {
    const int action = action_for_arm(a);
    round.contexts.push_back(simulator_->normalize(state, action));
    round.expected.push_back(simulator_->reward(state, action));
  }
  round.rewards = round.expected;
  return round;
}

std::vector<TaskDataset> TraceBanditEnv::logged_datasets() const {
  std::vector<TaskDataset> out(bs_ids_.size());
  const auto& recs = simulator_->records();
  for (std::size_t t = 0; t < bs_ids_.size(); ++t) {
    for (const auto i : rows_[t]) {
      out[t].add(simulator_->normalize(recs[i].state, recs[i].action), recs[i].reward);
    }
  }
  return out;
}

}  // namespace mtcb
