#include "o3srl/offline_data.hpp"

#include "o3srl/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace o3srl {

void OfflineDataset::validate(Index num_states, Index num_actions) const {
  if (transitions.empty()) throw ValidationError("dataset: no transitions");
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const Transition& t = transitions[i];
    if (t.state < 0 || t.state >= num_states || t.next_state < 0 || t.next_state >= num_states || t.action < 0 ||
        t.action >= num_actions) {
      throw ValidationError("dataset: transition " + std::to_string(i) + " has an index out of range");
    }
    if (!(t.cost >= 0.0) || !std::isfinite(t.reward) || !std::isfinite(t.cost)) {
      throw ValidationError("dataset: transition " + std::to_string(i) + " has an invalid reward or cost");
    }
  }
}

OfflineDataset rollout_dataset(const Cmdp& cmdp, const TabularPolicy& behavior, int num_episodes, int horizon,
                               std::uint64_t seed, std::string behavior_desc) {
  if (horizon < 1) throw ValidationError("rollout: horizon must be at least 1");
  if (num_episodes < 1) throw ValidationError("rollout: at least one episode required");
  behavior.validate_for(cmdp);

  OfflineDataset data;
  data.source_seed = seed;
  data.behavior_desc = std::move(behavior_desc);
  data.horizon_used = horizon;
  data.transitions.reserve(static_cast<std::size_t>(num_episodes) * static_cast<std::size_t>(horizon));

  Rng rng(seed);
  for (int ep = 0; ep < num_episodes; ++ep) {
    auto s = static_cast<Index>(rng.categorical(cmdp.initial_dist));
    for (int h = 0; h < horizon; ++h) {
      const auto a = static_cast<Index>(rng.categorical(behavior.action_probs.row(s)));
      const auto next = static_cast<Index>(rng.categorical(cmdp.transition[static_cast<std::size_t>(a)].row(s)));
      data.transitions.push_back({static_cast<int>(s), static_cast<int>(a), cmdp.reward(s, a), cmdp.cost(s, a),
                                  static_cast<int>(next)});
      s = next;
    }
  }
  return data;
}

Eigen::VectorXd relabel(const OfflineDataset& dataset, double lambda, double kappa, double gamma) {
  if (!(lambda >= 0.0)) throw ValidationError("relabel: lambda must be nonnegative");
  const double centre = (1.0 - gamma) * kappa;
  Eigen::VectorXd out(static_cast<Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Transition& t = dataset.transitions[i];
    out(static_cast<Index>(i)) = t.reward - lambda * (t.cost - centre);
  }
  return out;
}

double percentile(std::vector<double> values, double tau) {
  if (values.empty()) throw ValidationError("percentile: empty sample");
  if (!(tau > 0.0 && tau <= 100.0)) throw ValidationError("percentile: tau must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = tau / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

OfflineDataset clip_scale_rewards(const OfflineDataset& dataset, double tau) {
  if (dataset.transitions.empty()) throw ValidationError("clip_scale_rewards: empty dataset");
  std::vector<double> magnitudes;
  magnitudes.reserve(dataset.size());
  for (const Transition& t : dataset.transitions) magnitudes.push_back(std::abs(t.reward));
  const double bound = percentile(std::move(magnitudes), tau);
  if (!(bound > 0.0)) throw ValidationError("clip_scale_rewards: reward percentile is zero, scaling undefined");

  OfflineDataset out = dataset;
  const double scale = 0.9 / bound;
  for (Transition& t : out.transitions) t.reward = std::clamp(t.reward, -bound, bound) * scale;
  return out;
}

int default_horizon(double gamma, double tolerance) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("default_horizon: gamma must lie in (0, 1)");
  return static_cast<int>(std::floor(std::log(tolerance) / std::log(gamma))) + 1;
}

std::string dataset_to_csv(const OfflineDataset& dataset) {
  std::string out = "state,action,reward,cost,next_state\n";
  for (const Transition& t : dataset.transitions) {
    out += std::to_string(t.state);
    out += ',';
    out += std::to_string(t.action);
    out += ',';
    out += format_double(t.reward);
    out += ',';
    out += format_double(t.cost);
    out += ',';
    out += std::to_string(t.next_state);
    out += '\n';
  }
  return out;
}

namespace {

template <typename T>
T parse_field(std::string_view text, std::size_t line) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError("dataset csv line " + std::to_string(line) + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

OfflineDataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "state,action,reward,cost,next_state") {
    throw ValidationError("dataset csv: missing or unexpected header");
  }
  OfflineDataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view view(line);
    std::size_t start = 0;
    for (std::size_t i = 0; i <= view.size(); ++i) {
      if (i == view.size() || view[i] == ',') {
        fields.push_back(view.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5) throw ValidationError("dataset csv line " + std::to_string(lineno) + ": expected 5 fields");
    data.transitions.push_back({parse_field<int>(fields[0], lineno), parse_field<int>(fields[1], lineno),
                                parse_field<double>(fields[2], lineno), parse_field<double>(fields[3], lineno),
                                parse_field<int>(fields[4], lineno)});
  }
  return data;
}

Json dataset_to_json(const OfflineDataset& dataset) {
  Json doc;
  doc["source_seed"] = dataset.source_seed;
  doc["behavior"] = dataset.behavior_desc;
  doc["horizon"] = dataset.horizon_used;
  Json rows = Json::array();
  for (const Transition& t : dataset.transitions) rows.push_back(Json::array({t.state, t.action, t.reward, t.cost, t.next_state}));
  doc["transitions"] = std::move(rows);
  return doc;
}

OfflineDataset dataset_from_json(const Json& doc) {
  OfflineDataset data;
  try {
    data.source_seed = doc.at("source_seed").get<std::uint64_t>();
    data.behavior_desc = doc.at("behavior").get<std::string>();
    data.horizon_used = doc.at("horizon").get<int>();
    for (const Json& row : doc.at("transitions")) {
      if (!row.is_array() || row.size() != 5) throw ValidationError("dataset json: each transition needs 5 fields");
      data.transitions.push_back({row[0].get<int>(), row[1].get<int>(), row[2].get<double>(), row[3].get<double>(),
                                  row[4].get<int>()});
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("dataset json: ") + e.what());
  }
  return data;
}

}  // namespace o3srl
