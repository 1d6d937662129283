#include "o3srl/driver.hpp"

#include "o3srl/io.hpp"
#include "o3srl/lagrangian.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace o3srl {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::general: return "general";
    case RunMode::practical: return "practical";
    case RunMode::final: return "final";
  }
  return "unknown";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "general") return RunMode::general;
  if (s == "practical") return RunMode::practical;
  if (s == "final") return RunMode::final;
  throw ValidationError("unknown run mode '" + s + "' (expected general, practical or final)");
}

std::string to_string(GridMode mode) { return mode == GridMode::uniform ? "uniform" : "adaptive"; }

GridMode grid_mode_from_string(const std::string& s) {
  if (s == "uniform") return GridMode::uniform;
  if (s == "adaptive") return GridMode::adaptive;
  throw ValidationError("unknown grid mode '" + s + "' (expected uniform or adaptive)");
}

std::string to_string(LossScaling scaling) {
  return scaling == LossScaling::value_range ? "value_range" : "instance_bound";
}

LossScaling loss_scaling_from_string(const std::string& s) {
  if (s == "value_range") return LossScaling::value_range;
  if (s == "instance_bound") return LossScaling::instance_bound;
  throw ValidationError("unknown loss scaling '" + s + "' (expected value_range or instance_bound)");
}

void RunConfig::validate() const {
  if (T < 1) throw ValidationError("run: T must be at least 1");
  if (!(lambda.C > 0.0)) throw ValidationError("run: C must be positive");
  if (mode != RunMode::general && lambda.K < 2) throw ValidationError("run: K must be at least 2");
  if (mode == RunMode::final && oracle.M < 1) throw ValidationError("run: M must be at least 1");
  if (!(lambda.eta > 0.0)) throw ValidationError("run: eta must be positive");
  if (!(oracle.noise_std >= 0.0)) throw ValidationError("run: noise_std must be nonnegative");
  if (lambda.step0 && !(*lambda.step0 > 0.0)) throw ValidationError("run: step0 must be positive");
  if (eval_every < 1) throw ValidationError("run: eval_every must be at least 1");
}

LambdaGrid make_grid(const LambdaSettings& settings, double kappa) {
  if (settings.grid == GridMode::adaptive) {
    return adaptive_grid(settings.C, settings.K, kappa, settings.reference_limit, settings.alpha_shrink);
  }
  return uniform_grid(settings.C, settings.K);
}

namespace {

struct PolicyInfo {
  TabularPolicy policy;
  Eigen::MatrixXd occupancy;
  double v_r = 0.0;
  double v_c = 0.0;
  double v_r_hat = 0.0;
  double v_c_hat = 0.0;
};

/// Caches per-policy evaluations and accumulates the running-mean occupancy
/// on the true model.
class IterateBook {
 public:
  IterateBook(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config)
      : truth_(truth), model_(model), config_(config) {
    mean_ = Eigen::MatrixXd::Zero(truth.num_states(), truth.num_actions());
  }

  const PolicyInfo& info(const std::vector<int>& actions) {
    auto it = cache_.find(actions);
    if (it != cache_.end()) return it->second;
    PolicyInfo p;
    p.policy = TabularPolicy::deterministic(actions, truth_.num_actions());
    p.occupancy = occupancy_measure(truth_, p.policy);
    p.v_r = occupancy_value(truth_, p.occupancy, truth_.reward);
    p.v_c = occupancy_value(truth_, p.occupancy, truth_.cost);
    const Eigen::MatrixXd d_hat = occupancy_measure(model_.model, p.policy);
    p.v_r_hat = occupancy_value(model_.model, d_hat, model_.model.reward);
    p.v_c_hat = occupancy_value(model_.model, d_hat, model_.model.cost);
    return cache_.emplace(actions, std::move(p)).first->second;
  }

  /// Adds round `t` (1-based) and fills the shared trace fields.
  const PolicyInfo& add(const std::vector<int>& actions, std::size_t t, double lambda_played, RunResult& result,
                        TraceRow& row) {
    const PolicyInfo& p = info(actions);
    ++count_;
    mean_ += (p.occupancy - mean_) / static_cast<double>(count_);
    ++multiplicity_[actions];
    if (config_.store_iterates) result.iterates.push_back(actions);
    result.played_lambda.push_back(lambda_played);
    result.v_r_hat.push_back(p.v_r_hat);
    result.v_c_hat.push_back(p.v_c_hat);
    row.t = t;
    row.lambda = lambda_played;
    const bool log = t % config_.eval_every == 0 || t == 1 || t == config_.T;
    row.v_r = log ? p.v_r : std::numeric_limits<double>::quiet_NaN();
    row.v_c = log ? p.v_c : std::numeric_limits<double>::quiet_NaN();
    return p;
  }

  PolicyMixture mixture() const {
    PolicyMixture m;
    m.mean_occupancy = mean_;
    m.count = count_;
    std::vector<std::pair<const std::vector<int>*, std::size_t>> entries;
    for (const auto& [actions, n] : multiplicity_) entries.emplace_back(&actions, n);
    if (entries.size() > config_.support_cap) {
      m.trimmed = true;
      std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      entries.resize(config_.support_cap);
    }
    for (const auto& [actions, n] : entries) {
      m.support.emplace_back(TabularPolicy::deterministic(*actions, truth_.num_actions()),
                             static_cast<double>(n) / static_cast<double>(count_));
    }
    return m;
  }

 private:
  const Cmdp& truth_;
  const EmpiricalModel& model_;
  const RunConfig& config_;
  std::map<std::vector<int>, PolicyInfo> cache_;
  std::map<std::vector<int>, std::size_t> multiplicity_;
  Eigen::MatrixXd mean_;
  std::size_t count_ = 0;
};

void check_shapes(const Cmdp& truth, const EmpiricalModel& model) {
  if (truth.num_states() != model.num_states() || truth.num_actions() != model.num_actions()) {
    throw ValidationError("run: empirical model and true cmdp differ in shape");
  }
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

[[noreturn]] void rethrow_with_round(std::size_t t, const std::exception& e) {
  throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
}

/// Shared EXP3 loop for practical and final modes. `round_oracle(arm, per_arm)`
/// returns the round policy's actions and its exact empirical value.
template <typename RoundOracle>
RunResult run_bandit_loop(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config, LambdaGrid grid,
                          RoundOracle&& round_oracle) {
  const auto start = std::chrono::steady_clock::now();
  const double kappa = model.model.cost_limit;

  // Optimal relabeled value per arm; also sets the value-range loss scale.
  std::vector<OracleOutput> per_arm;
  per_arm.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) per_arm.push_back(oracle_solve(model, model.relabeled_signal(grid[i])));
  LossScale scale;
  if (config.lambda.scaling == LossScaling::value_range) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& o : per_arm) {
      lo = std::min(lo, o.exact_value_on_empirical);
      hi = std::max(hi, o.exact_value_on_empirical);
    }
    scale = LossScale::from_range(lo, hi);
  } else {
    scale = LossScale::from_instance(model.model.reward.minCoeff(), model.model.reward.maxCoeff(), model.model.cost.maxCoeff(),
                                     config.lambda.C, kappa, model.model.gamma);
  }

  BanditState bandit(grid, config.lambda.eta, scale, config.lambda.mixing);
  Rng bandit_rng(derive_seed(config.seed, Stream::bandit));
  Rng noise_rng(derive_seed(config.seed, Stream::oracle_noise));

  RunResult result;
  result.mode = config.mode;
  result.trace.reserve(config.T);
  IterateBook book(truth, model, config);

  auto [arm, lambda] = exp3_sample(bandit, bandit_rng);
  double lambda_sum = 0.0;
  std::vector<int> actions;
  for (std::size_t t = 1; t <= config.T; ++t) {
    try {
      auto [round_actions, exact_value] = round_oracle(arm, per_arm);
      actions = std::move(round_actions);
      double v_tilde = exact_value;
      if (config.oracle.noise_std > 0.0) v_tilde += config.oracle.noise_std * noise_rng.normal();
      exp3_update(bandit, v_tilde);

      TraceRow row;
      row.arm = static_cast<int>(arm);
      row.v_tilde = v_tilde;
      book.add(actions, t, lambda, result, row);
      result.trace.push_back(row);

      std::tie(arm, lambda) = exp3_sample(bandit, bandit_rng);
      lambda_sum += lambda;
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      rethrow_with_round(t, e);
    }
  }

  result.lambda_hat = lambda_sum / static_cast<double>(config.T);
  result.lambda_bar = project_lambda(result.lambda_hat, grid).value;
  result.mixture = book.mixture();
  result.last_policy = TabularPolicy::deterministic(actions, truth.num_actions());
  result.grid = std::move(grid);
  result.loss_scale = scale;
  result.bandit_history = std::move(bandit.history);
  for (const auto& o : per_arm) result.arm_values.push_back(o.exact_value_on_empirical);
  result.wall_seconds = elapsed_since(start);
  return result;
}

}  // namespace

RunResult run_general(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config) {
  config.validate();
  check_shapes(truth, model);
  const auto start = std::chrono::steady_clock::now();
  const double kappa = model.model.cost_limit;

  ContinuousLambdaState updater;
  updater.C = config.lambda.C;
  const double c_max = std::max(model.model.cost.maxCoeff(), 1e-12);
  updater.step0 = config.lambda.step0.value_or(config.lambda.C / (model.model.horizon() * c_max));

  Rng noise_rng(derive_seed(config.seed, Stream::oracle_noise));
  OracleNoise noise{config.oracle.noise_std, &noise_rng};

  RunResult result;
  result.mode = RunMode::general;
  result.trace.reserve(config.T);
  IterateBook book(truth, model, config);
  double lambda_sum = 0.0;
  std::vector<int> actions;
  for (std::size_t t = 1; t <= config.T; ++t) {
    try {
      const double lambda_prev = updater.lambda;
      OracleOutput out = oracle_solve(model, model.relabeled_signal(lambda_prev), noise);
      actions = std::move(out.actions);
      TraceRow row;
      row.v_tilde = out.v_tilde;
      const PolicyInfo& info = book.add(actions, t, lambda_prev, result, row);
      result.trace.push_back(row);
      ogd_lambda_update(updater, info.v_c_hat, kappa);
      lambda_sum += updater.lambda;
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      rethrow_with_round(t, e);
    }
  }
  result.lambda_hat = lambda_sum / static_cast<double>(config.T);
  result.lambda_bar = result.lambda_hat;
  result.mixture = book.mixture();
  result.last_policy = TabularPolicy::deterministic(actions, truth.num_actions());
  result.wall_seconds = elapsed_since(start);
  return result;
}

RunResult run_practical(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config) {
  config.validate();
  check_shapes(truth, model);
  return run_bandit_loop(truth, model, config, make_grid(config.lambda, model.model.cost_limit),
                         [](std::size_t arm, const std::vector<OracleOutput>& per_arm) {
                           const OracleOutput& o = per_arm[arm];
                           return std::make_pair(o.actions, o.exact_value_on_empirical);
                         });
}

RunResult run_final(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config) {
  config.validate();
  check_shapes(truth, model);
  LambdaGrid grid = make_grid(config.lambda, model.model.cost_limit);
  std::vector<Eigen::MatrixXd> raw_signal;
  std::vector<Eigen::MatrixXd> plain_signal;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    raw_signal.push_back(model.relabeled_signal(grid[i]));
    plain_signal.push_back(model.with_sink(raw_signal.back()));
  }
  TruncatedSolver solver(model);
  std::map<std::pair<std::vector<int>, std::size_t>, double> value_cache;
  return run_bandit_loop(truth, model, config, std::move(grid), [&](std::size_t arm, const std::vector<OracleOutput>&) {
    std::vector<int> actions = solver.update(raw_signal[arm], config.oracle.M);
    auto key = std::make_pair(actions, arm);
    auto it = value_cache.find(key);
    if (it == value_cache.end()) {
      const auto policy = TabularPolicy::deterministic(actions, model.num_actions());
      const double v = model.model.initial_dist.dot(state_values(model.model, policy, plain_signal[arm]));
      it = value_cache.emplace(std::move(key), v).first;
    }
    return std::make_pair(std::move(actions), it->second);
  });
}

RunResult run(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config) {
  switch (config.mode) {
    case RunMode::general: return run_general(truth, model, config);
    case RunMode::practical: return run_practical(truth, model, config);
    case RunMode::final: return run_final(truth, model, config);
  }
  throw ValidationError("run: unknown mode");
}

std::string trace_to_csv(const RunResult& result) {
  std::string out = "t,lambda,arm,v_tilde,v_r,v_c\n";
  for (const TraceRow& r : result.trace) {
    out += std::to_string(r.t) + ',' + format_double(r.lambda) + ',' + std::to_string(r.arm) + ',' +
           format_double(r.v_tilde) + ',' + format_double(r.v_r) + ',' + format_double(r.v_c) + '\n';
  }
  return out;
}

Json run_result_to_json(const RunResult& result) {
  Json doc;
  doc["mode"] = to_string(result.mode);
  doc["lambda_bar"] = result.lambda_bar;
  doc["lambda_hat"] = result.lambda_hat;
  doc["iterations"] = result.trace.size();
  if (result.grid) doc["grid"] = result.grid->values();
  if (!result.arm_values.empty()) doc["arm_values"] = result.arm_values;
  if (result.loss_scale) doc["loss_scale"] = Json{{"offset", result.loss_scale->offset}, {"range", result.loss_scale->range}};
  doc["last_policy"] = policy_to_json(result.last_policy);
  doc["mixture"] = mixture_to_json(result.mixture);
  return doc;
}

}  // namespace o3srl
