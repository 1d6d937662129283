#include "o3srl/online_opt.hpp"

#include "o3srl/cmdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace o3srl {

LambdaGrid::LambdaGrid(std::vector<double> values, bool regenerated)
    : values_(std::move(values)), regenerated_(regenerated) {
  if (values_.size() < 2) throw ValidationError("lambda grid: at least two values required");
  if (values_.front() != 0.0) throw ValidationError("lambda grid: first value must be 0");
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (!(values_[i] > values_[i - 1]) || !std::isfinite(values_[i])) {
      throw ValidationError("lambda grid: values must be finite and strictly increasing");
    }
  }
}

LambdaGrid uniform_grid(double C, std::size_t K) {
  if (!(C > 0.0)) throw ValidationError("uniform grid: C must be positive");
  if (K < 2) throw ValidationError("uniform grid: K must be at least 2");
  std::vector<double> values(K);
  for (std::size_t i = 0; i < K; ++i) values[i] = C * static_cast<double>(i) / static_cast<double>(K - 1);
  values.back() = C;
  return LambdaGrid(std::move(values));
}

LambdaGrid adaptive_grid(double C, std::size_t K, double kappa, double reference_limit, double alpha_shrink) {
  if (!(C > 0.0)) throw ValidationError("adaptive grid: C must be positive");
  if (K < 3) throw ValidationError("adaptive grid: K must be at least 3");
  if (!(kappa > 0.0)) throw ValidationError("adaptive grid: cost limit must be positive");
  const double shrink = std::pow(reference_limit / kappa, alpha_shrink);
  const std::size_t interior = K - 2;
  const double first = 0.1 * C;
  const double last = 0.5 * C;

  std::vector<double> values(K);
  values.front() = 0.0;
  values.back() = C;
  for (std::size_t i = 0; i < interior; ++i) {
    const double frac = interior == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(interior - 1);
    values[i + 1] = first * std::pow(last / first, frac) * shrink;
  }

  bool collided = false;
  for (std::size_t i = 1; i + 1 < K; ++i) {
    if (!(values[i] < C) || !(values[i] > values[i - 1])) collided = true;
  }
  if (!collided) return LambdaGrid(std::move(values));

  // Interior pushed onto C: respace geometrically between the first interior
  // point (capped at C/2) and C, keeping every point strictly below C.
  const double low = std::min(first * shrink, 0.5 * C);
  for (std::size_t i = 0; i < interior; ++i) {
    values[i + 1] = low * std::pow(C / low, static_cast<double>(i) / static_cast<double>(interior));
  }
  return LambdaGrid(std::move(values), true);
}

double LossScale::normalize(double raw) const { return std::clamp((raw - offset) / range, 0.0, 1.0); }

LossScale LossScale::from_instance(double r_lo, double r_hi, double c_bound, double lambda_max, double kappa, double gamma) {
  const double horizon = 1.0 / (1.0 - gamma);
  const double lo = horizon * (std::min(r_lo, 0.0) - lambda_max * c_bound);
  const double hi = horizon * (std::max(r_hi, 0.0) + lambda_max * (1.0 - gamma) * kappa);
  return from_range(lo, hi);
}

LossScale LossScale::from_range(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("loss scale: bounds must be finite");
  LossScale s;
  s.offset = lo;
  s.range = hi > lo ? hi - lo : 1.0;
  return s;
}

BanditState::BanditState(LambdaGrid g, double eta_, LossScale scale_, double mixing_)
    : grid(std::move(g)), eta(eta_), mixing(mixing_), scale(scale_) {
  if (!(eta > 0.0)) throw ValidationError("exp3: learning rate must be positive");
  if (!(mixing >= 0.0 && mixing < 1.0)) throw ValidationError("exp3: mixing must lie in [0, 1)");
  const auto K = static_cast<Index>(grid.size());
  probs = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
  log_weights = Eigen::VectorXd::Zero(K);
}

Eigen::VectorXd BanditState::sampling_probs() const {
  if (mixing == 0.0) return probs;
  return (1.0 - mixing) * probs.array() + mixing / static_cast<double>(probs.size());
}

std::pair<std::size_t, double> exp3_sample(BanditState& state, Rng& rng) {
  const std::size_t arm = rng.categorical(state.sampling_probs());
  state.last_arm = arm;
  return {arm, state.grid[arm]};
}

void exp3_update(BanditState& state, double raw_value) {
  if (!std::isfinite(raw_value)) throw ValidationError("exp3: non-finite value");
  if (!state.last_arm) throw ValidationError("exp3: update before any arm was sampled");
  const std::size_t arm = *state.last_arm;
  const double loss = state.scale.normalize(raw_value);
  if (state.record_history) state.history.push_back({arm, raw_value, loss});
  if (loss == 0.0) return;

  const double p = state.sampling_probs()(static_cast<Index>(arm));
  state.log_weights(static_cast<Index>(arm)) -= state.eta * loss / p;
  const double top = state.log_weights.maxCoeff();
  state.log_weights = state.log_weights.array().max(top - 700.0);
  state.probs = (state.log_weights.array() - top).exp();
  state.probs /= state.probs.sum();
}

double cost_rate_target(double kappa, double gamma) { return kappa * (1.0 - gamma); }

void ogd_lambda_update(ContinuousLambdaState& state, double v_c, double kappa) {
  if (!std::isfinite(v_c)) throw ValidationError("ogd: non-finite cost value");
  state.t += 1;
  const double step = state.step0 / std::sqrt(static_cast<double>(state.t));
  state.lambda = std::clamp(state.lambda + step * (v_c - kappa), 0.0, state.C);
}

Projection project_lambda(double lambda_hat, const LambdaGrid& grid) {
  Projection out;
  double x = lambda_hat;
  if (!(x >= 0.0) || x > grid.upper()) {
    out.clamped = true;
    x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, grid.upper());
  }
  const auto& v = grid.values();
  const auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.begin()) {
    out.index = 0;
  } else if (it == v.end()) {
    out.index = v.size() - 1;
  } else {
    const auto hi = static_cast<std::size_t>(it - v.begin());
    out.index = (x - v[hi - 1] <= v[hi] - x) ? hi - 1 : hi;
  }
  out.value = v[out.index];
  return out;
}

}  // namespace o3srl
