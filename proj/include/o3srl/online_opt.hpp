#pragma once

#include "o3srl/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace o3srl {

/// Finite multiplier set: strictly increasing, first value 0, last value C.
class LambdaGrid {
 public:
  explicit LambdaGrid(std::vector<double> values, bool regenerated = false);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double upper() const { return values_.back(); }
  /// Set when adaptive construction had to respace colliding points.
  bool regenerated() const { return regenerated_; }

 private:
  std::vector<double> values_;
  bool regenerated_ = false;
};

/// values[i] = C i / (K - 1).
LambdaGrid uniform_grid(double C, std::size_t K);

/// 0, K - 2 geometric interior points, C. The interior runs from C/10 to C/2
/// and is scaled by (reference_limit / kappa)^alpha_shrink, so looser cost
/// limits pull the interior toward zero.
LambdaGrid adaptive_grid(double C, std::size_t K, double kappa, double reference_limit = 5.0, double alpha_shrink = 0.3);

/// Affine map of raw oracle values onto [0, 1] losses.
struct LossScale {
  double offset = 0.0;
  double range = 1.0;

  double normalize(double raw) const;

  /// A-priori bound from per-step reward range [r_lo, r_hi], cost bound and
  /// the largest multiplier; every policy value under every multiplier in
  /// [0, lambda_max] maps into [0, 1].
  static LossScale from_instance(double r_lo, double r_hi, double c_bound, double lambda_max, double kappa, double gamma);
  /// Maps [lo, hi] onto [0, 1].
  static LossScale from_range(double lo, double hi);
};

struct BanditRecord {
  std::size_t arm = 0;
  double raw = 0.0;
  double loss = 0.0;
};

/// EXP3 state over a LambdaGrid. The lambda player minimizes the Lagrangian,
/// so the observed value acts as a loss for the arm that produced it.
struct BanditState {
  LambdaGrid grid;
  Eigen::VectorXd probs;
  Eigen::VectorXd log_weights;
  double eta = 2e-3;
  /// Optional uniform mixing for sampling; 0 reproduces plain EXP3.
  double mixing = 0.0;
  LossScale scale;
  std::optional<std::size_t> last_arm;
  bool record_history = true;
  std::vector<BanditRecord> history;

  BanditState(LambdaGrid grid, double eta, LossScale scale, double mixing = 0.0);

  /// Distribution actually sampled from: (1 - mixing) probs + mixing / K.
  Eigen::VectorXd sampling_probs() const;
};

/// Draws an arm; records it as last_arm. Returns (arm, lambda).
std::pair<std::size_t, double> exp3_sample(BanditState& state, Rng& rng);

/// Multiplicative-weights step with importance-weighted loss on last_arm:
/// P(i) proportional to P(i) exp(-eta loss / P(i)) for i = last_arm.
/// Probabilities stay strictly positive: log-weights are floored 700 nats
/// below the maximum.
void exp3_update(BanditState& state, double raw_value);

/// kappa / H; exposed for completeness, not used by the updates.
double cost_rate_target(double kappa, double gamma);

/// Projected online gradient step on lambda in [0, C].
struct ContinuousLambdaState {
  double lambda = 0.0;
  double step0 = 1.0;
  double C = 5.0;
  std::size_t t = 0;
};

/// lambda <- clamp(lambda + step0 / sqrt(t) (v_c - kappa), 0, C).
void ogd_lambda_update(ContinuousLambdaState& state, double v_c, double kappa);

struct Projection {
  double value = 0.0;
  std::size_t index = 0;
  /// Input was outside [0, C] and was clamped first.
  bool clamped = false;
};

/// Nearest grid value; ties go to the smaller value.
Projection project_lambda(double lambda_hat, const LambdaGrid& grid);

}  // namespace o3srl
