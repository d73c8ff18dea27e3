#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/process.hpp"

namespace maskdiff {

// External reward, defined on every state including partially masked ones.
using RewardFn = std::function<double(const SequenceState&)>;

// Coordinate-separable reward r(x) = sum_k phi_k(x[k]) with phi_k(mask) = 0,
// which keeps r well defined on masked states. One row of token values per
// coordinate.
RewardFn separable_reward(std::vector<std::vector<double>> site_token_values,
                          const Vocabulary& vocab);

struct RewardTilt {
  RewardFn reward;
  std::function<double(double)> beta;    // reverse time tau -> beta_tau
  std::function<double(double)> dbeta;   // d beta / d tau
  // Evaluate the reward on single-site demaskings with the remaining masks
  // filled from one denoiser draw instead of leaving them masked. Needed for
  // rewards that are undefined on partially masked states.
  bool fill_masked = false;
};

// Linear tilt schedule beta_tau = scale * tau: zero at the start of
// generation, full strength at the end.
RewardTilt linear_reward_tilt(RewardFn reward, double scale = 1.0);

// Which corrected distribution to sample.
struct TargetSpec {
  enum class Kind { kBase, kAnneal, kProduct, kGeoAvg, kReward };

  Kind kind = Kind::kBase;
  double beta = 1.0;                 // anneal inverse temperature
  std::vector<double> geo_betas;     // geometric-average exponents, sum to 1
  std::optional<RewardTilt> reward;

  static TargetSpec base();
  static TargetSpec anneal(double beta);
  static TargetSpec product();
  static TargetSpec geo_avg(std::vector<double> betas);
  static TargetSpec reward_tilt(RewardTilt tilt);

  // Number of probability-ratio tables (denoisers) the target consumes.
  int num_factors() const;
  void validate() const;
  std::string kind_name() const;
};

// Corrected reverse rates plus the weight-function value g at the current
// state. log-weights accumulate g * dtau along trajectories.
struct CorrectedStep {
  ReverseRates rates;
  double g = 0.0;
};

CorrectedStep base_step(const MaskingSchedule& schedule, double t,
                        const SequenceState& state, const RatioTable& ratios,
                        const Vocabulary& vocab);

// rate_k[j] = -beta (1/a) da * ratio^beta;  g = sum_k beta (1/a) da *
// sum_j (ratio - ratio^beta).
CorrectedStep anneal_step(const MaskingSchedule& schedule, double t,
                          const SequenceState& state, const RatioTable& ratios,
                          double beta, const Vocabulary& vocab);

// rate_k[j] = -2 (1/a) da * r1 r2;  g = sum_k (1/a) da * sum_j (r1 + r2 - 2 r1 r2).
CorrectedStep product_step(const MaskingSchedule& schedule, double t,
                           const SequenceState& state, const RatioTable& ratios1,
                           const RatioTable& ratios2, const Vocabulary& vocab);

// rate_k[j] = -(1/a) da * prod_n r_n^{beta_n};
// g = sum_k (1/a) da * sum_j (sum_n beta_n r_n - prod_n r_n^{beta_n}).
CorrectedStep geo_avg_step(const MaskingSchedule& schedule, double t,
                           const SequenceState& state,
                           const std::vector<RatioTable>& ratios,
                           const std::vector<double>& betas, const Vocabulary& vocab);

// rate_k[j] = base rate * exp(beta_t (r(x with k set to j) - r(x)));
// g = sum_k (1/a) da * sum_j ratio (1 - exp(beta_t dr)) + dbeta_t * r(x).
// The final term is present for fully unmasked states as well.
CorrectedStep reward_step(const MaskingSchedule& schedule, double t,
                          const SequenceState& state, const RatioTable& ratios,
                          const RewardFn& reward, double beta_t, double dbeta_t,
                          const Vocabulary& vocab);

// Rate row of a masked site normalized to a probability vector.
std::vector<double> corrected_posterior(const CorrectedStep& step, int site);

// Dispatch on the target kind. `t` is the (clamped) forward time used for the
// schedule and `tau` the reverse time used by reward tilt schedules.
CorrectedStep corrected_step(const TargetSpec& target, const MaskingSchedule& schedule,
                             double t, double tau, const SequenceState& state,
                             const std::vector<RatioTable>& ratios,
                             const Vocabulary& vocab);

}  // namespace maskdiff
