#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/correctors.hpp"
#include "maskdiff/denoiser.hpp"

namespace maskdiff {

// Exact joint marginal at time t over the full enumerated space:
// p_t(x) = (1-a)^{#masked} a^{#unmasked} * mass of consistent data sequences.
std::vector<double> exact_marginals(const TabularDataDistribution& data,
                                    const MaskingSchedule& schedule, double t,
                                    const StateSpace& space);

// Normalized corrected target at time t over the joint space: p^beta, p1 p2,
// prod p_n^{beta_n}, or p exp(beta_{1-t} r). Brute force, independent of any
// sampler.
std::vector<double> target_distribution(const std::vector<TabularDataDistribution>& data,
                                        const TargetSpec& target,
                                        const MaskingSchedule& schedule, double t,
                                        const StateSpace& space);

double tv_distance(std::span<const double> p, std::span<const double> q);

// Quantile-coupled 2-Wasserstein distance between 1-d samples. Unequal sample
// counts are matched by evaluating both empirical quantile functions on a
// common midpoint grid.
double wasserstein2_1d(std::vector<double> a, std::vector<double> b);

struct FkeOptions {
  int n_grid = 2000;
  double t_min = 1e-3;
  // Scales the weight term q (g - E g): 1 integrates the weighted equation,
  // 0 drops it (negative control), -1 flips its sign (mutation check).
  double weight_scale = 1.0;
  // Integration starts at this reverse time from the all-mask point mass; the
  // exact target differs from the point mass by O(sqrt(tau_eps)).
  double tau_eps = 1e-10;
  // Substep limits: h * (max hazard + max |g|) <= stab_safety, and
  // h <= geo_frac * tau near the singular start.
  double stab_safety = 0.25;
  double geo_frac = 0.125;
  std::uint64_t enumeration_limit = kDefaultEnumerationLimit;
};

struct FkeReport {
  double max_tv = 0.0;
  std::vector<std::pair<double, double>> tv_trace;  // (tau, tv) at grid nodes
  long long substeps = 0;
  long long retries = 0;
  double max_renorm_drift = 0.0;
};

// Integrates the weighted reverse-time master equation
//   dq/dtau = L_corrected q + q (g - E_q g)
// on the joint space with classic RK4 (uniform reporting grid, adaptive
// internal substeps; q is renormalized every substep) and reports the
// deviation from the brute-force target at every grid node. This check is
// deterministic and independent of the particle sampler.
FkeReport integrate_weighted_fke(const std::vector<TabularDataDistribution>& data,
                                 const TargetSpec& target,
                                 const MaskingSchedule& schedule,
                                 const FkeOptions& opts = {});

}  // namespace maskdiff
