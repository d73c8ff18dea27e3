#pragma once

#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

// Per masked site, the probability ratios p_t(x with site set to j) / p_t(x)
// for j over the non-mask tokens. This is the single quantity every corrector
// consumes.
struct RatioTable {
  std::vector<int> sites;                    // masked positions, ascending
  std::vector<std::vector<double>> values;   // one row of size V per site
};

// Off-diagonal jump rates of the reverse-time process in factorized form: one
// row per masked site, plus the site hazard (row sum). Unmasked sites never
// move.
struct ReverseRates {
  std::vector<int> sites;
  std::vector<std::vector<double>> rates;
  std::vector<double> hazards;

  double total_hazard() const;
};

// Forward (masking) kernel p(x_s = j | x_t = i) for a single coordinate,
// t <= s. Mask is absorbing; rows sum to one.
double forward_transition_prob(const MaskingSchedule& schedule, double s, double t,
                               int i, int j, const Vocabulary& vocab);

// Off-diagonal forward rate for a single coordinate; the diagonal is the
// negative row sum and is not represented.
double forward_rate(const MaskingSchedule& schedule, double t, int i, int j,
                    const Vocabulary& vocab);

// Probability-ratio reconstruction from a demasking posterior:
// ratio[j] = alpha_t / (1 - alpha_t) * posterior[j].
std::vector<double> score_from_denoiser(const MaskingSchedule& schedule, double t,
                                        const std::vector<double>& posterior);

// Base reverse rates: rate_k[j] = -(1/alpha_t) dalpha_t * ratio_k[j] for every
// masked site k of `state`. Ratios must cover exactly the masked sites.
ReverseRates reverse_rates(const MaskingSchedule& schedule, double t,
                           const SequenceState& state, const RatioTable& ratios,
                           const Vocabulary& vocab);

struct StepOptions {
  // Default stepping uses per-site exponential clocks 1 - exp(-hazard * dtau),
  // exact for piecewise-constant rates. The first-order flag switches to the
  // Euler form min(hazard * dtau, 1).
  bool first_order = false;
};

// One reverse step of duration dtau: each masked site unmasks independently
// with its clock probability and, if it fires, draws a token proportional to
// its rate row. Unmasked sites never change.
SequenceState reverse_step(SplitMix64& rng, const SequenceState& state,
                           const ReverseRates& rates, double dtau,
                           const Vocabulary& vocab, const StepOptions& opts = {});

// Endpoint closeout: samples every remaining masked site from the supplied
// per-site probability rows (corrected posterior when a corrector is active).
SequenceState force_fill(SplitMix64& rng, const SequenceState& state,
                         const std::vector<int>& sites,
                         const std::vector<std::vector<double>>& site_probs,
                         const Vocabulary& vocab);

}  // namespace maskdiff
