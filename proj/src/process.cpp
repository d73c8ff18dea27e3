#include "maskdiff/process.hpp"

#include <cmath>
#include <numeric>

namespace maskdiff {

double ReverseRates::total_hazard() const {
  return std::accumulate(hazards.begin(), hazards.end(), 0.0);
}

double forward_transition_prob(const MaskingSchedule& schedule, double s, double t,
                               int i, int j, const Vocabulary& vocab) {
  if (t > s) throw std::domain_error("forward_transition_prob requires t <= s");
  const double ratio = schedule.alpha_ratio(s, t);
  const int m = vocab.mask_id();
  double p = 0.0;
  if (j == m) p += 1.0 - ratio;
  if (j == i) p += ratio;
  return p;
}

double forward_rate(const MaskingSchedule& schedule, double t, int i, int j,
                    const Vocabulary& vocab) {
  const int m = vocab.mask_id();
  const double factor = schedule.dalpha(t) / schedule.alpha(t);
  return factor * ((i == j ? 1.0 : 0.0) - (j == m ? 1.0 : 0.0));
}

std::vector<double> score_from_denoiser(const MaskingSchedule& schedule, double t,
                                        const std::vector<double>& posterior) {
  if (t < schedule.t_min() - 1e-12 || t >= 1.0)
    throw std::domain_error("score_from_denoiser requires t in [t_min, 1)");
  const double a = schedule.alpha(t);
  if (a >= 1.0) throw std::domain_error("score undefined at alpha = 1");
  const double factor = a / (1.0 - a);
  std::vector<double> out(posterior.size());
  for (std::size_t j = 0; j < posterior.size(); ++j) out[j] = factor * posterior[j];
  return out;
}

ReverseRates reverse_rates(const MaskingSchedule& schedule, double t,
                           const SequenceState& state, const RatioTable& ratios,
                           const Vocabulary& vocab) {
  const std::vector<int> masked = masked_positions(state, vocab);
  if (ratios.sites != masked)
    throw std::invalid_argument("ratio table does not cover the masked sites");
  const double factor = -schedule.dalpha(t) / schedule.alpha(t);
  ReverseRates out;
  out.sites = masked;
  out.rates.resize(masked.size());
  out.hazards.assign(masked.size(), 0.0);
  for (std::size_t k = 0; k < masked.size(); ++k) {
    const auto& row = ratios.values[k];
    if (static_cast<int>(row.size()) != vocab.num_tokens)
      throw std::invalid_argument("ratio row size must equal vocabulary size");
    auto& rates = out.rates[k];
    rates.resize(row.size());
    double h = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      rates[j] = factor * row[j];
      h += rates[j];
    }
    out.hazards[k] = h;
  }
  return out;
}

SequenceState reverse_step(SplitMix64& rng, const SequenceState& state,
                           const ReverseRates& rates, double dtau,
                           const Vocabulary& vocab, const StepOptions& opts) {
  if (!(dtau > 0.0)) throw std::invalid_argument("reverse_step requires dtau > 0");
  SequenceState next = state;
  for (std::size_t k = 0; k < rates.sites.size(); ++k) {
    const double h = rates.hazards[k];
    if (h <= 0.0) continue;
    const double p_unmask = opts.first_order ? std::min(h * dtau, 1.0)
                                             : -std::expm1(-h * dtau);
    if (rng.uniform() < p_unmask) {
      const int tok = rng.categorical(rates.rates[k], h);
      next.tokens[static_cast<std::size_t>(rates.sites[k])] = tok;
    }
  }
  (void)vocab;
  return next;
}

SequenceState force_fill(SplitMix64& rng, const SequenceState& state,
                         const std::vector<int>& sites,
                         const std::vector<std::vector<double>>& site_probs,
                         const Vocabulary& vocab) {
  SequenceState next = state;
  for (std::size_t k = 0; k < sites.size(); ++k) {
    const auto& row = site_probs[k];
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    if (!(total > 0.0))
      throw DegeneracyError("force_fill: degenerate (all-zero) posterior row");
    next.tokens[static_cast<std::size_t>(sites[k])] = rng.categorical(row, total);
  }
  if (!fully_unmasked(next, vocab))
    throw std::invalid_argument("force_fill: site list did not cover all masked positions");
  return next;
}

}  // namespace maskdiff
