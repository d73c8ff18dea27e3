#include "maskdiff/correctors.hpp"

#include <cmath>
#include <numeric>

namespace maskdiff {

namespace {

void check_sites(const RatioTable& ratios, const SequenceState& state,
                 const Vocabulary& vocab) {
  if (ratios.sites != masked_positions(state, vocab))
    throw std::invalid_argument("ratio table does not cover the masked sites");
}

ReverseRates empty_rates() { return ReverseRates{}; }

}  // namespace

RewardFn separable_reward(std::vector<std::vector<double>> site_token_values,
                          const Vocabulary& vocab) {
  for (const auto& row : site_token_values) {
    if (static_cast<int>(row.size()) != vocab.num_tokens)
      throw std::invalid_argument("separable reward needs one value per token");
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("reward values must be finite");
  }
  const int mask = vocab.mask_id();
  return [values = std::move(site_token_values), mask](const SequenceState& x) {
    if (x.dim() != static_cast<int>(values.size()))
      throw std::invalid_argument("reward: state dim mismatch");
    double r = 0.0;
    for (int k = 0; k < x.dim(); ++k) {
      const int tok = x.tokens[static_cast<std::size_t>(k)];
      if (tok != mask) r += values[static_cast<std::size_t>(k)][static_cast<std::size_t>(tok)];
    }
    return r;
  };
}

RewardTilt linear_reward_tilt(RewardFn reward, double scale) {
  RewardTilt tilt;
  tilt.reward = std::move(reward);
  tilt.beta = [scale](double tau) { return scale * tau; };
  tilt.dbeta = [scale](double) { return scale; };
  return tilt;
}

TargetSpec TargetSpec::base() { return TargetSpec{}; }

TargetSpec TargetSpec::anneal(double beta) {
  TargetSpec s;
  s.kind = Kind::kAnneal;
  s.beta = beta;
  s.validate();
  return s;
}

TargetSpec TargetSpec::product() {
  TargetSpec s;
  s.kind = Kind::kProduct;
  return s;
}

TargetSpec TargetSpec::geo_avg(std::vector<double> betas) {
  TargetSpec s;
  s.kind = Kind::kGeoAvg;
  s.geo_betas = std::move(betas);
  s.validate();
  return s;
}

TargetSpec TargetSpec::reward_tilt(RewardTilt tilt) {
  TargetSpec s;
  s.kind = Kind::kReward;
  s.reward = std::move(tilt);
  return s;
}

int TargetSpec::num_factors() const {
  switch (kind) {
    case Kind::kProduct: return 2;
    case Kind::kGeoAvg: return static_cast<int>(geo_betas.size());
    default: return 1;
  }
}

void TargetSpec::validate() const {
  switch (kind) {
    case Kind::kAnneal:
      if (!(beta > 0.0)) throw std::invalid_argument("anneal beta must be > 0");
      break;
    case Kind::kGeoAvg: {
      if (geo_betas.empty())
        throw std::invalid_argument("geo_avg needs at least one exponent");
      const double s = std::accumulate(geo_betas.begin(), geo_betas.end(), 0.0);
      if (std::abs(s - 1.0) > 1e-12)
        throw std::invalid_argument("geo_avg exponents must sum to 1 within 1e-12");
      break;
    }
    case Kind::kReward:
      if (!reward || !reward->reward || !reward->beta || !reward->dbeta)
        throw std::invalid_argument("reward target needs reward and tilt schedule");
      break;
    default:
      break;
  }
}

std::string TargetSpec::kind_name() const {
  switch (kind) {
    case Kind::kBase: return "base";
    case Kind::kAnneal: return "anneal";
    case Kind::kProduct: return "product";
    case Kind::kGeoAvg: return "geo_avg";
    case Kind::kReward: return "reward";
  }
  return "?";
}

CorrectedStep base_step(const MaskingSchedule& schedule, double t,
                        const SequenceState& state, const RatioTable& ratios,
                        const Vocabulary& vocab) {
  return CorrectedStep{reverse_rates(schedule, t, state, ratios, vocab), 0.0};
}

CorrectedStep anneal_step(const MaskingSchedule& schedule, double t,
                          const SequenceState& state, const RatioTable& ratios,
                          double beta, const Vocabulary& vocab) {
  if (!(beta > 0.0)) throw std::invalid_argument("anneal beta must be > 0");
  check_sites(ratios, state, vocab);
  const double a = schedule.dalpha(t) / schedule.alpha(t);  // negative
  CorrectedStep out{empty_rates(), 0.0};
  out.rates.sites = ratios.sites;
  out.rates.rates.resize(ratios.sites.size());
  out.rates.hazards.assign(ratios.sites.size(), 0.0);
  for (std::size_t k = 0; k < ratios.sites.size(); ++k) {
    const auto& row = ratios.values[k];
    auto& rates = out.rates.rates[k];
    rates.resize(row.size());
    double h = 0.0, bracket = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double rb = std::pow(row[j], beta);
      rates[j] = -beta * a * rb;
      h += rates[j];
      bracket += row[j] - rb;
    }
    out.rates.hazards[k] = h;
    out.g += beta * a * bracket;
  }
  return out;
}

CorrectedStep product_step(const MaskingSchedule& schedule, double t,
                           const SequenceState& state, const RatioTable& ratios1,
                           const RatioTable& ratios2, const Vocabulary& vocab) {
  check_sites(ratios1, state, vocab);
  if (ratios2.sites != ratios1.sites)
    throw std::invalid_argument("product factors must cover the same masked sites");
  const double a = schedule.dalpha(t) / schedule.alpha(t);
  CorrectedStep out{empty_rates(), 0.0};
  out.rates.sites = ratios1.sites;
  out.rates.rates.resize(ratios1.sites.size());
  out.rates.hazards.assign(ratios1.sites.size(), 0.0);
  for (std::size_t k = 0; k < ratios1.sites.size(); ++k) {
    const auto& r1 = ratios1.values[k];
    const auto& r2 = ratios2.values[k];
    if (r1.size() != r2.size())
      throw std::invalid_argument("product factor rows differ in size");
    auto& rates = out.rates.rates[k];
    rates.resize(r1.size());
    double h = 0.0, bracket = 0.0;
    for (std::size_t j = 0; j < r1.size(); ++j) {
      rates[j] = -2.0 * a * r1[j] * r2[j];
      h += rates[j];
      bracket += r1[j] + r2[j] - 2.0 * r1[j] * r2[j];
    }
    out.rates.hazards[k] = h;
    out.g += a * bracket;
  }
  return out;
}

CorrectedStep geo_avg_step(const MaskingSchedule& schedule, double t,
                           const SequenceState& state,
                           const std::vector<RatioTable>& ratios,
                           const std::vector<double>& betas, const Vocabulary& vocab) {
  if (ratios.empty() || ratios.size() != betas.size())
    throw std::invalid_argument("geo_avg needs one exponent per factor");
  const double bsum = std::accumulate(betas.begin(), betas.end(), 0.0);
  if (std::abs(bsum - 1.0) > 1e-12)
    throw std::invalid_argument("geo_avg exponents must sum to 1 within 1e-12");
  check_sites(ratios[0], state, vocab);
  for (const auto& r : ratios)
    if (r.sites != ratios[0].sites)
      throw std::invalid_argument("geo_avg factors must cover the same masked sites");
  const double a = schedule.dalpha(t) / schedule.alpha(t);
  CorrectedStep out{empty_rates(), 0.0};
  out.rates.sites = ratios[0].sites;
  out.rates.rates.resize(out.rates.sites.size());
  out.rates.hazards.assign(out.rates.sites.size(), 0.0);
  for (std::size_t k = 0; k < out.rates.sites.size(); ++k) {
    const std::size_t nv = ratios[0].values[k].size();
    auto& rates = out.rates.rates[k];
    rates.resize(nv);
    double h = 0.0, bracket = 0.0;
    for (std::size_t j = 0; j < nv; ++j) {
      double geo = 1.0, arith = 0.0;
      for (std::size_t n = 0; n < ratios.size(); ++n) {
        const double r = ratios[n].values[k][j];
        geo *= std::pow(r, betas[n]);
        arith += betas[n] * r;
      }
      rates[j] = -a * geo;
      h += rates[j];
      bracket += arith - geo;
    }
    out.rates.hazards[k] = h;
    out.g += a * bracket;
  }
  return out;
}

CorrectedStep reward_step(const MaskingSchedule& schedule, double t,
                          const SequenceState& state, const RatioTable& ratios,
                          const RewardFn& reward, double beta_t, double dbeta_t,
                          const Vocabulary& vocab) {
  check_sites(ratios, state, vocab);
  const double r_here = reward(state);
  if (!std::isfinite(r_here))
    throw std::domain_error("reward is not finite at the current state");
  const double a = schedule.dalpha(t) / schedule.alpha(t);
  CorrectedStep out{empty_rates(), 0.0};
  out.rates.sites = ratios.sites;
  out.rates.rates.resize(ratios.sites.size());
  out.rates.hazards.assign(ratios.sites.size(), 0.0);
  SequenceState probe = state;
  for (std::size_t k = 0; k < ratios.sites.size(); ++k) {
    const int site = ratios.sites[k];
    const auto& row = ratios.values[k];
    auto& rates = out.rates.rates[k];
    rates.resize(row.size());
    double h = 0.0, bracket = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      probe.tokens[static_cast<std::size_t>(site)] = static_cast<int>(j);
      const double r_to = reward(probe);
      if (!std::isfinite(r_to))
        throw std::domain_error("reward is not finite at a candidate state");
      const double tilt = std::exp(beta_t * (r_to - r_here));
      rates[j] = -a * row[j] * tilt;
      h += rates[j];
      bracket += row[j] * (1.0 - tilt);
    }
    probe.tokens[static_cast<std::size_t>(site)] = vocab.mask_id();
    out.rates.hazards[k] = h;
    out.g += a * bracket;
  }
  out.g += dbeta_t * r_here;
  return out;
}

std::vector<double> corrected_posterior(const CorrectedStep& step, int site) {
  for (std::size_t k = 0; k < step.rates.sites.size(); ++k) {
    if (step.rates.sites[k] != site) continue;
    const auto& row = step.rates.rates[k];
    const double total = step.rates.hazards[k];
    if (!(total > 0.0))
      throw DegeneracyError("corrected_posterior: all-zero rate row");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] / total;
    return out;
  }
  throw std::invalid_argument("corrected_posterior: site is not masked");
}

CorrectedStep corrected_step(const TargetSpec& target, const MaskingSchedule& schedule,
                             double t, double tau, const SequenceState& state,
                             const std::vector<RatioTable>& ratios,
                             const Vocabulary& vocab) {
  if (static_cast<int>(ratios.size()) != target.num_factors())
    throw std::invalid_argument("target requires " +
                                std::to_string(target.num_factors()) +
                                " ratio tables");
  switch (target.kind) {
    case TargetSpec::Kind::kBase:
      return base_step(schedule, t, state, ratios[0], vocab);
    case TargetSpec::Kind::kAnneal:
      return anneal_step(schedule, t, state, ratios[0], target.beta, vocab);
    case TargetSpec::Kind::kProduct:
      return product_step(schedule, t, state, ratios[0], ratios[1], vocab);
    case TargetSpec::Kind::kGeoAvg:
      return geo_avg_step(schedule, t, state, ratios, target.geo_betas, vocab);
    case TargetSpec::Kind::kReward:
      return reward_step(schedule, t, state, ratios[0], target.reward->reward,
                         target.reward->beta(tau), target.reward->dbeta(tau), vocab);
  }
  throw std::logic_error("unreachable");
}

}  // namespace maskdiff
