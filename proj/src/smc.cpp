#include "maskdiff/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "maskdiff/process.hpp"

namespace maskdiff {

namespace {

constexpr std::uint64_t kResampleStreamTag = 0x9d2c5680a76b3ull;

void parallel_for(int n, int threads, const std::function<void(int, int)>& body) {
  if (threads <= 1 || n <= 1) {
    body(0, n);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& th : pool) th.join();
}

// Reward with the масked coordinates of the query replaced by a fixed fill
// drawn once from the denoiser, so partially masked neighbors are scored on a
// concrete completion.
RewardFn filled_reward(const RewardFn& base, const SequenceState& fill, int mask_id) {
  return [&base, &fill, mask_id](const SequenceState& y) {
    SequenceState z = y;
    for (int k = 0; k < z.dim(); ++k) {
      if (z.tokens[static_cast<std::size_t>(k)] == mask_id)
        z.tokens[static_cast<std::size_t>(k)] =
            fill.tokens[static_cast<std::size_t>(k)];
    }
    return base(z);
  };
}

SequenceState draw_fill(SplitMix64& rng, const SequenceState& state,
                        const DenoiserOutput& posterior, int mask_id) {
  SequenceState fill = state;
  for (std::size_t k = 0; k < posterior.sites.size(); ++k) {
    const auto& row = posterior.probs[k];
    double total = 0.0;
    for (double p : row) total += p;
    fill.tokens[static_cast<std::size_t>(posterior.sites[k])] =
        rng.categorical(row, total);
  }
  (void)mask_id;
  return fill;
}

}  // namespace

WeightedEnsemble init_ensemble(const Vocabulary& vocab, int dim, int K,
                               std::uint64_t seed) {
  if (K < 1) throw std::invalid_argument("ensemble needs K >= 1");
  WeightedEnsemble e;
  e.particles.assign(static_cast<std::size_t>(K), all_mask_state(vocab, dim));
  e.log_weights.assign(static_cast<std::size_t>(K),
                       -std::log(static_cast<double>(K)));
  e.seed = seed;
  return e;
}

std::vector<double> normalized_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("empty weight vector");
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(mx))
    throw DegeneracyError("all ensemble weights are zero or non-finite");
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - mx);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double ess(const std::vector<double>& log_weights) {
  const auto w = normalized_weights(log_weights);
  double s2 = 0.0;
  for (double v : w) s2 += v * v;
  return 1.0 / s2;
}

std::vector<int> resample_indices(SplitMix64& rng, const std::vector<double>& weights,
                                  int count, ResamplingPolicy::Scheme scheme) {
  const int K = static_cast<int>(weights.size());
  std::vector<int> idx(static_cast<std::size_t>(count));
  if (scheme == ResamplingPolicy::Scheme::kMultinomial) {
    std::vector<double> cdf(weights.size());
    double cum = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      cum += weights[j];
      cdf[j] = cum;
    }
    cdf.back() = 1.0;
    for (int i = 0; i < count; ++i) {
      const double u = rng.uniform();
      idx[static_cast<std::size_t>(i)] = static_cast<int>(
          std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    }
    return idx;
  }
  // systematic: one uniform offset, evenly spaced points against the CDF
  const double u = rng.uniform();
  int j = 0;
  double cum = static_cast<double>(count) * weights[0];
  for (int i = 0; i < count; ++i) {
    const double pos = static_cast<double>(i) + u;
    while (pos >= cum && j + 1 < K) {
      ++j;
      cum += static_cast<double>(count) * weights[static_cast<std::size_t>(j)];
    }
    idx[static_cast<std::size_t>(i)] = j;
  }
  return idx;
}

void resample(SplitMix64& rng, WeightedEnsemble& ensemble,
              ResamplingPolicy::Scheme scheme) {
  const auto w = normalized_weights(ensemble.log_weights);
  const auto idx = resample_indices(rng, w, ensemble.size(), scheme);
  std::vector<SequenceState> next(ensemble.particles.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    next[i] = ensemble.particles[static_cast<std::size_t>(idx[i])];
  ensemble.particles = std::move(next);
  ensemble.log_weights.assign(ensemble.log_weights.size(),
                              -std::log(static_cast<double>(ensemble.size())));
}

double snis_estimate(const WeightedEnsemble& ensemble,
                     const std::function<double(const SequenceState&)>& phi) {
  const auto w = normalized_weights(ensemble.log_weights);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * phi(ensemble.particles[i]);
  return s;
}

std::size_t PosteriorCache::KeyHash::operator()(const Key& k) const {
  std::size_t h = 1469598103934665603ull ^ static_cast<std::size_t>(k.factor);
  for (int tok : k.tokens) {
    h ^= static_cast<std::size_t>(tok) + 0x9e3779b9ull;
    h *= 1099511628211ull;
  }
  return h;
}

const DenoiserOutput* PosteriorCache::find(int factor,
                                           const std::vector<int>& tokens) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = map_.find(Key{factor, tokens});
  return it == map_.end() ? nullptr : &it->second;
}

void PosteriorCache::insert(int factor, const std::vector<int>& tokens,
                            DenoiserOutput output) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (map_.size() >= capacity_) map_.clear();
  map_.emplace(Key{factor, tokens}, std::move(output));
}

PropagateStats propagate(WeightedEnsemble& ensemble, const TargetSpec& target,
                         const std::vector<std::shared_ptr<const Denoiser>>& denoisers,
                         const MaskingSchedule& schedule, double dtau,
                         const EngineOptions& opts, PosteriorCache* cache) {
  target.validate();
  if (!(dtau > 0.0)) throw std::invalid_argument("propagate requires dtau > 0");
  if (static_cast<int>(denoisers.size()) != target.num_factors())
    throw std::invalid_argument("target requires " +
                                std::to_string(target.num_factors()) + " denoisers");
  const Vocabulary vocab = denoisers[0]->vocab();
  const int K = ensemble.size();
  const double tau = ensemble.tau;
  const double t_eval = schedule.clamp_time(1.0 - tau);

  // Deduplicate particle states (first-occurrence order) so each distinct
  // state is denoised once per factor.
  std::unordered_map<std::vector<int>, int,
                     decltype([](const std::vector<int>& v) {
                       std::size_t h = 1469598103934665603ull;
                       for (int tok : v) {
                         h ^= static_cast<std::size_t>(tok) + 0x9e3779b9ull;
                         h *= 1099511628211ull;
                       }
                       return h;
                     })>
      unique_ids;
  std::vector<const SequenceState*> uniques;
  std::vector<int> particle_unique(static_cast<std::size_t>(K), -1);
  for (int p = 0; p < K; ++p) {
    const auto& st = ensemble.particles[static_cast<std::size_t>(p)];
    if (fully_unmasked(st, vocab)) continue;  // no denoiser query needed
    auto [it, inserted] = unique_ids.try_emplace(st.tokens,
                                                 static_cast<int>(uniques.size()));
    if (inserted) uniques.push_back(&st);
    particle_unique[static_cast<std::size_t>(p)] = it->second;
  }

  const int F = target.num_factors();
  std::vector<std::vector<DenoiserOutput>> outputs(
      static_cast<std::size_t>(F),
      std::vector<DenoiserOutput>(uniques.size()));
  for (int f = 0; f < F; ++f) {
    const Denoiser& den = *denoisers[static_cast<std::size_t>(f)];
    const bool cacheable = cache != nullptr && den.time_invariant();
    parallel_for(static_cast<int>(uniques.size()), opts.threads, [&](int lo, int hi) {
      for (int u = lo; u < hi; ++u) {
        const SequenceState& st = *uniques[static_cast<std::size_t>(u)];
        if (cacheable) {
          if (const DenoiserOutput* hit = cache->find(f, st.tokens)) {
            outputs[static_cast<std::size_t>(f)][static_cast<std::size_t>(u)] = *hit;
            continue;
          }
        }
        DenoiserOutput out = den.posterior(st, t_eval);
        if (cacheable) cache->insert(f, st.tokens, out);
        outputs[static_cast<std::size_t>(f)][static_cast<std::size_t>(u)] =
            std::move(out);
      }
    });
  }

  std::vector<double> g_values(static_cast<std::size_t>(K), 0.0);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_for(K, opts.threads, [&](int lo, int hi) {
    try {
      std::vector<RatioTable> ratios(static_cast<std::size_t>(F));
      for (int p = lo; p < hi; ++p) {
        const SequenceState state = ensemble.particles[static_cast<std::size_t>(p)];
        const int u = particle_unique[static_cast<std::size_t>(p)];
        for (int f = 0; f < F; ++f) {
          if (u < 0) {
            ratios[static_cast<std::size_t>(f)] = RatioTable{};
          } else {
            ratios[static_cast<std::size_t>(f)] = ratios_from_output(
                schedule, t_eval,
                outputs[static_cast<std::size_t>(f)][static_cast<std::size_t>(u)]);
          }
        }
        SplitMix64 rng = derive_stream(ensemble.seed,
                                       static_cast<std::uint64_t>(p),
                                       static_cast<std::uint64_t>(ensemble.step));
        CorrectedStep step;
        if (target.kind == TargetSpec::Kind::kReward && target.reward->fill_masked &&
            u >= 0) {
          const SequenceState fill =
              draw_fill(rng, state, outputs[0][static_cast<std::size_t>(u)],
                        vocab.mask_id());
          const RewardFn wrapped =
              filled_reward(target.reward->reward, fill, vocab.mask_id());
          step = reward_step(schedule, t_eval, state, ratios[0], wrapped,
                             target.reward->beta(tau), target.reward->dbeta(tau),
                             vocab);
        } else {
          step = corrected_step(target, schedule, t_eval, tau, state, ratios, vocab);
        }
        g_values[static_cast<std::size_t>(p)] = step.g;
        ensemble.log_weights[static_cast<std::size_t>(p)] += step.g * dtau;
        ensemble.particles[static_cast<std::size_t>(p)] =
            reverse_step(rng, state, step.rates, dtau, vocab,
                         StepOptions{opts.first_order});
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);

  ensemble.tau += dtau;
  ensemble.step += 1;
  double mean_g = 0.0;
  for (double g : g_values) mean_g += g;
  mean_g /= static_cast<double>(K);
  return PropagateStats{mean_g};
}

RunResult run(const TargetSpec& target,
              const std::vector<std::shared_ptr<const Denoiser>>& denoisers,
              const MaskingSchedule& schedule, const RunConfig& config) {
  target.validate();
  if (config.n_steps < 1) throw std::invalid_argument("run requires n_steps >= 1");
  if (denoisers.empty() ||
      static_cast<int>(denoisers.size()) != target.num_factors())
    throw std::invalid_argument("target requires " +
                                std::to_string(target.num_factors()) + " denoisers");
  const Vocabulary vocab = denoisers[0]->vocab();
  const int dim = denoisers[0]->dim();
  for (const auto& d : denoisers)
    if (d->vocab().num_tokens != vocab.num_tokens || d->dim() != dim)
      throw std::invalid_argument("denoisers must share vocabulary and dim");

  RunResult result;
  result.ensemble = init_ensemble(vocab, dim, config.K, config.seed);
  PosteriorCache cache(config.engine.cache_capacity);
  const double horizon = 1.0 - schedule.t_min();
  const double dtau = horizon / static_cast<double>(config.n_steps);
  const int freeze_from = config.n_steps -
      static_cast<int>(std::floor(config.policy.freeze_tail *
                                  static_cast<double>(config.n_steps)));

  for (int i = 0; i < config.n_steps; ++i) {
    const double tau_pre = result.ensemble.tau;
    const PropagateStats stats = propagate(result.ensemble, target, denoisers,
                                           schedule, dtau, config.engine, &cache);
    const double ess_val = ess(result.ensemble.log_weights);
    bool do_resample = false;
    switch (config.policy.trigger) {
      case ResamplingPolicy::Trigger::kEveryStep:
        do_resample = true;
        break;
      case ResamplingPolicy::Trigger::kEssBelow:
        do_resample = ess_val < config.policy.ess_threshold *
                                    static_cast<double>(config.K);
        break;
      case ResamplingPolicy::Trigger::kNever:
        do_resample = false;
        break;
    }
    if (i >= freeze_from) do_resample = false;
    if (do_resample) {
      // exactly uniform weights make resampling a distributional no-op that
      // only injects bootstrap noise; skipping keeps the base process equal
      // to plain ancestral sampling
      const double w0 = result.ensemble.log_weights[0];
      bool uniform = true;
      for (double w : result.ensemble.log_weights) uniform = uniform && w == w0;
      if (uniform) do_resample = false;
    }
    if (do_resample) {
      SplitMix64 rng = derive_stream(config.seed, kResampleStreamTag,
                                     static_cast<std::uint64_t>(i));
      resample(rng, result.ensemble, config.policy.scheme);
    }
    result.trace.push_back(StepTrace{i, tau_pre, ess_val, stats.mean_g, do_resample});
  }

  // close out residual masks from the corrected posterior at the final time
  const double t_end = schedule.clamp_time(1.0 - result.ensemble.tau);
  const double tau_end = result.ensemble.tau;
  for (int p = 0; p < config.K; ++p) {
    SequenceState& state = result.ensemble.particles[static_cast<std::size_t>(p)];
    if (fully_unmasked(state, vocab)) continue;
    SplitMix64 rng = derive_stream(config.seed, static_cast<std::uint64_t>(p),
                                   static_cast<std::uint64_t>(result.ensemble.step));
    std::vector<RatioTable> ratios;
    ratios.reserve(denoisers.size());
    DenoiserOutput first_output;
    for (std::size_t f = 0; f < denoisers.size(); ++f) {
      DenoiserOutput out = denoisers[f]->posterior(state, t_end);
      if (f == 0) first_output = out;
      ratios.push_back(ratios_from_output(schedule, t_end, out));
    }
    CorrectedStep step;
    if (target.kind == TargetSpec::Kind::kReward && target.reward->fill_masked) {
      const SequenceState fill = draw_fill(rng, state, first_output, vocab.mask_id());
      const RewardFn wrapped =
          filled_reward(target.reward->reward, fill, vocab.mask_id());
      step = reward_step(schedule, t_end, state, ratios[0], wrapped,
                         target.reward->beta(tau_end), target.reward->dbeta(tau_end),
                         vocab);
    } else {
      step = corrected_step(target, schedule, t_end, tau_end, state, ratios, vocab);
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(step.rates.sites.size());
    for (int site : step.rates.sites) rows.push_back(corrected_posterior(step, site));
    state = force_fill(rng, state, step.rates.sites, rows, vocab);
  }
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<StepTrace>& trace) {
  os << "step,tau,ess,mean_g,resampled\n";
  char buf[160];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%d\n", row.step, row.tau,
                  row.ess, row.mean_g, row.resampled ? 1 : 0);
    os << buf;
  }
}

}  // namespace maskdiff
