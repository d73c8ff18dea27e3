#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/correctors.hpp"
#include "maskdiff/denoiser.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

// K particles with log-weights at reverse time tau. Log-weights are only ever
// combined through max-subtracted normalization.
struct WeightedEnsemble {
  std::vector<SequenceState> particles;
  std::vector<double> log_weights;
  double tau = 0.0;
  int step = 0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(particles.size()); }
};

// All particles at the all-mask state (the reverse-time initial distribution
// is a point mass on it), uniform weights.
WeightedEnsemble init_ensemble(const Vocabulary& vocab, int dim, int K,
                               std::uint64_t seed);

struct ResamplingPolicy {
  enum class Scheme { kMultinomial, kSystematic };
  enum class Trigger { kEveryStep, kEssBelow, kNever };

  Scheme scheme = Scheme::kMultinomial;
  Trigger trigger = Trigger::kEveryStep;
  double ess_threshold = 0.5;  // resample when ESS < threshold * K
  double freeze_tail = 0.0;    // fraction of final steps with resampling off
};

// Normalized weights from log-weights; throws DegeneracyError when all mass
// is gone.
std::vector<double> normalized_weights(const std::vector<double>& log_weights);

// Effective sample size (sum w)^2 / sum w^2, in [1, K].
double ess(const std::vector<double>& log_weights);

// Ancestor indices for the given scheme; E[offspring_k] = K * w_k for both.
std::vector<int> resample_indices(SplitMix64& rng, const std::vector<double>& weights,
                                  int count, ResamplingPolicy::Scheme scheme);

// Replaces particles by their drawn ancestors and resets weights to 1/K.
void resample(SplitMix64& rng, WeightedEnsemble& ensemble,
              ResamplingPolicy::Scheme scheme);

// Self-normalized importance-sampling estimate of E[phi].
double snis_estimate(const WeightedEnsemble& ensemble,
                     const std::function<double(const SequenceState&)>& phi);

struct EngineOptions {
  int threads = 1;
  bool first_order = false;       // Euler clocks instead of exponential clocks
  std::size_t cache_capacity = 200000;
};

// Memoizes denoiser outputs per (factor, state). Valid across time steps only
// for time-invariant denoisers; the engine checks. Cleared wholesale when the
// capacity is exceeded.
class PosteriorCache {
 public:
  explicit PosteriorCache(std::size_t capacity) : capacity_(capacity) {}

  const DenoiserOutput* find(int factor, const std::vector<int>& tokens) const;
  void insert(int factor, const std::vector<int>& tokens, DenoiserOutput output);
  std::size_t size() const { return map_.size(); }

 private:
  struct Key {
    int factor;
    std::vector<int> tokens;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  std::size_t capacity_;
  std::unordered_map<Key, DenoiserOutput, KeyHash> map_;
  mutable std::mutex mutex_;
};

struct PropagateStats {
  double mean_g = 0.0;
};

// One step of every particle: corrected rates and weight value g are
// evaluated at the pre-step state and the (clamped) current time; each
// log-weight gains g * dtau; states advance by an independent reverse step.
// Per-particle randomness comes from stream(seed, particle, step), so results
// do not depend on the thread count.
PropagateStats propagate(WeightedEnsemble& ensemble, const TargetSpec& target,
                         const std::vector<std::shared_ptr<const Denoiser>>& denoisers,
                         const MaskingSchedule& schedule, double dtau,
                         const EngineOptions& opts = {},
                         PosteriorCache* cache = nullptr);

struct StepTrace {
  int step = 0;
  double tau = 0.0;    // reverse time at which the step's rates were evaluated
  double ess = 0.0;    // after the weight update, before any resampling
  double mean_g = 0.0;
  bool resampled = false;
};

struct RunConfig {
  int K = 1024;
  int n_steps = 200;
  ResamplingPolicy policy;
  std::uint64_t seed = 1;
  EngineOptions engine;
};

struct RunResult {
  WeightedEnsemble ensemble;
  std::vector<StepTrace> trace;
};

// Full reverse-time generation loop: propagate / resample over the uniform
// tau grid on [0, 1 - t_min], then force-fill residual masks from the
// corrected posterior at the final time.
RunResult run(const TargetSpec& target,
              const std::vector<std::shared_ptr<const Denoiser>>& denoisers,
              const MaskingSchedule& schedule, const RunConfig& config);

void write_trace_csv(std::ostream& os, const std::vector<StepTrace>& trace);

}  // namespace maskdiff
