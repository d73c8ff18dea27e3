#pragma once

#include <memory>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/process.hpp"

namespace maskdiff {

// Per masked site of a query state, a probability vector over non-mask tokens:
// the demasking posterior p(x_0[k] = j | x_t). Rows sum to one; the mask token
// carries no mass.
struct DenoiserOutput {
  std::vector<int> sites;
  std::vector<std::vector<double>> probs;
};

// Explicit probability vector over all V^d fully unmasked sequences, in
// base-V enumeration order.
class TabularDataDistribution {
 public:
  TabularDataDistribution(Vocabulary vocab, int dim, std::vector<double> probs);

  const Vocabulary& vocab() const { return vocab_; }
  int dim() const { return dim_; }
  const std::vector<double>& probs() const { return probs_; }
  double prob(std::uint64_t data_idx) const { return probs_[data_idx]; }

  // Total mass of data sequences consistent with the unmasked coordinates.
  double evidence_mass(const SequenceState& state) const;

  // Exact Bayes posterior per masked site, conditioning jointly on all
  // unmasked coordinates. Requires at least one masked site. Throws
  // EvidenceError when the observed coordinates have zero probability.
  DenoiserOutput conditional_posterior(const SequenceState& state) const;

 private:
  Vocabulary vocab_;
  int dim_;
  std::vector<double> probs_;
  std::vector<std::uint64_t> strides_;  // base-V strides per coordinate
};

// Supplies the demasking posterior; the single learned quantity the correctors
// consume. Implementations must be safe for concurrent queries.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual DenoiserOutput posterior(const SequenceState& state, double t) const = 0;
  virtual const Vocabulary& vocab() const = 0;
  virtual int dim() const = 0;

  // True when posterior(state, t) does not depend on t, which lets callers
  // reuse cached outputs across time steps. Exact Bayes under the masking
  // channel has this property.
  virtual bool time_invariant() const { return false; }
};

class TabularDenoiser : public Denoiser {
 public:
  explicit TabularDenoiser(TabularDataDistribution data);

  DenoiserOutput posterior(const SequenceState& state, double t) const override;
  const Vocabulary& vocab() const override { return data_.vocab(); }
  int dim() const override { return data_.dim(); }
  bool time_invariant() const override { return true; }
  const TabularDataDistribution& data() const { return data_; }

 private:
  TabularDataDistribution data_;
};

// Tabular posterior perturbed by deterministic multiplicative logit noise,
// for robustness tests against imperfect models.
class NoisyTabularDenoiser : public Denoiser {
 public:
  NoisyTabularDenoiser(TabularDataDistribution data, double noise_scale,
                       std::uint64_t seed);

  DenoiserOutput posterior(const SequenceState& state, double t) const override;
  const Vocabulary& vocab() const override { return data_.vocab(); }
  int dim() const override { return data_.dim(); }
  bool time_invariant() const override { return true; }

 private:
  TabularDataDistribution data_;
  double noise_scale_;
  std::uint64_t seed_;
};

// Ratio table for the masked sites of `state`: the denoiser posterior pushed
// through the score reconstruction.
RatioTable denoiser_ratios(const Denoiser& denoiser, const MaskingSchedule& schedule,
                           double t, const SequenceState& state);

RatioTable ratios_from_output(const MaskingSchedule& schedule, double t,
                              const DenoiserOutput& output);

}  // namespace maskdiff
