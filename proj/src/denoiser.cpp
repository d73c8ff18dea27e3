#include "maskdiff/denoiser.hpp"

#include <cmath>
#include <numeric>

#include "maskdiff/rng.hpp"

namespace maskdiff {

namespace {

// Enumerates base-V assignments of the given sites as flat index offsets,
// odometer order (last site fastest).
std::vector<std::uint64_t> assignment_offsets(const std::vector<int>& sites,
                                              const std::vector<std::uint64_t>& strides,
                                              int num_tokens) {
  std::size_t count = 1;
  for (std::size_t s = 0; s < sites.size(); ++s) count *= static_cast<std::size_t>(num_tokens);
  std::vector<std::uint64_t> offs(count, 0);
  std::size_t block = count;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    block /= static_cast<std::size_t>(num_tokens);
    const std::uint64_t stride = strides[static_cast<std::size_t>(sites[s])];
    for (std::size_t i = 0; i < count; ++i) {
      const auto digit = (i / block) % static_cast<std::size_t>(num_tokens);
      offs[i] += static_cast<std::uint64_t>(digit) * stride;
    }
  }
  return offs;
}

// Scatter per-assignment sums into per-site token buckets.
void accumulate_buckets(const std::vector<int>& sites, const std::vector<double>& sums,
                        int num_tokens, std::size_t bucket_base,
                        std::vector<std::vector<double>>& buckets) {
  std::size_t block = sums.size();
  for (std::size_t s = 0; s < sites.size(); ++s) {
    block /= static_cast<std::size_t>(num_tokens);
    auto& row = buckets[bucket_base + s];
    for (std::size_t i = 0; i < sums.size(); ++i) {
      const auto digit = (i / block) % static_cast<std::size_t>(num_tokens);
      row[digit] += sums[i];
    }
  }
}

}  // namespace

TabularDataDistribution::TabularDataDistribution(Vocabulary vocab, int dim,
                                                 std::vector<double> probs)
    : vocab_(vocab), dim_(dim), probs_(std::move(probs)) {
  if (dim_ < 1) throw std::invalid_argument("data distribution dim must be >= 1");
  const std::uint64_t expect = checked_pow(
      static_cast<std::uint64_t>(vocab_.num_tokens), dim_, kDefaultEnumerationLimit);
  if (probs_.size() != expect)
    throw std::invalid_argument("data distribution must have V^d entries");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw std::invalid_argument("data probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("data probabilities must sum to 1 within 1e-9");
  strides_.resize(static_cast<std::size_t>(dim_));
  std::uint64_t s = 1;
  for (int k = dim_ - 1; k >= 0; --k) {
    strides_[static_cast<std::size_t>(k)] = s;
    s *= static_cast<std::uint64_t>(vocab_.num_tokens);
  }
}

double TabularDataDistribution::evidence_mass(const SequenceState& state) const {
  if (state.dim() != dim_) throw std::invalid_argument("state dim mismatch");
  std::vector<int> masked;
  std::uint64_t base = 0;
  for (int k = 0; k < dim_; ++k) {
    const int tok = state.tokens[static_cast<std::size_t>(k)];
    if (tok == vocab_.mask_id()) {
      masked.push_back(k);
    } else {
      base += static_cast<std::uint64_t>(tok) * strides_[static_cast<std::size_t>(k)];
    }
  }
  if (masked.empty()) return probs_[base];
  const auto offs = assignment_offsets(masked, strides_, vocab_.num_tokens);
  double total = 0.0;
  for (const auto off : offs) total += probs_[base + off];
  return total;
}

DenoiserOutput TabularDataDistribution::conditional_posterior(
    const SequenceState& state) const {
  if (state.dim() != dim_) throw std::invalid_argument("state dim mismatch");
  std::vector<int> masked;
  std::uint64_t base = 0;
  for (int k = 0; k < dim_; ++k) {
    const int tok = state.tokens[static_cast<std::size_t>(k)];
    if (tok == vocab_.mask_id()) {
      masked.push_back(k);
    } else if (tok >= 0 && tok < vocab_.num_tokens) {
      base += static_cast<std::uint64_t>(tok) * strides_[static_cast<std::size_t>(k)];
    } else {
      throw std::invalid_argument("token id outside vocabulary");
    }
  }
  if (masked.empty())
    throw std::invalid_argument("conditional_posterior requires a masked site");

  const int V = vocab_.num_tokens;
  DenoiserOutput out;
  out.sites = masked;
  out.probs.assign(masked.size(),
                   std::vector<double>(static_cast<std::size_t>(V), 0.0));

  // Split the masked sites in two halves and sweep the consistent data
  // sequences once, so bucket accumulation costs 2 * V^n instead of n * V^n.
  const std::size_t half = masked.size() / 2;
  const std::vector<int> lo(masked.begin(), masked.begin() + static_cast<long>(half));
  const std::vector<int> hi(masked.begin() + static_cast<long>(half), masked.end());
  const auto offs_lo = assignment_offsets(lo, strides_, V);
  const auto offs_hi = assignment_offsets(hi, strides_, V);

  std::vector<double> sum_lo(offs_lo.size(), 0.0);
  std::vector<double> sum_hi(offs_hi.size(), 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < offs_lo.size(); ++a) {
    const std::uint64_t b = base + offs_lo[a];
    double s = 0.0;
    for (std::size_t c = 0; c < offs_hi.size(); ++c) {
      const double w = probs_[b + offs_hi[c]];
      s += w;
      sum_hi[c] += w;
    }
    sum_lo[a] = s;
    total += s;
  }
  if (!(total > 0.0))
    throw EvidenceError("observed coordinates have zero probability");

  accumulate_buckets(lo, sum_lo, V, 0, out.probs);
  accumulate_buckets(hi, sum_hi, V, half, out.probs);
  for (auto& row : out.probs)
    for (double& p : row) p /= total;
  return out;
}

TabularDenoiser::TabularDenoiser(TabularDataDistribution data) : data_(std::move(data)) {}

DenoiserOutput TabularDenoiser::posterior(const SequenceState& state, double) const {
  return data_.conditional_posterior(state);
}

NoisyTabularDenoiser::NoisyTabularDenoiser(TabularDataDistribution data,
                                           double noise_scale, std::uint64_t seed)
    : data_(std::move(data)), noise_scale_(noise_scale), seed_(seed) {}

DenoiserOutput NoisyTabularDenoiser::posterior(const SequenceState& state,
                                               double t) const {
  DenoiserOutput out = data_.conditional_posterior(state);
  std::uint64_t h = SplitMix64::mix(seed_);
  for (int tok : state.tokens) h = SplitMix64::mix(h ^ static_cast<std::uint64_t>(tok + 1));
  for (std::size_t k = 0; k < out.probs.size(); ++k) {
    auto& row = out.probs[k];
    double total = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const std::uint64_t u = SplitMix64::mix(h ^ (k * 1315423911ull) ^ (j + 17));
      const double noise = 2.0 * (static_cast<double>(u >> 11) * 0x1.0p-53) - 1.0;
      row[j] *= std::exp(noise_scale_ * noise);
      total += row[j];
    }
    for (double& p : row) p /= total;
  }
  (void)t;
  return out;
}

RatioTable ratios_from_output(const MaskingSchedule& schedule, double t,
                              const DenoiserOutput& output) {
  RatioTable table;
  table.sites = output.sites;
  table.values.reserve(output.probs.size());
  for (const auto& row : output.probs)
    table.values.push_back(score_from_denoiser(schedule, t, row));
  return table;
}

RatioTable denoiser_ratios(const Denoiser& denoiser, const MaskingSchedule& schedule,
                           double t, const SequenceState& state) {
  return ratios_from_output(schedule, t, denoiser.posterior(state, t));
}

}  // namespace maskdiff
