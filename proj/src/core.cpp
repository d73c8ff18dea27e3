#include "maskdiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace maskdiff {

SequenceState all_mask_state(const Vocabulary& vocab, int dim) {
  return SequenceState{std::vector<int>(static_cast<std::size_t>(dim), vocab.mask_id())};
}

std::vector<int> masked_positions(const SequenceState& state, const Vocabulary& vocab) {
  std::vector<int> out;
  for (int k = 0; k < state.dim(); ++k) {
    if (state.tokens[k] == vocab.mask_id()) out.push_back(k);
  }
  return out;
}

bool fully_unmasked(const SequenceState& state, const Vocabulary& vocab) {
  return std::none_of(state.tokens.begin(), state.tokens.end(),
                      [&](int tok) { return tok == vocab.mask_id(); });
}

void validate_state(const SequenceState& state, const Vocabulary& vocab) {
  if (state.dim() < 1) throw std::invalid_argument("state must have dim >= 1");
  for (int tok : state.tokens) {
    if (tok < 0 || tok > vocab.mask_id())
      throw std::invalid_argument("token id outside [0, mask_id]");
  }
}

MaskingSchedule::MaskingSchedule(std::string name, Fn alpha, Fn dalpha, double t_min)
    : name_(std::move(name)), alpha_(std::move(alpha)), dalpha_(std::move(dalpha)),
      t_min_(t_min) {
  if (!(t_min > 0.0 && t_min < 0.5))
    throw std::invalid_argument("t_min must lie in (0, 0.5)");
}

MaskingSchedule MaskingSchedule::linear(double t_min) {
  return MaskingSchedule(
      "linear", [](double t) { return 1.0 - t; }, [](double) { return -1.0; }, t_min);
}

MaskingSchedule MaskingSchedule::cosine(double t_min) {
  constexpr double half_pi = 1.57079632679489661923;
  return MaskingSchedule(
      "cosine",
      [](double t) {
        const double c = std::cos(half_pi * t);
        return c * c;
      },
      [](double t) { return -half_pi * std::sin(2.0 * half_pi * t) * 1.0; }, t_min);
}

MaskingSchedule MaskingSchedule::by_name(const std::string& name, double t_min) {
  if (name == "linear") return linear(t_min);
  if (name == "cosine") return cosine(t_min);
  throw std::invalid_argument("unknown schedule: " + name);
}

double MaskingSchedule::alpha_ratio(double s, double t) const {
  if (s < t) throw std::domain_error("alpha_ratio requires t <= s");
  if (t < 0.0 || s > 1.0) throw std::domain_error("alpha_ratio times must lie in [0, 1]");
  if (s == t) return 1.0;
  return alpha_(s) / alpha_(t);
}

double MaskingSchedule::clamp_time(double t) const {
  return std::min(std::max(t, t_min_), 1.0 - t_min_);
}

StateSpace::StateSpace(Vocabulary vocab, int dim, std::uint64_t limit)
    : vocab_(vocab), dim_(dim) {
  if (dim < 1) throw std::invalid_argument("StateSpace dim must be >= 1");
  if (vocab.num_tokens < 1) throw std::invalid_argument("vocabulary must be non-empty");
  size_ = checked_pow(static_cast<std::uint64_t>(vocab.num_states()), dim, limit);
  strides_.resize(static_cast<std::size_t>(dim));
  std::uint64_t s = 1;
  for (int k = dim - 1; k >= 0; --k) {
    strides_[static_cast<std::size_t>(k)] = s;
    s *= static_cast<std::uint64_t>(vocab.num_states());
  }
}

SequenceState StateSpace::state_at(std::uint64_t index) const {
  if (index >= size_) throw std::out_of_range("state index out of range");
  SequenceState st;
  st.tokens.resize(static_cast<std::size_t>(dim_));
  const auto base = static_cast<std::uint64_t>(vocab_.num_states());
  for (int k = dim_ - 1; k >= 0; --k) {
    st.tokens[static_cast<std::size_t>(k)] = static_cast<int>(index % base);
    index /= base;
  }
  return st;
}

std::uint64_t StateSpace::index_of(const SequenceState& state) const {
  if (state.dim() != dim_) throw std::invalid_argument("state dim mismatch");
  std::uint64_t idx = 0;
  for (int k = 0; k < dim_; ++k) {
    const int tok = state.tokens[static_cast<std::size_t>(k)];
    if (tok < 0 || tok > vocab_.mask_id())
      throw std::invalid_argument("token id outside vocabulary");
    idx = idx * static_cast<std::uint64_t>(vocab_.num_states()) +
          static_cast<std::uint64_t>(tok);
  }
  return idx;
}

std::int64_t StateSpace::replace_delta(int site, int from, int to) const {
  return (static_cast<std::int64_t>(to) - static_cast<std::int64_t>(from)) *
         static_cast<std::int64_t>(strides_[static_cast<std::size_t>(site)]);
}

std::uint64_t data_index(const SequenceState& state, const Vocabulary& vocab) {
  std::uint64_t idx = 0;
  for (int tok : state.tokens) {
    if (tok < 0 || tok >= vocab.num_tokens)
      throw std::invalid_argument("data_index requires a fully unmasked state");
    idx = idx * static_cast<std::uint64_t>(vocab.num_tokens) +
          static_cast<std::uint64_t>(tok);
  }
  return idx;
}

SequenceState data_state(std::uint64_t index, const Vocabulary& vocab, int dim) {
  SequenceState st;
  st.tokens.resize(static_cast<std::size_t>(dim));
  const auto base = static_cast<std::uint64_t>(vocab.num_tokens);
  for (int k = dim - 1; k >= 0; --k) {
    st.tokens[static_cast<std::size_t>(k)] = static_cast<int>(index % base);
    index /= base;
  }
  return st;
}

std::uint64_t checked_pow(std::uint64_t base, int exp, std::uint64_t limit) {
  std::uint64_t out = 1;
  for (int i = 0; i < exp; ++i) {
    if (out > limit / base)
      throw CapacityError("state space exceeds enumeration limit");
    out *= base;
  }
  if (out > limit) throw CapacityError("state space exceeds enumeration limit");
  return out;
}

}  // namespace maskdiff
