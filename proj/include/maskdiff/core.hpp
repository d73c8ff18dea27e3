#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskdiff {

// Enumeration request exceeds the configured state budget.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conditioning on evidence with zero probability under the data distribution.
struct EvidenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ensemble weights have fully degenerated (all zero / -inf).
struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultEnumerationLimit = std::uint64_t{1} << 20;

// Token alphabet {0..V-1} plus the reserved mask state, which is always the
// largest token id V.
struct Vocabulary {
  int num_tokens = 0;

  int mask_id() const { return num_tokens; }
  int num_states() const { return num_tokens + 1; }
};

// A length-d token sequence; entries lie in [0, mask_id].
struct SequenceState {
  std::vector<int> tokens;

  int dim() const { return static_cast<int>(tokens.size()); }
  bool operator==(const SequenceState&) const = default;
};

SequenceState all_mask_state(const Vocabulary& vocab, int dim);
std::vector<int> masked_positions(const SequenceState& state, const Vocabulary& vocab);
bool fully_unmasked(const SequenceState& state, const Vocabulary& vocab);
void validate_state(const SequenceState& state, const Vocabulary& vocab);

// Noise schedule alpha_t with alpha_0 = 1, strictly decreasing, alpha_1 -> 0.
// Times are clamped to [t_min, 1 - t_min] during simulation because both
// 1/alpha_t and 1/(1 - alpha_t) diverge at the interval endpoints.
class MaskingSchedule {
 public:
  using Fn = std::function<double(double)>;

  MaskingSchedule(std::string name, Fn alpha, Fn dalpha, double t_min = 1e-3);

  static MaskingSchedule linear(double t_min = 1e-3);
  static MaskingSchedule cosine(double t_min = 1e-3);
  static MaskingSchedule by_name(const std::string& name, double t_min = 1e-3);

  double alpha(double t) const { return alpha_(t); }
  double dalpha(double t) const { return dalpha_(t); }

  // alpha_s / alpha_t for 0 <= t <= s <= 1.
  double alpha_ratio(double s, double t) const;

  double t_min() const { return t_min_; }
  double clamp_time(double t) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  Fn alpha_;
  Fn dalpha_;
  double t_min_;
};

// Lexicographic enumeration of all (V+1)^d states, mask included; index 0 is
// the all-zeros sequence and the first coordinate is the most significant
// digit.
class StateSpace {
 public:
  StateSpace(Vocabulary vocab, int dim,
             std::uint64_t limit = kDefaultEnumerationLimit);

  std::uint64_t size() const { return size_; }
  const Vocabulary& vocab() const { return vocab_; }
  int dim() const { return dim_; }

  SequenceState state_at(std::uint64_t index) const;
  std::uint64_t index_of(const SequenceState& state) const;
  // Index shift when coordinate `site` changes from `from` to `to`.
  std::int64_t replace_delta(int site, int from, int to) const;
  std::uint64_t stride(int site) const { return strides_[site]; }

 private:
  Vocabulary vocab_;
  int dim_;
  std::uint64_t size_;
  std::vector<std::uint64_t> strides_;
};

// Base-V indexing of fully unmasked sequences (the support of a data
// distribution).
std::uint64_t data_index(const SequenceState& state, const Vocabulary& vocab);
SequenceState data_state(std::uint64_t index, const Vocabulary& vocab, int dim);
std::uint64_t checked_pow(std::uint64_t base, int exp, std::uint64_t limit);

}  // namespace maskdiff
