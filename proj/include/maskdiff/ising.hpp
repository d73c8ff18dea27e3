#pragma once

#include <cstdint>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/denoiser.hpp"
#include "maskdiff/rng.hpp"
#include "maskdiff/smc.hpp"

namespace maskdiff {

// Periodic L x L lattice; spins {-1,+1} are encoded as tokens {0,1} and the
// mask token never appears in data. The energy sums unordered nearest-
// neighbor pairs (2 L^2 bonds).
struct IsingModel {
  int L = 2;
  double coupling = 1.0;  // J
  double field = 0.0;     // h

  int sites() const { return L * L; }
};

struct BoltzmannSpec {
  IsingModel model;
  double beta = 1.0;
};

double ising_energy(const IsingModel& model, const SequenceState& config);
double ising_magnetization(const SequenceState& config);  // |mean spin|

// Exact Boltzmann distribution by enumeration of all 2^{L^2} configurations.
TabularDataDistribution exact_boltzmann(const BoltzmannSpec& spec,
                                        std::uint64_t limit = kDefaultEnumerationLimit);

// Heat-bath single-spin update: a uniformly chosen spin is set to +1 with
// probability 1 / (1 + exp(-2 beta (J * neighbor_sum + h))).
void glauber_step(SplitMix64& rng, const BoltzmannSpec& spec, SequenceState& config);

// Bond freezing probability between aligned neighbors, 1 - exp(-2 beta J).
double sw_bond_probability(const BoltzmannSpec& spec);

// Cluster update: freeze bonds between aligned neighbors, flip each connected
// cluster with probability 1/2. Requires J > 0.
void swendsen_wang_step(SplitMix64& rng, const BoltzmannSpec& spec,
                        SequenceState& config);

struct Observables {
  std::vector<double> energies;
  std::vector<double> magnetizations;     // |mean spin| per config
  std::vector<double> correlation;        // weighted C(r), r = 1..L/2, along rows
};

// Per-config energy and |magnetization| plus the weighted spin-spin row
// correlation profile C(r) with periodic wrap. Weights default to uniform.
Observables compute_observables(const IsingModel& model,
                                const std::vector<SequenceState>& configs,
                                const std::vector<double>* weights = nullptr);

struct IsingMoments {
  double mean_energy = 0.0;
  double mean_abs_magnetization = 0.0;
  std::vector<double> correlation;
};

// Exact observable moments under the Boltzmann distribution, by enumeration.
IsingMoments exact_moments(const BoltzmannSpec& spec,
                           std::uint64_t limit = kDefaultEnumerationLimit);

struct McmcChainConfig {
  int n_samples = 10000;
  int burn_in = 10000;
  int thin = 1;  // sampler steps between retained samples
  std::uint64_t seed = 1;
};

std::vector<SequenceState> run_swendsen_wang(const BoltzmannSpec& spec,
                                             const McmcChainConfig& config);
std::vector<SequenceState> run_glauber(const BoltzmannSpec& spec,
                                       const McmcChainConfig& config);

struct AnnealExperimentConfig {
  BoltzmannSpec data;              // distribution the denoiser is built from
  double beta_mult = 1.0;          // anneal exponent; target is beta * beta_mult
  int K = 4096;
  int n_steps = 200;
  int replicates = 1;
  std::uint64_t seed = 1;
  ResamplingPolicy policy;
  EngineOptions engine;
  int reference_samples = 20000;   // Swendsen-Wang reference chain at target beta
  int reference_burn_in = 2000;
  int reference_thin = 2;
};

struct AnnealExperimentReport {
  double beta_data = 0.0;
  double beta_target = 0.0;
  // exact enumeration at the target temperature
  IsingMoments exact;
  // annealed sampler, pooled over replicates
  double mean_energy = 0.0;
  double mean_abs_magnetization = 0.0;
  double se_energy = 0.0;            // standard error over replicate means
  double se_abs_magnetization = 0.0;
  std::vector<double> correlation;
  double corr_mse = 0.0;             // vs exact C(r)
  // direct (uncorrected) sampler built at the target temperature, same budget
  double base_mean_energy = 0.0;
  double base_mean_abs_magnetization = 0.0;
  double base_corr_mse = 0.0;
  // distances of the pooled annealed samples
  double w2_energy_vs_exact = 0.0;
  double w2_magnetization_vs_exact = 0.0;
  double w2_energy_vs_sw = 0.0;
  double w2_magnetization_vs_sw = 0.0;
  // per replicate
  std::vector<double> replicate_energy;
  std::vector<double> replicate_abs_magnetization;
  std::vector<double> terminal_ess;
  // pooled annealed samples (all replicates)
  std::vector<std::uint64_t> sample_hashes;
  std::vector<double> sample_energies;
  std::vector<double> sample_magnetizations;
  std::vector<double> sample_weights;
};

// Annealing experiment: exact tabular denoiser at beta_data, annealed run
// toward beta_data * beta_mult, compared against enumeration, a Swendsen-Wang
// reference chain, and a direct run at the target temperature.
AnnealExperimentReport anneal_experiment(const AnnealExperimentConfig& config);

// Samples whose empirical quantiles reproduce a discrete distribution of the
// given values: the exact quantile function evaluated at midpoints.
std::vector<double> quantile_samples(const std::vector<double>& values,
                                     const std::vector<double>& probs, int n);

}  // namespace maskdiff
