#include "maskdiff/ising.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "maskdiff/oracle.hpp"

namespace maskdiff {

namespace {

constexpr Vocabulary kSpinVocab{2};

inline int spin_of(int token) { return 2 * token - 1; }

void check_spin_config(const IsingModel& model, const SequenceState& config) {
  if (config.dim() != model.sites())
    throw std::invalid_argument("configuration size must be L^2");
  for (int tok : config.tokens)
    if (tok != 0 && tok != 1)
      throw std::invalid_argument("configuration contains a masked or invalid spin");
}

// right and down neighbor of each site; every unordered NN pair appears once
// per bond, 2 L^2 bonds total (pairs repeat on L = 2 by periodicity).
std::vector<std::pair<int, int>> bond_list(int L) {
  std::vector<std::pair<int, int>> bonds;
  bonds.reserve(static_cast<std::size_t>(2 * L * L));
  for (int r = 0; r < L; ++r) {
    for (int c = 0; c < L; ++c) {
      const int i = r * L + c;
      bonds.emplace_back(i, r * L + (c + 1) % L);
      bonds.emplace_back(i, ((r + 1) % L) * L + c);
    }
  }
  return bonds;
}

int neighbor_spin_sum(const IsingModel& model, const SequenceState& config, int site) {
  const int L = model.L;
  const int r = site / L, c = site % L;
  const auto spin = [&](int rr, int cc) {
    return spin_of(config.tokens[static_cast<std::size_t>(((rr + L) % L) * L +
                                                          (cc + L) % L)]);
  };
  return spin(r, c + 1) + spin(r, c - 1) + spin(r + 1, c) + spin(r - 1, c);
}

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(a)] = b;
  }
};

}  // namespace

double ising_energy(const IsingModel& model, const SequenceState& config) {
  check_spin_config(model, config);
  double e = 0.0;
  for (const auto& [i, j] : bond_list(model.L))
    e -= model.coupling * spin_of(config.tokens[static_cast<std::size_t>(i)]) *
         spin_of(config.tokens[static_cast<std::size_t>(j)]);
  for (int tok : config.tokens) e -= model.field * spin_of(tok);
  return e;
}

double ising_magnetization(const SequenceState& config) {
  double m = 0.0;
  for (int tok : config.tokens) m += spin_of(tok);
  return std::abs(m) / static_cast<double>(config.dim());
}

TabularDataDistribution exact_boltzmann(const BoltzmannSpec& spec,
                                        std::uint64_t limit) {
  if (!(spec.beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (spec.model.L < 2) throw std::invalid_argument("lattice side must be >= 2");
  const int d = spec.model.sites();
  const std::uint64_t n = checked_pow(2, d, limit);
  std::vector<double> logw(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < n; ++i) {
    const SequenceState cfg = data_state(i, kSpinVocab, d);
    logw[i] = -spec.beta * ising_energy(spec.model, cfg);
    mx = std::max(mx, logw[i]);
  }
  double z = 0.0;
  for (double& v : logw) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logw) v /= z;
  return TabularDataDistribution(kSpinVocab, d, std::move(logw));
}

void glauber_step(SplitMix64& rng, const BoltzmannSpec& spec, SequenceState& config) {
  check_spin_config(spec.model, config);
  const int site = static_cast<int>(rng.below(
      static_cast<std::uint64_t>(spec.model.sites())));
  const double local = spec.model.coupling *
                           static_cast<double>(neighbor_spin_sum(spec.model, config,
                                                                 site)) +
                       spec.model.field;
  const double p_up = 1.0 / (1.0 + std::exp(-2.0 * spec.beta * local));
  config.tokens[static_cast<std::size_t>(site)] = rng.uniform() < p_up ? 1 : 0;
}

double sw_bond_probability(const BoltzmannSpec& spec) {
  return -std::expm1(-2.0 * spec.beta * spec.model.coupling);
}

void swendsen_wang_step(SplitMix64& rng, const BoltzmannSpec& spec,
                        SequenceState& config) {
  if (!(spec.model.coupling > 0.0))
    throw std::invalid_argument("swendsen_wang_step supports J > 0 only");
  check_spin_config(spec.model, config);
  const double p_bond = sw_bond_probability(spec);
  UnionFind uf(spec.model.sites());
  for (const auto& [i, j] : bond_list(spec.model.L)) {
    if (config.tokens[static_cast<std::size_t>(i)] ==
            config.tokens[static_cast<std::size_t>(j)] &&
        rng.uniform() < p_bond)
      uf.unite(i, j);
  }
  // one coin per cluster root
  std::vector<int> flip(static_cast<std::size_t>(spec.model.sites()), -1);
  for (int s = 0; s < spec.model.sites(); ++s) {
    const int root = uf.find(s);
    if (flip[static_cast<std::size_t>(root)] < 0)
      flip[static_cast<std::size_t>(root)] = rng.uniform() < 0.5 ? 1 : 0;
    if (flip[static_cast<std::size_t>(root)] == 1)
      config.tokens[static_cast<std::size_t>(s)] ^= 1;
  }
}

Observables compute_observables(const IsingModel& model,
                                const std::vector<SequenceState>& configs,
                                const std::vector<double>* weights) {
  if (weights && weights->size() != configs.size())
    throw std::invalid_argument("weights must match configs");
  Observables out;
  out.energies.reserve(configs.size());
  out.magnetizations.reserve(configs.size());
  const int L = model.L;
  out.correlation.assign(static_cast<std::size_t>(L / 2), 0.0);
  double wtotal = 0.0;
  for (std::size_t s = 0; s < configs.size(); ++s) {
    const auto& cfg = configs[s];
    out.energies.push_back(ising_energy(model, cfg));
    out.magnetizations.push_back(ising_magnetization(cfg));
    const double w = weights ? (*weights)[s] : 1.0;
    wtotal += w;
    for (int r = 1; r <= L / 2; ++r) {
      double c = 0.0;
      for (int row = 0; row < L; ++row)
        for (int col = 0; col < L; ++col)
          c += spin_of(cfg.tokens[static_cast<std::size_t>(row * L + col)]) *
               spin_of(cfg.tokens[static_cast<std::size_t>(row * L + (col + r) % L)]);
      out.correlation[static_cast<std::size_t>(r - 1)] +=
          w * c / static_cast<double>(L * L);
    }
  }
  if (wtotal > 0.0)
    for (double& c : out.correlation) c /= wtotal;
  return out;
}

IsingMoments exact_moments(const BoltzmannSpec& spec, std::uint64_t limit) {
  const TabularDataDistribution dist = exact_boltzmann(spec, limit);
  const int d = spec.model.sites();
  IsingMoments m;
  m.correlation.assign(static_cast<std::size_t>(spec.model.L / 2), 0.0);
  const int L = spec.model.L;
  for (std::uint64_t i = 0; i < dist.probs().size(); ++i) {
    const double p = dist.prob(i);
    if (p == 0.0) continue;
    const SequenceState cfg = data_state(i, kSpinVocab, d);
    m.mean_energy += p * ising_energy(spec.model, cfg);
    m.mean_abs_magnetization += p * ising_magnetization(cfg);
    for (int r = 1; r <= L / 2; ++r) {
      double c = 0.0;
      for (int row = 0; row < L; ++row)
        for (int col = 0; col < L; ++col)
          c += spin_of(cfg.tokens[static_cast<std::size_t>(row * L + col)]) *
               spin_of(cfg.tokens[static_cast<std::size_t>(row * L + (col + r) % L)]);
      m.correlation[static_cast<std::size_t>(r - 1)] += p * c /
                                                        static_cast<double>(L * L);
    }
  }
  return m;
}

namespace {

template <typename StepFn>
std::vector<SequenceState> run_chain(const BoltzmannSpec& spec,
                                     const McmcChainConfig& config, StepFn step) {
  SplitMix64 rng = derive_stream(config.seed, 0x15193ull, 0);
  SequenceState cfg{std::vector<int>(static_cast<std::size_t>(spec.model.sites()), 0)};
  for (int& tok : cfg.tokens) tok = rng.uniform() < 0.5 ? 1 : 0;
  for (int i = 0; i < config.burn_in; ++i) step(rng, cfg);
  std::vector<SequenceState> out;
  out.reserve(static_cast<std::size_t>(config.n_samples));
  for (int s = 0; s < config.n_samples; ++s) {
    for (int i = 0; i < std::max(1, config.thin); ++i) step(rng, cfg);
    out.push_back(cfg);
  }
  return out;
}

}  // namespace

std::vector<SequenceState> run_swendsen_wang(const BoltzmannSpec& spec,
                                             const McmcChainConfig& config) {
  return run_chain(spec, config, [&spec](SplitMix64& rng, SequenceState& cfg) {
    swendsen_wang_step(rng, spec, cfg);
  });
}

std::vector<SequenceState> run_glauber(const BoltzmannSpec& spec,
                                       const McmcChainConfig& config) {
  return run_chain(spec, config, [&spec](SplitMix64& rng, SequenceState& cfg) {
    glauber_step(rng, spec, cfg);
  });
}

std::vector<double> quantile_samples(const std::vector<double>& values,
                                     const std::vector<double>& probs, int n) {
  if (values.size() != probs.size() || values.empty())
    throw std::invalid_argument("quantile_samples: bad inputs");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  std::size_t j = 0;
  double cum = probs[order[0]];
  for (int i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    while (u > cum && j + 1 < order.size()) {
      ++j;
      cum += probs[order[j]];
    }
    out.push_back(values[order[j]]);
  }
  return out;
}

AnnealExperimentReport anneal_experiment(const AnnealExperimentConfig& config) {
  if (config.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  const BoltzmannSpec target_spec{config.data.model,
                                  config.data.beta * config.beta_mult};
  AnnealExperimentReport report;
  report.beta_data = config.data.beta;
  report.beta_target = target_spec.beta;
  report.exact = exact_moments(target_spec);

  const auto data_dist = exact_boltzmann(config.data);
  const auto target_dist = exact_boltzmann(target_spec);
  const auto denoiser_data =
      std::make_shared<TabularDenoiser>(data_dist);
  const auto denoiser_target =
      std::make_shared<TabularDenoiser>(target_dist);
  const MaskingSchedule schedule = MaskingSchedule::linear();
  const IsingModel& model = config.data.model;

  std::vector<SequenceState> pooled;
  std::vector<double> pooled_weights;
  std::vector<SequenceState> base_pooled;

  const TargetSpec anneal_target = config.beta_mult == 1.0
                                       ? TargetSpec::base()
                                       : TargetSpec::anneal(config.beta_mult);
  for (int rep = 0; rep < config.replicates; ++rep) {
    RunConfig rc;
    rc.K = config.K;
    rc.n_steps = config.n_steps;
    rc.policy = config.policy;
    rc.seed = config.seed + static_cast<std::uint64_t>(rep);
    rc.engine = config.engine;
    const RunResult res = run(anneal_target, {denoiser_data}, schedule, rc);
    const auto w = normalized_weights(res.ensemble.log_weights);
    const Observables obs = compute_observables(model, res.ensemble.particles, &w);
    double e = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      e += w[i] * obs.energies[i];
      mag += w[i] * obs.magnetizations[i];
    }
    report.replicate_energy.push_back(e);
    report.replicate_abs_magnetization.push_back(mag);
    report.terminal_ess.push_back(ess(res.ensemble.log_weights));
    pooled.insert(pooled.end(), res.ensemble.particles.begin(),
                  res.ensemble.particles.end());
    for (double wi : w) pooled_weights.push_back(wi);

    // same-budget uncorrected run directly at the target temperature
    RunConfig bc = rc;
    bc.seed = config.seed + 0x517cc1b727220a95ull + static_cast<std::uint64_t>(rep);
    const RunResult base_res =
        run(TargetSpec::base(), {denoiser_target}, schedule, bc);
    base_pooled.insert(base_pooled.end(), base_res.ensemble.particles.begin(),
                       base_res.ensemble.particles.end());
  }
  for (double& wi : pooled_weights) wi /= static_cast<double>(config.replicates);

  const int R = config.replicates;
  report.mean_energy =
      std::accumulate(report.replicate_energy.begin(), report.replicate_energy.end(),
                      0.0) / R;
  report.mean_abs_magnetization =
      std::accumulate(report.replicate_abs_magnetization.begin(),
                      report.replicate_abs_magnetization.end(), 0.0) / R;
  auto stderr_of = [R](const std::vector<double>& xs, double mean) {
    if (R < 2) return 0.0;
    double v = 0.0;
    for (double x : xs) v += (x - mean) * (x - mean);
    return std::sqrt(v / (R - 1) / R);
  };
  report.se_energy = stderr_of(report.replicate_energy, report.mean_energy);
  report.se_abs_magnetization =
      stderr_of(report.replicate_abs_magnetization, report.mean_abs_magnetization);

  const Observables pooled_obs = compute_observables(model, pooled, &pooled_weights);
  report.sample_energies = pooled_obs.energies;
  report.sample_magnetizations = pooled_obs.magnetizations;
  report.sample_weights = pooled_weights;
  report.sample_hashes.reserve(pooled.size());
  for (const auto& cfg : pooled) {
    std::uint64_t h = 1469598103934665603ull;
    for (int tok : cfg.tokens) {
      h ^= static_cast<std::uint64_t>(tok) + 0x9e3779b9ull;
      h *= 1099511628211ull;
    }
    report.sample_hashes.push_back(h);
  }
  report.correlation = pooled_obs.correlation;
  double mse = 0.0;
  for (std::size_t r = 0; r < report.correlation.size(); ++r) {
    const double diff = report.correlation[r] - report.exact.correlation[r];
    mse += diff * diff;
  }
  report.corr_mse = mse / static_cast<double>(report.correlation.size());

  const Observables base_obs = compute_observables(model, base_pooled, nullptr);
  report.base_mean_energy =
      std::accumulate(base_obs.energies.begin(), base_obs.energies.end(), 0.0) /
      static_cast<double>(base_obs.energies.size());
  report.base_mean_abs_magnetization =
      std::accumulate(base_obs.magnetizations.begin(), base_obs.magnetizations.end(),
                      0.0) / static_cast<double>(base_obs.magnetizations.size());
  double base_mse = 0.0;
  for (std::size_t r = 0; r < base_obs.correlation.size(); ++r) {
    const double diff = base_obs.correlation[r] - report.exact.correlation[r];
    base_mse += diff * diff;
  }
  report.base_corr_mse = base_mse / static_cast<double>(base_obs.correlation.size());

  // distances of pooled annealed samples against exact quantiles and a
  // Swendsen-Wang reference chain at the target temperature
  std::vector<double> exact_energy_vals, exact_energy_probs;
  std::vector<double> exact_mag_vals, exact_mag_probs;
  {
    const int d = model.sites();
    for (std::uint64_t i = 0; i < target_dist.probs().size(); ++i) {
      const double p = target_dist.prob(i);
      const SequenceState cfg = data_state(i, kSpinVocab, d);
      exact_energy_vals.push_back(ising_energy(model, cfg));
      exact_energy_probs.push_back(p);
      exact_mag_vals.push_back(ising_magnetization(cfg));
      exact_mag_probs.push_back(p);
    }
  }
  // weighted empirical sample of the annealed runs via SNIS quantiles
  const int n_q = static_cast<int>(pooled.size());
  const auto anneal_energy =
      quantile_samples(pooled_obs.energies, pooled_weights, n_q);
  const auto anneal_mag =
      quantile_samples(pooled_obs.magnetizations, pooled_weights, n_q);
  report.w2_energy_vs_exact = wasserstein2_1d(
      anneal_energy, quantile_samples(exact_energy_vals, exact_energy_probs, n_q));
  report.w2_magnetization_vs_exact = wasserstein2_1d(
      anneal_mag, quantile_samples(exact_mag_vals, exact_mag_probs, n_q));

  McmcChainConfig mc;
  mc.n_samples = config.reference_samples;
  mc.burn_in = config.reference_burn_in;
  mc.thin = config.reference_thin;
  mc.seed = config.seed ^ 0xa076bdull;
  const auto sw = run_swendsen_wang(target_spec, mc);
  const Observables sw_obs = compute_observables(model, sw, nullptr);
  report.w2_energy_vs_sw = wasserstein2_1d(anneal_energy, sw_obs.energies);
  report.w2_magnetization_vs_sw = wasserstein2_1d(anneal_mag, sw_obs.magnetizations);
  return report;
}

}  // namespace maskdiff
