#include "maskdiff/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "maskdiff/data_io.hpp"
#include "maskdiff/ising.hpp"
#include "maskdiff/oracle.hpp"
#include "maskdiff/smc.hpp"

namespace maskdiff {

namespace {

using nlohmann::json;

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object())
    throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

TabularDataDistribution parse_data(const json& spec, const std::string& where) {
  if (spec.is_object() && spec.contains("path")) {
    check_keys(spec, {"path"}, where);
    return load_data_distribution_file(spec.at("path").get<std::string>());
  }
  return load_data_distribution(spec);
}

RewardFn parse_reward(const json& spec, const Vocabulary& vocab, int dim) {
  check_keys(spec, {"type", "values", "token_values"}, "target.reward");
  const std::string type = spec.value("type", "separable");
  std::vector<std::vector<double>> values;
  if (spec.contains("token_values")) {
    const auto row = spec.at("token_values").get<std::vector<double>>();
    values.assign(static_cast<std::size_t>(dim), row);
  } else if (type == "separable") {
    values = spec.at("values").get<std::vector<std::vector<double>>>();
  } else {
    throw std::invalid_argument("config: unknown reward type '" + type + "'");
  }
  return separable_reward(std::move(values), vocab);
}

struct Problem {
  std::vector<TabularDataDistribution> data;
  TargetSpec target;
};

Problem parse_problem(const json& config) {
  Problem p;
  const json& tgt = config.at("target");
  check_keys(tgt, {"type", "beta", "betas", "reward", "beta_scale"}, "target");
  const std::string type = tgt.at("type").get<std::string>();
  if (type == "base") {
    p.target = TargetSpec::base();
  } else if (type == "anneal") {
    p.target = TargetSpec::anneal(tgt.at("beta").get<double>());
  } else if (type == "product") {
    p.target = TargetSpec::product();
  } else if (type == "geo_avg") {
    p.target = TargetSpec::geo_avg(tgt.at("betas").get<std::vector<double>>());
  } else if (type != "reward") {
    throw std::invalid_argument("config: unknown target type '" + type + "'");
  }

  if (type == "geo_avg") {
    for (const auto& f : config.at("factors")) p.data.push_back(parse_data(f, "factors"));
  } else {
    p.data.push_back(parse_data(config.at("data"), "data"));
    if (type == "product") p.data.push_back(parse_data(config.at("data2"), "data2"));
  }
  for (const auto& d : p.data)
    if (d.vocab().num_tokens != p.data[0].vocab().num_tokens ||
        d.dim() != p.data[0].dim())
      throw std::invalid_argument("config: factors must share V and d");

  if (type == "reward") {
    RewardFn fn = parse_reward(config.at("target").at("reward"),
                               p.data[0].vocab(), p.data[0].dim());
    p.target = TargetSpec::reward_tilt(
        linear_reward_tilt(std::move(fn), tgt.value("beta_scale", 1.0)));
  }
  if (static_cast<int>(p.data.size()) != p.target.num_factors())
    throw std::invalid_argument("config: target needs " +
                                std::to_string(p.target.num_factors()) + " factors");
  return p;
}

MaskingSchedule parse_schedule(const json& config) {
  return MaskingSchedule::by_name(config.value("schedule", "linear"),
                                  config.value("t_min", 1e-3));
}

ResamplingPolicy parse_policy(const json& config) {
  ResamplingPolicy policy;
  if (!config.contains("resampling")) return policy;
  const json& r = config.at("resampling");
  check_keys(r, {"scheme", "trigger", "ess_threshold", "freeze_tail"}, "resampling");
  const std::string scheme = r.value("scheme", "multinomial");
  if (scheme == "multinomial") policy.scheme = ResamplingPolicy::Scheme::kMultinomial;
  else if (scheme == "systematic") policy.scheme = ResamplingPolicy::Scheme::kSystematic;
  else throw std::invalid_argument("config: unknown resampling scheme '" + scheme + "'");
  const std::string trigger = r.value("trigger", "every_step");
  if (trigger == "every_step") policy.trigger = ResamplingPolicy::Trigger::kEveryStep;
  else if (trigger == "ess_below") policy.trigger = ResamplingPolicy::Trigger::kEssBelow;
  else if (trigger == "never") policy.trigger = ResamplingPolicy::Trigger::kNever;
  else throw std::invalid_argument("config: unknown resampling trigger '" + trigger + "'");
  policy.ess_threshold = r.value("ess_threshold", 0.5);
  if (!(policy.ess_threshold > 0.0 && policy.ess_threshold <= 1.0))
    throw std::invalid_argument("config: ess_threshold must lie in (0, 1]");
  policy.freeze_tail = r.value("freeze_tail", 0.0);
  if (policy.freeze_tail < 0.0 || policy.freeze_tail > 1.0)
    throw std::invalid_argument("config: freeze_tail must lie in [0, 1]");
  return policy;
}

struct TokenProbStat {
  int position;
  int token;
};

std::vector<TokenProbStat> parse_statistics(const json& config, int dim,
                                            const Vocabulary& vocab) {
  std::vector<TokenProbStat> stats;
  if (!config.contains("statistics")) return stats;
  for (const auto& s : config.at("statistics")) {
    check_keys(s, {"type", "position", "token"}, "statistics");
    if (s.at("type").get<std::string>() != "token_prob")
      throw std::invalid_argument("config: unknown statistic type");
    TokenProbStat st{s.at("position").get<int>(), s.at("token").get<int>()};
    if (st.position < 0 || st.position >= dim || st.token < 0 ||
        st.token >= vocab.num_tokens)
      throw std::invalid_argument("config: statistic position/token out of range");
    stats.push_back(st);
  }
  return stats;
}

}  // namespace

int cmd_sample(const json& config, const CliOverrides& overrides, std::ostream& log) {
  Problem problem;
  MaskingSchedule schedule = MaskingSchedule::linear();
  RunConfig rc;
  std::vector<TokenProbStat> stats;
  std::filesystem::path out_dir;
  try {
    check_keys(config,
               {"task", "data", "data2", "factors", "target", "schedule", "t_min",
                "K", "n_steps", "seed", "resampling", "threads", "first_order",
                "statistics"},
               "config");
    if (config.value("task", "sample") != std::string("sample"))
      throw std::invalid_argument("config: task must be 'sample'");
    problem = parse_problem(config);
    schedule = parse_schedule(config);
    rc.K = config.value("K", 1024);
    rc.n_steps = config.value("n_steps", 200);
    rc.seed = overrides.seed.value_or(config.value("seed", std::uint64_t{1}));
    rc.policy = parse_policy(config);
    rc.engine.threads = overrides.threads.value_or(config.value("threads", 1));
    rc.engine.first_order = config.value("first_order", false);
    if (rc.K < 1 || rc.n_steps < 1)
      throw std::invalid_argument("config: K and n_steps must be >= 1");
    stats = parse_statistics(config, problem.data[0].dim(), problem.data[0].vocab());
    out_dir = overrides.out_dir;
    std::filesystem::create_directories(out_dir);
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::shared_ptr<const Denoiser>> denoisers;
    for (const auto& d : problem.data)
      denoisers.push_back(std::make_shared<TabularDenoiser>(d));
    const RunResult result = run(problem.target, denoisers, schedule, rc);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // samples.csv: particle, tokens..., log_weight
    std::ostringstream samples;
    samples << "particle";
    for (int k = 0; k < problem.data[0].dim(); ++k) samples << ",t" << k;
    samples << ",log_weight\n";
    for (int p = 0; p < rc.K; ++p) {
      samples << p;
      for (int tok : result.ensemble.particles[static_cast<std::size_t>(p)].tokens)
        samples << ',' << tok;
      samples << ',' << fmt(result.ensemble.log_weights[static_cast<std::size_t>(p)])
              << '\n';
    }
    atomic_write(out_dir / "samples.csv", samples.str());

    std::ostringstream trace;
    write_trace_csv(trace, result.trace);
    atomic_write(out_dir / "trace.csv", trace.str());

    json summary;
    summary["schema_version"] = 1;
    summary["task"] = "sample";
    summary["target"] = problem.target.kind_name();
    summary["K"] = rc.K;
    summary["n_steps"] = rc.n_steps;
    summary["seed"] = rc.seed;
    summary["terminal_ess"] = ess(result.ensemble.log_weights);
    summary["wall_time_s"] = wall;
    json stat_out = json::object();
    for (const auto& st : stats) {
      const double value = snis_estimate(
          result.ensemble, [&st](const SequenceState& x) {
            return x.tokens[static_cast<std::size_t>(st.position)] == st.token ? 1.0
                                                                               : 0.0;
          });
      stat_out["token_prob[position=" + std::to_string(st.position) +
               ",token=" + std::to_string(st.token) + "]"] = value;
    }
    summary["statistics"] = stat_out;
    atomic_write(out_dir / "summary.json", summary.dump(2) + "\n");
    log << "sample: wrote " << (out_dir / "samples.csv").string() << " ("
        << rc.K << " particles)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

int cmd_oracle(const json& config, const CliOverrides& overrides, std::ostream& log) {
  Problem problem;
  MaskingSchedule schedule = MaskingSchedule::linear();
  FkeOptions opts;
  double tolerance = 1e-3;
  std::filesystem::path out_dir;
  try {
    check_keys(config,
               {"task", "data", "data2", "factors", "target", "schedule", "t_min",
                "n_grid", "tolerance", "disable_weight_term"},
               "config");
    if (config.value("task", "oracle") != std::string("oracle"))
      throw std::invalid_argument("config: task must be 'oracle'");
    problem = parse_problem(config);
    schedule = parse_schedule(config);
    opts.n_grid = config.value("n_grid", 2000);
    opts.t_min = schedule.t_min();
    if (config.value("disable_weight_term", false)) opts.weight_scale = 0.0;
    tolerance = overrides.tolerance.value_or(config.value("tolerance", 1e-3));
    out_dir = overrides.out_dir;
    std::filesystem::create_directories(out_dir);
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const FkeReport report =
        integrate_weighted_fke(problem.data, problem.target, schedule, opts);
    json out;
    out["target"] = problem.target.kind_name();
    out["grid"] = opts.n_grid;
    out["max_tv"] = report.max_tv;
    out["tolerance"] = tolerance;
    out["passed"] = report.max_tv <= tolerance;
    out["substeps"] = report.substeps;
    out["retries"] = report.retries;
    out["max_renorm_drift"] = report.max_renorm_drift;
    json trace = json::array();
    for (const auto& [tau, tv] : report.tv_trace) trace.push_back({tau, tv});
    out["tv_trace"] = trace;
    atomic_write(out_dir / "oracle_report.json", out.dump(2) + "\n");
    log << "oracle: target=" << problem.target.kind_name()
        << " max_tv=" << report.max_tv << " tolerance=" << tolerance << "\n";
    return report.max_tv <= tolerance ? kExitOk : kExitCheckFailed;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

int cmd_ising(const json& config, const CliOverrides& overrides, std::ostream& log) {
  AnnealExperimentConfig ac;
  std::filesystem::path out_dir;
  try {
    check_keys(config,
               {"task", "L", "beta", "J", "h", "beta_mult", "K", "n_steps",
                "replicates", "seed", "resampling", "threads", "reference",
                "enumeration_limit"},
               "config");
    if (config.value("task", "ising") != std::string("ising"))
      throw std::invalid_argument("config: task must be 'ising'");
    ac.data.model.L = config.at("L").get<int>();
    ac.data.beta = config.at("beta").get<double>();
    ac.data.model.coupling = config.value("J", 1.0);
    ac.data.model.field = config.value("h", 0.0);
    ac.beta_mult = config.value("beta_mult", 1.0);
    ac.K = config.value("K", 4096);
    ac.n_steps = config.value("n_steps", 200);
    ac.replicates = config.value("replicates", 1);
    ac.seed = overrides.seed.value_or(config.value("seed", std::uint64_t{1}));
    ac.policy = parse_policy(config);
    ac.engine.threads = overrides.threads.value_or(config.value("threads", 1));
    if (config.contains("reference")) {
      const json& ref = config.at("reference");
      check_keys(ref, {"n_samples", "burn_in", "thin"}, "reference");
      ac.reference_samples = ref.value("n_samples", 20000);
      ac.reference_burn_in = ref.value("burn_in", 2000);
      ac.reference_thin = ref.value("thin", 2);
    }
    const auto limit = config.value("enumeration_limit", kDefaultEnumerationLimit);
    checked_pow(2, ac.data.model.sites(), limit);  // capacity gate before any work
    out_dir = overrides.out_dir;
    std::filesystem::create_directories(out_dir);
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    const AnnealExperimentReport report = anneal_experiment(ac);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json out;
    out["schema_version"] = 1;
    out["task"] = "ising";
    out["L"] = ac.data.model.L;
    out["beta_data"] = report.beta_data;
    out["beta_target"] = report.beta_target;
    out["replicates"] = ac.replicates;
    out["K"] = ac.K;
    out["n_steps"] = ac.n_steps;
    out["seed"] = ac.seed;
    out["wall_time_s"] = wall;
    out["exact"] = {{"mean_energy", report.exact.mean_energy},
                    {"mean_abs_magnetization", report.exact.mean_abs_magnetization},
                    {"correlation", report.exact.correlation}};
    out["anneal"] = {{"mean_energy", report.mean_energy},
                     {"se_energy", report.se_energy},
                     {"mean_abs_magnetization", report.mean_abs_magnetization},
                     {"se_abs_magnetization", report.se_abs_magnetization},
                     {"correlation", report.correlation},
                     {"corr_mse", report.corr_mse},
                     {"terminal_ess", report.terminal_ess}};
    out["base_at_target"] = {{"mean_energy", report.base_mean_energy},
                             {"mean_abs_magnetization",
                              report.base_mean_abs_magnetization},
                             {"corr_mse", report.base_corr_mse}};
    out["w2"] = {{"energy_vs_exact", report.w2_energy_vs_exact},
                 {"magnetization_vs_exact", report.w2_magnetization_vs_exact},
                 {"energy_vs_sw", report.w2_energy_vs_sw},
                 {"magnetization_vs_sw", report.w2_magnetization_vs_sw}};
    const double dev_e = std::abs(report.mean_energy - report.exact.mean_energy);
    const double dev_m = std::abs(report.mean_abs_magnetization -
                                  report.exact.mean_abs_magnetization);
    out["three_sigma"] = {
        {"energy_dev", dev_e},
        {"energy_bound", 3.0 * report.se_energy},
        {"energy_ok", ac.replicates < 2 ? json() : json(dev_e <= 3.0 * report.se_energy)},
        {"magnetization_dev", dev_m},
        {"magnetization_bound", 3.0 * report.se_abs_magnetization},
        {"magnetization_ok",
         ac.replicates < 2 ? json() : json(dev_m <= 3.0 * report.se_abs_magnetization)}};
    atomic_write(out_dir / "metrics.json", out.dump(2) + "\n");

    std::ostringstream samples;
    samples << "config_hash,energy,magnetization,weight\n";
    for (std::size_t i = 0; i < report.sample_hashes.size(); ++i) {
      char buf[120];
      std::snprintf(buf, sizeof(buf), "%016llx,%.17g,%.17g,%.17g\n",
                    static_cast<unsigned long long>(report.sample_hashes[i]),
                    report.sample_energies[i], report.sample_magnetizations[i],
                    report.sample_weights[i]);
      samples << buf;
    }
    atomic_write(out_dir / "samples.csv", samples.str());
    log << "ising: beta " << report.beta_data << " -> " << report.beta_target
        << ", mean energy " << report.mean_energy << " (exact "
        << report.exact.mean_energy << ")\n";
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

namespace {

struct CheckTable {
  std::ostream& log;
  bool all_ok = true;

  void row(const std::string& name, bool ok, const std::string& detail) {
    log << (ok ? "[ ok ] " : "[FAIL] ") << name;
    if (!detail.empty()) log << " (" << detail << ")";
    log << "\n";
    all_ok = all_ok && ok;
  }
};

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// max relative deviation between two corrected steps (rates and g)
double step_deviation(const CorrectedStep& a, const CorrectedStep& b) {
  double dev = rel_err(a.g, b.g);
  for (std::size_t k = 0; k < a.rates.rates.size(); ++k)
    for (std::size_t j = 0; j < a.rates.rates[k].size(); ++j)
      dev = std::max(dev, rel_err(a.rates.rates[k][j], b.rates.rates[k][j]));
  return dev;
}

}  // namespace

int cmd_selfcheck(bool inject_g_sign_flip, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckTable table{log};
  const MaskingSchedule schedule = MaskingSchedule::linear();
  SplitMix64 rng(20240901);

  // reduction identities on random inputs
  {
    const Vocabulary vocab{3};
    double dev = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
      const int d = 1 + static_cast<int>(rng.below(4));
      SequenceState state{std::vector<int>(static_cast<std::size_t>(d), 0)};
      bool any_mask = false;
      for (int k = 0; k < d; ++k) {
        const int tok = static_cast<int>(rng.below(4));
        state.tokens[static_cast<std::size_t>(k)] = tok;
        any_mask = any_mask || tok == vocab.mask_id();
      }
      if (!any_mask) state.tokens[0] = vocab.mask_id();
      const double t = 0.05 + 0.9 * rng.uniform();
      RatioTable ratios;
      ratios.sites = masked_positions(state, vocab);
      for (std::size_t k = 0; k < ratios.sites.size(); ++k) {
        std::vector<double> row(3);
        for (double& v : row) v = 0.01 + 2.0 * rng.uniform();
        ratios.values.push_back(row);
      }
      const auto base = base_step(schedule, t, state, ratios, vocab);
      dev = std::max(dev, step_deviation(anneal_step(schedule, t, state, ratios, 1.0,
                                                     vocab), base));
      dev = std::max(dev, step_deviation(
          product_step(schedule, t, state, ratios, ratios, vocab),
          anneal_step(schedule, t, state, ratios, 2.0, vocab)));
      dev = std::max(dev, step_deviation(
          geo_avg_step(schedule, t, state, {ratios}, {1.0}, vocab), base));
      const RewardFn zero = [](const SequenceState&) { return 0.0; };
      dev = std::max(dev, step_deviation(
          reward_step(schedule, t, state, ratios, zero, 0.7, 0.0, vocab), base));
    }
    table.row("reduction identities", dev <= 1e-12, "max rel err " + fmt(dev));
  }

  // score reconstruction equals exact marginal ratios
  {
    const Vocabulary vocab{2};
    StateSpace space(vocab, 2);
    std::vector<double> p0{0.35, 0.25, 0.15, 0.25};
    TabularDataDistribution data(vocab, 2, p0);
    TabularDenoiser denoiser(data);
    double dev = 0.0;
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const auto joint = exact_marginals(data, schedule, t, space);
      for (std::uint64_t i = 0; i < space.size(); ++i) {
        const SequenceState x = space.state_at(i);
        if (fully_unmasked(x, vocab)) continue;
        const RatioTable ratios = denoiser_ratios(denoiser, schedule, t, x);
        for (std::size_t k = 0; k < ratios.sites.size(); ++k) {
          for (int j = 0; j < vocab.num_tokens; ++j) {
            const std::uint64_t to = static_cast<std::uint64_t>(
                static_cast<std::int64_t>(i) +
                space.replace_delta(ratios.sites[k], vocab.mask_id(), j));
            const double direct = joint[to] / joint[i];
            dev = std::max(dev,
                           std::abs(direct - ratios.values[k][static_cast<std::size_t>(j)]));
          }
        }
      }
    }
    table.row("score reconstruction", dev <= 1e-10, "max abs err " + fmt(dev));
  }

  // master-equation checks for every corrector
  {
    const Vocabulary vocab{2};
    std::vector<double> p1{0.31, 0.27, 0.2, 0.22};
    std::vector<double> p2{0.12, 0.4, 0.18, 0.3};
    TabularDataDistribution d1(vocab, 2, p1), d2(vocab, 2, p2);
    FkeOptions opts;
    opts.n_grid = 400;
    opts.weight_scale = inject_g_sign_flip ? -1.0 : 1.0;
    const std::vector<std::vector<double>> reward_values{{0.9, 0.2}, {0.1, 0.6}};
    const std::vector<std::pair<std::string, std::pair<TargetSpec,
                                                       std::vector<TabularDataDistribution>>>>
        cases{
            {"anneal beta=0.5", {TargetSpec::anneal(0.5), {d1}}},
            {"anneal beta=2", {TargetSpec::anneal(2.0), {d1}}},
            {"product", {TargetSpec::product(), {d1, d2}}},
            {"geo_avg (0.3,0.7)", {TargetSpec::geo_avg({0.3, 0.7}), {d1, d2}}},
            {"reward linear tilt",
             {TargetSpec::reward_tilt(
                  linear_reward_tilt(separable_reward(reward_values, vocab))),
              {d1}}},
        };
    for (const auto& [name, c] : cases) {
      const FkeReport report = integrate_weighted_fke(c.second, c.first, schedule, opts);
      table.row("master equation: " + name, report.max_tv <= 1e-3,
                "max TV " + fmt(report.max_tv));
    }
    // negative control: dropping the weight term must break annealing
    FkeOptions off = opts;
    off.weight_scale = 0.0;
    const FkeReport nc =
        integrate_weighted_fke({d1}, TargetSpec::anneal(2.0), schedule, off);
    table.row("negative control (weight term off fails)", nc.max_tv > 0.05,
              "max TV " + fmt(nc.max_tv));
  }

  // short end-to-end annealed run on the 1-d fixture
  {
    const Vocabulary vocab{2};
    TabularDataDistribution data(vocab, 1, {0.8, 0.2});
    RunConfig rc;
    rc.K = 2048;
    rc.n_steps = 100;
    rc.seed = 7;
    const RunResult res = run(TargetSpec::anneal(2.0),
                              {std::make_shared<TabularDenoiser>(data)}, schedule, rc);
    const auto w = normalized_weights(res.ensemble.log_weights);
    double p1 = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (res.ensemble.particles[i].tokens[0] == 1) p1 += w[i];
    const double tv = std::abs(p1 - 0.04 / 0.68);
    table.row("annealed sampling fixture", tv <= 0.05, "terminal dev " + fmt(tv));
  }

  // resampling sanity
  {
    SplitMix64 r2(3);
    const std::vector<double> equal(8, 1.0 / 8.0);
    const auto idx = resample_indices(r2, equal, 8,
                                      ResamplingPolicy::Scheme::kSystematic);
    bool identity = true;
    for (int i = 0; i < 8; ++i) identity = identity && idx[static_cast<std::size_t>(i)] == i;
    table.row("systematic resampling identity on equal weights", identity, "");
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log << (table.all_ok ? "selfcheck passed" : "selfcheck FAILED") << " in "
      << fmt(wall) << " s\n";
  return table.all_ok ? kExitOk : kExitCheckFailed;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"masked discrete-diffusion sampling with weighted SMC distribution "
               "controls"};
  app.require_subcommand(1);

  std::string config_path;
  CliOverrides overrides;
  std::uint64_t seed_flag = 0;
  int threads_flag = 0;
  double tolerance_flag = 0.0;
  bool inject_flip = false;

  auto add_common = [&](CLI::App* cmd, bool with_tolerance) {
    cmd->add_option("--config", config_path, "JSON experiment config")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", overrides.out_dir, "output directory (default .)");
    auto* seed_opt = cmd->add_option("--seed", seed_flag, "override config seed");
    seed_opt->each([&](const std::string&) { overrides.seed = seed_flag; });
    auto* thr_opt = cmd->add_option("--threads", threads_flag, "worker threads");
    thr_opt->each([&](const std::string&) { overrides.threads = threads_flag; });
    if (with_tolerance) {
      auto* tol_opt =
          cmd->add_option("--tolerance", tolerance_flag, "override max-TV tolerance");
      tol_opt->each([&](const std::string&) { overrides.tolerance = tolerance_flag; });
    }
  };

  CLI::App* sample = app.add_subcommand("sample", "weighted-SMC generation run; "
                                        "writes samples.csv, trace.csv, summary.json");
  add_common(sample, false);
  CLI::App* oracle = app.add_subcommand(
      "oracle", "master-equation check of the corrected process; writes "
                "oracle_report.json; exit 0 iff max TV <= tolerance");
  add_common(oracle, true);
  CLI::App* ising = app.add_subcommand(
      "ising", "lattice annealing experiment; writes metrics.json, samples.csv");
  add_common(ising, false);
  CLI::App* selfcheck =
      app.add_subcommand("selfcheck", "run the built-in fixture suite");
  selfcheck->add_flag("--inject-g-sign-flip", inject_flip,
                      "corrupt the weight term (must fail)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (selfcheck->parsed()) return cmd_selfcheck(inject_flip, std::cout);

  nlohmann::json config;
  try {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config: " + config_path);
    in >> config;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (sample->parsed()) return cmd_sample(config, overrides, std::cout);
  if (oracle->parsed()) return cmd_oracle(config, overrides, std::cout);
  if (ising->parsed()) return cmd_ising(config, overrides, std::cout);
  return kExitUsage;
}

}  // namespace maskdiff
