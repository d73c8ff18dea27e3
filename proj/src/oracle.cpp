#include "maskdiff/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace maskdiff {

namespace {

// Mass of data sequences consistent with each enumerated state, computed by
// summing out the first masked coordinate: states are enumerated so that
// every single-site demasking has a smaller index.
std::vector<double> evidence_masses(const TabularDataDistribution& data,
                                    const StateSpace& space) {
  const int V = space.vocab().num_tokens;
  const int mask = space.vocab().mask_id();
  std::vector<double> m(space.size(), 0.0);
  for (std::uint64_t i = 0; i < space.size(); ++i) {
    const SequenceState x = space.state_at(i);
    int first_masked = -1;
    for (int k = 0; k < x.dim(); ++k) {
      if (x.tokens[static_cast<std::size_t>(k)] == mask) {
        first_masked = k;
        break;
      }
    }
    if (first_masked < 0) {
      m[i] = data.prob(data_index(x, space.vocab()));
      continue;
    }
    double s = 0.0;
    for (int j = 0; j < V; ++j)
      s += m[static_cast<std::uint64_t>(
          static_cast<std::int64_t>(i) + space.replace_delta(first_masked, mask, j))];
    m[i] = s;
  }
  return m;
}

std::vector<int> mask_counts(const StateSpace& space) {
  std::vector<int> out(space.size(), 0);
  const int mask = space.vocab().mask_id();
  for (std::uint64_t i = 0; i < space.size(); ++i) {
    const SequenceState x = space.state_at(i);
    out[i] = static_cast<int>(std::count(x.tokens.begin(), x.tokens.end(), mask));
  }
  return out;
}

std::vector<double> marginals_from_masses(const std::vector<double>& masses,
                                          const std::vector<int>& nmask,
                                          const MaskingSchedule& schedule, double t,
                                          int dim) {
  const double a = schedule.alpha(t);
  std::vector<double> p(masses.size());
  for (std::size_t i = 0; i < masses.size(); ++i)
    p[i] = std::pow(1.0 - a, nmask[i]) * std::pow(a, dim - nmask[i]) * masses[i];
  return p;
}

std::vector<double> reward_values(const TargetSpec& target, const StateSpace& space) {
  std::vector<double> r(space.size(), 0.0);
  for (std::uint64_t i = 0; i < space.size(); ++i) {
    r[i] = target.reward->reward(space.state_at(i));
    if (!std::isfinite(r[i]))
      throw std::domain_error("reward is not finite on an enumerated state");
  }
  return r;
}

std::vector<double> target_from_marginals(const std::vector<std::vector<double>>& ps,
                                          const TargetSpec& target, double t,
                                          const std::vector<double>* rvals) {
  std::vector<double> q(ps[0].size());
  switch (target.kind) {
    case TargetSpec::Kind::kBase:
      q = ps[0];
      break;
    case TargetSpec::Kind::kAnneal:
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::pow(ps[0][i], target.beta);
      break;
    case TargetSpec::Kind::kProduct:
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = ps[0][i] * ps[1][i];
      break;
    case TargetSpec::Kind::kGeoAvg:
      for (std::size_t i = 0; i < q.size(); ++i) {
        double v = 1.0;
        for (std::size_t n = 0; n < ps.size(); ++n)
          v *= std::pow(ps[n][i], target.geo_betas[n]);
        q[i] = v;
      }
      break;
    case TargetSpec::Kind::kReward: {
      const double beta = target.reward->beta(1.0 - t);
      for (std::size_t i = 0; i < q.size(); ++i)
        q[i] = ps[0][i] * std::exp(beta * (*rvals)[i]);
      break;
    }
  }
  double z = 0.0;
  for (double v : q) z += v;
  if (!(z > 0.0)) throw DegeneracyError("target distribution has zero normalizer");
  for (double& v : q) v /= z;
  return q;
}

// Time-dependent corrected generator evaluation on the joint space.
struct JointSystem {
  const StateSpace& space;
  const MaskingSchedule& schedule;
  const TargetSpec& target;
  std::vector<std::vector<double>> masses;  // one table per factor
  std::vector<int> nmask;
  std::vector<double> rvals;                // reward per state (reward targets)
  // per state: masked sites and, per (site, token), the destination index
  std::vector<std::vector<int>> sites;
  std::vector<std::vector<std::uint32_t>> dests;  // flattened site-major, token-minor

  // dq = L q + weight_scale * q (g - E_q g); also reports the stiffness bound.
  void rhs(const std::vector<double>& q, double tau, double weight_scale,
           std::vector<double>& dq, double* stiffness) const {
    const double t = 1.0 - tau;
    const double alpha = schedule.alpha(t);
    const double dalpha = schedule.dalpha(t);
    const double a = dalpha / alpha;            // negative
    const double fac = alpha / (1.0 - alpha);   // ratio prefactor
    const int V = space.vocab().num_tokens;
    const double beta_tau = target.kind == TargetSpec::Kind::kReward
                                ? target.reward->beta(tau) : 0.0;
    const double dbeta_tau = target.kind == TargetSpec::Kind::kReward
                                 ? target.reward->dbeta(tau) : 0.0;

    const std::size_t n = q.size();
    dq.assign(n, 0.0);
    double qsum = 0.0, gq = 0.0, lam_max = 0.0;
    std::vector<double> g(n, 0.0);
    std::vector<double> out_haz(n, 0.0);
    std::vector<double> rbuf(static_cast<std::size_t>(target.num_factors()));

    for (std::size_t i = 0; i < n; ++i) {
      if (masses[0][i] <= 0.0) continue;
      double gi = 0.0;
      const auto& st = sites[i];
      const auto& dst = dests[i];
      for (std::size_t s = 0; s < st.size(); ++s) {
        for (int j = 0; j < V; ++j) {
          const std::uint32_t to = dst[s * static_cast<std::size_t>(V) +
                                       static_cast<std::size_t>(j)];
          for (std::size_t f = 0; f < masses.size(); ++f)
            rbuf[f] = fac * masses[f][to] / masses[f][i];
          double rate = 0.0;
          switch (target.kind) {
            case TargetSpec::Kind::kBase:
              rate = -a * rbuf[0];
              break;
            case TargetSpec::Kind::kAnneal: {
              const double rb = std::pow(rbuf[0], target.beta);
              rate = -target.beta * a * rb;
              gi += target.beta * a * (rbuf[0] - rb);
              break;
            }
            case TargetSpec::Kind::kProduct:
              rate = -2.0 * a * rbuf[0] * rbuf[1];
              gi += a * (rbuf[0] + rbuf[1] - 2.0 * rbuf[0] * rbuf[1]);
              break;
            case TargetSpec::Kind::kGeoAvg: {
              double geo = 1.0, arith = 0.0;
              for (std::size_t f = 0; f < rbuf.size(); ++f) {
                geo *= std::pow(rbuf[f], target.geo_betas[f]);
                arith += target.geo_betas[f] * rbuf[f];
              }
              rate = -a * geo;
              gi += a * (arith - geo);
              break;
            }
            case TargetSpec::Kind::kReward: {
              const double tilt = std::exp(beta_tau * (rvals[to] - rvals[i]));
              rate = -a * rbuf[0] * tilt;
              gi += a * rbuf[0] * (1.0 - tilt);
              break;
            }
          }
          dq[to] += rate * q[i];
          dq[i] -= rate * q[i];
          out_haz[i] += rate;
        }
      }
      if (target.kind == TargetSpec::Kind::kReward) gi += dbeta_tau * rvals[i];
      g[i] = gi;
      qsum += q[i];
      gq += q[i] * gi;
      lam_max = std::max(lam_max, out_haz[i] + std::abs(weight_scale) * std::abs(gi));
    }
    if (weight_scale != 0.0 && qsum > 0.0) {
      const double gbar = gq / qsum;
      for (std::size_t i = 0; i < n; ++i)
        dq[i] += weight_scale * q[i] * (g[i] - gbar);
    }
    if (stiffness) *stiffness = std::max(lam_max, 1.0);
  }
};

}  // namespace

std::vector<double> exact_marginals(const TabularDataDistribution& data,
                                    const MaskingSchedule& schedule, double t,
                                    const StateSpace& space) {
  if (t < 0.0 || t > 1.0) throw std::domain_error("time must lie in [0, 1]");
  const auto masses = evidence_masses(data, space);
  const auto nmask = mask_counts(space);
  return marginals_from_masses(masses, nmask, schedule, t, space.dim());
}

std::vector<double> target_distribution(const std::vector<TabularDataDistribution>& data,
                                        const TargetSpec& target,
                                        const MaskingSchedule& schedule, double t,
                                        const StateSpace& space) {
  target.validate();
  if (static_cast<int>(data.size()) != target.num_factors())
    throw std::invalid_argument("target requires " +
                                std::to_string(target.num_factors()) +
                                " data distributions");
  const auto nmask = mask_counts(space);
  std::vector<std::vector<double>> ps;
  ps.reserve(data.size());
  for (const auto& d : data) {
    const auto masses = evidence_masses(d, space);
    ps.push_back(marginals_from_masses(masses, nmask, schedule, t, space.dim()));
  }
  std::vector<double> rvals;
  if (target.kind == TargetSpec::Kind::kReward) rvals = reward_values(target, space);
  return target_from_marginals(ps, target, t,
                               target.kind == TargetSpec::Kind::kReward ? &rvals : nullptr);
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double wasserstein2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein2_1d: empty input");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(a.size()));
  }
  // unequal counts: evaluate both empirical quantile functions on a midpoint grid
  const std::size_t n = std::max(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double qa = a[std::min(a.size() - 1,
                                 static_cast<std::size_t>(u * static_cast<double>(a.size())))];
    const double qb = b[std::min(b.size() - 1,
                                 static_cast<std::size_t>(u * static_cast<double>(b.size())))];
    s += (qa - qb) * (qa - qb);
  }
  return std::sqrt(s / static_cast<double>(n));
}

FkeReport integrate_weighted_fke(const std::vector<TabularDataDistribution>& data,
                                 const TargetSpec& target,
                                 const MaskingSchedule& schedule,
                                 const FkeOptions& opts) {
  target.validate();
  if (data.empty() || static_cast<int>(data.size()) != target.num_factors())
    throw std::invalid_argument("target requires " +
                                std::to_string(target.num_factors()) +
                                " data distributions");
  if (opts.n_grid < 100) throw std::invalid_argument("n_grid must be >= 100");
  const Vocabulary vocab = data[0].vocab();
  const int dim = data[0].dim();
  for (const auto& d : data)
    if (d.vocab().num_tokens != vocab.num_tokens || d.dim() != dim)
      throw std::invalid_argument("all factors must share vocabulary and dim");
  StateSpace space(vocab, dim, opts.enumeration_limit);

  JointSystem sys{space, schedule, target, {}, {}, {}, {}, {}};
  for (const auto& d : data) sys.masses.push_back(evidence_masses(d, space));
  sys.nmask = mask_counts(space);
  if (target.kind == TargetSpec::Kind::kReward) sys.rvals = reward_values(target, space);
  sys.sites.resize(space.size());
  sys.dests.resize(space.size());
  const int V = vocab.num_tokens;
  for (std::uint64_t i = 0; i < space.size(); ++i) {
    const SequenceState x = space.state_at(i);
    for (int k = 0; k < dim; ++k) {
      if (x.tokens[static_cast<std::size_t>(k)] != vocab.mask_id()) continue;
      sys.sites[i].push_back(k);
      for (int j = 0; j < V; ++j)
        sys.dests[i].push_back(static_cast<std::uint32_t>(
            static_cast<std::int64_t>(i) + space.replace_delta(k, vocab.mask_id(), j)));
    }
  }

  // initial condition: all-mask point mass, started just after tau = 0
  std::vector<double> q(space.size(), 0.0);
  q[space.index_of(all_mask_state(vocab, dim))] = 1.0;
  double tau = opts.tau_eps;

  const double horizon = 1.0 - opts.t_min;
  FkeReport report;
  std::vector<double> k1, k2, k3, k4, tmp;
  std::vector<double> rvals_target;

  for (int node = 1; node <= opts.n_grid; ++node) {
    const double tau_next = horizon * static_cast<double>(node) /
                            static_cast<double>(opts.n_grid);
    while (tau < tau_next - 1e-15) {
      double lam = 1.0;
      sys.rhs(q, tau, opts.weight_scale, k1, &lam);
      double h = std::min({opts.stab_safety / lam,
                           std::max(tau * opts.geo_frac, opts.tau_eps),
                           tau_next - tau});
      for (int attempt = 0;; ++attempt) {
        const std::size_t n = q.size();
        tmp.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = q[i] + 0.5 * h * k1[i];
        sys.rhs(tmp, tau + 0.5 * h, opts.weight_scale, k2, nullptr);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = q[i] + 0.5 * h * k2[i];
        sys.rhs(tmp, tau + 0.5 * h, opts.weight_scale, k3, nullptr);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = q[i] + h * k3[i];
        sys.rhs(tmp, tau + h, opts.weight_scale, k4, nullptr);
        for (std::size_t i = 0; i < n; ++i)
          tmp[i] = q[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        double sum = 0.0;
        bool bad = false;
        for (double v : tmp) {
          if (!std::isfinite(v)) { bad = true; break; }
          sum += v;
        }
        if (!bad && std::abs(sum - 1.0) < 0.5) {
          report.max_renorm_drift = std::max(report.max_renorm_drift,
                                             std::abs(sum - 1.0));
          for (std::size_t i = 0; i < n; ++i) q[i] = std::max(tmp[i], 0.0) /
                                                     (sum > 0.0 ? sum : 1.0);
          tau += h;
          ++report.substeps;
          break;
        }
        // instability: halve the substep and retry
        if (attempt > 60) throw std::runtime_error("weighted FKE integration unstable");
        h *= 0.5;
        ++report.retries;
      }
    }
    // compare against the brute-force target at this grid node
    const double t = 1.0 - tau_next;
    std::vector<std::vector<double>> ps;
    ps.reserve(sys.masses.size());
    for (const auto& m : sys.masses)
      ps.push_back(marginals_from_masses(m, sys.nmask, schedule, t, dim));
    const auto qt = target_from_marginals(
        ps, target, t, target.kind == TargetSpec::Kind::kReward ? &sys.rvals : nullptr);
    const double tv = tv_distance(q, qt);
    report.tv_trace.emplace_back(tau_next, tv);
    report.max_tv = std::max(report.max_tv, tv);
  }
  return report;
}

}  // namespace maskdiff
