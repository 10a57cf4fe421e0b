#include "rebal/stochastic.hpp"

#include "rebal/transforms.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace rebal {

Vector perturbed_update(const Vector& reward, const Matrix& sampled, const Vector& delta, double gamma,
                        const FiberStructure& fs) {
  if (reward.size() != fs.m() || delta.size() != fs.n() || sampled.rows() != fs.m() || sampled.cols() != fs.n()) {
    throw Error(Errc::ShapeMismatch, "perturbed update dimensions do not match the fiber structure");
  }
  Vector out = reward + gamma * (sampled * delta);
  for (int j = 0; j < fs.m(); ++j) out[j] -= delta[fs.state_of(j)];
  return out;
}

Vector cross_model_value_shift(const Mdp& mdp, const Matrix& sampled, const Vector& delta, const Policy& policy) {
  const auto& fs = mdp.structure();
  const Matrix pi = policy.matrix(fs);
  const Matrix fp = pi * mdp.transitions();
  const Matrix fhp = pi * sampled;
  const Matrix a = Matrix::Identity(fs.n(), fs.n()) - mdp.gamma() * fp;
  const Vector correction = a.partialPivLu().solve(Vector(mdp.gamma() * ((fhp - fp) * delta)));
  return policy_evaluate(mdp, policy) - delta + correction;
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(a).singularValues()[0];
}

double deviation_bound(int n, double gamma, double model_error, const Vector& delta) {
  return model_error * std::sqrt(static_cast<double>(n)) * gamma / (1.0 - gamma) * delta.norm();
}

MartingaleTrace martingale_track(const Trajectory& trajectory, const Matrix& nominal, double gamma) {
  MartingaleTrace out;
  Vector m = Vector::Zero(nominal.rows());
  out.values.push_back(m);
  for (const auto& s : trajectory.steps) {
    const Matrix diff = s.transitions - nominal;
    out.mu_observed = std::max(out.mu_observed, inf_norm(diff));
    Vector inc = gamma * (diff * s.delta);
    m += inc;
    out.increments.push_back(std::move(inc));
    out.values.push_back(m);
  }
  return out;
}

ProbabilityBound probability_bound(double gamma, double alpha, double mu, double h0, double eps, BoundLaw law) {
  ProbabilityBound out;
  double c = 0.0;
  if (law == BoundLaw::Hmax) {
    alpha = gamma;
    out.eps_min = 2.0 * (1.0 + gamma) / (1.0 - alpha) * h0;
    c = (1.0 - alpha * alpha) / (2.0 * mu * mu * gamma * gamma);
  } else {
    out.eps_min = 2.0 * (1.0 + gamma) / ((1.0 - alpha) * (1.0 - gamma)) * h0;
    c = (1.0 - alpha * alpha) * (1.0 - gamma) * (1.0 - gamma) / (2.0 * mu * mu * gamma * gamma);
  }
  if (eps < out.eps_min) {
    out.below_threshold = true;
    out.probability = 1.0;
    return out;
  }
  if (h0 == 0.0 || mu == 0.0 || gamma == 0.0) {
    // Deterministic limit: no deviation beyond eps_min is possible.
    out.probability = eps > out.eps_min ? 0.0 : 1.0;
    return out;
  }
  const double gap = (eps - out.eps_min) / h0;
  out.probability = std::min(1.0, 2.0 * std::exp(-c * gap * gap));
  return out;
}

const char* to_string(LawKind law) {
  switch (law) {
    case LawKind::Ideal: return "ideal";
    case LawKind::OutputFeedback: return "output_feedback";
    case LawKind::Rbs: return "rbs";
    case LawKind::Mpc: return "mpc";
  }
  return "unknown";
}

LawKind parse_law(const std::string& name) {
  if (name == "ideal") return LawKind::Ideal;
  if (name == "output_feedback") return LawKind::OutputFeedback;
  if (name == "rbs") return LawKind::Rbs;
  if (name == "mpc") return LawKind::Mpc;
  throw Error(Errc::ParseError, "unknown law '" + name + "'");
}

double quantile(std::vector<double> data, double q) {
  if (data.empty()) return 0.0;
  std::sort(data.begin(), data.end());
  const double pos = q * static_cast<double>(data.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, data.size() - 1);
  return data[lo] + (pos - static_cast<double>(lo)) * (data[hi] - data[lo]);
}

namespace {

FeedbackLaw make_law(const Mdp& mdp, const ModelSampler& sampler, const McConfig& config, std::mt19937_64& rng) {
  const auto& fs = mdp.structure();
  switch (config.law) {
    case LawKind::Ideal:
      return [&mdp](const Vector& r, int) { return solve_optimal(mdp.with_rewards(r)).value; };
    case LawKind::OutputFeedback:
      return [&fs](const Vector& r, int) { return h_max(r, fs); };
    case LawKind::Rbs:
      return [&mdp](const Vector& r, int) { return law_rbs(mdp, r); };
    case LawKind::Mpc:
      return [&mdp, &sampler, &config, &rng](const Vector& r, int) {
        return mpc_step(r, mdp.structure(), mdp.gamma(), [&] { return sampler.sample(rng); }, config.mpc).delta;
      };
  }
  throw Error(Errc::ParseError, "unknown law");
}

ModelSource make_models(const Mdp& mdp, const ModelSampler& sampler, const McConfig& config,
                        std::mt19937_64& rng) {
  switch (config.model) {
    case ModelMode::Exact: return fixed_model(mdp.transitions());
    case ModelMode::FixedWrong: return fixed_model(config.wrong_model);
    case ModelMode::Sampled: return [&sampler, &rng](int) { return sampler.sample(rng); };
  }
  throw Error(Errc::ParseError, "unknown model mode");
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

McRun run_once(const Mdp& mdp, const Policy& optimal, const ModelSampler& sampler, const McConfig& config,
               std::uint64_t seed) {
  McRun run;
  try {
    std::mt19937_64 rng(seed);
    const FeedbackLaw law = make_law(mdp, sampler, config, rng);
    const ModelSource models = make_models(mdp, sampler, config, rng);
    const Trajectory traj =
        rollout(mdp.rewards(), mdp.structure(), mdp.gamma(), law, models, to_string(config.law), config.rollout);
    run.stop = traj.stop;
    run.steps = traj.length();
    for (const auto& s : traj.steps) {
      run.y_inf.push_back(inf_norm(s.output));
      run.delta_inf.push_back(inf_norm(s.delta));
      run.mu_observed = std::max(run.mu_observed, inf_norm(Matrix(s.transitions - mdp.transitions())));
    }
    run.y_inf.push_back(inf_norm(traj.final_output));
    run.final_choices = greedy_policy(traj.final_reward, mdp.structure()).choices;
    run.optimal = run.final_choices == optimal.choices;
  } catch (const std::exception& e) {
    run.failed = true;
    run.error = e.what();
  }
  return run;
}

McSummary monte_carlo(const Mdp& mdp, const McConfig& config) {
  // Plant draws (sampled mode) and MPC scenarios share one sampler around the nominal model.
  const ModelSampler sampler(mdp.transitions(), config.dev);
  const Policy optimal = solve_optimal(mdp).policy;

  McSummary sum;
  sum.law = to_string(config.law);
  sum.scenarios = config.law == LawKind::Mpc ? config.mpc.scenarios : 0;
  sum.runs = config.runs;
  sum.mu_bound = sampler.mu_bound();
  sum.truncated_rows = static_cast<int>(sampler.truncated_rows().size());
  sum.details.resize(config.runs);

  parallel_for(config.runs, config.threads, [&](int r) {
    sum.details[r] = run_once(mdp, optimal, sampler, config, run_seed(config.seed, r));
  });

  std::size_t longest = 0;
  double steps_total = 0.0;
  int completed = 0;
  for (const auto& run : sum.details) {
    if (run.failed) {
      ++sum.failures;
      continue;
    }
    ++completed;
    if (run.stop == StopReason::StepLimit) ++sum.step_limited;
    if (run.optimal) ++sum.optimal;
    steps_total += run.steps;
    ++sum.policy_counts[run.final_choices];
    sum.mu_observed = std::max(sum.mu_observed, run.mu_observed);
    longest = std::max(longest, run.y_inf.size());
  }
  sum.pct_optimal = completed > 0 ? 100.0 * sum.optimal / completed : 0.0;
  sum.mean_steps = completed > 0 ? steps_total / completed : 0.0;

  // Finished runs keep their final output and contribute zero input afterwards.
  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<double> ys;
    std::vector<double> ds;
    for (const auto& run : sum.details) {
      if (run.failed) continue;
      ys.push_back(t < run.y_inf.size() ? run.y_inf[t] : run.y_inf.back());
      ds.push_back(t < run.delta_inf.size() ? run.delta_inf[t] : 0.0);
    }
    sum.y_quantiles.push_back({quantile(ys, 0.1), quantile(ys, 0.5), quantile(ys, 0.9)});
    sum.delta_quantiles.push_back({quantile(ds, 0.1), quantile(ds, 0.5), quantile(ds, 0.9)});
  }
  return sum;
}

BoundsReport run_bounds(const Mdp& mdp, const McConfig& config, const std::vector<double>& eps_grid) {
  const auto& fs = mdp.structure();
  const ModelSampler sampler(mdp.transitions(), config.dev);
  BoundsReport rep;
  rep.h0 = inf_norm(h_max(mdp.rewards(), fs));
  rep.mu = sampler.mu_bound();
  rep.truncated_rows = static_cast<int>(sampler.truncated_rows().size());
  rep.sup_deviation.assign(config.runs, 0.0);
  std::vector<double> mu_seen(config.runs, 0.0);

  parallel_for(config.runs, config.threads, [&](int r) {
    std::mt19937_64 rng(run_seed(config.seed, r));
    Vector nominal = mdp.rewards();
    Vector perturbed = mdp.rewards();
    double sup = 0.0;
    for (int t = 0; t < config.rollout.max_steps; ++t) {
      const Vector y_nom = h_max(nominal, fs);
      const Vector y_hat = h_max(perturbed, fs);
      if (inf_norm(y_nom) < config.rollout.threshold && inf_norm(y_hat) < config.rollout.threshold) break;
      const Matrix f_hat = sampler.sample(rng);
      mu_seen[r] = std::max(mu_seen[r], inf_norm(Matrix(f_hat - mdp.transitions())));
      nominal = perturbed_update(nominal, mdp.transitions(), y_nom, mdp.gamma(), fs);
      perturbed = perturbed_update(perturbed, f_hat, y_hat, mdp.gamma(), fs);
      sup = std::max(sup, inf_norm(Vector(perturbed - nominal)));
    }
    rep.sup_deviation[r] = sup;
  });
  rep.mu_observed = mu_seen.empty() ? 0.0 : *std::max_element(mu_seen.begin(), mu_seen.end());

  for (double eps : eps_grid) {
    const ProbabilityBound pb = probability_bound(mdp.gamma(), mdp.gamma(), rep.mu, rep.h0, eps, BoundLaw::Hmax);
    BoundsRow row;
    row.eps = eps;
    row.eps_min = pb.eps_min;
    row.theory_prob = pb.probability;
    row.below_threshold = pb.below_threshold;
    int hits = 0;
    for (double s : rep.sup_deviation) hits += s >= eps ? 1 : 0;
    row.empirical_freq = config.runs > 0 ? static_cast<double>(hits) / config.runs : 0.0;
    rep.rows.push_back(row);
  }
  return rep;
}

std::vector<double> default_eps_grid(double eps_min, int points, double step) {
  std::vector<double> grid;
  for (int k = 1; k <= points; ++k) grid.push_back(eps_min * (1.0 + k * step));
  return grid;
}

}  // namespace rebal
