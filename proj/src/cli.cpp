#include "rebal/cli.hpp"

#include "rebal/control.hpp"
#include "rebal/io.hpp"
#include "rebal/ocp.hpp"
#include "rebal/stochastic.hpp"
#include "rebal/transforms.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace rebal {

namespace {

struct RunConfig {
  std::vector<std::string> laws;
  std::string model;
  double dev = 0.2;
  int horizon = 20;
  std::vector<int> scenarios;
  double reg = 2.0;
  double threshold = 1e-3;
  int max_steps = 10000;
  int runs = 500;
  std::uint64_t seed = 1;
  std::string out;
  int threads = 0;
  std::string start = "best";
  std::vector<double> eps;
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::Infeasible:
    case Errc::Unbounded:
    case Errc::MaxItersExceeded: return kExitSolver;
    case Errc::StepLimitExceeded: return kExitStepLimit;
    default: return kExitValidation;
  }
}

std::string choices_string(const std::vector<int>& choices, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(choices[i] + 1);
  }
  return s;
}

std::string vector_string(const Vector& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_number(v[i]);
  }
  return s;
}

/// Loads the file and shifts positive rewards down so runs start nonpositive.
Mdp load_nonpositive(const std::string& path, std::ostream& err) {
  const Mdp mdp = read_mdp_file(path);
  if (mdp.rewards().maxCoeff() > 0.0) {
    const ShiftResult shifted = shift_nonpositive(mdp);
    err << "note: rewards shifted by " << format_number(mdp.rewards().maxCoeff()) << " to be nonpositive\n";
    return mdp.with_rewards(shifted.reward);
  }
  return mdp;
}

McConfig make_mc_config(const Mdp& mdp, const RunConfig& rc, LawKind law, int scenarios) {
  McConfig mc;
  mc.law = law;
  mc.dev = rc.dev;
  mc.runs = rc.runs;
  mc.seed = rc.seed;
  mc.threads = rc.threads;
  mc.rollout.threshold = rc.threshold;
  mc.rollout.max_steps = rc.max_steps;
  mc.mpc.horizon = rc.horizon;
  mc.mpc.scenarios = scenarios;
  mc.mpc.epsilon = rc.reg;
  mc.mpc.start = parse_mpc_start(rc.start);
  if (rc.model == "exact") {
    mc.model = ModelMode::Exact;
  } else if (rc.model == "sampled") {
    mc.model = ModelMode::Sampled;
  } else if (rc.model.rfind("fixed_wrong:", 0) == 0) {
    mc.model = ModelMode::FixedWrong;
    const Mdp wrong = read_mdp_file(rc.model.substr(12));
    if (!(wrong.structure() == mdp.structure())) {
      throw Error(Errc::ShapeMismatch, "fixed_wrong model has a different fiber structure");
    }
    mc.wrong_model = wrong.transitions();
  } else {
    throw Error(Errc::ParseError, "unknown model mode '" + rc.model + "'");
  }
  return mc;
}

std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path);
  if (!file) throw Error(Errc::ParseError, "cannot write '" + path + "'");
  return file;
}

int cmd_check(const std::string& path, std::ostream& out) {
  const Mdp mdp = read_mdp_file(path);
  const OptimalSolution opt = solve_optimal(mdp);
  out << "n: " << mdp.n() << "\n";
  out << "m: " << mdp.m() << "\n";
  out << "gamma: " << format_number(mdp.gamma()) << "\n";
  out << "normal: " << (is_normal(mdp.rewards(), mdp.structure()) ? "true" : "false") << "\n";
  out << "optimal_policy: " << choices_string(opt.policy.choices, " ") << "\n";
  out << "multiple_optima: " << (opt.multiple_optima ? "true" : "false") << "\n";
  out << "value: " << vector_string(opt.value) << "\n";
  return kExitOk;
}

int cmd_normalize(const std::string& path, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Mdp mdp = load_nonpositive(path, err);
  if (rc.laws.size() != 1) throw Error(Errc::ParseError, "normalize takes exactly one law");
  const LawKind law = parse_law(rc.laws.front());
  if (rc.scenarios.size() != 1) throw Error(Errc::ParseError, "normalize takes exactly one scenario count");
  const McConfig mc = make_mc_config(mdp, rc, law, rc.scenarios.front());
  const ModelSampler sampler(mdp.transitions(), mc.dev);
  const Policy optimal = solve_optimal(mdp).policy;
  const auto& fs = mdp.structure();

  std::mt19937_64 rng(run_seed(mc.seed, 0));
  FeedbackLaw feedback;
  switch (law) {
    case LawKind::Ideal:
      feedback = [&mdp](const Vector& r, int) { return solve_optimal(mdp.with_rewards(r)).value; };
      break;
    case LawKind::OutputFeedback:
      feedback = [&fs](const Vector& r, int) { return h_max(r, fs); };
      break;
    case LawKind::Rbs:
      feedback = [&mdp](const Vector& r, int) { return law_rbs(mdp, r); };
      break;
    case LawKind::Mpc:
      feedback = [&](const Vector& r, int) {
        return mpc_step(r, fs, mdp.gamma(), [&] { return sampler.sample(rng); }, mc.mpc).delta;
      };
      break;
  }
  ModelSource models;
  switch (mc.model) {
    case ModelMode::Exact: models = fixed_model(mdp.transitions()); break;
    case ModelMode::FixedWrong: models = fixed_model(mc.wrong_model); break;
    case ModelMode::Sampled: models = [&](int) { return sampler.sample(rng); }; break;
  }
  const Trajectory traj = rollout(mdp.rewards(), fs, mdp.gamma(), feedback, models, to_string(law), mc.rollout);

  std::ofstream file;
  std::ostream& csv = open_output(rc.out, file, out);
  csv << "t,law,y_inf,delta_inf,greedy_choices,normal,optimal\n";
  for (int t = 0; t < traj.length(); ++t) {
    const Vector& next = t + 1 < traj.length() ? traj.steps[t + 1].reward : traj.final_reward;
    const std::vector<int> greedy = greedy_policy(next, fs).choices;
    const bool last = t + 1 == traj.length();
    csv << t << ',' << traj.law << ',' << format_number(inf_norm(h_max(next, fs))) << ','
        << format_number(inf_norm(traj.steps[t].delta)) << ',' << choices_string(greedy, ";") << ','
        << (is_normal(next, fs, rc.threshold) ? "true" : "false") << ','
        << (last ? (greedy == optimal.choices ? "true" : "false") : "") << '\n';
  }
  if (traj.stop == StopReason::StepLimit) {
    err << "error: step limit of " << rc.max_steps << " reached before normalization\n";
    return kExitStepLimit;
  }
  return kExitOk;
}

int cmd_montecarlo(const std::string& path, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Mdp mdp = load_nonpositive(path, err);
  std::vector<McSummary> results;
  for (const auto& name : rc.laws) {
    const LawKind law = parse_law(name);
    if (law == LawKind::Mpc) {
      for (int n_sc : rc.scenarios) {
        if (n_sc < 1 || rc.horizon < 1) throw Error(Errc::ParseError, "mpc needs scenarios >= 1 and horizon >= 1");
        results.push_back(monte_carlo(mdp, make_mc_config(mdp, rc, law, n_sc)));
      }
    } else {
      results.push_back(monte_carlo(mdp, make_mc_config(mdp, rc, law, 0)));
    }
  }

  const std::string prefix = rc.out.empty() ? std::string("montecarlo") : rc.out;
  std::ofstream summary(prefix + "_summary.csv");
  std::ofstream quant(prefix + "_quantiles.csv");
  std::ofstream policy(prefix + "_policy.csv");
  if (!summary || !quant || !policy) throw Error(Errc::ParseError, "cannot write output files for '" + prefix + "'");
  summary << "law,N,runs,pct_optimal,mean_steps,failures\n";
  quant << "law,N,t,y_q10,y_q50,y_q90,delta_q10,delta_q50,delta_q90\n";
  policy << "law,N,choices,count\n";
  for (const auto& s : results) {
    summary << s.law << ',' << s.scenarios << ',' << s.runs << ',' << format_number(s.pct_optimal) << ','
            << format_number(s.mean_steps) << ',' << s.failures << '\n';
    for (std::size_t t = 0; t < s.y_quantiles.size(); ++t) {
      const auto& y = s.y_quantiles[t];
      const auto& d = s.delta_quantiles[t];
      quant << s.law << ',' << s.scenarios << ',' << t << ',' << format_number(y.q10) << ',' << format_number(y.q50)
            << ',' << format_number(y.q90) << ',' << format_number(d.q10) << ',' << format_number(d.q50) << ','
            << format_number(d.q90) << '\n';
    }
    for (const auto& [choices, count] : s.policy_counts) {
      policy << s.law << ',' << s.scenarios << ',' << choices_string(choices, ";") << ',' << count << '\n';
    }
    out << s.law << " N=" << s.scenarios << ": " << format_number(s.pct_optimal) << "% optimal, mean steps "
        << format_number(s.mean_steps) << ", failures " << s.failures << ", step-limited " << s.step_limited
        << ", mu bound " << format_number(s.mu_bound) << ", mu observed " << format_number(s.mu_observed) << '\n';
  }
  return kExitOk;
}

int cmd_bounds(const std::string& path, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Mdp mdp = load_nonpositive(path, err);
  const McConfig mc = make_mc_config(mdp, rc, LawKind::OutputFeedback, 0);
  std::vector<double> grid = rc.eps;
  if (grid.empty()) {
    const ModelSampler sampler(mdp.transitions(), rc.dev);
    const double h0 = inf_norm(h_max(mdp.rewards(), mdp.structure()));
    const ProbabilityBound pb = probability_bound(mdp.gamma(), mdp.gamma(), sampler.mu_bound(), h0, 0.0, BoundLaw::Hmax);
    grid = default_eps_grid(pb.eps_min);
  }
  const BoundsReport rep = run_bounds(mdp, mc, grid);
  if (rep.truncated_rows > 0) {
    err << "warning: " << rep.truncated_rows << " transition rows have truncated perturbation support\n";
  }
  std::ofstream file;
  std::ostream& csv = open_output(rc.out, file, out);
  csv << "eps,eps_min,theory_prob,empirical_freq,below_threshold\n";
  for (const auto& row : rep.rows) {
    csv << format_number(row.eps) << ',' << format_number(row.eps_min) << ',' << format_number(row.theory_prob) << ','
        << format_number(row.empirical_freq) << ',' << (row.below_threshold ? "true" : "false") << '\n';
  }
  return kExitOk;
}

void add_run_options(CLI::App* cmd, RunConfig& rc, bool many) {
  cmd->add_option("--law", rc.laws, many ? "Laws: output_feedback, mpc, rbs, ideal" : "Law: ideal, output_feedback, rbs, mpc")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--model", rc.model, "exact | sampled | fixed_wrong:<file>")->capture_default_str();
  cmd->add_option("--dev", rc.dev, "Maximum entrywise model deviation")->capture_default_str();
  cmd->add_option("--horizon", rc.horizon, "MPC prediction horizon T")->capture_default_str();
  cmd->add_option("--scenarios", rc.scenarios, "MPC scenario counts N")->delimiter(',')->capture_default_str();
  cmd->add_option("--reg", rc.reg, "MPC regularization weight")->capture_default_str();
  cmd->add_option("--threshold", rc.threshold, "Stop when |h_max(R)|_inf < threshold")->capture_default_str();
  cmd->add_option("--max-steps", rc.max_steps, "Step cap per run")->capture_default_str();
  cmd->add_option("--seed", rc.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out", rc.out, many ? "Output file prefix" : "Output CSV path (default stdout)");
  cmd->add_option("--start", rc.start, "MPC initial guess: best (zero and h_max), zero, hmax")->capture_default_str();
  cmd->add_flag_callback("--warm-start", [&rc] { rc.start = "hmax"; }, "Same as --start hmax");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward balancing for discounted MDPs"};
  app.require_subcommand(1);
  std::string path;

  auto* check = app.add_subcommand("check", "Validate an MDP file and report its optimal policy");
  check->add_option("file", path, "MDP JSON file")->required();

  RunConfig norm_rc;
  norm_rc.laws = {"output_feedback"};
  norm_rc.model = "exact";
  norm_rc.scenarios = {4};
  auto* normalize = app.add_subcommand("normalize", "Run one closed-loop normalization and write its trajectory");
  normalize->add_option("file", path, "MDP JSON file")->required();
  add_run_options(normalize, norm_rc, false);

  RunConfig mc_rc;
  mc_rc.laws = {"output_feedback", "mpc"};
  mc_rc.model = "sampled";
  mc_rc.scenarios = {1, 2, 3, 4};
  auto* mc = app.add_subcommand("montecarlo", "Monte-Carlo comparison of normalization laws under sampled models");
  mc->add_option("file", path, "MDP JSON file")->required();
  add_run_options(mc, mc_rc, true);
  mc->add_option("--runs", mc_rc.runs, "Runs per law")->capture_default_str();
  mc->add_option("--threads", mc_rc.threads, "Worker threads (0 = all cores)")->capture_default_str();

  RunConfig b_rc;
  b_rc.laws = {"output_feedback"};
  b_rc.model = "sampled";
  b_rc.scenarios = {4};
  auto* bounds = app.add_subcommand("bounds", "Compare the deviation tail bound with Monte-Carlo frequencies");
  bounds->add_option("file", path, "MDP JSON file")->required();
  bounds->add_option("--dev", b_rc.dev, "Maximum entrywise model deviation")->capture_default_str();
  bounds->add_option("--threshold", b_rc.threshold, "Stop when both outputs are below threshold")->capture_default_str();
  bounds->add_option("--max-steps", b_rc.max_steps, "Step cap per run")->capture_default_str();
  bounds->add_option("--runs", b_rc.runs, "Number of runs")->capture_default_str();
  bounds->add_option("--seed", b_rc.seed, "Master seed")->capture_default_str();
  bounds->add_option("--threads", b_rc.threads, "Worker threads (0 = all cores)")->capture_default_str();
  bounds->add_option("--eps", b_rc.eps, "Deviation levels (default: 10 points above eps_min)")->delimiter(',');
  bounds->add_option("--out", b_rc.out, "Output CSV path (default stdout)");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*check) return cmd_check(path, out);
    if (*normalize) return cmd_normalize(path, norm_rc, out, err);
    if (*mc) return cmd_montecarlo(path, mc_rc, out, err);
    if (*bounds) return cmd_bounds(path, b_rc, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  return kExitValidation;
}

}  // namespace rebal
