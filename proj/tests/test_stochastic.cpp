#include <doctest.h>

#include "rebal/sampling.hpp"
#include "rebal/stochastic.hpp"
#include "rebal/transforms.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace rebal;

TEST_CASE("sampler with zero deviation returns the nominal model") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const ModelSampler sampler(paper.transitions(), 0.0);
  std::mt19937_64 rng(1);
  CHECK(sampler.sample(rng) == paper.transitions());
  CHECK(sampler.mu_bound() == 0.0);
  CHECK_THROWS_AS(ModelSampler(paper.transitions(), 1.5), Error);
}

TEST_CASE("two-column rows are uniform on a segment") {
  Matrix f(1, 2);
  f << 0.5, 0.5;
  const ModelSampler sampler(f, 0.2);
  std::mt19937_64 rng(2);
  const int samples = 100000;
  int bins[4] = {0, 0, 0, 0};
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Matrix g = sampler.sample(rng);
    const double u = g(0, 0) - 0.5;
    CHECK(std::abs(g(0, 1) - (0.5 - u)) <= 1e-15);
    CHECK(std::abs(u) <= 0.2);
    sum += u;
    sum_sq += u * u;
    bins[std::min(3, static_cast<int>((u + 0.2) / 0.1))]++;
  }
  const double var = 0.04 / 3.0;
  CHECK(std::abs(sum / samples) <= 3.0 * std::sqrt(var / samples));
  CHECK(sum_sq / samples == doctest::Approx(var).epsilon(0.02));
  for (int b : bins) CHECK(std::abs(b - samples / 4.0) <= 4.0 * std::sqrt(samples * 0.25 * 0.75));
}

TEST_CASE("sampled models stay stochastic and close to the nominal one") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    const int n = 2 + trial;
    const Matrix nominal = testing::random_stochastic(rng, 6, n);
    const ModelSampler sampler(nominal, 0.2);
    CHECK(sampler.mu_bound() == doctest::Approx(std::min(2.0, 2.0 * (n / 2) * 0.2)));
    for (int s = 0; s < 2000; ++s) {
      const Matrix g = sampler.sample(rng);
      CHECK((g.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
      CHECK(g.minCoeff() >= 0.0);
      CHECK(g.maxCoeff() <= 1.0);
      CHECK((g - nominal).cwiseAbs().maxCoeff() <= 0.2 + 1e-12);
      CHECK(inf_norm(Matrix(g - nominal)) <= sampler.mu_bound() + 1e-12);
    }
  }
}

TEST_CASE("sample mean matches the nominal model on symmetric rows") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const ModelSampler sampler(paper.transitions(), 0.2);
  CHECK(sampler.truncated_rows().empty());
  CHECK(sampler.degenerate_rows().empty());
  std::mt19937_64 rng(4);
  const int samples = 100000;
  const Matrix offset = sample_mean_offset(sampler, samples, rng);
  // two columns: uniform on [-0.2, 0.2]
  const double sd = std::sqrt(0.04 / 3.0 / samples);
  CHECK(offset.cwiseAbs().maxCoeff() <= 3.5 * sd);

  Matrix f(1, 3);
  f << 0.05, 0.5, 0.45;
  CHECK(ModelSampler(f, 0.2).truncated_rows() == std::vector<int>{0});
  Matrix g(1, 3);
  g << 1.0, 0.0, 0.0;
  CHECK(ModelSampler(g, 0.0).degenerate_rows() == std::vector<int>{0});
}

TEST_CASE("run seeds are distinct and reproducible") {
  CHECK(run_seed(1, 0) == run_seed(1, 0));
  CHECK(run_seed(1, 0) != run_seed(1, 1));
  CHECK(run_seed(1, 0) != run_seed(2, 0));
}

TEST_CASE("perturbed update") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const auto& fs = paper.structure();
  const ModelSampler sampler(paper.transitions(), 0.2);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector r = testing::random_vector(rng, paper.m(), -3, 0);
    const Vector d = testing::random_vector(rng, 2, -3, 0);
    const Matrix f_hat = sampler.sample(rng);
    CHECK(inf_norm(Vector(perturbed_update(r, paper.transitions(), d, 0.8, fs) - apply_transform(paper, r, d))) <=
          1e-14);
    CHECK(perturbed_update(r, f_hat, Vector::Zero(2), 0.8, fs) == r);
    const Vector gap = perturbed_update(r, f_hat, d, 0.8, fs) - apply_transform(paper, r, d);
    CHECK(inf_norm(Vector(gap - 0.8 * (f_hat - paper.transitions()) * d)) <= 1e-12);
  }
}

TEST_CASE("cross-model value shift matches direct evaluation") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const ModelSampler sampler(paper.transitions(), 0.2);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix f_hat = sampler.sample(rng);
    const Vector d = testing::random_vector(rng, 2, -5, 5);
    const Vector r_hat = perturbed_update(paper.rewards(), f_hat, d, paper.gamma(), paper.structure());
    const Mdp moved = paper.with_rewards(r_hat);
    const double bound = deviation_bound(2, paper.gamma(), spectral_norm(Matrix(f_hat - paper.transitions())), d);
    for_each_policy(paper.structure(), [&](const Policy& p) {
      const Vector formula = cross_model_value_shift(paper, f_hat, d, p);
      CHECK(inf_norm(Vector(formula - policy_evaluate(moved, p))) <= 1e-9);
      const Vector nominal_shift = policy_evaluate(paper, p) - d;
      CHECK((formula - nominal_shift).norm() <= bound + 1e-12);
      // identical models: plain shift
      CHECK(inf_norm(Vector(cross_model_value_shift(paper, paper.transitions(), d, p) - nominal_shift)) <= 1e-12);
      CHECK(inf_norm(Vector(cross_model_value_shift(paper, f_hat, Vector::Zero(2), p) - policy_evaluate(paper, p))) <=
            1e-12);
    });
  }
  CHECK(deviation_bound(2, 0.8, 0.3, Vector::Zero(2)) == 0.0);
  CHECK(deviation_bound(2, 0.8, 0.0, Vector::Ones(2)) == 0.0);
  CHECK(deviation_bound(4, 0.5, 0.1, Vector::Ones(4)) == doctest::Approx(0.1 * 2.0 * 1.0 * 2.0));
}

TEST_CASE("spectral norm") {
  Matrix a(2, 2);
  a << 3, 0, 0, -4;
  CHECK(spectral_norm(a) == doctest::Approx(4.0));
  std::mt19937_64 rng(7);
  for (int k = 0; k < 20; ++k) {
    const Matrix m = Matrix::Random(4, 3);
    const Vector x = testing::random_vector(rng, 3, -1, 1);
    CHECK((m * x).norm() <= spectral_norm(m) * x.norm() + 1e-12);
  }
}

TEST_CASE("martingale trace") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const auto& fs = paper.structure();
  const double g = paper.gamma();
  const ModelSampler sampler(paper.transitions(), 0.2);
  std::mt19937_64 rng(8);
  RolloutOptions opt;
  auto law = [&](const Vector& r, int) { return h_max(r, fs); };

  const Trajectory exact = rollout(paper.rewards(), fs, g, law, fixed_model(paper.transitions()), "of", opt);
  const MartingaleTrace zero = martingale_track(exact, paper.transitions(), g);
  for (const auto& m : zero.values) CHECK(inf_norm(m) == 0.0);

  for (int trial = 0; trial < 30; ++trial) {
    const Trajectory traj =
        rollout(paper.rewards(), fs, g, law, [&](int) { return sampler.sample(rng); }, "of", opt);
    const MartingaleTrace mt = martingale_track(traj, paper.transitions(), g);
    REQUIRE(mt.values.size() == traj.steps.size() + 1);
    CHECK(inf_norm(mt.values[0]) == 0.0);
    const auto& s0 = traj.steps[0];
    CHECK(inf_norm(Vector(mt.values[1] - g * (s0.transitions - paper.transitions()) * s0.delta)) <= 1e-12);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& s = traj.steps[t];
      const Vector inc = mt.values[t + 1] - mt.values[t];
      CHECK(inf_norm(Vector(inc - g * (s.transitions - paper.transitions()) * s.delta)) <= 1e-12);
      CHECK(inf_norm(inc) <= mt.mu_observed * g * inf_norm(s.delta) + 1e-12);
      CHECK(inf_norm(inc) <= sampler.mu_bound() * g * inf_norm(s.delta) + 1e-12);
    }

    // nominal run driven by its own h_max; deviation decomposes into
    // martingale part plus accumulated input differences
    Vector nominal = paper.rewards();
    Vector input_gap = Vector::Zero(2);
    const Matrix b = input_matrix(paper);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const Vector& r_hat = traj.steps[t].reward;
      CHECK(inf_norm(Vector(r_hat - nominal - mt.values[t] - b * input_gap)) <= 1e-10);
      input_gap += h_max(r_hat, fs) - h_max(nominal, fs);
      nominal = apply_transform(paper, nominal, h_max(nominal, fs));
    }
  }
}

TEST_CASE("martingale has zero mean for a fixed input sequence") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const auto& fs = paper.structure();
  const ModelSampler sampler(paper.transitions(), 0.2);
  const int steps = 5;
  const int runs = 10000;
  std::vector<Vector> inputs;
  for (int t = 0; t < steps; ++t) inputs.push_back((Vector(2) << -1.0 - t, 0.5 * t - 3.0).finished());
  std::vector<Vector> sum(steps + 1, Vector::Zero(paper.m()));
  std::vector<Vector> sum_sq(steps + 1, Vector::Zero(paper.m()));
  std::mt19937_64 rng(9);
  RolloutOptions opt;
  opt.threshold = 0.0;
  opt.max_steps = steps;
  for (int r = 0; r < runs; ++r) {
    const Trajectory traj = rollout(
        paper.rewards(), fs, paper.gamma(), [&](const Vector&, int t) { return inputs[t]; },
        [&](int) { return sampler.sample(rng); }, "fixed", opt);
    const MartingaleTrace mt = martingale_track(traj, paper.transitions(), paper.gamma());
    for (int t = 0; t <= steps; ++t) {
      sum[t] += mt.values[t];
      sum_sq[t] += mt.values[t].cwiseProduct(mt.values[t]);
    }
  }
  for (int t = 1; t <= steps; ++t) {
    const Vector mean = sum[t] / runs;
    const Vector var = sum_sq[t] / runs - mean.cwiseProduct(mean);
    for (int j = 0; j < paper.m(); ++j) CHECK(std::abs(mean[j]) <= 3.5 * std::sqrt(var[j] / runs) + 1e-15);
  }
}

TEST_CASE("probability bound") {
  const double g = 0.8;
  const double h0 = 2.8;
  const double mu = 0.4;
  const ProbabilityBound at_min = probability_bound(g, g, mu, h0, 0.0, BoundLaw::Hmax);
  CHECK(at_min.eps_min == doctest::Approx(2.0 * 1.8 / 0.2 * h0));
  CHECK(at_min.below_threshold);
  CHECK(at_min.probability == 1.0);
  CHECK(probability_bound(g, g, mu, h0, at_min.eps_min, BoundLaw::Hmax).probability == 1.0);

  const double eps = at_min.eps_min + 3.0 * h0;
  const double c = (1.0 - g * g) / (2.0 * mu * mu * g * g);
  CHECK(probability_bound(g, g, mu, h0, eps, BoundLaw::Hmax).probability ==
        doctest::Approx(std::min(1.0, 2.0 * std::exp(-c * 9.0))));

  const double alpha = 0.5;
  const ProbabilityBound gen = probability_bound(g, alpha, mu, h0, 1000.0, BoundLaw::Generic);
  CHECK(gen.eps_min == doctest::Approx(2.0 * 1.8 / (0.5 * 0.2) * h0));
  const double cg = (1.0 - alpha * alpha) * 0.04 / (2.0 * mu * mu * g * g);
  const double gap = (1000.0 - gen.eps_min) / h0;
  CHECK(gen.probability == doctest::Approx(std::min(1.0, 2.0 * std::exp(-cg * gap * gap))));

  double previous = 2.0;
  for (double m : {1.0, 0.1, 0.01, 0.001}) {
    const double p = probability_bound(g, g, m, h0, at_min.eps_min + h0, BoundLaw::Hmax).probability;
    CHECK(p <= previous);
    previous = p;
  }
  CHECK(previous <= 1e-100);
}

TEST_CASE("Monte-Carlo harness") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  McConfig cfg;
  cfg.runs = 20;
  cfg.seed = 3;

  SUBCASE("zero deviation is always optimal") {
    cfg.dev = 0.0;
    for (LawKind law : {LawKind::OutputFeedback, LawKind::Rbs, LawKind::Ideal}) {
      cfg.law = law;
      const McSummary s = monte_carlo(paper, cfg);
      CHECK(s.pct_optimal == 100.0);
      CHECK(s.failures == 0);
    }
  }

  SUBCASE("output feedback always terminates") {
    cfg.runs = 100;
    const McSummary s = monte_carlo(paper, cfg);
    CHECK(s.failures == 0);
    CHECK(s.step_limited == 0);
    CHECK(s.pct_optimal >= 0.0);
    CHECK(s.pct_optimal <= 100.0);
    for (const auto& q : s.y_quantiles) {
      CHECK(q.q10 <= q.q50);
      CHECK(q.q50 <= q.q90);
    }
    int counted = 0;
    for (const auto& [choices, c] : s.policy_counts) counted += c;
    CHECK(counted == cfg.runs);
  }

  SUBCASE("results do not depend on the thread count") {
    cfg.law = LawKind::Mpc;
    cfg.mpc.horizon = 5;
    cfg.mpc.scenarios = 2;
    cfg.runs = 6;
    cfg.threads = 1;
    const McSummary a = monte_carlo(paper, cfg);
    cfg.threads = 3;
    const McSummary b = monte_carlo(paper, cfg);
    REQUIRE(a.details.size() == b.details.size());
    for (std::size_t r = 0; r < a.details.size(); ++r) {
      CHECK(a.details[r].y_inf == b.details[r].y_inf);
      CHECK(a.details[r].delta_inf == b.details[r].delta_inf);
    }
    CHECK(a.pct_optimal == b.pct_optimal);
  }
}

TEST_CASE("bounds harness") {
  const Mdp paper = testing::load_fixture("paper_2x5.json");
  McConfig cfg;
  cfg.runs = 50;
  cfg.dev = 0.0;
  const double eps_min = probability_bound(0.8, 0.8, 1.0, 2.8, 0.0, BoundLaw::Hmax).eps_min;
  const BoundsReport zero = run_bounds(paper, cfg, {1e-9, 1.0, eps_min * 1.1});
  for (const auto& row : zero.rows) CHECK(row.empirical_freq == 0.0);
  CHECK(zero.rows[0].below_threshold);

  cfg.dev = 0.2;
  const BoundsReport rep = run_bounds(paper, cfg, default_eps_grid(eps_min));
  CHECK(rep.h0 == doctest::Approx(2.8));
  CHECK(rep.rows.size() == 10);
  CHECK(rep.mu_observed <= rep.mu + 1e-12);
  for (const auto& row : rep.rows) {
    CHECK_FALSE(row.below_threshold);
    CHECK(row.empirical_freq <= row.theory_prob);
  }
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({0.0, 10.0}, 0.1) == doctest::Approx(1.0));
  CHECK(quantile({}, 0.5) == 0.0);
}

TEST_CASE("law names") {
  CHECK(parse_law("mpc") == LawKind::Mpc);
  CHECK(std::string(to_string(LawKind::OutputFeedback)) == "output_feedback");
  CHECK_THROWS_AS(parse_law("pid"), Error);
}
