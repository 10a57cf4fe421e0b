#include <doctest.h>

#include "rebal/transforms.hpp"
#include "test_support.hpp"

using namespace rebal;

namespace {

// x1 <-> x3 with left <-> right; actions are (l1, r1, l2, r2, l3, r3).
PermutationPair corridor_swap() { return {{2, 1, 0}, {5, 4, 3, 2, 1, 0}}; }

}  // namespace

TEST_CASE("input matrix entries") {
  const Mdp fig3 = testing::load_fixture("fig3_1x2.json");
  const Matrix b = input_matrix(fig3);
  CHECK(b.rows() == 2);
  CHECK(b(0, 0) == doctest::Approx(-0.2));
  CHECK(b(1, 0) == doctest::Approx(-0.2));

  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const Matrix bp = input_matrix(paper);
  const auto& fs = paper.structure();
  for (int j = 0; j < paper.m(); ++j) {
    for (int k = 0; k < paper.n(); ++k) {
      const double expect = 0.8 * paper.transitions()(j, k) - (fs.state_of(j) == k ? 1.0 : 0.0);
      CHECK(bp(j, k) == doctest::Approx(expect).epsilon(1e-15));
    }
  }

  std::mt19937_64 rng(2);
  testing::RandomMdpOptions opt;
  opt.gamma = 0.0;
  const Mdp zero_gamma = testing::random_mdp(rng, opt);
  CHECK(input_matrix(zero_gamma).isApprox(-zero_gamma.structure().projection()));
}

TEST_CASE("input matrix is injective") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Mdp mdp = testing::random_mdp(rng);
    Eigen::JacobiSVD<Matrix> svd(input_matrix(mdp));
    CHECK(svd.singularValues().minCoeff() > 1e-8);
  }
}

TEST_CASE("transform group laws") {
  const Mdp fig3 = testing::load_fixture("fig3_1x2.json");
  const Vector r = apply_transform(fig3, Vector::Constant(1, 10.0));
  CHECK(r[0] == doctest::Approx(-1.0));
  CHECK(std::abs(r[1]) <= 1e-14);

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Mdp mdp = testing::random_mdp(rng);
    CHECK(apply_transform(mdp, Vector::Zero(mdp.n())) == mdp.rewards());
    const Vector d1 = testing::random_vector(rng, mdp.n(), -5, 5);
    const Vector d2 = testing::random_vector(rng, mdp.n(), -5, 5);
    const Vector twice = apply_transform(mdp, apply_transform(mdp, d1), d2);
    CHECK(inf_norm(Vector(twice - apply_transform(mdp, Vector(d1 + d2)))) <= 1e-12);
    if ((d1 - d2).norm() > 0) CHECK((apply_transform(mdp, d1) - apply_transform(mdp, d2)).norm() > 0);
  }
}

TEST_CASE("normal form predicate") {
  CHECK(is_normal((Vector(4) << -1, 0, 0, -2).finished(), FiberStructure({2, 2})));
  CHECK_FALSE(is_normal((Vector(2) << 1, 2).finished(), FiberStructure({2})));
  CHECK_FALSE(is_normal((Vector(2) << -0.5, -0.1).finished(), FiberStructure({2})));
  CHECK(is_normal((Vector(2) << -0.5, 5e-10).finished(), FiberStructure({2})));
}

TEST_CASE("nonpositive shift") {
  const Mdp fig3 = testing::load_fixture("fig3_1x2.json");
  const ShiftResult s = shift_nonpositive(fig3);
  CHECK(s.delta[0] == doctest::Approx(10.0));
  CHECK(s.reward[0] == doctest::Approx(-1.0));
  CHECK(s.reward[1] == 0.0);

  const Mdp paper = testing::load_fixture("paper_2x5.json");
  const Mdp zero_top = paper.with_rewards(Vector(paper.rewards().array() - paper.rewards().maxCoeff()));
  const ShiftResult same = shift_nonpositive(zero_top);
  CHECK(same.reward == zero_top.rewards());
  CHECK(inf_norm(same.delta) == 0.0);

  std::mt19937_64 rng(8);
  testing::RandomMdpOptions opt;
  opt.reward_lo = 0.1;
  opt.reward_hi = 4.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Mdp mdp = testing::random_mdp(rng, opt);
    const ShiftResult sh = shift_nonpositive(mdp);
    CHECK(sh.reward.maxCoeff() == 0.0);
    CHECK(inf_norm(Vector(apply_transform(mdp, sh.delta) - sh.reward)) <= 1e-12 * (1.0 + inf_norm(sh.delta)));
  }
}

TEST_CASE("exact normalization") {
  const Mdp fig3 = testing::load_fixture("fig3_1x2.json");
  const NormalForm nf = normalize_exact(fig3);
  CHECK(nf.value[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(nf.reward[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(nf.reward[1]) <= 1e-10);

  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Mdp mdp = testing::random_mdp(rng);
    const NormalForm a = normalize_exact(mdp);
    CHECK(is_normal(a.reward, mdp.structure()));
    CHECK(a.reward.maxCoeff() <= 1e-9);
    // idempotent on the normal set
    const NormalForm again = normalize_exact(mdp.with_rewards(a.reward));
    CHECK(inf_norm(again.value) <= 1e-9);
    CHECK(inf_norm(Vector(again.reward - a.reward)) <= 1e-9);
    // constant on orbits
    const Vector shift = testing::random_vector(rng, mdp.n(), -20, 20);
    const NormalForm b = normalize_exact(mdp.with_rewards(apply_transform(mdp, shift)));
    CHECK(inf_norm(Vector(a.reward - b.reward)) <= 1e-8);
    CHECK(inf_norm(Vector(a.value - shift - b.value)) <= 1e-8);
  }
}

TEST_CASE("orbit membership") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Mdp mdp = testing::random_mdp(rng);
    const auto self = same_orbit(mdp.rewards(), mdp.rewards(), mdp);
    REQUIRE(self.has_value());
    CHECK(inf_norm(*self) <= 1e-12);

    const Vector shift = testing::random_vector(rng, mdp.n(), -5, 5);
    const auto found = same_orbit(mdp.rewards(), apply_transform(mdp, shift), mdp);
    REQUIRE(found.has_value());
    CHECK(inf_norm(Vector(*found - shift)) <= 1e-8);

    if (mdp.m() > mdp.n()) {
      // a direction orthogonal to range(B) from the full QR basis
      Eigen::HouseholderQR<Matrix> qr(input_matrix(mdp));
      const Matrix q = qr.householderQ();
      const Vector off = q.col(mdp.n());
      CHECK_FALSE(same_orbit(mdp.rewards(), Vector(mdp.rewards() + off), mdp).has_value());
    }
  }
}

TEST_CASE("advantages and values under transforms") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 60; ++trial) {
    const Mdp mdp = testing::random_mdp(rng);
    const Vector shift = testing::random_vector(rng, mdp.n(), -10, 10);
    const Mdp moved = mdp.with_rewards(apply_transform(mdp, shift));
    for_each_policy(mdp.structure(), [&](const Policy& p) {
      CHECK(inf_norm(Vector(advantage(moved, p) - advantage(mdp, p))) <= 1e-8);
      CHECK(inf_norm(Vector(policy_evaluate(moved, p) - (policy_evaluate(mdp, p) - shift))) <= 1e-8);
      // transforming by V_pi yields the advantage of pi
      CHECK(inf_norm(Vector(apply_transform(mdp, policy_evaluate(mdp, p)) - advantage(mdp, p))) <= 1e-9);
    });
  }
}

TEST_CASE("normalized reward is the advantage of the greedy policy") {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const Mdp mdp = testing::random_mdp(rng);
    const Mdp normal = mdp.with_rewards(normalize_exact(mdp).reward);
    const Policy greedy = greedy_policy(normal.rewards(), normal.structure());
    CHECK(inf_norm(Vector(advantage(normal, greedy) - normal.rewards())) <= 1e-9);
  }
}

TEST_CASE("corridor symmetry") {
  const Mdp corridor = testing::load_fixture("cyclic_corridor.json");
  const PermutationPair identity{{0, 1, 2}, {0, 1, 2, 3, 4, 5}};
  CHECK(check_g_invariance(corridor, {identity}));
  CHECK(check_g_invariance(corridor, {corridor_swap()}));

  // states swapped, actions kept in place inside their fibers
  const PermutationPair no_flip{{2, 1, 0}, {4, 5, 2, 3, 0, 1}};
  CHECK_FALSE(check_g_invariance(corridor, {no_flip}));

  // identity on actions cannot carry fiber 1 onto fiber 3
  const PermutationPair bad{{2, 1, 0}, {0, 1, 2, 3, 4, 5}};
  try {
    check_g_invariance(corridor, {bad});
    FAIL("expected IncompatibleFibers");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IncompatibleFibers);
  }

  std::mt19937_64 rng(18);
  const PermutationPair g = corridor_swap();
  for (int trial = 0; trial < 50; ++trial) {
    const Vector d = testing::random_vector(rng, 3, -5, 5);
    const Vector lhs = permute(g.action_perm, apply_transform(corridor, d));
    const Vector rhs = apply_transform(corridor, permute(g.state_perm, d));
    CHECK(inf_norm(Vector(lhs - rhs)) <= 1e-10);
  }
}

TEST_CASE("invariance constraints") {
  const Mdp corridor = testing::load_fixture("cyclic_corridor.json");
  const FiberStructure& fs = corridor.structure();
  CHECK(invariance_constraints({{{0, 1, 2}, {0, 1, 2, 3, 4, 5}}}, fs).rows() == 0);

  const LinearConstraintSet set = invariance_constraints({corridor_swap()}, fs);
  REQUIRE(set.rows() == 2);
  const Vector r = corridor.rewards();
  CHECK(set.contains(r, (Vector(3) << -1.0, 4.0, -1.0).finished()));
  CHECK_FALSE(set.contains(r, (Vector(3) << -1.0, 4.0, -1.5).finished()));

  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    Vector d = testing::random_vector(rng, 3, -5, 5);
    d[2] = d[0];
    REQUIRE(set.contains(r, d));
    CHECK(check_g_invariance(corridor.with_rewards(apply_transform(corridor, d)), {corridor_swap()}, 1e-12));
    Vector broken = d;
    broken[2] += 0.5;
    CHECK_FALSE(check_g_invariance(corridor.with_rewards(apply_transform(corridor, broken)), {corridor_swap()},
                                   1e-12));
  }
}

TEST_CASE("symmetric states share their optimal value") {
  const Mdp corridor = testing::load_fixture("cyclic_corridor.json");
  const Vector v = solve_optimal(corridor).value;
  CHECK(v[0] == doctest::Approx(v[2]).epsilon(1e-12));
}
