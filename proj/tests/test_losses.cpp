#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "basen/loss_graph.hpp"
#include "basen/metrics.hpp"
#include "basen/rng.hpp"

#include <cmath>

using namespace basen;

namespace {

ArrF make(std::initializer_list<float> vals) {
  ArrF a(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (float v : vals) a[i++] = v;
  return a;
}

}  // namespace

TEST_CASE("si_sdr: hand-computed example gives 0 dB") {
  // ref [1,0], est [1,1]: x_target = [1,0], x_res = [0,-1] -> ratio 1
  CHECK(si_sdr(make({1, 1}), make({1, 0})) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("si_sdr: scaled reference is epsilon-clamped near-perfect") {
  const ArrF ref = make({1, 0});
  const ArrF est = 3.0f * ref;
  CHECK(si_sdr(est, ref) >= 140.0);
}

TEST_CASE("si_sdr: orthogonal estimate is strongly negative") {
  CHECK(si_sdr(make({0, 1}), make({1, 0})) <= -40.0);
}

TEST_CASE("si_sdr: exact scale invariance") {
  Rng rng(1);
  Eigen::ArrayXd ref(64), est(64);
  for (Eigen::Index i = 0; i < 64; ++i) {
    ref[i] = rng.normal();
    est[i] = ref[i] + 0.3 * rng.normal();
  }
  const double base = si_sdr(est, ref);
  for (double c : {0.1, 1.0, 10.0})
    CHECK(std::abs(si_sdr((c * est).eval(), ref) - base) < 1e-6);
}

TEST_CASE("si_sdr: zero-norm reference errors") {
  CHECK_THROWS_AS(si_sdr(make({1, 1}), make({0, 0})), std::invalid_argument);
}

TEST_CASE("discretization_loss: closed-form values") {
  const double k1 = 100.0, b = 0.25, q = 0.5;
  // S = q everywhere -> d = 0 -> L_d = k1*b
  CHECK(discretization_loss(Eigen::MatrixXd::Constant(4, 8, 0.5), k1, b, q) ==
        doctest::Approx(25.0).epsilon(1e-12));
  // binary S -> d'd/(QB) = 0.25 -> L_d = 0 exactly
  Eigen::MatrixXd bin(2, 4);
  bin << 1, 0, 0, 1, 1, 1, 0, 0;
  CHECK(discretization_loss(bin, k1, b, q) == doctest::Approx(0.0).epsilon(1e-12));
  // half entries at q, half binary -> 12.5
  Eigen::MatrixXd half(2, 4);
  half << 0.5, 0.5, 0.5, 0.5, 1, 0, 1, 0;
  CHECK(discretization_loss(half, k1, b, q) == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("discretization_loss stays within [0, k1*b] for valid selections") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd s(3, 7);
    for (Eigen::Index r = 0; r < 3; ++r)
      for (Eigen::Index c = 0; c < 7; ++c) s(r, c) = rng.uniform();
    const double l = discretization_loss(s, 100.0, 0.25, 0.5);
    CHECK(l >= -1e-12);
    CHECK(l <= 25.0 + 1e-12);
  }
}

TEST_CASE("discretization_loss gradient matches the closed form") {
  // dL/ds_c = -2 k1 (s_c - q) / (Q B)
  Rng rng(5);
  Eigen::MatrixXd s(2, 5);
  for (Eigen::Index r = 0; r < 2; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) s(r, c) = rng.uniform();
  const double k1 = 100.0, b = 0.25, q = 0.5;
  const double h = 1e-7;
  for (Eigen::Index r = 0; r < 2; ++r) {
    for (Eigen::Index c = 0; c < 5; ++c) {
      Eigen::MatrixXd sp = s, sm = s;
      sp(r, c) += h;
      sm(r, c) -= h;
      const double fd =
          (discretization_loss(sp, k1, b, q) - discretization_loss(sm, k1, b, q)) / (2 * h);
      const double analytic = -2.0 * k1 * (s(r, c) - q) / (5.0 * 2.0);
      CHECK(std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)) < 1e-6);
    }
  }
}

TEST_CASE("sparsity_loss: closed-form values") {
  CHECK(sparsity_loss(Eigen::MatrixXd::Ones(1, 128), 0.25) ==
        doctest::Approx(32.0).epsilon(1e-12));
  CHECK(sparsity_loss(Eigen::MatrixXd::Zero(3, 16), 0.25) == doctest::Approx(0.0));
  Eigen::MatrixXd s(1, 2);
  s << 0.5, 0.5;
  CHECK(sparsity_loss(s, 0.25) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("sparsity_loss is strictly monotone in the selection") {
  Rng rng(7);
  Eigen::MatrixXd s(2, 6);
  for (Eigen::Index r = 0; r < 2; ++r)
    for (Eigen::Index c = 0; c < 6; ++c) s(r, c) = 0.1 + 0.5 * rng.uniform();
  Eigen::MatrixXd bigger = s.array() + 0.05;
  CHECK(sparsity_loss(bigger, 0.25) > sparsity_loss(s, 0.25));
}

TEST_CASE("total_loss: weighted combination and breakdown invariant") {
  LossWeights w;
  w.alpha = 0.5;
  const LossBreakdown lb = total_loss(10.0, 0.0, 0.0, w);
  CHECK(lb.total == doctest::Approx(-5.0).epsilon(1e-12));
  CHECK(std::abs(lb.total - (-w.alpha * lb.si_sdr_db + w.beta * lb.l_d + w.gamma * lb.l_reg)) <
        1e-9);

  // gamma = 0 reproduces the ConvRS pre-training objective
  LossWeights w0;
  w0.gamma = 0.0;
  const LossBreakdown pre = total_loss(4.0, 3.0, 100.0, w0);
  CHECK(pre.total == doctest::Approx(-0.5 * 4.0 + 0.5 * 3.0).epsilon(1e-12));

  const LossBreakdown zero = total_loss(0.0, 0.0, 0.0, w);
  CHECK(zero.total == doctest::Approx(0.0));
}

TEST_CASE("graph losses agree with the plain functions and their gradients check out") {
  using S = double;
  Rng rng(11);

  Mat<S> ref(1, 32), est_m(1, 32);
  for (Eigen::Index i = 0; i < 32; ++i) {
    ref(0, i) = rng.normal();
    est_m(0, i) = ref(0, i) + 0.5 * rng.normal();
  }
  {
    Graph<S> g;
    ParameterStore<S> ps;
    const int est_p = ps.add("est", est_m);
    GraphContext<S> ctx(g, ps);
    Var<S> est = ctx.use(est_p);
    Var<S> si = si_sdr_graph(ctx, est, ref);
    const double plain = si_sdr(Eigen::ArrayXd(est_m.row(0).transpose().array()),
                                Eigen::ArrayXd(ref.row(0).transpose().array()));
    CHECK(si.val()(0, 0) == doctest::Approx(plain).epsilon(1e-9));

    g.backward(si.id());
    ctx.accumulate_param_grads();
    const double h = 1e-6;
    for (Eigen::Index i : {0L, 7L, 19L, 31L}) {
      Mat<S> p = est_m, m = est_m;
      p(0, i) += h;
      m(0, i) -= h;
      auto eval = [&](const Mat<S>& e) {
        Graph<S> g2;
        ParameterStore<S> ps2;
        GraphContext<S> c2(g2, ps2);
        return si_sdr_graph(c2, leaf(g2, e, false), ref).val()(0, 0);
      };
      const double fd = (eval(p) - eval(m)) / (2 * h);
      CHECK(std::abs(fd - ps.grad(est_p)(0, i)) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
  }

  Mat<S> sel(3, 6);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 6; ++c) sel(r, c) = rng.uniform();
  {
    Graph<S> g;
    Var<S> sv = leaf(g, sel, false);
    CHECK(discretization_loss_graph(sv, 100.0, 0.25, 0.5).val()(0, 0) ==
          doctest::Approx(discretization_loss(sel, 100.0, 0.25, 0.5)).epsilon(1e-12));
    CHECK(sparsity_loss_graph(sv, 0.25).val()(0, 0) ==
          doctest::Approx(sparsity_loss(sel, 0.25)).epsilon(1e-12));
  }
}
