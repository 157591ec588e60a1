#include <doctest.h>

#include <cmath>

#include "evchain/nn.hpp"

using namespace evchain;
using nn::Matrix;
using nn::Vector;

TEST_SUITE("nn") {

TEST_CASE("rng streams are reproducible and independent") {
  nn::Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  nn::Rng f1 = nn::Rng(42).fork(1), f2 = nn::Rng(42).fork(2);
  CHECK(f1.next() != f2.next());
  nn::Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = r.below(7);
    CHECK(k < 7);
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("encoder output shapes") {
  nn::ParameterSet params;
  const auto enc = nn::RecurrentEncoder::create(params, "enc", 3, 4);
  nn::Rng rng(1);
  params.init_uniform(rng, 0.1);
  const std::vector<Vector> one = {Vector::Ones(3)};
  const auto out = nn::encode_sequence(enc, one);
  REQUIRE(out.size() == 1);
  CHECK(out[0].size() == 8);
}

TEST_CASE("zero weights and inputs give zero states") {
  nn::ParameterSet params;
  const auto enc = nn::RecurrentEncoder::create(params, "enc", 3, 4);
  const std::vector<Vector> xs(3, Vector::Zero(3));
  for (const Vector& h : nn::encode_sequence(enc, xs)) CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mirrored encoder swaps halves on reversed input") {
  nn::ParameterSet params;
  const auto enc = nn::RecurrentEncoder::create(params, "enc", 2, 3);
  nn::Rng rng(5);
  params.init_uniform(rng, 0.5);
  enc.bw_w->value = enc.fw_w->value;
  enc.bw_b->value = enc.fw_b->value;
  Vector x1(2), x2(2);
  x1 << 0.3, -0.7;
  x2 << 1.1, 0.4;
  const std::vector<Vector> seq = {x1, x2};
  const std::vector<Vector> rev = {x2, x1};
  const auto a = nn::encode_sequence(enc, seq);
  const auto b = nn::encode_sequence(enc, rev);
  for (int t = 0; t < 2; ++t) {
    const Vector& fwd = a[static_cast<std::size_t>(t)];
    const Vector& bwd = b[static_cast<std::size_t>(1 - t)];
    CHECK((fwd.head(3) - bwd.tail(3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fwd.tail(3) - bwd.head(3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention pooling") {
  nn::ParameterSet params;
  const auto pool = nn::AttentionPool::create(params, "att", 1, 1);
  pool.w->value(0, 0) = 1.0;
  pool.v->value(0, 0) = 4.0;

  SUBCASE("single state is returned unchanged") {
    const std::vector<Vector> states = {Vector::Constant(1, 0.37)};
    CHECK(nn::attend(pool, states)(0) == doctest::Approx(0.37).epsilon(1e-15));
  }
  SUBCASE("identical states") {
    const std::vector<Vector> states(3, Vector::Constant(1, -0.2));
    CHECK(nn::attend(pool, states)(0) == doctest::Approx(-0.2).epsilon(1e-12));
  }
  SUBCASE("hand-set scores (2, 0)") {
    // v * tanh(atanh(0.5)) = 2 and v * tanh(0) = 0.
    const double h1 = std::atanh(0.5);
    const std::vector<Vector> states = {Vector::Constant(1, h1), Vector::Constant(1, 0.0)};
    const double e2 = std::exp(2.0);
    const Vector w = nn::attention_weights(pool, states);
    CHECK(w(0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-12));
    CHECK(nn::attend(pool, states)(0) == doctest::Approx(h1 * e2 / (e2 + 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    nn::ParameterSet params;
    auto& p = params.add("p", 2, 2);
    p.value.setConstant(0.5);
    nn::Adam adam(params, {.learning_rate = 0.1});
    adam.step();
    CHECK(p.value.isApproxToConstant(0.5));
  }
  SUBCASE("first step moves by the learning rate") {
    nn::ParameterSet params;
    auto& p = params.add("p", 1, 3);
    p.grad.setConstant(0.3);
    nn::Adam adam(params, {.learning_rate = 0.01});
    adam.step();
    // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(p.value(0, i) == doctest::Approx(-0.01 * 0.3 / (0.3 + 1e-8)));
    CHECK(p.grad.isZero());
  }
  SUBCASE("identical runs agree") {
    auto run = [] {
      nn::ParameterSet params;
      auto& p = params.add("p", 3, 1);
      nn::Rng rng(9);
      params.init_uniform(rng, 1.0);
      nn::Adam adam(params, {.learning_rate = 0.05});
      for (int s = 0; s < 20; ++s) {
        nn::Graph g;
        const nn::Expr x = g.param(p);
        const nn::Expr loss = g.dot(x, x);
        g.backward(loss);
        adam.step();
      }
      return p.value;
    };
    CHECK(run() == run());
  }
  SUBCASE("non-finite gradients are reported") {
    nn::ParameterSet params;
    auto& p = params.add("p", 1, 1);
    p.grad(0, 0) = std::nan("");
    nn::Adam adam(params, {});
    CHECK_THROWS_AS(adam.step(), nn::NonFiniteGradient);
  }
}

TEST_CASE("grad_check on a linear loss is exact") {
  nn::ParameterSet params;
  auto& w = params.add("w", 4, 1);
  nn::Rng rng(2);
  params.init_uniform(rng, 1.0);
  Vector x(4);
  x << 0.5, -1.5, 2.0, 0.25;
  const auto result = nn::grad_check([&](nn::Graph& g) { return g.dot(g.param(w), g.input(x)); }, params);
  CHECK(result.max_relative_error < 1e-10);
  CHECK(result.entries_checked == 4);
}

TEST_CASE("fused ops pass grad_check") {
  nn::ParameterSet params;
  auto& t = params.add("t", 3, 1);
  auto& n1 = params.add("n1", 3, 1);
  auto& n2 = params.add("n2", 3, 1);
  auto& lw = params.add("lw", 8, 5);
  auto& lb = params.add("lb", 8, 1);
  nn::Rng rng(4);
  params.init_uniform(rng, 1.0);
  const std::vector<double> means = {0.9, 0.3, -0.4};
  const std::vector<double> widths = {0.2, 0.3, 0.5};
  const auto result = nn::grad_check(
      [&](nn::Graph& g) {
        const std::vector<nn::Expr> ns = {g.param(n1), g.param(n2)};
        const nn::Expr cos = g.cosines(g.param(t), ns);
        const nn::Expr phi = g.gaussian_kernels(cos, means, widths);
        const nn::Expr hc = g.lstm(g.param(t), g.input(Matrix::Constant(4, 1, 0.1)), g.param(lw), g.param(lb));
        const nn::Expr parts[] = {g.sum_elements(phi), g.sum_elements(hc)};
        const nn::Expr z = g.sum(parts);
        return g.sigmoid_bce(z, 1.0);
      },
      params);
  CHECK(result.max_relative_error < 1e-6);
}

TEST_CASE("softmax cross entropy and probability helpers") {
  Vector logits = Vector::Zero(4);
  const Vector p = nn::softmax(logits);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(p(i) == doctest::Approx(0.25));
  CHECK(nn::cross_entropy(p, 2) == doctest::Approx(std::log(4.0)));
  CHECK(nn::binary_cross_entropy(1.0, 1) == doctest::Approx(-std::log(1.0 - 1e-7)));
  CHECK(nn::sigmoid(0.0) == 0.5);
}

TEST_CASE("parameter json round trip") {
  nn::ParameterSet a;
  a.add("x", 2, 3);
  a.add("y", 1, 1);
  nn::Rng rng(8);
  a.init_uniform(rng, 1.0);
  nn::ParameterSet b;
  b.add("x", 2, 3);
  b.add("y", 1, 1);
  b.load_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(a.equals(b));
  nn::ParameterSet c;
  c.add("x", 3, 2);
  CHECK_THROWS(c.load_json(a.to_json()));
}

}
