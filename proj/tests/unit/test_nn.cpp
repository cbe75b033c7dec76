#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "cdt/error.hpp"
#include "cdt/nn/array.hpp"
#include "cdt/nn/checkpoint.hpp"
#include "cdt/nn/ops.hpp"
#include "cdt/nn/optim.hpp"
#include "oracles/oracles.hpp"

using namespace cdt;
using namespace cdt::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double value(const Var& v) { return v->data(0, 0); }

// Runs a graph-building function, backpropagates, then compares against
// central differences of the same function.
oracle::GradCheck check_grads(const std::vector<Var>& params,
                              const std::function<Var(Tape&)>& build) {
  for (const auto& p : params) p->zero_grad();
  {
    Tape t;
    t.backward(build(t));
  }
  auto loss = [&] {
    Tape t(false);
    return value(build(t));
  };
  return oracle::finite_difference(loss, params, {});
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("softmax rows") {
    Tape t;
    const auto s = softmax_rows(t, constant(Matrix::Zero(1, 2)));
    CHECK(s->data(0, 0) == 0.5);
    CHECK(s->data(0, 1) == 0.5);

    Rng rng(0);
    const auto r = softmax_rows(t, constant(random_matrix(20, 7, rng, 10)));
    for (Eigen::Index i = 0; i < 20; ++i) {
      CHECK(r->data.row(i).minCoeff() >= 0);
      CHECK(std::abs(r->data.row(i).sum() - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("layer norm of a constant row is beta") {
    Tape t;
    const auto y = layer_norm(t, constant(Matrix::Constant(1, 5, 3.7)), constant(Matrix::Ones(1, 5)),
                              constant(Matrix::Zero(1, 5)));
    CHECK(y->data.cwiseAbs().maxCoeff() == 0);
  }

  TEST_CASE("matmul matches a naive product") {
    Matrix a(2, 3), b(3, 2);
    a << 1, 2, 3, 4, 5, 6;
    b << 7, 8, 9, 10, 11, 12;
    Tape t;
    const auto c = matmul(t, constant(a), constant(b));
    Matrix want = Matrix::Zero(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 3; ++k) want(i, j) += a(i, k) * b(k, j);
    CHECK(c->data == want);
    CHECK_THROWS_AS(matmul(t, constant(a), constant(a)), ShapeError);
  }

  TEST_CASE("simple gradients") {
    Rng rng(3);
    auto x = parameter(random_matrix(3, 4, rng));
    {
      Tape t;
      t.backward(sum(t, x));
      CHECK(x->grad == Matrix::Ones(3, 4));
    }
    x->zero_grad();
    {
      Tape t;
      t.backward(scale(t, sum(t, mul(t, x, x)), 0.5));
      CHECK((x->grad - x->data).cwiseAbs().maxCoeff() == 0);
    }
  }

  TEST_CASE("backward twice is an error") {
    auto x = parameter(Matrix::Ones(1, 1));
    Tape t;
    const auto loss = sum(t, x);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), GraphError);
  }

  TEST_CASE("backward needs a scalar from the same tape") {
    auto x = parameter(Matrix::Ones(2, 2));
    Tape a, b;
    CHECK_THROWS_AS(a.backward(scale(a, x, 2.0)), Error);
    const auto other = sum(b, x);
    CHECK_THROWS_AS(a.backward(other), GraphError);
  }

  TEST_CASE("two-layer MLP gradients match finite differences") {
    Rng rng(8);
    const Matrix xin = random_matrix(5, 3, rng);
    auto w1 = parameter(random_matrix(3, 6, rng, 0.5));
    auto b1 = parameter(random_matrix(1, 6, rng, 0.1));
    auto w2 = parameter(random_matrix(6, 2, rng, 0.5));
    auto b2 = parameter(random_matrix(1, 2, rng, 0.1));
    const Matrix target = random_matrix(5, 2, rng);
    const std::vector<double> wts(5, 1.0);
    const auto r = check_grads({w1, b1, w2, b2}, [&](Tape& t) {
      auto h = tanh(t, add_bias(t, matmul(t, constant(xin), w1), b1));
      return mse(t, linear(t, h, w2, b2), target, wts);
    });
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked == 18 + 6 + 12 + 2);
  }

  TEST_CASE("elementwise and normalization gradients") {
    Rng rng(12);
    auto x = parameter(random_matrix(4, 6, rng));
    auto g = parameter(random_matrix(1, 6, rng));
    auto b = parameter(random_matrix(1, 6, rng));
    auto y = parameter(random_matrix(4, 6, rng));
    const auto r = check_grads({x, g, b, y}, [&](Tape& t) {
      auto h = layer_norm(t, x, g, b);
      h = gelu(t, add(t, h, mul(t, y, y)));
      h = softmax_rows(t, scale_shift(t, h, 1.5, -0.2));
      return sum(t, mul(t, h, y));
    });
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("attention gradients match finite differences") {
    Rng rng(21);
    const std::size_t B = 2, L = 5, H = 2, D = 4;
    auto qkv = parameter(random_matrix(B * L, 3 * D, rng));
    auto w = parameter(random_matrix(D, 1, rng));
    const std::vector<std::uint8_t> valid = {0, 1, 1, 1, 1, 0, 0, 1, 1, 1};
    const std::size_t rows[] = {1, 4, 7, 9};
    const auto r = check_grads({qkv, w}, [&](Tape& t) {
      auto a = causal_attention(t, qkv, B, L, H, valid);
      return sum(t, tanh(t, matmul(t, gather_rows(t, a, rows), w)));
    });
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("single admissible key returns its value") {
    Rng rng(2);
    const Matrix m = random_matrix(3, 6, rng);
    Tape t;
    const std::vector<std::uint8_t> valid = {1, 1, 1};
    const auto out = causal_attention(t, constant(m), 1, 3, 1, valid);
    CHECK((out->data.row(0) - m.block(0, 4, 1, 2)).cwiseAbs().maxCoeff() == 0);

    const std::vector<std::uint8_t> none = {0, 0, 1};
    const auto masked = causal_attention(t, constant(m), 1, 3, 1, none);
    CHECK(masked->data.row(0).isZero());
    CHECK(masked->data.row(1).isZero());
    CHECK((masked->data.row(2) - m.block(2, 4, 1, 2)).cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("embedding, gather and assemble gradients") {
    Rng rng(4);
    auto table = parameter(random_matrix(6, 3, rng));
    auto a = parameter(random_matrix(2, 3, rng));
    auto b = parameter(random_matrix(2, 3, rng));
    const std::size_t idx[] = {5, 0, 5};
    const std::size_t pick[] = {3, 0, 3};
    const auto r = check_grads({table, a, b}, [&](Tape& t) {
      auto e = embedding(t, table, idx);
      auto z = assemble_rows(t, {a, b}, {{0, 2}, {1, 3}}, 5);
      auto s = gather_rows(t, z, pick);
      return sum(t, tanh(t, mul(t, e, s)));
    });
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("gaussian loss terms") {
    const std::vector<double> w = {1.0};
    Tape t;
    const auto nll = gaussian_nll(t, constant(Matrix::Zero(1, 1)), constant(Matrix::Zero(1, 1)),
                                  Matrix::Zero(1, 1), w);
    CHECK(std::abs(value(nll) - 0.5 * std::log(2 * std::numbers::pi)) <= 1e-9);
    const auto ent = gaussian_entropy(t, constant(Matrix::Zero(1, 1)), w);
    CHECK(std::abs(value(ent) - 0.5 * (1 + std::log(2 * std::numbers::pi))) <= 1e-9);

    Rng rng(6);
    auto mu = parameter(random_matrix(4, 2, rng));
    auto ls = parameter(random_matrix(4, 2, rng, 0.3));
    const Matrix target = random_matrix(4, 2, rng);
    const std::vector<double> rw = {1, 0, 1, 0.5};
    const auto r = check_grads({mu, ls}, [&](Tape& tt) {
      return add(tt, gaussian_nll(tt, mu, ls, target, rw), scale(tt, gaussian_entropy(tt, ls, rw), -0.1));
    });
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("loss weights ignore zero rows") {
    const std::vector<double> w = {1, 0};
    Matrix pred(2, 1), target(2, 1);
    pred << 1, 100;
    target << 0, 0;
    Tape t;
    CHECK(value(mse(t, constant(pred), target, w)) == 1);
  }

  TEST_CASE("dropout") {
    Rng rng(1);
    Tape t;
    const Matrix ones = Matrix::Ones(200, 100);
    CHECK(dropout(t, constant(ones), 0.3, false, rng)->data == ones);
    CHECK(dropout(t, constant(ones), 0.0, true, rng)->data == ones);
    const auto d = dropout(t, constant(ones), 0.3, true, rng);
    std::size_t zeros = 0;
    for (Eigen::Index i = 0; i < d->data.size(); ++i) {
      const double v = d->data.data()[i];
      if (v == 0) {
        ++zeros;
      } else {
        CHECK(v == 1.0 / 0.7);
      }
    }
    const double rate = static_cast<double>(zeros) / 20000.0;
    CHECK(std::abs(rate - 0.3) < 4 * std::sqrt(0.3 * 0.7 / 20000.0));
  }

  TEST_CASE("gradient clipping") {
    auto p = parameter(Matrix::Zero(1, 2));
    p->grad = Matrix(1, 2);
    p->grad << 3, 4;
    const std::vector<Var> ps = {p};
    CHECK(clip_grad_norm(ps, 10) == 1);
    CHECK(p->grad(0, 1) == 4);
    CHECK(clip_grad_norm(ps, 0.25) == doctest::Approx(0.05));
    CHECK(global_grad_norm(ps) == doctest::Approx(0.25).epsilon(1e-15));
    p->grad.setZero();
    CHECK(clip_grad_norm(ps, 0.25) == 1);
    CHECK(p->grad.isZero());
  }

  TEST_CASE("adam first step closed form") {
    auto p = parameter(Matrix::Zero(1, 3));
    p->data << 1, -2, 0.5;
    p->grad = Matrix(1, 3);
    p->grad << 0.2, -3, 0;
    const Matrix before = p->data;
    AdamState st;
    st.lr = 0.01;
    const std::vector<Var> ps = {p};
    adam_step(st, ps);
    CHECK(st.step_count == 1);
    for (int j = 0; j < 3; ++j) {
      const double g = (j == 0 ? 0.2 : j == 1 ? -3.0 : 0.0);
      const double mh = g;
      const double vh = g * g;
      CHECK(p->data(0, j) == doctest::Approx(before(0, j) - 0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
    }
    CHECK(p->data(0, 2) == 0.5);
  }

  TEST_CASE("adam matches a scalar reference over several steps") {
    Rng rng(31);
    auto p = parameter(random_matrix(2, 3, rng));
    std::vector<double> x(p->data.data(), p->data.data() + 6);
    oracle::AdamRef ref{1e-3, 0.9, 0.999, 1e-8, {}, {}, 0};
    AdamState st;
    st.lr = 1e-3;
    const std::vector<Var> ps = {p};
    for (int s = 0; s < 5; ++s) {
      const Matrix g = random_matrix(2, 3, rng);
      p->grad = g;
      adam_step(st, ps);
      ref.step(x, std::vector<double>(g.data(), g.data() + 6));
      for (int i = 0; i < 6; ++i) CHECK(p->data.data()[i] == doctest::Approx(x[i]).epsilon(1e-13));
    }
  }

  TEST_CASE("adam leaves zero-gradient parameters alone") {
    auto p = parameter(Matrix::Constant(2, 2, 0.7));
    AdamState st;
    const std::vector<Var> ps = {p};
    adam_step(st, ps);
    CHECK(p->data == Matrix::Constant(2, 2, 0.7));
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(5);
    Checkpoint c;
    c.header = {{"kind", "test"}, {"n", 3}};
    c.arrays.push_back({"a", random_matrix(3, 4, rng)});
    c.arrays.push_back({"b", Matrix::Constant(1, 1, 1.0 / 3.0)});
    const auto bytes = checkpoint_bytes(c);
    CHECK(bytes.substr(0, 8) == "CDTCKPT1");
    const auto back = checkpoint_from_bytes(bytes);
    CHECK(back.header == c.header);
    REQUIRE(back.arrays.size() == 2);
    CHECK(back.arrays[0].name == "a");
    CHECK(back.arrays[0].value == c.arrays[0].value);
    CHECK(back.arrays[1].value == c.arrays[1].value);
    CHECK(checkpoint_bytes(back) == bytes);

    CHECK_THROWS(checkpoint_from_bytes("NOTACKPT" + bytes.substr(8)));
    CHECK_THROWS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 3)));
  }
}
