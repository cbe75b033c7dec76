#include "cdt/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "cdt/error.hpp"

namespace cdt::nn {

namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void check_same(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

void check_weights(const char* op, const Matrix& x, std::span<const double> w) {
  if (static_cast<Eigen::Index>(w.size()) != x.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(w.size()) + " row weights for " +
                     shape_str(x));
  }
}

double weight_total(const char* op, std::span<const double> w) {
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw ShapeError(std::string(op) + ": empty batch (zero total weight)");
  return total;
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

Var matmul(Tape& t, const Var& a, const Var& b) {
  if (a->data.cols() != b->data.rows()) shape_fail("matmul", a->data, b->data);
  Matrix out(a->data.rows(), b->data.cols());
  out.noalias() = a->data * b->data;
  return t.emit(std::move(out), {&a, &b}, [a, b](const Array& o) {
    if (a->requires_grad) {
      Matrix ga(a->data.rows(), a->data.cols());
      ga.noalias() = o.grad * b->data.transpose();
      a->accumulate_grad(std::move(ga));
    }
    if (b->requires_grad) {
      Matrix gb(b->data.rows(), b->data.cols());
      gb.noalias() = a->data.transpose() * o.grad;
      b->accumulate_grad(std::move(gb));
    }
  });
}

Var linear(Tape& t, const Var& x, const Var& w, const Var& b) {
  if (x->data.cols() != w->data.rows()) shape_fail("linear", x->data, w->data);
  if (b->data.rows() != 1 || b->data.cols() != w->data.cols()) shape_fail("linear", w->data, b->data);
  Matrix out(x->data.rows(), w->data.cols());
  out.noalias() = x->data * w->data;
  out.rowwise() += b->data.row(0);
  return t.emit(std::move(out), {&x, &w, &b}, [x, w, b](const Array& o) {
    if (x->requires_grad) {
      Matrix gx(x->data.rows(), x->data.cols());
      gx.noalias() = o.grad * w->data.transpose();
      x->accumulate_grad(std::move(gx));
    }
    if (w->requires_grad) {
      Matrix gw(w->data.rows(), w->data.cols());
      gw.noalias() = x->data.transpose() * o.grad;
      w->accumulate_grad(std::move(gw));
    }
    if (b->requires_grad) b->accumulate_grad(o.grad.colwise().sum());
  });
}

Var add(Tape& t, const Var& a, const Var& b) {
  check_same("add", a->data, b->data);
  return t.emit(a->data + b->data, {&a, &b}, [a, b](const Array& o) {
    if (a->requires_grad) a->accumulate_grad(o.grad);
    if (b->requires_grad) b->accumulate_grad(o.grad);
  });
}

Var add_bias(Tape& t, const Var& x, const Var& bias) {
  if (bias->data.rows() != 1 || bias->data.cols() != x->data.cols()) {
    shape_fail("add_bias", x->data, bias->data);
  }
  Matrix out = x->data.rowwise() + bias->data.row(0);
  return t.emit(std::move(out), {&x, &bias}, [x, bias](const Array& o) {
    if (x->requires_grad) x->accumulate_grad(o.grad);
    if (bias->requires_grad) bias->accumulate_grad(o.grad.colwise().sum());
  });
}

Var mul(Tape& t, const Var& a, const Var& b) {
  check_same("mul", a->data, b->data);
  return t.emit(a->data.cwiseProduct(b->data), {&a, &b}, [a, b](const Array& o) {
    if (a->requires_grad) a->accumulate_grad(o.grad.cwiseProduct(b->data));
    if (b->requires_grad) b->accumulate_grad(o.grad.cwiseProduct(a->data));
  });
}

Var scale(Tape& t, const Var& x, double s) {
  return t.emit(x->data * s, {&x}, [x, s](const Array& o) { x->accumulate_grad(o.grad * s); });
}

Var scale_shift(Tape& t, const Var& x, double a, double b) {
  Matrix out = (x->data.array() * a + b).matrix();
  return t.emit(std::move(out), {&x}, [x, a](const Array& o) { x->accumulate_grad(o.grad * a); });
}

Var sum(Tape& t, const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x->data.sum();
  return t.emit(std::move(out), {&x}, [x](const Array& o) {
    x->accumulate_grad(Matrix::Constant(x->data.rows(), x->data.cols(), o.grad(0, 0)));
  });
}

Var mean(Tape& t, const Var& x) {
  const double n = static_cast<double>(x->data.size());
  if (n == 0) throw ShapeError("mean: empty input");
  Matrix out(1, 1);
  out(0, 0) = x->data.sum() / n;
  return t.emit(std::move(out), {&x}, [x, n](const Array& o) {
    x->accumulate_grad(Matrix::Constant(x->data.rows(), x->data.cols(), o.grad(0, 0) / n));
  });
}

Var tanh(Tape& t, const Var& x) {
  return t.emit(x->data.array().tanh().matrix(), {&x}, [x](const Array& o) {
    x->accumulate_grad(o.grad.cwiseProduct((1.0 - o.data.array().square()).matrix()));
  });
}

Var gelu(Tape& t, const Var& x) {
  // tanh form: 0.5 x (1 + tanh(c (x + 0.044715 x^3))), tanh via exp.
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double k = 0.044715;
  const auto xa = x->data.array();
  auto th = std::make_shared<Matrix>(x->data.rows(), x->data.cols());
  th->array() = 1.0 - 2.0 / (1.0 + (2.0 * c * (xa + k * xa.cube())).exp());
  Matrix y = (0.5 * xa * (1.0 + th->array())).matrix();
  return t.emit(std::move(y), {&x}, [x, th, c, k](const Array& o) {
    const auto xa = x->data.array();
    const auto ta = th->array();
    Matrix g = (o.grad.array() *
                (0.5 * (1.0 + ta) + 0.5 * xa * (1.0 - ta.square()) * c * (1.0 + 3.0 * k * xa.square())))
                   .matrix();
    x->accumulate_grad(g);
  });
}

Var softmax_rows(Tape& t, const Var& x) {
  Matrix y(x->data.rows(), x->data.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = x->data.row(r).maxCoeff();
    y.row(r) = (x->data.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return t.emit(std::move(y), {&x}, [x](const Array& o) {
    Matrix g(o.data.rows(), o.data.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = o.grad.row(r).dot(o.data.row(r));
      g.row(r) = o.data.row(r).cwiseProduct((o.grad.row(r).array() - dot).matrix());
    }
    x->accumulate_grad(g);
  });
}

Var layer_norm(Tape& t, const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x->data.rows();
  const Eigen::Index m = x->data.cols();
  if (gamma->data.rows() != 1 || gamma->data.cols() != m) shape_fail("layer_norm", x->data, gamma->data);
  if (beta->data.rows() != 1 || beta->data.cols() != m) shape_fail("layer_norm", x->data, beta->data);

  auto xhat = std::make_shared<Matrix>(n, m);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x->data.row(r).mean();
    const double var = (x->data.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = ((x->data.row(r).array() - mu) * (*inv_std)(r)).matrix();
  }
  Matrix y = (xhat->array().rowwise() * gamma->data.row(0).array()).matrix();
  y.rowwise() += beta->data.row(0);

  return t.emit(std::move(y), {&x, &gamma, &beta}, [x, gamma, beta, xhat, inv_std](const Array& o) {
    if (gamma->requires_grad) gamma->accumulate_grad(o.grad.cwiseProduct(*xhat).colwise().sum());
    if (beta->requires_grad) beta->accumulate_grad(o.grad.colwise().sum());
    if (x->requires_grad) {
      const Eigen::Index m = x->data.cols();
      Matrix dxhat = (o.grad.array().rowwise() * gamma->data.row(0).array()).matrix();
      Matrix g(x->data.rows(), m);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double mean_d = dxhat.row(r).mean();
        const double mean_dx = dxhat.row(r).dot(xhat->row(r)) / static_cast<double>(m);
        g.row(r) = ((dxhat.row(r).array() - mean_d - xhat->row(r).array() * mean_dx) *
                    (*inv_std)(r))
                       .matrix();
      }
      x->accumulate_grad(g);
    }
  });
}

Var dropout(Tape& t, const Var& x, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ShapeError("dropout: p must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  const auto threshold = static_cast<std::uint64_t>(std::llround(p * 65536.0));
  if (threshold == 0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<Matrix>(x->data.rows(), x->data.cols());
  double* m = mask->data();
  const Eigen::Index n = mask->size();
  for (Eigen::Index i = 0; i < n; i += 4) {
    std::uint64_t bits = rng();
    for (Eigen::Index j = i; j < std::min(n, i + 4); ++j, bits >>= 16) {
      m[j] = (bits & 0xffff) >= threshold ? keep_scale : 0.0;
    }
  }
  return t.emit(x->data.cwiseProduct(*mask), {&x},
                [x, mask](const Array& o) { x->accumulate_grad(o.grad.cwiseProduct(*mask)); });
}

Var embedding(Tape& t, const Var& table, std::span<const std::size_t> indices) {
  const auto rows = static_cast<std::size_t>(table->data.rows());
  Matrix out(static_cast<Eigen::Index>(indices.size()), table->data.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw ShapeError("embedding: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_str(table->data));
    }
    out.row(static_cast<Eigen::Index>(i)) = table->data.row(static_cast<Eigen::Index>(indices[i]));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return t.emit(std::move(out), {&table}, [table, idx = std::move(idx)](const Array& o) {
    Matrix g = Matrix::Zero(table->data.rows(), table->data.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g.row(static_cast<Eigen::Index>(idx[i])) += o.grad.row(static_cast<Eigen::Index>(i));
    }
    table->accumulate_grad(g);
  });
}

Var gather_rows(Tape& t, const Var& x, std::span<const std::size_t> rows) {
  return embedding(t, x, rows);
}

Var assemble_rows(Tape& t, const std::vector<Var>& inputs,
                  const std::vector<std::vector<std::size_t>>& positions, std::size_t total_rows) {
  if (inputs.size() != positions.size() || inputs.empty()) {
    throw ShapeError("assemble_rows: need one position list per input");
  }
  const Eigen::Index d = inputs.front()->data.cols();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(total_rows), d);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix& in = inputs[i]->data;
    if (in.cols() != d || static_cast<std::size_t>(in.rows()) != positions[i].size()) {
      shape_fail("assemble_rows", in, out);
    }
    for (std::size_t r = 0; r < positions[i].size(); ++r) {
      if (positions[i][r] >= total_rows) throw ShapeError("assemble_rows: position out of range");
      out.row(static_cast<Eigen::Index>(positions[i][r])) = in.row(static_cast<Eigen::Index>(r));
    }
  }
  return t.emit(std::move(out), inputs, [inputs, positions](const Array& o) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i]->requires_grad) continue;
      Matrix g(inputs[i]->data.rows(), inputs[i]->data.cols());
      for (std::size_t r = 0; r < positions[i].size(); ++r) {
        g.row(static_cast<Eigen::Index>(r)) = o.grad.row(static_cast<Eigen::Index>(positions[i][r]));
      }
      inputs[i]->accumulate_grad(g);
    }
  });
}

Var causal_attention(Tape& t, const Var& qkv, std::size_t batch, std::size_t seq_len,
                     std::size_t heads, std::span<const std::uint8_t> key_valid) {
  const Matrix& in = qkv->data;
  const auto rows = static_cast<Eigen::Index>(batch * seq_len);
  if (in.rows() != rows || in.cols() % 3 != 0) {
    throw ShapeError("causal_attention: qkv " + shape_str(in) + " does not match batch " +
                     std::to_string(batch) + " x seq_len " + std::to_string(seq_len));
  }
  const std::size_t D = static_cast<std::size_t>(in.cols()) / 3;
  if (heads == 0 || D % heads != 0) {
    throw ShapeError("causal_attention: width " + std::to_string(D) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (key_valid.size() != batch * seq_len) throw ShapeError("causal_attention: key mask size mismatch");

  const std::size_t hd = D / heads;
  const std::size_t L = seq_len;
  const std::size_t stride = 3 * D;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  // Attention weights per (batch, head), L x L row-major, zero where masked.
  auto probs = std::make_shared<std::vector<double>>(batch * heads * L * L, 0.0);
  Matrix out = Matrix::Zero(rows, static_cast<Eigen::Index>(D));
  const double* base = in.data();
  std::vector<double> kt(hd * L), scores(L);

  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* valid = key_valid.data() + b * L;
    const double* row0 = base + b * L * stride;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < L; ++j) {
        const double* k = row0 + j * stride + D + h * hd;
        for (std::size_t c = 0; c < hd; ++c) kt[c * L + j] = k[c];
      }
      double* pb = probs->data() + (b * heads + h) * L * L;
      for (std::size_t i = 0; i < L; ++i) {
        const double* q = row0 + i * stride + h * hd;
        std::fill(scores.begin(), scores.begin() + static_cast<long>(i + 1), 0.0);
        for (std::size_t c = 0; c < hd; ++c) {
          const double qc = q[c] * inv_sqrt;
          const double* kr = kt.data() + c * L;
          for (std::size_t j = 0; j <= i; ++j) scores[j] += qc * kr[j];
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          if (valid[j]) mx = std::max(mx, scores[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double* p = pb + i * L;
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          if (!valid[j]) continue;
          p[j] = std::exp(scores[j] - mx);
          z += p[j];
        }
        const double inv_z = 1.0 / z;
        double* o = out.data() + (b * L + i) * D + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          if (p[j] == 0.0) continue;
          p[j] *= inv_z;
          const double pj = p[j];
          const double* v = row0 + j * stride + 2 * D + h * hd;
          for (std::size_t c = 0; c < hd; ++c) o[c] += pj * v[c];
        }
      }
    }
  }

  return t.emit(std::move(out), {&qkv}, [qkv, probs, batch, heads, L, D, hd, inv_sqrt](const Array& o) {
    const std::size_t stride = 3 * D;
    Matrix g = Matrix::Zero(qkv->data.rows(), qkv->data.cols());
    const double* base = qkv->data.data();
    std::vector<double> vt(hd * L), dp(L);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* row0 = base + b * L * stride;
      double* grow0 = g.data() + b * L * stride;
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t j = 0; j < L; ++j) {
          const double* v = row0 + j * stride + 2 * D + h * hd;
          for (std::size_t c = 0; c < hd; ++c) vt[c * L + j] = v[c];
        }
        const double* pb = probs->data() + (b * heads + h) * L * L;
        for (std::size_t i = 0; i < L; ++i) {
          const double* p = pb + i * L;
          const double* go = o.grad.data() + (b * L + i) * D + h * hd;
          // dp_j = go . v_j over the causal prefix.
          std::fill(dp.begin(), dp.begin() + static_cast<long>(i + 1), 0.0);
          for (std::size_t c = 0; c < hd; ++c) {
            const double gc = go[c];
            const double* vr = vt.data() + c * L;
            for (std::size_t j = 0; j <= i; ++j) dp[j] += gc * vr[j];
          }
          double dot = 0.0;
          for (std::size_t j = 0; j <= i; ++j) dot += p[j] * dp[j];
          const double* q = row0 + i * stride + h * hd;
          double* gq = grow0 + i * stride + h * hd;
          for (std::size_t j = 0; j <= i; ++j) {
            const double pj = p[j];
            if (pj == 0.0) continue;
            const double ds = pj * (dp[j] - dot) * inv_sqrt;
            const double* k = row0 + j * stride + D + h * hd;
            double* gk = grow0 + j * stride + D + h * hd;
            double* gv = grow0 + j * stride + 2 * D + h * hd;
            for (std::size_t c = 0; c < hd; ++c) {
              gq[c] += ds * k[c];
              gk[c] += ds * q[c];
              gv[c] += pj * go[c];
            }
          }
        }
      }
    }
    qkv->accumulate_grad(std::move(g));
  });
}

Var gaussian_nll(Tape& t, const Var& mean, const Var& log_std, const Matrix& target,
                 std::span<const double> row_weights) {
  check_same("gaussian_nll", mean->data, log_std->data);
  check_same("gaussian_nll", mean->data, target);
  check_weights("gaussian_nll", mean->data, row_weights);
  const double total = weight_total("gaussian_nll", row_weights);

  double loss = 0.0;
  for (Eigen::Index r = 0; r < mean->data.rows(); ++r) {
    const double w = row_weights[static_cast<std::size_t>(r)];
    if (w == 0.0) continue;
    double row = 0.0;
    for (Eigen::Index j = 0; j < mean->data.cols(); ++j) {
      const double ls = log_std->data(r, j);
      const double z = (target(r, j) - mean->data(r, j)) * std::exp(-ls);
      row += 0.5 * z * z + ls + kHalfLog2Pi;
    }
    loss += w * row;
  }
  Matrix out(1, 1);
  out(0, 0) = loss / total;

  std::vector<double> w(row_weights.begin(), row_weights.end());
  return t.emit(std::move(out), {&mean, &log_std},
                [mean, log_std, target, w = std::move(w), total](const Array& o) {
    const double g0 = o.grad(0, 0) / total;
    Matrix gm = Matrix::Zero(mean->data.rows(), mean->data.cols());
    Matrix gl = Matrix::Zero(mean->data.rows(), mean->data.cols());
    for (Eigen::Index r = 0; r < gm.rows(); ++r) {
      const double wr = w[static_cast<std::size_t>(r)] * g0;
      if (wr == 0.0) continue;
      for (Eigen::Index j = 0; j < gm.cols(); ++j) {
        const double inv_var = std::exp(-2.0 * log_std->data(r, j));
        const double diff = mean->data(r, j) - target(r, j);
        gm(r, j) = wr * diff * inv_var;
        gl(r, j) = wr * (1.0 - diff * diff * inv_var);
      }
    }
    if (mean->requires_grad) mean->accumulate_grad(gm);
    if (log_std->requires_grad) log_std->accumulate_grad(gl);
  });
}

Var gaussian_entropy(Tape& t, const Var& log_std, std::span<const double> row_weights) {
  check_weights("gaussian_entropy", log_std->data, row_weights);
  const double total = weight_total("gaussian_entropy", row_weights);
  const double per_dim = 0.5 + kHalfLog2Pi;
  double h = 0.0;
  for (Eigen::Index r = 0; r < log_std->data.rows(); ++r) {
    const double w = row_weights[static_cast<std::size_t>(r)];
    if (w == 0.0) continue;
    h += w * (log_std->data.row(r).sum() + per_dim * static_cast<double>(log_std->data.cols()));
  }
  Matrix out(1, 1);
  out(0, 0) = h / total;
  std::vector<double> w(row_weights.begin(), row_weights.end());
  return t.emit(std::move(out), {&log_std}, [log_std, w = std::move(w), total](const Array& o) {
    Matrix g(log_std->data.rows(), log_std->data.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      g.row(r).setConstant(o.grad(0, 0) * w[static_cast<std::size_t>(r)] / total);
    }
    log_std->accumulate_grad(g);
  });
}

Var mse(Tape& t, const Var& pred, const Matrix& target, std::span<const double> row_weights) {
  check_same("mse", pred->data, target);
  check_weights("mse", pred->data, row_weights);
  const double total = weight_total("mse", row_weights) * static_cast<double>(pred->data.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < pred->data.rows(); ++r) {
    const double w = row_weights[static_cast<std::size_t>(r)];
    if (w != 0.0) loss += w * (pred->data.row(r) - target.row(r)).squaredNorm();
  }
  Matrix out(1, 1);
  out(0, 0) = loss / total;
  std::vector<double> w(row_weights.begin(), row_weights.end());
  return t.emit(std::move(out), {&pred}, [pred, target, w = std::move(w), total](const Array& o) {
    Matrix g(pred->data.rows(), pred->data.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      g.row(r) = (pred->data.row(r) - target.row(r)) *
                 (2.0 * o.grad(0, 0) * w[static_cast<std::size_t>(r)] / total);
    }
    pred->accumulate_grad(g);
  });
}

}  // namespace cdt::nn
