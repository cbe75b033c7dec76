#include "cdt/nn/array.hpp"

#include <atomic>
#include <string>

#include "cdt/error.hpp"

namespace cdt::nn {

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}

void Array::accumulate_grad(const Matrix& g) {
  if (g.rows() != data.rows() || g.cols() != data.cols()) {
    throw ShapeError("gradient shape mismatch");
  }
  if (has_grad()) {
    grad += g;
  } else {
    grad = g;
  }
}

void Array::accumulate_grad(Matrix&& g) {
  if (g.rows() != data.rows() || g.cols() != data.cols()) {
    throw ShapeError("gradient shape mismatch");
  }
  if (has_grad()) {
    grad += g;
  } else {
    grad = std::move(g);
  }
}

Var parameter(Matrix value) {
  auto a = std::make_shared<Array>();
  a->data = std::move(value);
  a->requires_grad = true;
  return a;
}

Var constant(Matrix value) {
  auto a = std::make_shared<Array>();
  a->data = std::move(value);
  return a;
}

Tape::Tape(bool recording) : recording_(recording), id_(next_tape_id++) {}

Var Tape::emit(Matrix value, std::initializer_list<const Var*> inputs,
               std::function<void(const Array& out)> backward_fn) {
  auto out = std::make_shared<Array>();
  out->data = std::move(value);
  if (!recording_) return out;
  bool needs = false;
  for (const Var* v : inputs) needs = needs || (*v)->requires_grad;
  if (!needs) return out;
  out->requires_grad = true;
  out->tape_id = id_;
  ops_.push_back({out, std::move(backward_fn)});
  return out;
}

Var Tape::emit(Matrix value, const std::vector<Var>& inputs,
               std::function<void(const Array& out)> backward_fn) {
  auto out = std::make_shared<Array>();
  out->data = std::move(value);
  if (!recording_) return out;
  bool needs = false;
  for (const auto& v : inputs) needs = needs || v->requires_grad;
  if (!needs) return out;
  out->requires_grad = true;
  out->tape_id = id_;
  ops_.push_back({out, std::move(backward_fn)});
  return out;
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw GraphError("backward called twice on the same tape; re-run forward first");
  if (loss->data.rows() != 1 || loss->data.cols() != 1) {
    throw GraphError("backward requires a scalar loss, got " + std::to_string(loss->data.rows()) +
                     "x" + std::to_string(loss->data.cols()));
  }
  if (!recording_ || loss->tape_id != id_) {
    throw GraphError("loss is detached from this tape (no recorded operations lead to it)");
  }
  loss->grad = Matrix::Ones(1, 1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (it->out->has_grad()) it->fn(*it->out);
  }
  consumed_ = true;
  ops_.clear();
}

}  // namespace cdt::nn
