#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace cdt::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A dense 2-D array of doubles with an optional gradient buffer.
struct Array {
  Matrix data;
  Matrix grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // tape that produced this array, 0 for leaves

  std::vector<std::size_t> shape() const {
    return {static_cast<std::size_t>(data.rows()), static_cast<std::size_t>(data.cols())};
  }
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad() { grad.resize(0, 0); }
  void accumulate_grad(const Matrix& g);
  void accumulate_grad(Matrix&& g);
};

using Var = std::shared_ptr<Array>;

Var parameter(Matrix value);
Var constant(Matrix value);

// Records the backward closures of the operations applied through it. A tape
// built with recording = false evaluates forward only.
class Tape {
 public:
  explicit Tape(bool recording = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  // Creates the output array for an op over `inputs`. When any input needs a
  // gradient, the output is marked as well and `backward_fn` is queued; it is
  // only invoked if the output received a gradient.
  Var emit(Matrix value, std::initializer_list<const Var*> inputs,
           std::function<void(const Array& out)> backward_fn);
  Var emit(Matrix value, const std::vector<Var>& inputs,
           std::function<void(const Array& out)> backward_fn);

  // Propagates d(loss)/d(.) to every reachable array. The loss must be a 1x1
  // array recorded on this tape; a tape can be replayed only once.
  void backward(const Var& loss);

  std::size_t size() const { return ops_.size(); }

 private:
  struct Op {
    std::shared_ptr<Array> out;
    std::function<void(const Array&)> fn;
  };
  bool recording_;
  bool consumed_ = false;
  std::uint64_t id_;
  std::vector<Op> ops_;
};

}  // namespace cdt::nn
