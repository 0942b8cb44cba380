/*
 * Copyright 2026 The qpriv Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QPRIV_AUTODIFF_HPP_
#define QPRIV_AUTODIFF_HPP_

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation applied to Vars in creation order. Calling
// backward() from a scalar node walks the tape in reverse and accumulates
// derivatives. Parameters live in a ParamSet (one flat buffer plus a named
// layout); their derivatives land directly in a Gradient with the same layout.
//
// Every value is rank <= 2. A vector of n features is a 1 x n row; a batch of
// n such rows is n x features. Scalars are 1 x 1.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qpriv/types.hpp"

namespace qpriv::ad {

// Dense value type used outside the tape.
using Tensor = Matrix;

std::string shape_string(Index rows, Index cols);

struct ParamEntry {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;
};

class ParamLayout {
 public:
  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& entry(std::string_view name) const;
  bool contains(std::string_view name) const;
  Index size() const { return size_; }
  bool operator==(const ParamLayout& other) const;

 private:
  friend class ParamSet;
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  Index size_ = 0;
};

// Named parameter tensors stored contiguously. Flattening order is insertion
// order and never changes once a tensor is added.
class ParamSet {
 public:
  ParamSet();

  void add(std::string name, const Matrix& init);

  Eigen::Map<Matrix> operator[](std::string_view name);
  Eigen::Map<const Matrix> operator[](std::string_view name) const;

  Vector& flat() { return values_; }
  const Vector& flat() const { return values_; }
  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }
  Index size() const { return layout_->size(); }

 private:
  std::shared_ptr<ParamLayout> layout_;
  Vector values_;
};

// Derivative with respect to every tensor of a ParamSet.
class Gradient {
 public:
  Gradient() = default;
  explicit Gradient(std::shared_ptr<const ParamLayout> layout);
  static Gradient zeros_like(const ParamSet& params);

  Eigen::Map<Matrix> operator[](std::string_view name);
  Eigen::Map<const Matrix> operator[](std::string_view name) const;

  Vector& flat() { return values_; }
  const Vector& flat() const { return values_; }
  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }

  Scalar l2_norm() const { return values_.norm(); }
  void set_zero() { values_.setZero(); }

  Gradient& operator+=(const Gradient& other);
  Gradient& operator*=(Scalar s);

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Vector values_;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  Eigen::Map<const Matrix> value() const;
  Index rows() const;
  Index cols() const;
  Scalar item() const;  // value of a 1 x 1 node
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  explicit Tape(const ParamSet& params) : params_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to a parameter tensor; created once per name.
  Var param(std::string_view name);
  Var constant(Matrix value);
  Var scalar(Scalar value);

  // Accumulates d(loss)/d(params) into `into`. The loss must be 1 x 1.
  // May be called repeatedly on the same tape, from different loss nodes.
  void backward(Var loss, Gradient& into);

  std::size_t size() const { return nodes_.size(); }

  // Operation-author interface.
  Var push(const char* op, Matrix value, std::vector<int> inputs, BackwardFn fn);
  Eigen::Map<const Matrix> value(int id) const;
  const Matrix& grad(int id) const { return grads_[id]; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].requires_grad) return;
    sink(id) += g;
  }
  // Adds `g` row r into row rows[r] of node id (scatter).
  void accumulate_rows(int id, std::span<const int> rows, const Matrix& g);

 private:
  struct Node {
    const char* op = "";
    Matrix own;
    const Scalar* data = nullptr;
    Index rows = 0;
    Index cols = 0;
    Index param_offset = -1;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Eigen::Map<Matrix> sink(int id);

  const ParamSet* params_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::vector<char> has_grad_;
  std::map<std::string, int, std::less<>> param_nodes_;
  Gradient* active_ = nullptr;
};

// ---- primitive operations -------------------------------------------------

Var matmul(Var a, Var b);     // a b
Var matmul_nt(Var a, Var b);  // a b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);           // elementwise
Var add_row(Var a, Var row);     // broadcast 1 x n row over every row of a
Var mul_row(Var a, Var row);     // broadcast elementwise product
Var scale(Var a, Scalar s);
Var add_scalar(Var a, Scalar s);
Var gather_rows(Var table, std::vector<int> ids);
Var mean_rows(Var a);            // mean-pool over axis 0 -> 1 x cols
Var sum(Var a);                  // -> 1 x 1
Var mean(Var a);                 // -> 1 x 1
// Fused gather + mean-pool: row i of the result is the mean of table rows
// lists[i]. Every list must be nonempty.
Var embedding_bag_mean(Var table, const std::vector<std::vector<int>>& lists);
Var tanh(Var a);
Var relu(Var a);
Var gelu(Var a);  // tanh approximation
Var log_softmax_rows(Var a);
Var softmax_rows(Var a);
// Row-wise softmax of a square score matrix with entries above the diagonal
// masked out (causal attention weights).
Var causal_softmax(Var scores);
Var rms_norm_rows(Var a, Var gain, Scalar eps = 1e-6);
Var l2_normalize_rows(Var a);
Var dot(Var a, Var b);       // full contraction -> 1 x 1
Var dot_rows(Var a, Var b);  // row-wise -> rows x 1
Var masked_select_rows(Var a, const std::vector<bool>& mask);
Var pick(Var a, std::vector<int> rows, std::vector<int> cols);  // -> n x 1
Var element(Var a, Index row, Index col);                       // -> 1 x 1

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator*(Scalar s, Var a) { return scale(a, s); }
inline Var operator*(Var a, Scalar s) { return scale(a, s); }

// ---- derivatives -----------------------------------------------------------

// Builds the computation on a fresh tape bound to `params` and returns its
// scalar output.
using ScalarLossFn = std::function<Var(Tape&)>;
// Returns one scalar node per example.
using PerExampleLossFn = std::function<std::vector<Var>(Tape&)>;
// Builds the scalar loss of example `i` on its own tape.
using ExampleLossFn = std::function<Var(Tape&, std::size_t)>;

Gradient grad(const ScalarLossFn& loss_fn, const ParamSet& params);
Scalar evaluate(const ScalarLossFn& loss_fn, const ParamSet& params);

// Gradient of each per-example scalar, in batch order. The batch is recorded
// once and the backward pass is repeated from each example's output, so an
// example's gradient includes every path through other examples' inputs.
// Memory stays linear in the batch, unlike the input-duplication scheme that
// vectorized per-example gradient engines use for coupled losses.
std::vector<Gradient> per_example_grads(const PerExampleLossFn& loss_fn,
                                        std::size_t batch_size,
                                        const ParamSet& params);

// Streaming variant for losses that decompose over examples: example i is
// recorded on its own tape and its gradient handed to `sink` before the next
// example is touched. Returns the per-example loss values.
std::vector<Scalar> for_each_example_grad(
    const ExampleLossFn& loss_fn, std::size_t batch_size, const ParamSet& params,
    const std::function<void(std::size_t, const Gradient&)>& sink);

struct GradientCheckOptions {
  Scalar step = 1e-5;
  std::size_t coordinates = 100;
  std::uint64_t seed = 0;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  Scalar floor = 1e-6;
};

// Maximum relative error between the analytic gradient and central
// differences over a seeded random subset of coordinates. Half of the subset
// is drawn from coordinates with a nonzero analytic derivative when enough
// exist, so sparse gradients (embedding tables) are still exercised.
Scalar gradient_check(const ScalarLossFn& loss_fn, const ParamSet& params,
                      const GradientCheckOptions& options = {});

}  // namespace qpriv::ad

#endif  // QPRIV_AUTODIFF_HPP_
