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

#include "qpriv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qpriv/rng.hpp"

namespace qpriv::ad {

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << "(" << rows << "," << cols << ")";
  return os.str();
}

namespace {

void check_shape(bool ok, const char* op, Var a, Var b) {
  if (!ok) {
    throw Error(std::string(op) + ": shape mismatch " +
                shape_string(a.rows(), a.cols()) + " vs " +
                shape_string(b.rows(), b.cols()));
  }
}

void check_same_tape(Var a, Var b) {
  check(a.tape != nullptr && a.tape == b.tape, "operands recorded on different tapes");
}

}  // namespace

// ---- ParamLayout / ParamSet / Gradient --------------------------------------

const ParamEntry& ParamLayout::entry(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

bool ParamLayout::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

ParamSet::ParamSet() : layout_(std::make_shared<ParamLayout>()) {}

void ParamSet::add(std::string name, const Matrix& init) {
  check(!layout_->contains(name), "duplicate parameter name '" + name + "'");
  check(init.allFinite(), "non-finite initial value for '" + name + "'");
  // Layouts are shared with gradients; copy on write.
  if (layout_.use_count() > 1) layout_ = std::make_shared<ParamLayout>(*layout_);
  ParamEntry e{name, init.rows(), init.cols(), layout_->size_};
  layout_->index_.emplace(name, layout_->entries_.size());
  layout_->entries_.push_back(e);
  layout_->size_ += init.size();
  values_.conservativeResize(layout_->size_);
  values_.segment(e.offset, init.size()) = init.reshaped<Eigen::RowMajor>();
}

Eigen::Map<Matrix> ParamSet::operator[](std::string_view name) {
  const auto& e = layout_->entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const Matrix> ParamSet::operator[](std::string_view name) const {
  const auto& e = layout_->entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Gradient::Gradient(std::shared_ptr<const ParamLayout> layout)
    : layout_(std::move(layout)), values_(Vector::Zero(layout_->size())) {}

Gradient Gradient::zeros_like(const ParamSet& params) {
  return Gradient(params.layout_ptr());
}

Eigen::Map<Matrix> Gradient::operator[](std::string_view name) {
  const auto& e = layout_->entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const Matrix> Gradient::operator[](std::string_view name) const {
  const auto& e = layout_->entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Gradient& Gradient::operator+=(const Gradient& other) {
  check(values_.size() == other.values_.size(), "gradient layout mismatch");
  values_ += other.values_;
  return *this;
}

Gradient& Gradient::operator*=(Scalar s) {
  values_ *= s;
  return *this;
}

// ---- Var / Tape --------------------------------------------------------------

Eigen::Map<const Matrix> Var::value() const { return tape->value(id); }
Index Var::rows() const { return tape->value(id).rows(); }
Index Var::cols() const { return tape->value(id).cols(); }
Scalar Var::item() const {
  auto v = value();
  check(v.rows() == 1 && v.cols() == 1,
        "item() on non-scalar " + shape_string(v.rows(), v.cols()));
  return v(0, 0);
}

Var Tape::param(std::string_view name) {
  check(params_ != nullptr, "tape is not bound to a ParamSet");
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return {this, it->second};
  const auto& e = params_->layout().entry(name);
  Node n;
  n.op = "param";
  n.rows = e.rows;
  n.cols = e.cols;
  n.param_offset = e.offset;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(std::string(name), id);
  return {this, id};
}

Var Tape::constant(Matrix value) { return push("constant", std::move(value), {}, nullptr); }

Var Tape::scalar(Scalar value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::push(const char* op, Matrix value, std::vector<int> inputs, BackwardFn fn) {
  if (!value.allFinite()) throw Error(std::string("non-finite value produced by ") + op);
  Node n;
  n.op = op;
  n.rows = value.rows();
  n.cols = value.cols();
  n.own = std::move(value);
  for (int in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Eigen::Map<const Matrix> Tape::value(int id) const {
  const Node& n = nodes_[id];
  if (n.param_offset >= 0) return {params_->flat().data() + n.param_offset, n.rows, n.cols};
  return {n.own.data(), n.rows, n.cols};
}

Eigen::Map<Matrix> Tape::sink(int id) {
  Node& n = nodes_[id];
  if (n.param_offset >= 0) return {active_->flat().data() + n.param_offset, n.rows, n.cols};
  if (!has_grad_[id]) {
    grads_[id].setZero(n.rows, n.cols);
    has_grad_[id] = 1;
  }
  return {grads_[id].data(), n.rows, n.cols};
}

void Tape::accumulate_rows(int id, std::span<const int> rows, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  auto s = sink(id);
  for (std::size_t r = 0; r < rows.size(); ++r) s.row(rows[r]) += g.row(r);
}

void Tape::backward(Var loss, Gradient& into) {
  check(loss.tape == this, "loss recorded on a different tape");
  check(loss.rows() == 1 && loss.cols() == 1,
        "backward() needs a scalar loss, got " + shape_string(loss.rows(), loss.cols()));
  check(params_ != nullptr && into.layout() == params_->layout(),
        "gradient layout does not match the tape's parameters");
  grads_.resize(nodes_.size());
  has_grad_.assign(nodes_.size(), 0);
  active_ = &into;
  if (!nodes_[loss.id].requires_grad) {
    active_ = nullptr;
    return;
  }
  sink(loss.id)(0, 0) += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.param_offset >= 0 || !has_grad_[id] || !n.backward) continue;
    n.backward(*this, id);
  }
  active_ = nullptr;
}

// ---- operations ----------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.cols() == b.rows(), "matmul", a, b);
  Matrix v = a.value() * b.value();
  return a.tape->push("matmul", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id)) t.accumulate(a.id, g * t.value(b.id).transpose());
    if (t.requires_grad(b.id)) t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix v = a.value() * b.value().transpose();
  return a.tape->push("matmul_nt", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id)) t.accumulate(a.id, g * t.value(b.id));
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.transpose() * t.value(a.id));
  });
}

Var transpose(Var a) {
  Matrix v = a.value().transpose();
  return a.tape->push("transpose", std::move(v), {a.id}, [a](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self).transpose());
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  Matrix v = a.value() + b.value();
  return a.tape->push("add", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  Matrix v = a.value() - b.value();
  return a.tape->push("sub", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return a.tape->push("mul", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape->push("add_row", std::move(v), {a.id, row.id}, [a, row](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a.id, g);
    if (t.requires_grad(row.id)) t.accumulate(row.id, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  check_same_tape(a, row);
  check_shape(row.rows() == 1 && row.cols() == a.cols(), "mul_row", a, row);
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return a.tape->push("mul_row", std::move(v), {a.id, row.id}, [a, row](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id)) {
      Matrix ga = g.array().rowwise() * t.value(row.id).row(0).array();
      t.accumulate(a.id, ga);
    }
    if (t.requires_grad(row.id)) {
      t.accumulate(row.id, g.cwiseProduct(t.value(a.id)).colwise().sum());
    }
  });
}

Var scale(Var a, Scalar s) {
  Matrix v = a.value() * s;
  return a.tape->push("scale", std::move(v), {a.id}, [a, s](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self) * s);
  });
}

Var add_scalar(Var a, Scalar s) {
  Matrix v = a.value().array() + s;
  return a.tape->push("add_scalar", std::move(v), {a.id}, [a](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self));
  });
}

Var gather_rows(Var table, std::vector<int> ids) {
  auto tv = table.value();
  Matrix v(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < tv.rows(),
          "gather_rows: index " + std::to_string(ids[i]) + " outside table " +
              shape_string(tv.rows(), tv.cols()));
    v.row(static_cast<Index>(i)) = tv.row(ids[i]);
  }
  return table.tape->push("gather_rows", std::move(v), {table.id},
                          [table, ids = std::move(ids)](Tape& t, int self) {
                            t.accumulate_rows(table.id, ids, t.grad(self));
                          });
}

Var mean_rows(Var a) {
  check(a.rows() > 0, "mean_rows: empty input");
  Matrix v = a.value().colwise().mean();
  return a.tape->push("mean_rows", std::move(v), {a.id}, [a](Tape& t, int self) {
    const Index m = t.value(a.id).rows();
    t.accumulate(a.id, t.grad(self).replicate(m, 1) / static_cast<Scalar>(m));
  });
}

Var sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->push("sum", std::move(v), {a.id}, [a](Tape& t, int self) {
    auto av = t.value(a.id);
    t.accumulate(a.id, Matrix::Constant(av.rows(), av.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(Var a) {
  check(a.value().size() > 0, "mean: empty input");
  Matrix v(1, 1);
  v(0, 0) = a.value().mean();
  return a.tape->push("mean", std::move(v), {a.id}, [a](Tape& t, int self) {
    auto av = t.value(a.id);
    const Scalar g = t.grad(self)(0, 0) / static_cast<Scalar>(av.size());
    t.accumulate(a.id, Matrix::Constant(av.rows(), av.cols(), g));
  });
}

Var embedding_bag_mean(Var table, const std::vector<std::vector<int>>& lists) {
  auto tv = table.value();
  Matrix v = Matrix::Zero(static_cast<Index>(lists.size()), tv.cols());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    check(!lists[i].empty(), "embedding_bag_mean: empty token list at row " + std::to_string(i));
    for (int id : lists[i]) {
      check(id >= 0 && id < tv.rows(), "embedding_bag_mean: index " + std::to_string(id) +
                                           " outside table " + shape_string(tv.rows(), tv.cols()));
      v.row(static_cast<Index>(i)) += tv.row(id);
    }
    v.row(static_cast<Index>(i)) /= static_cast<Scalar>(lists[i].size());
  }
  return table.tape->push(
      "embedding_bag_mean", std::move(v), {table.id}, [table, lists](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        std::vector<int> rows;
        Matrix scattered;
        for (std::size_t i = 0; i < lists.size(); ++i) {
          const Scalar w = 1.0 / static_cast<Scalar>(lists[i].size());
          rows.assign(lists[i].begin(), lists[i].end());
          scattered = g.row(static_cast<Index>(i)).replicate(static_cast<Index>(rows.size()), 1) * w;
          t.accumulate_rows(table.id, rows, scattered);
        }
      });
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh();
  return a.tape->push("tanh", std::move(v), {a.id}, [a](Tape& t, int self) {
    auto y = t.value(self).array();
    t.accumulate(a.id, (t.grad(self).array() * (1.0 - y * y)).matrix());
  });
}

Var relu(Var a) {
  Matrix v = a.value().cwiseMax(0.0);
  return a.tape->push("relu", std::move(v), {a.id}, [a](Tape& t, int self) {
    auto x = t.value(a.id).array();
    t.accumulate(a.id, (t.grad(self).array() * (x > 0.0).cast<Scalar>()).matrix());
  });
}

namespace {
constexpr Scalar kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr Scalar kGeluC = 0.044715;
}  // namespace

Var gelu(Var a) {
  auto x = a.value().array();
  Matrix v = (0.5 * x * (1.0 + (kGeluK * (x + kGeluC * x.cube())).tanh())).matrix();
  return a.tape->push("gelu", std::move(v), {a.id}, [a](Tape& t, int self) {
    auto x = t.value(a.id).array();
    auto th = (kGeluK * (x + kGeluC * x.cube())).tanh();
    auto d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluK * (1.0 + 3.0 * kGeluC * x.square());
    t.accumulate(a.id, (t.grad(self).array() * d).matrix());
  });
}

namespace {

Matrix row_softmax(const Eigen::Map<const Matrix>& x) {
  Matrix p = x.colwise() - x.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

}  // namespace

Var log_softmax_rows(Var a) {
  auto x = a.value();
  Vector mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Vector lse = shifted.array().exp().rowwise().sum().log();
  Matrix v = shifted.colwise() - lse;
  return a.tape->push("log_softmax_rows", std::move(v), {a.id}, [a](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix p = t.value(self).array().exp();
    Matrix d = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(a.id, d);
  });
}

namespace {

Matrix softmax_backward(const Matrix& g, const Eigen::Map<const Matrix>& p) {
  Vector inner = g.cwiseProduct(p).rowwise().sum();
  return (p.array() * (g.colwise() - inner).array()).matrix();
}

}  // namespace

Var softmax_rows(Var a) {
  Matrix v = row_softmax(a.value());
  return a.tape->push("softmax_rows", std::move(v), {a.id}, [a](Tape& t, int self) {
    t.accumulate(a.id, softmax_backward(t.grad(self), t.value(self)));
  });
}

Var causal_softmax(Var scores) {
  auto s = scores.value();
  check(s.rows() == s.cols(), "causal_softmax: scores must be square, got " +
                                  shape_string(s.rows(), s.cols()));
  const Index n = s.rows();
  Matrix v = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    auto row = s.row(i).head(i + 1);
    const Scalar mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    v.row(i).head(i + 1) = e / e.sum();
  }
  return scores.tape->push("causal_softmax", std::move(v), {scores.id},
                           [scores](Tape& t, int self) {
                             t.accumulate(scores.id, softmax_backward(t.grad(self), t.value(self)));
                           });
}

Var rms_norm_rows(Var a, Var gain, Scalar eps) {
  check_same_tape(a, gain);
  check_shape(gain.rows() == 1 && gain.cols() == a.cols(), "rms_norm_rows", a, gain);
  auto x = a.value();
  Vector inv_rms = ((x.array().square().rowwise().mean()) + eps).rsqrt();
  Matrix normed = x.array().colwise() * inv_rms.array();
  Matrix v = normed.array().rowwise() * gain.value().row(0).array();
  return a.tape->push(
      "rms_norm_rows", std::move(v), {a.id, gain.id},
      [a, gain, inv_rms = std::move(inv_rms), normed = std::move(normed)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(gain.id)) t.accumulate(gain.id, g.cwiseProduct(normed).colwise().sum());
        if (t.requires_grad(a.id)) {
          Matrix dn = g.array().rowwise() * t.value(gain.id).row(0).array();
          Vector proj = dn.cwiseProduct(normed).rowwise().mean();
          Matrix dx = ((dn - (normed.array().colwise() * proj.array()).matrix()).array().colwise() *
                       inv_rms.array())
                          .matrix();
          t.accumulate(a.id, dx);
        }
      });
}

Var l2_normalize_rows(Var a) {
  auto x = a.value();
  Vector norms = x.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    check(norms(i) > 0.0, "l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
  }
  Matrix v = x.array().colwise() / norms.array();
  return a.tape->push("l2_normalize_rows", std::move(v), {a.id},
                      [a, norms = std::move(norms)](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        auto n = t.value(self);
                        Vector inner = g.cwiseProduct(n).rowwise().sum();
                        Matrix dx = (g - (n.array().colwise() * inner.array()).matrix()).array().colwise() /
                                    norms.array();
                        t.accumulate(a.id, dx);
                      });
}

Var dot(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "dot", a, b);
  Matrix v(1, 1);
  v(0, 0) = a.value().cwiseProduct(b.value()).sum();
  return a.tape->push("dot", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Scalar g = t.grad(self)(0, 0);
    if (t.requires_grad(a.id)) t.accumulate(a.id, t.value(b.id) * g);
    if (t.requires_grad(b.id)) t.accumulate(b.id, t.value(a.id) * g);
  });
}

Var dot_rows(Var a, Var b) {
  check_same_tape(a, b);
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "dot_rows", a, b);
  Matrix v = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape->push("dot_rows", std::move(v), {a.id, b.id}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id)) {
      t.accumulate(a.id, (t.value(b.id).array().colwise() * g.col(0).array()).matrix());
    }
    if (t.requires_grad(b.id)) {
      t.accumulate(b.id, (t.value(a.id).array().colwise() * g.col(0).array()).matrix());
    }
  });
}

Var masked_select_rows(Var a, const std::vector<bool>& mask) {
  check(static_cast<Index>(mask.size()) == a.rows(),
        "masked_select_rows: mask of length " + std::to_string(mask.size()) +
            " for input " + shape_string(a.rows(), a.cols()));
  std::vector<int> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) rows.push_back(static_cast<int>(i));
  }
  return gather_rows(a, std::move(rows));
}

Var pick(Var a, std::vector<int> rows, std::vector<int> cols) {
  check(rows.size() == cols.size(), "pick: row and column index lists differ in length");
  auto av = a.value();
  Matrix v(static_cast<Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < av.rows() && cols[i] >= 0 && cols[i] < av.cols(),
          "pick: index (" + std::to_string(rows[i]) + "," + std::to_string(cols[i]) +
              ") outside " + shape_string(av.rows(), av.cols()));
    v(static_cast<Index>(i), 0) = av(rows[i], cols[i]);
  }
  return a.tape->push("pick", std::move(v), {a.id},
                      [a, rows = std::move(rows), cols = std::move(cols)](Tape& t, int self) {
                        if (!t.requires_grad(a.id)) return;
                        const Matrix& g = t.grad(self);
                        auto av = t.value(a.id);
                        Matrix d = Matrix::Zero(av.rows(), av.cols());
                        for (std::size_t i = 0; i < rows.size(); ++i) {
                          d(rows[i], cols[i]) += g(static_cast<Index>(i), 0);
                        }
                        t.accumulate(a.id, d);
                      });
}

Var element(Var a, Index row, Index col) {
  auto av = a.value();
  check(row >= 0 && row < av.rows() && col >= 0 && col < av.cols(),
        "element: index outside " + shape_string(av.rows(), av.cols()));
  Matrix v(1, 1);
  v(0, 0) = av(row, col);
  return a.tape->push("element", std::move(v), {a.id}, [a, row, col](Tape& t, int self) {
    if (!t.requires_grad(a.id)) return;
    auto av = t.value(a.id);
    Matrix d = Matrix::Zero(av.rows(), av.cols());
    d(row, col) = t.grad(self)(0, 0);
    t.accumulate(a.id, d);
  });
}

// ---- derivatives ------------------------------------------------------------------

Gradient grad(const ScalarLossFn& loss_fn, const ParamSet& params) {
  Tape tape(params);
  Var loss = loss_fn(tape);
  Gradient g = Gradient::zeros_like(params);
  tape.backward(loss, g);
  return g;
}

Scalar evaluate(const ScalarLossFn& loss_fn, const ParamSet& params) {
  Tape tape(params);
  return loss_fn(tape).item();
}

std::vector<Gradient> per_example_grads(const PerExampleLossFn& loss_fn,
                                        std::size_t batch_size, const ParamSet& params) {
  Tape tape(params);
  std::vector<Var> losses = loss_fn(tape);
  check(losses.size() == batch_size, "per_example_grads: loss function returned " +
                                         std::to_string(losses.size()) +
                                         " scalars for a batch of " + std::to_string(batch_size));
  std::vector<Gradient> out;
  out.reserve(batch_size);
  for (Var loss : losses) {
    Gradient g = Gradient::zeros_like(params);
    tape.backward(loss, g);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Scalar> for_each_example_grad(
    const ExampleLossFn& loss_fn, std::size_t batch_size, const ParamSet& params,
    const std::function<void(std::size_t, const Gradient&)>& sink) {
  std::vector<Scalar> values(batch_size);
  Gradient g = Gradient::zeros_like(params);
  for (std::size_t i = 0; i < batch_size; ++i) {
    Tape tape(params);
    Var loss = loss_fn(tape, i);
    values[i] = loss.item();
    g.set_zero();
    tape.backward(loss, g);
    sink(i, g);
  }
  return values;
}

Scalar gradient_check(const ScalarLossFn& loss_fn, const ParamSet& params,
                      const GradientCheckOptions& options) {
  check(options.step > 0.0, "gradient_check: step must be positive");
  const Gradient analytic = grad(loss_fn, params);
  const Index n = params.size();
  Rng rng(options.seed);

  std::vector<Index> nonzero;
  for (Index i = 0; i < n; ++i) {
    if (analytic.flat()(i) != 0.0) nonzero.push_back(i);
  }
  std::vector<Index> coords;
  const std::size_t want = std::min<std::size_t>(options.coordinates, static_cast<std::size_t>(n));
  if (nonzero.size() >= want) {
    for (std::size_t k : rng.sample_without_replacement(nonzero.size(), want - want / 2)) {
      coords.push_back(nonzero[k]);
    }
  }
  for (std::size_t k : rng.sample_without_replacement(static_cast<std::size_t>(n), want)) {
    if (coords.size() >= want) break;
    const Index c = static_cast<Index>(k);
    if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
  }

  ParamSet probe = params;
  Scalar worst = 0.0;
  for (Index c : coords) {
    const Scalar original = probe.flat()(c);
    // Divide by the representable step, not the requested one.
    const Scalar plus = original + options.step;
    const Scalar minus = original - options.step;
    probe.flat()(c) = plus;
    const Scalar up = evaluate(loss_fn, probe);
    probe.flat()(c) = minus;
    const Scalar down = evaluate(loss_fn, probe);
    probe.flat()(c) = original;
    const Scalar numeric = (up - down) / (plus - minus);
    const Scalar a = analytic.flat()(c);
    const Scalar denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace qpriv::ad
