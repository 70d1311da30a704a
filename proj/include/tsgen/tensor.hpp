#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsgen/errors.hpp"

namespace tsgen {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

class Tape;
class Gradients;

// Dense row-major f64 tensor with reverse-mode gradient tracking.
//
// Values are immutable once created. The one sanctioned exception is
// `data_mut()` on leaf parameters *between* tapes (optimizer updates,
// finite-difference probes); mutating a tensor referenced by a live tape
// invalidates that tape's saved activations.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from(Shape shape, std::vector<double> data);
  // Leaf parameter: participates in backward() and appears in the gradient
  // map keyed by buffer identity.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return static_cast<bool>(buf_); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return buf_ ? buf_->size() : 0; }
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  const double* data() const { return buf_->data(); }
  double* data_mut() { return buf_->data(); }
  const std::vector<double>& vec() const { return *buf_; }
  double at(std::size_t i) const { return (*buf_)[i]; }
  double at(std::size_t r, std::size_t c) const { return (*buf_)[r * cols() + c]; }
  double value() const;  // scalar tensors only

  bool requires_grad() const { return requires_grad_; }
  // Same buffer, grad tracking severed.
  Tensor detach() const;
  // Fresh buffer copy, no grad tracking.
  Tensor clone_values() const;

  // Identity used to key gradients (the value buffer address).
  const void* id() const { return buf_.get(); }

  // Op-internal constructor; not for general use.
  static Tensor make(Shape shape, std::vector<double> data, bool requires_grad,
                     Tape* tape, int node);
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  std::uint64_t tape_epoch() const { return tape_epoch_; }
  // True when this tensor's node lives on `tp` (same object *and* epoch;
  // tapes are stack objects, so addresses alone can repeat).
  bool on_tape(const Tape* tp) const;

 private:
  std::shared_ptr<std::vector<double>> buf_;
  Shape shape_;
  bool requires_grad_ = false;
  Tape* tape_ = nullptr;
  int node_ = -1;
  std::uint64_t tape_epoch_ = 0;
};

// Reverse-mode tape. Construction makes it the active tape for this thread,
// destruction restores the previous one (tapes nest but are never shared
// across threads). Append-only during the forward pass; backward() walks the
// node list exactly once in reverse creation order, so every op's adjoint
// runs after all its consumers'.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // grad_out is this node's accumulated output gradient.
  using BackFn = std::function<void(Tape&, const std::vector<double>& grad_out)>;

  int push(BackFn fn);
  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t epoch() const { return epoch_; }

  // Gradient accumulator for a node, zero-initialised on first touch.
  std::vector<double>& grad_buf(int node, std::size_t numel);
  const std::vector<double>* grad_if_any(int node) const;

  // Tape-local leaf node for a parameter (memoised by buffer identity, so
  // repeated uses of one parameter accumulate into a single gradient).
  int leaf_node(const Tensor& t);

 private:
  struct Node {
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const void*, int> leaf_ids_;
  std::vector<Tensor> leaves_;  // insertion order, for deterministic extraction
  Tape* prev_ = nullptr;
  std::uint64_t epoch_ = 0;
  bool backward_done_ = false;

  friend class Gradients;
  friend Gradients backward(const Tensor& loss);
};

// Per-leaf gradients produced by backward(). Leaves that never influenced
// the loss report zeros of the leaf's shape.
class Gradients {
 public:
  bool has(const Tensor& leaf) const { return by_leaf_.count(leaf.id()) != 0; }
  Tensor at(const Tensor& leaf) const;

 private:
  std::unordered_map<const void*, Tensor> by_leaf_;
  friend Gradients backward(const Tensor& loss);
};

// Seeds the scalar loss with gradient 1 and sweeps the active tape once.
Gradients backward(const Tensor& loss);

enum class Act { relu, tanh, sigmoid, softplus, identity };

Act act_from_string(const std::string& name);
std::string act_to_string(Act a);

// --- ops -------------------------------------------------------------------
// Elementwise ops broadcast when one operand is (a) a scalar, (b) a row
// vector whose shape is a suffix of the other's (bias add), or (c) a [r,1]
// column against [r,c] (per-row scaling). Gradients reduce over the
// broadcast positions.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// scale * x + shift with plain-double constants.
Tensor affine(const Tensor& x, double scale, double shift);
Tensor scale(const Tensor& x, double s);
Tensor activation(const Tensor& x, Act kind);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sum(const Tensor& x);       // -> [1]
Tensor mean(const Tensor& x);      // -> [1]
Tensor row_sum(const Tensor& x);   // [r,c] -> [r,1]
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len);
// Row-wise matrix/vector contraction for controlled differential equations:
// f is [r, h*c] (per-row h x c matrix), v is [r, c]; out[i,:] = F_i v_i.
Tensor cde_apply(const Tensor& f, const Tensor& v, std::size_t h);
// Per-row cross entropy from raw logits ([r,k], target class per row) via a
// stable log-sum-exp; adjoint is softmax minus one-hot. Returns [r,1].
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& target);
// Elementwise escape hatch: y = f(x), dy/dx = dfdx(x, y).
Tensor custom_unary(const Tensor& x, const std::function<double(double)>& f,
                    const std::function<double(double, double)>& dfdx);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// --- gradient checking -------------------------------------------------------

// Central-difference check of backward() for an arbitrary scalar-valued
// computation. `loss_fn` must rebuild the loss from the current leaf values
// on each call (it runs under a fresh tape for the analytic pass and with no
// tape for the probes). Returns the max relative error over all leaf
// elements: |g_ad - g_fd| / (|g_fd| + 1e-8).
double gradient_check(const std::function<Tensor()>& loss_fn,
                      const std::vector<Tensor>& leaves, double eps = 1e-5);

}  // namespace tsgen
