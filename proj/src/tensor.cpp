#include "tsgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsgen {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local std::uint64_t g_tape_epoch = 0;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn_acc(double* c, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
void mm_nt_acc(double* c, const double* a, const double* b, std::size_t m,
               std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = b + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[l] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn_acc(double* c, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      double* crow = c + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// How operand `op` maps onto the output shape of a binary elementwise op.
enum class Bcast { same, scalar, suffix, col };

bool is_suffix(const Shape& out, const Shape& op) {
  if (op.size() >= out.size()) return false;
  for (std::size_t i = 0; i < op.size(); ++i) {
    if (op[op.size() - 1 - i] != out[out.size() - 1 - i]) return false;
  }
  return true;
}

bool bcast_kind(const Shape& out, const Shape& op, Bcast& kind) {
  if (op == out) {
    kind = Bcast::same;
    return true;
  }
  if (shape_numel(op) == 1) {
    kind = Bcast::scalar;
    return true;
  }
  if (is_suffix(out, op)) {
    kind = Bcast::suffix;
    return true;
  }
  if (out.size() == 2 && op.size() == 2 && op[0] == 1 && op[1] == out[1] &&
      out[0] > 1) {
    kind = Bcast::suffix;  // [1,n] row against [B,n]
    return true;
  }
  if (out.size() == 2 && op.size() == 2 && op[0] == out[0] && op[1] == 1 &&
      out[1] > 1) {
    kind = Bcast::col;
    return true;
  }
  return false;
}

// Value of operand `op` at output flat index i.
inline std::size_t bcast_index(Bcast kind, std::size_t i, std::size_t mod,
                               std::size_t cols) {
  switch (kind) {
    case Bcast::same: return i;
    case Bcast::scalar: return 0;
    case Bcast::suffix: return i % mod;
    case Bcast::col: return i / cols;
  }
  return 0;
}

int parent_of(Tape* tp, const Tensor& t) {
  if (!t.requires_grad()) return -1;
  if (t.node() >= 0) return t.on_tape(tp) ? t.node() : -1;
  return tp->leaf_node(t);
}

struct OpCtx {
  Tape* tape = nullptr;
  bool tracked = false;
};

OpCtx begin_op(std::initializer_list<const Tensor*> inputs) {
  OpCtx ctx;
  ctx.tape = Tape::active();
  if (!ctx.tape) return ctx;
  for (const Tensor* t : inputs) {
    if (!t->requires_grad()) continue;
    if (t->node() >= 0 && !t->on_tape(ctx.tape)) continue;  // foreign: constant
    ctx.tracked = true;
    break;
  }
  return ctx;
}

void check_finite_shape(const Tensor& t, const char* who) {
  if (!t.defined()) throw value_error(std::string(who) + ": undefined tensor");
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// --- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  return from(std::move(shape), {});
}

Tensor Tensor::full(Shape shape, double v) {
  std::vector<double> data(shape_numel(shape), v);
  return from(std::move(shape), std::move(data));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  const std::size_t n = shape_numel(shape);
  if (data.empty()) data.assign(n, 0.0);
  if (data.size() != n) {
    throw shape_error("tensor: data size " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.buf_ = std::make_shared<std::vector<double>>(std::move(data));
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.requires_grad_ = true;
  return t;
}

Tensor Tensor::make(Shape shape, std::vector<double> data, bool requires_grad,
                    Tape* tape, int node) {
  Tensor t = from(std::move(shape), std::move(data));
  t.requires_grad_ = requires_grad;
  t.tape_ = tape;
  t.node_ = node;
  t.tape_epoch_ = tape ? tape->epoch() : 0;
  return t;
}

bool Tensor::on_tape(const Tape* tp) const {
  return tape_ == tp && tp && tape_epoch_ == tp->epoch();
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw shape_error("tensor: rows() on shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw shape_error("tensor: cols() on shape " + shape_str(shape_));
  return shape_[1];
}

double Tensor::value() const {
  if (numel() != 1) {
    throw shape_error("tensor: value() on non-scalar shape " + shape_str(shape_));
  }
  return (*buf_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.buf_ = buf_;
  t.shape_ = shape_;
  return t;
}

Tensor Tensor::clone_values() const {
  return Tensor::from(shape_, *buf_);
}

// --- Tape --------------------------------------------------------------------

Tape::Tape() {
  prev_ = g_active_tape;
  epoch_ = ++g_tape_epoch;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

int Tape::push(BackFn fn) {
  nodes_.push_back(Node{std::move(fn)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int node, std::size_t numel) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(numel, 0.0);
  return g;
}

const std::vector<double>* Tape::grad_if_any(int node) const {
  const auto& g = grads_[static_cast<std::size_t>(node)];
  return g.empty() ? nullptr : &g;
}

int Tape::leaf_node(const Tensor& t) {
  auto it = leaf_ids_.find(t.id());
  if (it != leaf_ids_.end()) return it->second;
  const int id = push([](Tape&, const std::vector<double>&) {});
  leaf_ids_.emplace(t.id(), id);
  leaves_.push_back(t);
  return id;
}

Tensor Gradients::at(const Tensor& leaf) const {
  auto it = by_leaf_.find(leaf.id());
  if (it == by_leaf_.end()) return Tensor::zeros(leaf.shape());
  return it->second;
}

Gradients backward(const Tensor& loss) {
  Tape* tp = loss.tape();
  if (!tp || loss.node() < 0) {
    throw value_error("backward: loss is not attached to a tape");
  }
  if (loss.numel() != 1) {
    throw shape_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (tp->backward_done_) {
    throw value_error("backward: tape already swept");
  }
  tp->backward_done_ = true;
  tp->grads_.assign(tp->nodes_.size(), {});
  tp->grads_[static_cast<std::size_t>(loss.node())] = {1.0};
  for (int k = loss.node(); k >= 0; --k) {
    const auto& g = tp->grads_[static_cast<std::size_t>(k)];
    if (g.empty()) continue;
    tp->nodes_[static_cast<std::size_t>(k)].back(*tp, g);
  }
  Gradients out;
  for (const Tensor& leaf : tp->leaves_) {
    const int id = tp->leaf_ids_.at(leaf.id());
    const auto& g = tp->grads_[static_cast<std::size_t>(id)];
    out.by_leaf_.emplace(leaf.id(), g.empty() ? Tensor::zeros(leaf.shape())
                                              : Tensor::from(leaf.shape(), g));
  }
  tp->grads_.clear();
  tp->grads_.shrink_to_fit();
  return out;
}

// --- ops ---------------------------------------------------------------------

Act act_from_string(const std::string& name) {
  if (name == "relu") return Act::relu;
  if (name == "tanh") return Act::tanh;
  if (name == "sigmoid") return Act::sigmoid;
  if (name == "softplus") return Act::softplus;
  if (name == "identity") return Act::identity;
  throw value_error("activation: unknown kind '" + name + "'");
}

std::string act_to_string(Act a) {
  switch (a) {
    case Act::relu: return "relu";
    case Act::tanh: return "tanh";
    case Act::sigmoid: return "sigmoid";
    case Act::softplus: return "softplus";
    case Act::identity: return "identity";
  }
  return "?";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_finite_shape(a, "matmul");
  check_finite_shape(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) +
                      " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  mm_nn_acc(out.data(), a.data(), b.data(), m, k, n);

  OpCtx ctx = begin_op({&a, &b});
  if (!ctx.tracked) return Tensor::from({m, n}, std::move(out));
  const int pa = parent_of(ctx.tape, a);
  const int pb = parent_of(ctx.tape, b);
  Tensor av = a.detach(), bv = b.detach();
  const int node = ctx.tape->push([pa, pb, av, bv, m, k, n](
                                      Tape& tp, const std::vector<double>& g) {
    if (pa >= 0) {
      auto& ga = tp.grad_buf(pa, m * k);
      mm_nt_acc(ga.data(), g.data(), bv.data(), m, n, k);
    }
    if (pb >= 0) {
      auto& gb = tp.grad_buf(pb, k * n);
      mm_tn_acc(gb.data(), av.data(), g.data(), m, k, n);
    }
  });
  return Tensor::make({m, n}, std::move(out), true, ctx.tape, node);
}

Tensor transpose(const Tensor& x) {
  check_finite_shape(x, "transpose");
  if (x.rank() != 2) {
    throw shape_error("transpose: need 2-D, got " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  const double* xd = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from({c, r}, std::move(out));
  const int px = parent_of(ctx.tape, x);
  const int node =
      ctx.tape->push([px, r, c](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, r * c);
        for (std::size_t j = 0; j < c; ++j)
          for (std::size_t i = 0; i < r; ++i) gx[i * c + j] += g[j * r + i];
      });
  return Tensor::make({c, r}, std::move(out), true, ctx.tape, node);
}

namespace {

enum class EwOp { add, sub, mul };

Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op, const char* name) {
  check_finite_shape(a, name);
  check_finite_shape(b, name);
  Bcast ka, kb;
  Shape out_shape;
  // Exactly one operand may broadcast onto the other; equal shapes use the
  // trivial mapping for both.
  if (bcast_kind(a.shape(), b.shape(), kb)) {
    out_shape = a.shape();
    ka = Bcast::same;
  } else if (bcast_kind(b.shape(), a.shape(), ka)) {
    out_shape = b.shape();
    kb = Bcast::same;
  } else {
    throw shape_error(std::string(name) + ": incompatible shapes " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = shape_numel(out_shape);
  const std::size_t cols = out_shape.size() == 2 ? out_shape[1] : 1;
  const std::size_t mod_a = a.numel(), mod_b = b.numel();
  std::vector<double> out(n);
  const double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double av = ad[bcast_index(ka, i, mod_a, cols)];
    const double bv = bd[bcast_index(kb, i, mod_b, cols)];
    out[i] = op == EwOp::add ? av + bv : op == EwOp::sub ? av - bv : av * bv;
  }

  OpCtx ctx = begin_op({&a, &b});
  if (!ctx.tracked) return Tensor::from(std::move(out_shape), std::move(out));
  const int pa = parent_of(ctx.tape, a);
  const int pb = parent_of(ctx.tape, b);
  Tensor av = a.detach(), bv = b.detach();
  const int node = ctx.tape->push([pa, pb, av, bv, ka, kb, op, n, cols, mod_a,
                                   mod_b](Tape& tp, const std::vector<double>& g) {
    if (pa >= 0) {
      auto& ga = tp.grad_buf(pa, mod_a);
      const double* bd2 = bv.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const std::size_t ia = bcast_index(ka, i, mod_a, cols);
        if (op == EwOp::mul) {
          ga[ia] += gi * bd2[bcast_index(kb, i, mod_b, cols)];
        } else {
          ga[ia] += gi;
        }
      }
    }
    if (pb >= 0) {
      auto& gb = tp.grad_buf(pb, mod_b);
      const double* ad2 = av.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const std::size_t ib = bcast_index(kb, i, mod_b, cols);
        switch (op) {
          case EwOp::add: gb[ib] += gi; break;
          case EwOp::sub: gb[ib] -= gi; break;
          case EwOp::mul: gb[ib] += gi * ad2[bcast_index(ka, i, mod_a, cols)]; break;
        }
      }
    }
  });
  return Tensor::make(std::move(out_shape), std::move(out), true, ctx.tape, node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::mul, "mul"); }

Tensor affine(const Tensor& x, double s, double shift) {
  check_finite_shape(x, "affine");
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  const double* xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = s * xd[i] + shift;

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from(x.shape(), std::move(out));
  const int px = parent_of(ctx.tape, x);
  const int node =
      ctx.tape->push([px, s, n](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, n);
        for (std::size_t i = 0; i < n; ++i) gx[i] += s * g[i];
      });
  return Tensor::make(x.shape(), std::move(out), true, ctx.tape, node);
}

Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

Tensor activation(const Tensor& x, Act kind) {
  check_finite_shape(x, "activation");
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  const double* xd = x.data();
  switch (kind) {
    case Act::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(xd[i]);
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
      break;
    case Act::softplus:
      // log(1 + e^x), written to stay finite for large |x|.
      for (std::size_t i = 0; i < n; ++i) {
        const double v = xd[i];
        out[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      }
      break;
    case Act::identity:
      for (std::size_t i = 0; i < n; ++i) out[i] = xd[i];
      break;
  }

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from(x.shape(), std::move(out));
  const int px = parent_of(ctx.tape, x);
  Tensor xv = x.detach();
  Tensor yv = Tensor::from(x.shape(), out);  // saved output for cheap adjoints
  const int node = ctx.tape->push([px, xv, yv, kind, n](
                                      Tape& tp, const std::vector<double>& g) {
    auto& gx = tp.grad_buf(px, n);
    const double* xd2 = xv.data();
    const double* yd = yv.data();
    switch (kind) {
      case Act::relu:
        for (std::size_t i = 0; i < n; ++i) gx[i] += xd2[i] > 0.0 ? g[i] : 0.0;
        break;
      case Act::tanh:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - yd[i] * yd[i]);
        break;
      case Act::sigmoid:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * yd[i] * (1.0 - yd[i]);
        break;
      case Act::softplus:
        for (std::size_t i = 0; i < n; ++i)
          gx[i] += g[i] / (1.0 + std::exp(-xd2[i]));
        break;
      case Act::identity:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
        break;
    }
  });
  return Tensor::make(x.shape(), std::move(out), true, ctx.tape, node);
}

Tensor relu(const Tensor& x) { return activation(x, Act::relu); }
Tensor tanh(const Tensor& x) { return activation(x, Act::tanh); }
Tensor sigmoid(const Tensor& x) { return activation(x, Act::sigmoid); }
Tensor softplus(const Tensor& x) { return activation(x, Act::softplus); }

namespace {

Tensor reduce_all(const Tensor& x, bool take_mean, const char* name) {
  check_finite_shape(x, name);
  const std::size_t n = x.numel();
  double acc = 0.0;
  const double* xd = x.data();
  for (std::size_t i = 0; i < n; ++i) acc += xd[i];
  const double denom = take_mean ? static_cast<double>(n) : 1.0;
  std::vector<double> out{acc / denom};

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from({1}, std::move(out));
  const int px = parent_of(ctx.tape, x);
  const int node =
      ctx.tape->push([px, n, denom](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, n);
        const double gi = g[0] / denom;
        for (std::size_t i = 0; i < n; ++i) gx[i] += gi;
      });
  return Tensor::make({1}, std::move(out), true, ctx.tape, node);
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_all(x, false, "sum"); }
Tensor mean(const Tensor& x) { return reduce_all(x, true, "mean"); }

Tensor row_sum(const Tensor& x) {
  check_finite_shape(x, "row_sum");
  if (x.rank() != 2) throw shape_error("row_sum: need 2-D, got " + shape_str(x.shape()));
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r, 0.0);
  const double* xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += xd[i * c + j];
    out[i] = acc;
  }

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from({r, 1}, std::move(out));
  const int px = parent_of(ctx.tape, x);
  const int node =
      ctx.tape->push([px, r, c](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, r * c);
        for (std::size_t i = 0; i < r; ++i) {
          const double gi = g[i];
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gi;
        }
      });
  return Tensor::make({r, 1}, std::move(out), true, ctx.tape, node);
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw value_error("concat_cols: empty input list");
  const std::size_t r = xs.front().rows();
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.rank() != 2 || x.rows() != r) {
      throw shape_error("concat_cols: row mismatch, first is " +
                        shape_str(xs.front().shape()) + ", got " +
                        shape_str(x.shape()));
    }
    total += x.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& x : xs) {
    const std::size_t c = x.cols();
    const double* xd = x.data();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy(xd + i * c, xd + (i + 1) * c, out.begin() + i * total + off);
    }
    off += c;
  }

  std::vector<const Tensor*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  OpCtx ctx;
  ctx.tape = Tape::active();
  if (ctx.tape) {
    for (const Tensor* t : ptrs) {
      if (t->requires_grad() && (t->node() < 0 || t->tape() == ctx.tape)) {
        ctx.tracked = true;
        break;
      }
    }
  }
  if (!ctx.tracked) return Tensor::from({r, total}, std::move(out));

  struct Piece {
    int parent;
    std::size_t off, cols;
  };
  std::vector<Piece> pieces;
  std::size_t o = 0;
  for (const auto& x : xs) {
    pieces.push_back({parent_of(ctx.tape, x), o, x.cols()});
    o += x.cols();
  }
  const int node = ctx.tape->push(
      [pieces, r, total](Tape& tp, const std::vector<double>& g) {
        for (const auto& p : pieces) {
          if (p.parent < 0) continue;
          auto& gx = tp.grad_buf(p.parent, r * p.cols);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols; ++j)
              gx[i * p.cols + j] += g[i * total + p.off + j];
        }
      });
  return Tensor::make({r, total}, std::move(out), true, ctx.tape, node);
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw value_error("concat_rows: empty input list");
  const std::size_t c = xs.front().cols();
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.rank() != 2 || x.cols() != c) {
      throw shape_error("concat_rows: column mismatch, first is " +
                        shape_str(xs.front().shape()) + ", got " +
                        shape_str(x.shape()));
    }
    total += x.rows();
  }
  std::vector<double> out(total * c);
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.data(), x.data() + x.numel(), out.begin() + off);
    off += x.numel();
  }

  std::vector<const Tensor*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  OpCtx ctx;
  ctx.tape = Tape::active();
  if (ctx.tape) {
    for (const Tensor* t : ptrs) {
      if (t->requires_grad() && (t->node() < 0 || t->tape() == ctx.tape)) {
        ctx.tracked = true;
        break;
      }
    }
  }
  if (!ctx.tracked) return Tensor::from({total, c}, std::move(out));

  struct Piece {
    int parent;
    std::size_t off, numel;
  };
  std::vector<Piece> pieces;
  std::size_t o = 0;
  for (const auto& x : xs) {
    pieces.push_back({parent_of(ctx.tape, x), o, x.numel()});
    o += x.numel();
  }
  const int node =
      ctx.tape->push([pieces](Tape& tp, const std::vector<double>& g) {
        for (const auto& p : pieces) {
          if (p.parent < 0) continue;
          auto& gx = tp.grad_buf(p.parent, p.numel);
          for (std::size_t i = 0; i < p.numel; ++i) gx[i] += g[p.off + i];
        }
      });
  return Tensor::make({total, c}, std::move(out), true, ctx.tape, node);
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  check_finite_shape(x, "slice_cols");
  if (x.rank() != 2 || start + len > x.cols()) {
    throw shape_error("slice_cols: [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of " +
                      shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * len);
  const double* xd = x.data();
  for (std::size_t i = 0; i < r; ++i)
    std::copy(xd + i * c + start, xd + i * c + start + len, out.begin() + i * len);

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from({r, len}, std::move(out));
  const int px = parent_of(ctx.tape, x);
  const int node = ctx.tape->push(
      [px, r, c, start, len](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, r * c);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < len; ++j)
            gx[i * c + start + j] += g[i * len + j];
      });
  return Tensor::make({r, len}, std::move(out), true, ctx.tape, node);
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t len) {
  check_finite_shape(x, "slice_rows");
  if (x.rank() != 2 || start + len > x.rows()) {
    throw shape_error("slice_rows: [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of " +
                      shape_str(x.shape()));
  }
  const std::size_t c = x.cols();
  std::vector<double> out(len * c);
  std::copy(x.data() + start * c, x.data() + (start + len) * c, out.begin());

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from({len, c}, std::move(out));
  const int px = parent_of(ctx.tape, x);
  const std::size_t r = x.rows();
  const int node = ctx.tape->push(
      [px, r, c, start, len](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, r * c);
        for (std::size_t i = 0; i < len * c; ++i) gx[start * c + i] += g[i];
      });
  return Tensor::make({len, c}, std::move(out), true, ctx.tape, node);
}

Tensor cde_apply(const Tensor& f, const Tensor& v, std::size_t h) {
  check_finite_shape(f, "cde_apply");
  check_finite_shape(v, "cde_apply");
  if (f.rank() != 2 || v.rank() != 2 || f.rows() != v.rows() || h == 0 ||
      f.cols() != h * v.cols()) {
    throw shape_error("cde_apply: f " + shape_str(f.shape()) + " vs v " +
                      shape_str(v.shape()) + " with h=" + std::to_string(h));
  }
  const std::size_t r = f.rows(), c = v.cols();
  std::vector<double> out(r * h, 0.0);
  const double* fd = f.data();
  const double* vd = v.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* frow = fd + i * h * c;
    const double* vrow = vd + i * c;
    double* orow = out.data() + i * h;
    for (std::size_t a = 0; a < h; ++a) {
      double acc = 0.0;
      for (std::size_t cc = 0; cc < c; ++cc) acc += frow[a * c + cc] * vrow[cc];
      orow[a] = acc;
    }
  }

  OpCtx ctx = begin_op({&f, &v});
  if (!ctx.tracked) return Tensor::from({r, h}, std::move(out));
  const int pf = parent_of(ctx.tape, f);
  const int pv = parent_of(ctx.tape, v);
  Tensor fv = f.detach(), vv = v.detach();
  const int node = ctx.tape->push([pf, pv, fv, vv, r, h, c](
                                      Tape& tp, const std::vector<double>& g) {
    if (pf >= 0) {
      auto& gf = tp.grad_buf(pf, r * h * c);
      const double* vd2 = vv.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t a = 0; a < h; ++a) {
          const double gi = g[i * h + a];
          if (gi == 0.0) continue;
          for (std::size_t cc = 0; cc < c; ++cc)
            gf[i * h * c + a * c + cc] += gi * vd2[i * c + cc];
        }
    }
    if (pv >= 0) {
      auto& gv = tp.grad_buf(pv, r * c);
      const double* fd2 = fv.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t a = 0; a < h; ++a) {
          const double gi = g[i * h + a];
          if (gi == 0.0) continue;
          for (std::size_t cc = 0; cc < c; ++cc)
            gv[i * c + cc] += gi * fd2[i * h * c + a * c + cc];
        }
    }
  });
  return Tensor::make({r, h}, std::move(out), true, ctx.tape, node);
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& target) {
  check_finite_shape(logits, "cross_entropy_logits");
  if (logits.rank() != 2 || logits.rows() != target.size()) {
    throw shape_error("cross_entropy_logits: logits " + shape_str(logits.shape()) +
                      " vs " + std::to_string(target.size()) + " targets");
  }
  const std::size_t r = logits.rows(), k = logits.cols();
  for (int t : target) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw value_error("cross_entropy_logits: target class out of range");
    }
  }
  std::vector<double> out(r);
  const double* ld = logits.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = ld + i * k;
    double m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(row[j] - m);
    out[i] = m + std::log(acc) - row[static_cast<std::size_t>(target[i])];
  }

  OpCtx ctx = begin_op({&logits});
  if (!ctx.tracked) return Tensor::from({r, 1}, std::move(out));
  const int pl = parent_of(ctx.tape, logits);
  Tensor lv = logits.detach();
  std::vector<int> tgt = target;
  const int node = ctx.tape->push([pl, lv, tgt, r, k](
                                      Tape& tp, const std::vector<double>& g) {
    auto& gl = tp.grad_buf(pl, r * k);
    const double* ld2 = lv.data();
    for (std::size_t i = 0; i < r; ++i) {
      const double gi = g[i];
      if (gi == 0.0) continue;
      const double* row = ld2 + i * k;
      double m = row[0];
      for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
      for (std::size_t j = 0; j < k; ++j) {
        const double sm = std::exp(row[j] - m) / z;
        const double onehot = (static_cast<std::size_t>(tgt[i]) == j) ? 1.0 : 0.0;
        gl[i * k + j] += gi * (sm - onehot);
      }
    }
  });
  return Tensor::make({r, 1}, std::move(out), true, ctx.tape, node);
}

Tensor custom_unary(const Tensor& x, const std::function<double(double)>& f,
                    const std::function<double(double, double)>& dfdx) {
  check_finite_shape(x, "custom_unary");
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  const double* xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xd[i]);

  OpCtx ctx = begin_op({&x});
  if (!ctx.tracked) return Tensor::from(x.shape(), std::move(out));
  const int px = parent_of(ctx.tape, x);
  Tensor xv = x.detach();
  Tensor yv = Tensor::from(x.shape(), out);
  const int node = ctx.tape->push(
      [px, xv, yv, dfdx, n](Tape& tp, const std::vector<double>& g) {
        auto& gx = tp.grad_buf(px, n);
        const double* xd2 = xv.data();
        const double* yd = yv.data();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * dfdx(xd2[i], yd[i]);
      });
  return Tensor::make(x.shape(), std::move(out), true, ctx.tape, node);
}

double gradient_check(const std::function<Tensor()>& loss_fn,
                      const std::vector<Tensor>& leaves, double eps) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn();
    Gradients grads = backward(loss);
    for (const Tensor& leaf : leaves) analytic.push_back(grads.at(leaf));
  }
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    double* vals = leaf.data_mut();
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double fp = loss_fn().value();
      vals[i] = orig - eps;
      const double fm = loss_fn().value();
      vals[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic[li].at(i);
      const double rel = std::abs(ad - fd) / (std::abs(fd) + 1e-8);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace tsgen
