#pragma once

// Shared neural-net plumbing: parameter registry, weight init, affine layers,
// MLPs, discrete GRU cells (jumps) and their continuous GRU-ODE counterpart,
// plus Adam.  All parameters are f64 leaf tensors; modules hold shared-buffer
// handles so optimizer updates are visible everywhere without copying.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsgen/rng.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

// ---------------------------------------------------------------------------
// Parameter registry: ordered, named list of leaf tensors.  The registration
// order is the canonical serialization order for checkpoints and optimizer
// state, so modules must register deterministically.
class ParamSet {
public:
    void add(const std::string& name, const Tensor& t);
    void merge(const ParamSet& other, const std::string& prefix);

    std::size_t size() const { return items_.size(); }
    const std::string& name(std::size_t i) const { return items_[i].first; }
    const Tensor& tensor(std::size_t i) const { return items_[i].second; }
    const Tensor* find(const std::string& name) const;
    std::size_t total_elems() const;

    std::vector<Tensor> tensors() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// ---------------------------------------------------------------------------
// Weight init.  Kaiming uniform suits ReLU-family layers, Xavier the
// tanh/sigmoid ones; biases follow the usual U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
enum class WInit { kaiming, xavier };

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, WInit scheme, Rng& rng);
Tensor init_bias(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
struct Linear {
    Tensor W;  // [in, out]
    Tensor b;  // [1, out]

    static Linear create(std::size_t in, std::size_t out, WInit scheme, Rng& rng);
    Tensor forward(const Tensor& x) const;  // [B, in] -> [B, out]
    void collect(ParamSet& ps, const std::string& prefix) const;
};

// Plain feed-forward stack: layer k is acts[k](Linear_k(.)).
struct Mlp {
    std::vector<Linear> layers;
    std::vector<Act> acts;

    static Mlp create(const std::vector<std::size_t>& widths, const std::vector<Act>& acts,
                      const std::vector<WInit>& schemes, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(ParamSet& ps, const std::string& prefix) const;
};

// ---------------------------------------------------------------------------
// Discrete GRU cell (used for jumps): the standard update
//   r = sigmoid(x W_ir + b_ir + s W_hr + b_hr)
//   z = sigmoid(x W_iz + b_iz + s W_hz + b_hz)
//   n = tanh   (x W_in + b_in + r o (s W_hn + b_hn))
//   s' = (1 - z) o n + z o s
struct GruCell {
    Linear ir, iz, in_l;  // input-side maps  [in -> hidden]
    Linear hr, hz, hn;    // state-side maps  [hidden -> hidden]

    static GruCell create(std::size_t in, std::size_t hidden, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& s) const;  // [B,in],[B,h] -> [B,h]
    void collect(ParamSet& ps, const std::string& prefix) const;
};

// Continuous GRU-ODE vector field over state s with the clock appended as an
// input feature:
//   r = sigmoid(L_r([s; t])),  z = sigmoid(L_z([s; t])),
//   u = tanh(L_u([r o s; t])),  ds/dt = (1 - z) o (u - s)
struct GruOdeCell {
    Linear gr, gz, gu;  // each [hidden+1 -> hidden]

    static GruOdeCell create(std::size_t hidden, Rng& rng);
    Tensor field(const Tensor& t_rows, const Tensor& s) const;  // [B,1],[B,h] -> [B,h]
    void collect(ParamSet& ps, const std::string& prefix) const;
};

// ---------------------------------------------------------------------------
// Adam bound to a fixed ParamSet.  Unreachable leaves receive zero gradients
// (the Gradients lookup already yields zeros), which is standard Adam behavior.
class Adam {
public:
    struct Moments {
        std::vector<double> m, v;
    };

    explicit Adam(const ParamSet& params, double lr = 1e-3, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step(const Gradients& grads);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::int64_t t() const { return t_; }
    void set_t(std::int64_t t) { t_ = t; }
    std::size_t n_params() const { return params_.size(); }
    const Moments& moments(std::size_t i) const { return state_[i]; }
    Moments& moments_mut(std::size_t i) { return state_[i]; }

private:
    std::vector<Tensor> params_;
    std::vector<Moments> state_;
    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

}  // namespace tsgen
