#include "tsgen/nn.hpp"

#include <cmath>

#include "tsgen/errors.hpp"

namespace tsgen {

// ---------------------------------------------------------------------------
void ParamSet::add(const std::string& name, const Tensor& t) {
    if (find(name) != nullptr) throw value_error("ParamSet: duplicate name '" + name + "'");
    items_.emplace_back(name, t);
}

void ParamSet::merge(const ParamSet& other, const std::string& prefix) {
    for (const auto& [name, t] : other.items_) {
        add(prefix.empty() ? name : prefix + "." + name, t);
    }
}

const Tensor* ParamSet::find(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::size_t ParamSet::total_elems() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

std::vector<Tensor> ParamSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [name, t] : items_) out.push_back(t);
    return out;
}

// ---------------------------------------------------------------------------
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, WInit scheme, Rng& rng) {
    const double bound = (scheme == WInit::kaiming)
                             ? std::sqrt(6.0 / static_cast<double>(fan_in))
                             : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    return Tensor::param({fan_in, fan_out}, w);
}

Tensor init_bias(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> b(fan_out);
    for (double& v : b) v = rng.uniform(-bound, bound);
    return Tensor::param({1, fan_out}, b);
}

// ---------------------------------------------------------------------------
Linear Linear::create(std::size_t in, std::size_t out, WInit scheme, Rng& rng) {
    Linear l;
    l.W = init_weight(in, out, scheme, rng);
    l.b = init_bias(in, out, rng);
    return l;
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, W), b); }

void Linear::collect(ParamSet& ps, const std::string& prefix) const {
    ps.add(prefix + ".W", W);
    ps.add(prefix + ".b", b);
}

// ---------------------------------------------------------------------------
Mlp Mlp::create(const std::vector<std::size_t>& widths, const std::vector<Act>& acts,
                const std::vector<WInit>& schemes, Rng& rng) {
    if (widths.size() < 2) throw value_error("Mlp: need at least one layer");
    const std::size_t n_layers = widths.size() - 1;
    if (acts.size() != n_layers || schemes.size() != n_layers) {
        throw value_error("Mlp: one activation and init scheme per layer required");
    }
    Mlp mlp;
    mlp.acts = acts;
    for (std::size_t k = 0; k < n_layers; ++k) {
        mlp.layers.push_back(Linear::create(widths[k], widths[k + 1], schemes[k], rng));
    }
    return mlp;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        h = activation(layers[k].forward(h), acts[k]);
    }
    return h;
}

void Mlp::collect(ParamSet& ps, const std::string& prefix) const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
        layers[k].collect(ps, prefix + ".l" + std::to_string(k));
    }
}

// ---------------------------------------------------------------------------
GruCell GruCell::create(std::size_t in, std::size_t hidden, Rng& rng) {
    GruCell c;
    c.ir = Linear::create(in, hidden, WInit::xavier, rng);
    c.iz = Linear::create(in, hidden, WInit::xavier, rng);
    c.in_l = Linear::create(in, hidden, WInit::xavier, rng);
    c.hr = Linear::create(hidden, hidden, WInit::xavier, rng);
    c.hz = Linear::create(hidden, hidden, WInit::xavier, rng);
    c.hn = Linear::create(hidden, hidden, WInit::xavier, rng);
    return c;
}

Tensor GruCell::forward(const Tensor& x, const Tensor& s) const {
    Tensor r = sigmoid(add(ir.forward(x), hr.forward(s)));
    Tensor z = sigmoid(add(iz.forward(x), hz.forward(s)));
    Tensor n = tanh(add(in_l.forward(x), mul(r, hn.forward(s))));
    Tensor one_minus_z = affine(z, -1.0, 1.0);
    return add(mul(one_minus_z, n), mul(z, s));
}

void GruCell::collect(ParamSet& ps, const std::string& prefix) const {
    ir.collect(ps, prefix + ".ir");
    iz.collect(ps, prefix + ".iz");
    in_l.collect(ps, prefix + ".in");
    hr.collect(ps, prefix + ".hr");
    hz.collect(ps, prefix + ".hz");
    hn.collect(ps, prefix + ".hn");
}

// ---------------------------------------------------------------------------
GruOdeCell GruOdeCell::create(std::size_t hidden, Rng& rng) {
    GruOdeCell c;
    c.gr = Linear::create(hidden + 1, hidden, WInit::xavier, rng);
    c.gz = Linear::create(hidden + 1, hidden, WInit::xavier, rng);
    c.gu = Linear::create(hidden + 1, hidden, WInit::xavier, rng);
    return c;
}

Tensor GruOdeCell::field(const Tensor& t_rows, const Tensor& s) const {
    Tensor st = concat_cols({s, t_rows});
    Tensor r = sigmoid(gr.forward(st));
    Tensor z = sigmoid(gz.forward(st));
    Tensor u = tanh(gu.forward(concat_cols({mul(r, s), t_rows})));
    Tensor one_minus_z = affine(z, -1.0, 1.0);
    return mul(one_minus_z, sub(u, s));
}

void GruOdeCell::collect(ParamSet& ps, const std::string& prefix) const {
    gr.collect(ps, prefix + ".gr");
    gz.collect(ps, prefix + ".gz");
    gu.collect(ps, prefix + ".gu");
}

// ---------------------------------------------------------------------------
Adam::Adam(const ParamSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params.tensors()), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    state_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        state_[i].m.assign(params_[i].numel(), 0.0);
        state_[i].v.assign(params_[i].numel(), 0.0);
    }
}

void Adam::step(const Gradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor g = grads.at(params_[i]);
        const auto& gv = g.vec();
        auto& m = state_[i].m;
        auto& v = state_[i].v;
        double* p = params_[i].data_mut();
        for (std::size_t j = 0; j < gv.size(); ++j) {
            m[j] = b1_ * m[j] + (1.0 - b1_) * gv[j];
            v[j] = b2_ * v[j] + (1.0 - b2_) * gv[j] * gv[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace tsgen
