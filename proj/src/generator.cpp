#include "tsgen/generator.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace tsgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Equal lengths, strictly increasing stamps, first stamp positive (it is the
// variance of the first Wiener block).
void validate_grids(const std::vector<std::vector<double>>& times, const char* who) {
    if (times.empty() || times.front().empty()) {
        throw value_error(std::string(who) + ": empty time grid");
    }
    const std::size_t n = times.front().size();
    for (std::size_t b = 0; b < times.size(); ++b) {
        const auto& g = times[b];
        if (g.size() != n) {
            throw shape_error(std::string(who) + ": series " + std::to_string(b) +
                              " has length " + std::to_string(g.size()) +
                              ", expected " + std::to_string(n));
        }
        if (!(g.front() > 0.0)) {
            throw value_error(std::string(who) + ": series " + std::to_string(b) +
                              " starts at a non-positive time");
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (!(g[i] > g[i - 1])) {
                throw value_error(std::string(who) + ": series " + std::to_string(b) +
                                  " times are not strictly increasing");
            }
        }
    }
}

Tensor zero_col(std::size_t r) { return Tensor::zeros({r, 1}); }

}  // namespace

// ---------------------------------------------------------------------------
Tensor pack_time_major(const std::vector<Tensor>& blocks) {
    if (blocks.empty()) throw value_error("pack_time_major: no blocks");
    const Shape& s0 = blocks.front().shape();
    for (const auto& b : blocks) {
        if (b.rank() != 2 || b.shape() != s0) {
            throw shape_error("pack_time_major: block shape " + shape_str(b.shape()) +
                              " differs from " + shape_str(s0));
        }
    }
    return concat_rows(blocks);
}

std::vector<Tensor> unpack_time_major(const Tensor& packed, std::size_t n_blocks) {
    if (packed.rank() != 2 || n_blocks == 0 || packed.rows() % n_blocks != 0) {
        throw shape_error("unpack_time_major: " + shape_str(packed.shape()) +
                          " does not split into " + std::to_string(n_blocks) + " blocks");
    }
    const std::size_t b = packed.rows() / n_blocks;
    std::vector<Tensor> out;
    out.reserve(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) out.push_back(slice_rows(packed, i * b, b));
    return out;
}

Tensor obs_clock_col(const std::vector<std::vector<double>>& times) {
    validate_grids(times, "obs_clock_col");
    const std::size_t b = times.size(), n = times.front().size();
    std::vector<double> a(n * b);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < b; ++j) a[i * b + j] = times[j][i];
    return Tensor::from({n * b, 1}, std::move(a));
}

// ---------------------------------------------------------------------------
std::pair<Tensor, std::vector<Tensor>> FlowField::eval_and_vjps(
    const Tensor& w, const Tensor& a_col, double tau,
    const std::vector<Tensor>& vs) const {
    std::vector<Tensor> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(vjp(w, a_col, tau, v));
    return {eval(w, a_col, tau), std::move(out)};
}

// ---------------------------------------------------------------------------
MlpFlowField MlpFlowField::create(std::size_t dim, Act act, bool tau_input, Rng& rng) {
    if (dim == 0) throw value_error("flow field width must be positive");
    if (act != Act::softplus && act != Act::sigmoid && act != Act::tanh) {
        throw value_error("flow field activation must be smooth (softplus/sigmoid/tanh)");
    }
    MlpFlowField f;
    f.dim_ = dim;
    f.act_ = act;
    f.tau_input_ = tau_input;
    const std::size_t in_w = dim + 1 + (tau_input ? 1 : 0);
    for (int k = 0; k < 3; ++k) {
        f.layers_.push_back(Linear::create(in_w, dim, WInit::xavier, rng));
    }
    return f;
}

MlpFlowField::Trace MlpFlowField::forward_trace(const Tensor& w, const Tensor& a_col,
                                                double tau) const {
    if (w.rank() != 2 || w.cols() != dim_) {
        throw shape_error("flow field: state " + shape_str(w.shape()) + ", expected width " +
                          std::to_string(dim_));
    }
    if (a_col.rank() != 2 || a_col.rows() != w.rows() || a_col.cols() != 1) {
        throw shape_error("flow field: clock " + shape_str(a_col.shape()) +
                          " does not align with state " + shape_str(w.shape()));
    }
    Trace tr;
    Tensor tau_col;
    if (tau_input_) tau_col = Tensor::full({w.rows(), 1}, tau);
    Tensor x = w;
    for (const auto& layer : layers_) {
        Tensor inp = tau_input_ ? concat_cols({x, a_col, tau_col})
                                : concat_cols({x, a_col});
        Tensor z = layer.forward(inp);
        Tensor y = activation(z, act_);
        switch (act_) {
            case Act::softplus: tr.dmul.push_back(sigmoid(z)); break;
            case Act::sigmoid: tr.dmul.push_back(mul(y, affine(y, -1.0, 1.0))); break;
            case Act::tanh: tr.dmul.push_back(affine(mul(y, y), -1.0, 1.0)); break;
            default:
                throw value_error("flow field activation must be smooth");
        }
        x = y;
    }
    tr.y = x;
    return tr;
}

Tensor MlpFlowField::vjp_from(const Trace& tr, const Tensor& v) const {
    Tensor g = v;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        Tensor u = mul(g, tr.dmul[k]);
        g = matmul(u, transpose(slice_rows(layers_[k].W, 0, dim_)));
    }
    return g;
}

Tensor MlpFlowField::eval(const Tensor& w, const Tensor& a_col, double tau) const {
    return forward_trace(w, a_col, tau).y;
}

Tensor MlpFlowField::vjp(const Tensor& w, const Tensor& a_col, double tau,
                         const Tensor& v) const {
    if (v.rank() != 2 || v.shape() != w.shape()) {
        throw shape_error("flow field vjp: cotangent " + shape_str(v.shape()) +
                          " vs state " + shape_str(w.shape()));
    }
    return vjp_from(forward_trace(w, a_col, tau), v);
}

std::pair<Tensor, std::vector<Tensor>> MlpFlowField::eval_and_vjps(
    const Tensor& w, const Tensor& a_col, double tau,
    const std::vector<Tensor>& vs) const {
    Trace tr = forward_trace(w, a_col, tau);
    std::vector<Tensor> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(vjp_from(tr, v));
    return {tr.y, std::move(out)};
}

void MlpFlowField::collect(ParamSet& ps, const std::string& prefix) const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        layers_[k].collect(ps, prefix + ".l" + std::to_string(k));
    }
}

// ---------------------------------------------------------------------------
ConstFlowField::ConstFlowField(std::vector<double> c) {
    if (c.empty()) throw value_error("constant flow field: empty vector");
    const std::size_t d = c.size();
    c_row_ = Tensor::from({1, d}, std::move(c));
}

Tensor ConstFlowField::eval(const Tensor& w, const Tensor& a_col, double tau) const {
    (void)a_col;
    (void)tau;
    if (w.rank() != 2 || w.cols() != c_row_.cols()) {
        throw shape_error("constant flow field: state " + shape_str(w.shape()));
    }
    return add(scale(w, 0.0), c_row_);
}

Tensor ConstFlowField::vjp(const Tensor& w, const Tensor& a_col, double tau,
                           const Tensor& v) const {
    (void)w;
    (void)a_col;
    (void)tau;
    return scale(v, 0.0);
}

Tensor LinearFlowField::eval(const Tensor& w, const Tensor& a_col, double tau) const {
    (void)a_col;
    (void)tau;
    return scale(w, lam_);
}

Tensor LinearFlowField::vjp(const Tensor& w, const Tensor& a_col, double tau,
                            const Tensor& v) const {
    (void)w;
    (void)a_col;
    (void)tau;
    return scale(v, lam_);
}

MatrixFlowField::MatrixFlowField(Tensor a) : a_(std::move(a)) {
    if (a_.rank() != 2 || a_.rows() != a_.cols()) {
        throw shape_error("matrix flow field: want square matrix, got " +
                          shape_str(a_.shape()));
    }
}

Tensor MatrixFlowField::eval(const Tensor& w, const Tensor& a_col, double tau) const {
    (void)a_col;
    (void)tau;
    return matmul(w, a_);
}

Tensor MatrixFlowField::vjp(const Tensor& w, const Tensor& a_col, double tau,
                            const Tensor& v) const {
    (void)w;
    (void)a_col;
    (void)tau;
    return matmul(v, transpose(a_));
}

double MatrixFlowField::exact_trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < a_.rows(); ++i) t += a_.at(i, i);
    return t;
}

// ---------------------------------------------------------------------------
Tensor sample_wiener(const std::vector<std::vector<double>>& times, std::size_t dim,
                     Rng& rng) {
    validate_grids(times, "sample_wiener");
    if (dim == 0) throw value_error("sample_wiener: dim must be positive");
    const std::size_t b = times.size(), n = times.front().size();
    std::vector<double> z(n * b * dim);
    for (std::size_t j = 0; j < b; ++j) {
        const double sd = std::sqrt(times[j][0]);
        for (std::size_t c = 0; c < dim; ++c) z[j * dim + c] = sd * rng.normal();
    }
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            const double sd = std::sqrt(times[j][i] - times[j][i - 1]);
            double* cur = z.data() + (i * b + j) * dim;
            const double* prev = z.data() + ((i - 1) * b + j) * dim;
            for (std::size_t c = 0; c < dim; ++c) cur[c] = prev[c] + sd * rng.normal();
        }
    }
    return Tensor::from({n * b, dim}, std::move(z));
}

// ---------------------------------------------------------------------------
Tensor flow_generate(const FlowField& f, const Tensor& z, const Tensor& a_col,
                     const SolverConfig& cfg) {
    OdeField fld = [&](double tau, const Tensor& y) { return f.eval(y, a_col, tau); };
    return integrate(fld, z, 0.0, 1.0, cfg).y1;
}

Tensor flow_inverse(const FlowField& f, const Tensor& h, const Tensor& a_col,
                    const SolverConfig& cfg) {
    OdeField fld = [&](double tau, const Tensor& y) { return f.eval(y, a_col, tau); };
    return integrate_reverse_time(fld, h, 1.0, 0.0, cfg).y1;
}

// ---------------------------------------------------------------------------
AugmentedResult flow_forward_augmented(const FlowField& f, const Tensor& z,
                                       const Tensor& a_col, const SolverConfig& cfg,
                                       const AugmentedOptions& opts, Rng& probe_rng) {
    if (z.rank() != 2) throw shape_error("augmented flow: state " + shape_str(z.shape()));
    const std::size_t r = z.rows(), d = z.cols();
    if (a_col.rank() != 2 || a_col.rows() != r || a_col.cols() != 1) {
        throw shape_error("augmented flow: clock " + shape_str(a_col.shape()));
    }

    // Probe directions are fixed for the whole solve: either one Rademacher
    // draw per probe, or the full basis sweep for exact divergence.
    const bool exact = opts.n_probes == 0;
    std::vector<Tensor> probes;
    if (exact) {
        if (d > 16) throw value_error("exact divergence sweep limited to width <= 16");
        for (std::size_t j = 0; j < d; ++j) {
            std::vector<double> e(r * d, 0.0);
            for (std::size_t i = 0; i < r; ++i) e[i * d + j] = 1.0;
            probes.push_back(Tensor::from({r, d}, std::move(e)));
        }
    } else {
        for (std::size_t p = 0; p < opts.n_probes; ++p) {
            std::vector<double> e(r * d);
            for (auto& x : e) x = probe_rng.sign();
            probes.push_back(Tensor::from({r, d}, std::move(e)));
        }
    }
    const double inv_probes = exact ? 1.0 : 1.0 / static_cast<double>(opts.n_probes);

    Tensor y0 = concat_cols({z, zero_col(r), zero_col(r), zero_col(r), zero_col(r)});
    OdeField fld = [&](double tau, const Tensor& y) {
        Tensor w = slice_cols(y, 0, d);
        auto [rr, vjps] = f.eval_and_vjps(w, a_col, tau, probes);

        Tensor tr_dot;
        for (std::size_t p = 0; p < probes.size(); ++p) {
            Tensor dot = exact ? slice_cols(vjps[p], p, 1)
                               : row_sum(mul(vjps[p], probes[p]));
            tr_dot = (p == 0) ? dot : add(tr_dot, dot);
        }
        if (!exact && opts.n_probes > 1) tr_dot = scale(tr_dot, inv_probes);

        Tensor kin_dot = opts.want_kinetic ? row_sum(mul(rr, rr)) : zero_col(r);

        Tensor jac_dot;
        if (opts.want_jacobian) {
            for (std::size_t p = 0; p < probes.size(); ++p) {
                Tensor jn = row_sum(mul(vjps[p], vjps[p]));
                jac_dot = (p == 0) ? jn : add(jac_dot, jn);
            }
            if (!exact && opts.n_probes > 1) jac_dot = scale(jac_dot, inv_probes);
        } else {
            jac_dot = zero_col(r);
        }

        Tensor dir_dot;
        if (opts.want_directional) {
            Tensor fd = scale(sub(f.eval(w, a_col, tau + opts.dir_delta), rr),
                              1.0 / opts.dir_delta);
            dir_dot = row_sum(mul(fd, fd));
        } else {
            dir_dot = zero_col(r);
        }
        return concat_cols({rr, tr_dot, kin_dot, jac_dot, dir_dot});
    };

    Tensor y1 = integrate(fld, y0, 0.0, 1.0, cfg).y1;
    AugmentedResult out;
    out.h = slice_cols(y1, 0, d);
    out.trace_int = slice_cols(y1, d, 1);
    out.kinetic = slice_cols(y1, d + 1, 1);
    out.jacobian = slice_cols(y1, d + 2, 1);
    out.directional = slice_cols(y1, d + 3, 1);
    return out;
}

// ---------------------------------------------------------------------------
DensityResult flow_log_density(const FlowField& f, const Tensor& h,
                               const std::vector<std::vector<double>>& times,
                               const SolverConfig& cfg, const AugmentedOptions& opts,
                               Rng& probe_rng) {
    validate_grids(times, "flow_log_density");
    const std::size_t b = times.size(), n = times.front().size();
    if (h.rank() != 2 || h.rows() != n * b) {
        throw shape_error("flow_log_density: packed state " + shape_str(h.shape()) +
                          " does not match " + std::to_string(n) + "x" + std::to_string(b) +
                          " grid");
    }
    const std::size_t d = h.cols();
    Tensor a_col = obs_clock_col(times);

    Tensor z_hat = flow_inverse(f, h, a_col, cfg);
    AugmentedResult aug = flow_forward_augmented(f, z_hat, a_col, cfg, opts, probe_rng);

    // Base density: independent Gaussian increments per series, the first
    // block scored against variance t_0.
    Tensor logp;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor block = slice_rows(z_hat, i * b, b);
        Tensor diff = (i == 0) ? block : sub(block, slice_rows(z_hat, (i - 1) * b, b));
        std::vector<double> inv2v(b), cterm(b);
        for (std::size_t j = 0; j < b; ++j) {
            const double v = (i == 0) ? times[j][0] : times[j][i] - times[j][i - 1];
            inv2v[j] = -0.5 / v;
            cterm[j] = -0.5 * static_cast<double>(d) * std::log(2.0 * kPi * v);
        }
        Tensor sq = row_sum(mul(diff, diff));
        Tensor term = add(mul(sq, Tensor::from({b, 1}, std::move(inv2v))),
                          Tensor::from({b, 1}, std::move(cterm)));
        logp = (i == 0) ? term : add(logp, term);
    }
    // Divergence correction, summed over the series' time blocks.
    for (std::size_t i = 0; i < n; ++i) {
        logp = sub(logp, slice_rows(aug.trace_int, i * b, b));
    }

    DensityResult out;
    out.logp = logp;
    out.mean_logp = mean(logp);
    out.z_hat = z_hat;
    out.h_repro = aug.h;
    out.kinetic = mean(aug.kinetic);
    out.jacobian = mean(aug.jacobian);
    out.directional = mean(aug.directional);
    Tensor dh = sub(aug.h, h);
    out.recon = mean(row_sum(mul(dh, dh)));
    return out;
}

// ---------------------------------------------------------------------------
Generator Generator::create(const GeneratorConfig& cfg, Rng& rng) {
    Generator g;
    g.cfg = cfg;
    g.r_net = MlpFlowField::create(cfg.dim_h, cfg.act, cfg.tau_input, rng);
    return g;
}

void Generator::collect(ParamSet& ps, const std::string& prefix) const {
    r_net.collect(ps, prefix + ".r_net");
}

Tensor Generator::generate(const Tensor& z,
                           const std::vector<std::vector<double>>& times) const {
    return flow_generate(r_net, z, obs_clock_col(times), cfg.solver);
}

Tensor Generator::inverse(const Tensor& h,
                          const std::vector<std::vector<double>>& times) const {
    return flow_inverse(r_net, h, obs_clock_col(times), cfg.solver);
}

DensityResult Generator::log_density(const Tensor& h,
                                     const std::vector<std::vector<double>>& times,
                                     const AugmentedOptions& opts, Rng& probe_rng) const {
    return flow_log_density(r_net, h, times, cfg.solver, opts, probe_rng);
}

AugmentedOptions Generator::density_options(bool kinetic, bool jacobian,
                                            bool directional) const {
    AugmentedOptions o;
    o.n_probes = cfg.n_probes;
    o.want_kinetic = kinetic;
    o.want_jacobian = jacobian;
    o.want_directional = directional;
    o.dir_delta = cfg.dir_delta;
    return o;
}

}  // namespace tsgen
