#include "tsgen/discriminator.hpp"

#include <string>
#include <vector>

#include "tsgen/ode.hpp"

namespace tsgen {

namespace {

void validate_inputs(const std::vector<Tensor>& xs,
                     const std::vector<std::vector<double>>& times,
                     const DiscriminatorConfig& cfg) {
    if (xs.empty()) throw value_error("discriminator: no observations");
    const std::size_t n = xs.size();
    const std::size_t b = xs.front().rank() == 2 ? xs.front().rows() : 0;
    for (const auto& x : xs) {
        if (x.rank() != 2 || x.rows() != b || x.cols() != cfg.dim_x) {
            throw shape_error("discriminator: observation block " + shape_str(x.shape()) +
                              ", expected [" + std::to_string(b) + "," +
                              std::to_string(cfg.dim_x) + "]");
        }
    }
    if (times.size() != b) {
        throw shape_error("discriminator: " + std::to_string(times.size()) +
                          " time grids for batch of " + std::to_string(b));
    }
    for (std::size_t j = 0; j < b; ++j) {
        if (times[j].size() != n) {
            throw shape_error("discriminator: series " + std::to_string(j) + " has " +
                              std::to_string(times[j].size()) + " stamps, expected " +
                              std::to_string(n));
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (!(times[j][i] > times[j][i - 1])) {
                throw value_error("discriminator: series " + std::to_string(j) +
                                  " times are not strictly increasing");
            }
        }
    }
}

}  // namespace

Discriminator Discriminator::create(const DiscriminatorConfig& cfg, Rng& rng) {
    if (cfg.dim_x == 0) throw value_error("discriminator: dim_x must be positive");
    if (cfg.d_layer == 0) throw value_error("discriminator: need at least one layer");
    if (cfg.substeps == 0) throw value_error("discriminator: substeps must be positive");
    Discriminator d;
    d.cfg = cfg;
    if (d.cfg.dim_c == 0) d.cfg.dim_c = 4 * cfg.dim_x;
    d.fc_init = Linear::create(d.cfg.dim_x, d.cfg.dim_c, WInit::xavier, rng);
    d.q_net = GruOdeCell::create(d.cfg.dim_c, rng);
    d.jumps.push_back(GruCell::create(d.cfg.dim_x, d.cfg.dim_c, rng));
    for (std::size_t l = 1; l < d.cfg.d_layer; ++l) {
        d.jumps.push_back(GruCell::create(d.cfg.dim_c, d.cfg.dim_c, rng));
    }
    d.fc_cls = Linear::create(d.cfg.dim_c, 2, WInit::xavier, rng);
    return d;
}

void Discriminator::collect(ParamSet& ps, const std::string& prefix) const {
    fc_init.collect(ps, prefix + ".fc_init");
    q_net.collect(ps, prefix + ".q_net");
    for (std::size_t l = 0; l < jumps.size(); ++l) {
        jumps[l].collect(ps, prefix + ".jump" + std::to_string(l));
    }
    fc_cls.collect(ps, prefix + ".fc_cls");
}

Tensor Discriminator::logits(const std::vector<Tensor>& xs,
                             const std::vector<std::vector<double>>& times) const {
    validate_inputs(xs, times, cfg);
    const std::size_t n = xs.size();
    const std::size_t b = xs.front().rows();

    // States at the first stamp: layer 1 from the observation, deeper layers
    // jump on the layer below starting from zero.
    std::vector<Tensor> c(cfg.d_layer);
    c[0] = fc_init.forward(xs[0]);
    for (std::size_t l = 1; l < cfg.d_layer; ++l) {
        c[l] = jumps[l].forward(c[l - 1], Tensor::zeros({b, cfg.dim_c}));
    }

    RowOdeField drift = [&](const Tensor& t_rows, const Tensor& s) {
        Tensor f = q_net.field(t_rows, s);
        return q_field_scale == 1.0 ? f : scale(f, q_field_scale);
    };

    for (std::size_t i = 1; i < n; ++i) {
        std::vector<double> t0(b), t1(b);
        for (std::size_t j = 0; j < b; ++j) {
            t0[j] = times[j][i - 1];
            t1[j] = times[j][i];
        }
        for (std::size_t l = 0; l < cfg.d_layer; ++l) {
            c[l] = integrate_rows(drift, c[l], t0, t1, cfg.substeps);
        }
        c[0] = jumps[0].forward(xs[i], c[0]);
        for (std::size_t l = 1; l < cfg.d_layer; ++l) {
            c[l] = jumps[l].forward(c[l - 1], c[l]);
        }
    }
    return fc_cls.forward(c.back());
}

Tensor Discriminator::prob_real(const std::vector<Tensor>& xs,
                                const std::vector<std::vector<double>>& times) const {
    Tensor lg = logits(xs, times);
    // Two-way softmax component 0 computed stably as sigmoid(l0 - l1).
    return sigmoid(sub(slice_cols(lg, 0, 1), slice_cols(lg, 1, 1)));
}

}  // namespace tsgen
