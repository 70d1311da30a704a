#include "tsgen/encoder.hpp"

#include <string>

#include "tsgen/errors.hpp"
#include "tsgen/ode.hpp"

namespace tsgen {

Encoder Encoder::create(const EncoderConfig& cfg, Rng& rng) {
    if (cfg.dim_x == 0 || cfg.dim_h == 0 || cfg.substeps == 0) {
        throw value_error("encoder: dims and substeps must be positive");
    }
    Encoder enc;
    enc.cfg = cfg;
    enc.fc_init = Linear::create(cfg.dim_x, cfg.dim_h, WInit::xavier, rng);
    const std::size_t w = 4 * cfg.dim_x;
    const std::size_t out = cfg.dim_h * (1 + cfg.dim_x);
    enc.f_net = Mlp::create({cfg.dim_h, w, w, w, out},
                            {Act::relu, Act::relu, Act::relu, Act::tanh},
                            {WInit::kaiming, WInit::kaiming, WInit::kaiming, WInit::xavier},
                            rng);
    return enc;
}

void Encoder::collect(ParamSet& ps, const std::string& prefix) const {
    fc_init.collect(ps, prefix + ".fc_init");
    f_net.collect(ps, prefix + ".f_net");
}

Tensor Encoder::cde_field(const std::vector<const CubicSplinePath*>& paths,
                          const Tensor& t_rows, const Tensor& h) const {
    const std::size_t B = paths.size();
    const std::size_t chans = 1 + cfg.dim_x;
    std::vector<double> dx(B * chans);
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<double> d = paths[b]->deriv(t_rows.at(b, 0));
        for (std::size_t c = 0; c < chans; ++c) dx[b * chans + c] = d[c];
    }
    Tensor v = Tensor::from({B, chans}, std::move(dx));
    return cde_apply(f_net.forward(h), v, cfg.dim_h);
}

std::vector<Tensor> Encoder::encode(const std::vector<const SeriesSample*>& batch,
                                    const std::vector<const CubicSplinePath*>& paths) const {
    if (batch.empty()) throw value_error("encode: empty batch");
    if (paths.size() != batch.size()) throw value_error("encode: one path per sample required");
    const std::size_t B = batch.size();
    const std::size_t N = batch[0]->length();
    if (N < 2) throw value_error("encode: need at least two observations");
    for (const auto* s : batch) {
        if (s->length() != N) throw value_error("encode: batch samples must share a length");
        if (s->dim != cfg.dim_x) throw value_error("encode: sample dim mismatch");
    }

    std::vector<double> x0(B * cfg.dim_x);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < cfg.dim_x; ++c) x0[b * cfg.dim_x + c] = batch[b]->value(0, c);
    }
    Tensor h = fc_init.forward(Tensor::from({B, cfg.dim_x}, std::move(x0)));

    std::vector<Tensor> out;
    out.reserve(N);
    out.push_back(h);

    auto field = [this, &paths](const Tensor& t_rows, const Tensor& y) {
        return cde_field(paths, t_rows, y);
    };
    std::vector<double> t0(B), t1(B);
    for (std::size_t i = 0; i + 1 < N; ++i) {
        for (std::size_t b = 0; b < B; ++b) {
            t0[b] = batch[b]->times[i];
            t1[b] = batch[b]->times[i + 1];
        }
        try {
            h = integrate_rows(field, h, t0, t1, cfg.substeps);
        } catch (const numeric_error& e) {
            throw numeric_error("encode: interval " + std::to_string(i) + ": " + e.what());
        }
        out.push_back(h);
    }
    return out;
}

std::vector<CubicSplinePath> fit_paths(const Dataset& ds) {
    std::vector<CubicSplinePath> paths;
    paths.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        paths.push_back(CubicSplinePath::fit(s.times, s.values, s.dim));
    }
    return paths;
}

}  // namespace tsgen
