#include "tsgen/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsgen/errors.hpp"
#include "tsgen/ode.hpp"

namespace tsgen {

void HiddenSeq::validate(std::size_t dim_h) const {
    if (h.empty()) throw value_error("hidden sequence: empty");
    const std::size_t B = times.size();
    if (B == 0) throw value_error("hidden sequence: no rows");
    for (const auto& row : times) {
        if (row.size() != h.size()) {
            throw value_error("hidden sequence: per-row time count must equal |h|");
        }
        for (std::size_t i = 1; i < row.size(); ++i) {
            if (!(row[i] > row[i - 1])) {
                throw value_error("hidden sequence: times must be strictly increasing");
            }
        }
    }
    for (const auto& hi : h) {
        if (hi.rank() != 2 || hi.rows() != B || hi.cols() != dim_h) {
            throw shape_error("hidden sequence: each h_i must be [B, dim_h]");
        }
    }
}

Decoder Decoder::create(const DecoderConfig& cfg, Rng& rng) {
    if (cfg.dim_h == 0 || cfg.dim_d == 0 || cfg.dim_x == 0 || cfg.substeps == 0) {
        throw value_error("decoder: dims and substeps must be positive");
    }
    Decoder dec;
    dec.cfg = cfg;
    dec.fc_init = Linear::create(cfg.dim_h, cfg.dim_d, WInit::xavier, rng);
    dec.g_net = GruOdeCell::create(cfg.dim_d, rng);
    dec.jump = GruCell::create(cfg.dim_h, cfg.dim_d, rng);
    dec.fc_out = Linear::create(cfg.dim_d, cfg.dim_x, WInit::xavier, rng);
    return dec;
}

void Decoder::collect(ParamSet& ps, const std::string& prefix) const {
    fc_init.collect(ps, prefix + ".fc_init");
    g_net.collect(ps, prefix + ".g_net");
    jump.collect(ps, prefix + ".jump");
    fc_out.collect(ps, prefix + ".fc_out");
}

Tensor Decoder::emit(const Tensor& d) const { return activation(fc_out.forward(d), cfg.out_act); }

std::vector<Tensor> Decoder::hidden_pass(const HiddenSeq& hs) const {
    hs.validate(cfg.dim_h);
    const std::size_t B = hs.batch();
    const std::size_t N = hs.length();

    auto field = [this](const Tensor& t_rows, const Tensor& y) {
        Tensor f = g_net.field(t_rows, y);
        return g_field_scale == 1.0 ? f : scale(f, g_field_scale);
    };

    std::vector<Tensor> d_states;
    d_states.reserve(N);
    Tensor d = fc_init.forward(hs.h[0]);
    d_states.push_back(d);

    std::vector<double> t0(B), t1(B);
    for (std::size_t i = 1; i < N; ++i) {
        for (std::size_t b = 0; b < B; ++b) {
            t0[b] = hs.times[b][i - 1];
            t1[b] = hs.times[b][i];
        }
        try {
            d = integrate_rows(field, d, t0, t1, cfg.substeps);
        } catch (const numeric_error& e) {
            throw numeric_error("decode: interval " + std::to_string(i - 1) + ": " + e.what());
        }
        d = jump.forward(hs.h[i], d);
        d_states.push_back(d);
    }
    return d_states;
}

std::vector<Tensor> Decoder::reconstruct(const HiddenSeq& hs) const {
    std::vector<Tensor> d_states = hidden_pass(hs);
    std::vector<Tensor> out;
    out.reserve(d_states.size());
    for (const auto& d : d_states) out.push_back(emit(d));
    return out;
}

std::vector<Tensor> Decoder::decode_at(const HiddenSeq& hs,
                                       const std::vector<std::vector<double>>& queries) const {
    hs.validate(cfg.dim_h);
    const std::size_t B = hs.batch();
    const std::size_t N = hs.length();
    if (queries.size() != B) throw value_error("decode_at: one query list per row required");
    const std::size_t M = queries[0].size();
    for (const auto& q : queries) {
        if (q.size() != M) throw value_error("decode_at: all rows must share a query count");
        for (std::size_t j = 0; j < q.size(); ++j) {
            if (j > 0 && !(q[j] >= q[j - 1])) {
                throw value_error("decode_at: query times must be sorted");
            }
        }
    }
    if (M == 0) return {};

    // interval index per (row, query): largest i with t_i <= s
    std::vector<std::vector<std::size_t>> anchor_idx(B, std::vector<std::size_t>(M));
    for (std::size_t b = 0; b < B; ++b) {
        const auto& tr = hs.times[b];
        for (std::size_t j = 0; j < M; ++j) {
            const double s = queries[b][j];
            if (s < tr.front() || s > tr.back()) {
                throw value_error("decode_at: query time " + std::to_string(s) +
                                  " outside window [" + std::to_string(tr.front()) + ", " +
                                  std::to_string(tr.back()) + "]");
            }
            auto it = std::upper_bound(tr.begin(), tr.end(), s);
            std::size_t i = static_cast<std::size_t>(it - tr.begin());
            anchor_idx[b][j] = (i == 0) ? 0 : i - 1;
        }
    }

    std::vector<Tensor> d_states = hidden_pass(hs);
    auto field = [this](const Tensor& t_rows, const Tensor& y) {
        Tensor f = g_net.field(t_rows, y);
        return g_field_scale == 1.0 ? f : scale(f, g_field_scale);
    };

    std::vector<Tensor> out;
    out.reserve(M);
    std::vector<double> t0(B), t1(B);
    for (std::size_t j = 0; j < M; ++j) {
        bool all_exact = true;
        for (std::size_t b = 0; b < B; ++b) {
            t0[b] = hs.times[b][anchor_idx[b][j]];
            t1[b] = queries[b][j];
            if (t1[b] != t0[b]) all_exact = false;
        }
        // gather each row's anchor state as a mask-weighted sum over indices
        Tensor anchor;
        bool first = true;
        for (std::size_t i = 0; i < N; ++i) {
            std::vector<double> mask(B, 0.0);
            bool any = false;
            for (std::size_t b = 0; b < B; ++b) {
                if (anchor_idx[b][j] == i) {
                    mask[b] = 1.0;
                    any = true;
                }
            }
            if (!any) continue;
            Tensor term = mul(d_states[i], Tensor::from({B, 1}, std::move(mask)));
            anchor = first ? term : add(anchor, term);
            first = false;
        }
        Tensor d = all_exact ? anchor : integrate_rows(field, anchor, t0, t1, cfg.substeps);
        out.push_back(emit(d));
    }
    return out;
}

}  // namespace tsgen
