#pragma once

// Continuous decoder: a hidden-vector sequence anchors a piecewise-ODE state
// that evolves under a GRU-ODE field between observation times and jumps via a
// discrete GRU when the next hidden vector arrives.  Any query time inside the
// window is served by re-integrating from the containing interval's post-jump
// state, so the emitted path is independent of which queries are requested.

#include <cstddef>
#include <string>
#include <vector>

#include "tsgen/nn.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

// Batched hidden sequence: h[i] is [B, dim_h] at per-row times times[b][i].
struct HiddenSeq {
    std::vector<Tensor> h;
    std::vector<std::vector<double>> times;

    std::size_t length() const { return h.size(); }
    std::size_t batch() const { return times.size(); }
    void validate(std::size_t dim_h) const;
};

struct DecoderConfig {
    std::size_t dim_h = 4;
    std::size_t dim_d = 4;      // defaults to dim_h upstream
    std::size_t dim_x = 1;
    Act out_act = Act::softplus;
    std::size_t substeps = 8;   // fixed RK4 steps per integration interval
};

struct Decoder {
    DecoderConfig cfg;
    Linear fc_init;   // dim_h -> dim_d, applied to h_0 only (no jump at t_0)
    GruOdeCell g_net; // continuous field over d with the clock appended
    GruCell jump;     // discrete update (h_i, d(t_i^-)) -> d(t_i)
    Linear fc_out;    // dim_d -> dim_x, then out_act
    double g_field_scale = 1.0;  // test seam: 0 disables the continuous field

    static Decoder create(const DecoderConfig& cfg, Rng& rng);
    void collect(ParamSet& ps, const std::string& prefix) const;

    // Post-jump decoder states d_i, one [B, dim_d] tensor per hidden index.
    std::vector<Tensor> hidden_pass(const HiddenSeq& hs) const;

    // Emit x̂ at per-row query times (queries[b] sorted, inside the row's
    // window).  All rows answer the same number of queries M; returns M
    // tensors [B, dim_x].
    std::vector<Tensor> decode_at(const HiddenSeq& hs,
                                  const std::vector<std::vector<double>>& queries) const;

    // decode_at on the hidden grid itself, via the post-jump states directly.
    std::vector<Tensor> reconstruct(const HiddenSeq& hs) const;

    Tensor emit(const Tensor& d) const;  // out_act(fc_out(d))
};

}  // namespace tsgen
