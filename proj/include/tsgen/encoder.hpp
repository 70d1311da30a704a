#pragma once

// Controlled-differential-equation encoder: a series (possibly irregular)
// drives dh = f(h) dX(t), where X is the cubic-spline control path (clock
// channel prepended) and f maps the hidden state to a dim(h) x channels
// matrix.  The whole batch advances interval by interval with per-row time
// spans, so samples with different grids batch together as long as they share
// a common length.

#include <cstddef>
#include <vector>

#include "tsgen/data.hpp"
#include "tsgen/nn.hpp"
#include "tsgen/spline.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

struct EncoderConfig {
    std::size_t dim_x = 1;
    std::size_t dim_h = 4;      // default 4 * dim_x upstream
    std::size_t substeps = 8;   // fixed RK4 steps per observation interval
};

struct Encoder {
    EncoderConfig cfg;
    Linear fc_init;  // dim_x -> dim_h
    Mlp f_net;       // dim_h -> 4dx -> 4dx -> 4dx -> dim_h * (1 + dim_x)

    static Encoder create(const EncoderConfig& cfg, Rng& rng);
    void collect(ParamSet& ps, const std::string& prefix) const;

    // Hidden sequence {h_i}, one [B, dim_h] tensor per observation index,
    // h_0 = fc_init(x_0).  All samples must share a common length; paths are
    // the samples' fitted control paths, parallel to `batch`.
    std::vector<Tensor> encode(const std::vector<const SeriesSample*>& batch,
                               const std::vector<const CubicSplinePath*>& paths) const;

    // The CDE vector field at per-row times t (test seam; also used by encode):
    // f_net(h) reshaped against dX/dt(t_b) per row.
    Tensor cde_field(const std::vector<const CubicSplinePath*>& paths, const Tensor& t_rows,
                     const Tensor& h) const;
};

// Fit one control path per dataset sample (cached by the caller).
std::vector<CubicSplinePath> fit_paths(const Dataset& ds);

}  // namespace tsgen
