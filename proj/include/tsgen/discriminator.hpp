#pragma once

// Real-vs-fake classifier over (possibly irregular) observation sequences.
//
// A stack of continuous-time GRU layers: layer states drift between
// observations under one shared GRU-ODE field and jump at observations with
// per-layer discrete GRU cells.  Layer 1 is seeded from the first observation
// through an affine map and jumps on the raw observations; every deeper layer
// starts from zero, jumps on the layer below's current state (the usual
// stacked-GRU wiring), and the top state at the final stamp feeds a two-way
// affine head.  Class 0 is "real".
//
// Inputs arrive as taped tensors so adversarial gradients can flow through
// the classifier into whatever produced the observations.

#include <cstddef>
#include <string>
#include <vector>

#include "tsgen/nn.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

struct DiscriminatorConfig {
    std::size_t dim_x = 1;
    std::size_t dim_c = 0;  // 0 resolves to 4 * dim_x
    std::size_t d_layer = 1;
    std::size_t substeps = 8;  // fixed RK4 substeps per observation interval
};

struct Discriminator {
    DiscriminatorConfig cfg;  // with dim_c resolved
    Linear fc_init;           // dim_x -> dim_c
    GruOdeCell q_net;         // shared drift for every layer state
    std::vector<GruCell> jumps;  // [0]: dim_x -> dim_c, rest: dim_c -> dim_c
    Linear fc_cls;            // dim_c -> 2
    // Test seam: scales the drift field; 0 reduces the model to a discrete
    // stacked GRU over the observations.
    double q_field_scale = 1.0;

    static Discriminator create(const DiscriminatorConfig& cfg, Rng& rng);
    void collect(ParamSet& ps, const std::string& prefix) const;

    // xs[i] is the [B, dim_x] observation batch at index i; times[b] is the
    // strictly increasing grid of series b (lengths must all equal xs.size()).
    // Returns the two-way logits [B, 2].
    Tensor logits(const std::vector<Tensor>& xs,
                  const std::vector<std::vector<double>>& times) const;
    // Softmax component 0 of the logits, as a [B, 1] column in (0, 1).
    Tensor prob_real(const std::vector<Tensor>& xs,
                     const std::vector<std::vector<double>>& times) const;
};

}  // namespace tsgen
