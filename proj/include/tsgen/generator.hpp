#pragma once

// Invertible continuous-flow generator over hidden-state batches.
//
// A batch of B series, each with N hidden vectors of width d, is packed
// time-major into one [N*B, d] tensor (row = i*B + b).  Every row is pushed
// independently through the same flow in pseudo-time tau in [0, 1]:
//
//   dw/dtau = r(w, a, tau),  w(0) = z,  w(1) = h,
//
// where a is the row's observation clock (the time stamp t_i of that hidden
// vector).  The base process z is a Wiener path evaluated on the observation
// grid, so consecutive time blocks of z differ by independent Gaussian
// increments.  Because the map z -> h is a bijection applied per row, exact
// log densities come from the base increment density plus an integrated
// divergence correction along each row's trajectory.
//
// The divergence and the Jacobian penalty are estimated with Rademacher
// probes through vector-Jacobian products (exact basis sweeps are available
// for small widths); all of it is built from taped primitives, so parameter
// gradients flow through solves, probes, and penalties alike.

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tsgen/nn.hpp"
#include "tsgen/ode.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

// --------------------------------------------------------------------------
// Packed layout helpers.  blocks[i] is the [B, d] hidden batch at time index
// i; packing stacks them so row i*B + b is series b at time index i.
Tensor pack_time_major(const std::vector<Tensor>& blocks);
std::vector<Tensor> unpack_time_major(const Tensor& packed, std::size_t n_blocks);

// Per-row observation clock: times[b][i] -> column [N*B, 1] (time-major).
// All series must share the same length N.
Tensor obs_clock_col(const std::vector<std::vector<double>>& times);

// --------------------------------------------------------------------------
// Flow vector field r(w, a, tau).  `vjp` returns v^T (dr/dw) row-by-row for a
// cotangent batch v of the same shape as w, composed from taped primitives so
// the result remains differentiable with respect to the field's parameters.
class FlowField {
public:
    virtual ~FlowField() = default;

    virtual Tensor eval(const Tensor& w, const Tensor& a_col, double tau) const = 0;
    virtual Tensor vjp(const Tensor& w, const Tensor& a_col, double tau,
                       const Tensor& v) const = 0;
    // One shared forward pass feeding several cotangents; the default just
    // loops, concrete fields may reuse intermediate activations.
    virtual std::pair<Tensor, std::vector<Tensor>> eval_and_vjps(
        const Tensor& w, const Tensor& a_col, double tau,
        const std::vector<Tensor>& vs) const;
};

// Trainable field: three activated affine layers of width d.  Every layer
// re-reads the observation clock (and, when `tau_input`, the flow time), so
// the input width of each layer is d + 1 (+1).  The activation is the same
// for all layers and is configurable (softplus or sigmoid in practice); its
// derivative is expressed through taped primitives, which is what makes the
// hand-composed vjp differentiable.
class MlpFlowField final : public FlowField {
public:
    static MlpFlowField create(std::size_t dim, Act act, bool tau_input, Rng& rng);

    Tensor eval(const Tensor& w, const Tensor& a_col, double tau) const override;
    Tensor vjp(const Tensor& w, const Tensor& a_col, double tau,
               const Tensor& v) const override;
    std::pair<Tensor, std::vector<Tensor>> eval_and_vjps(
        const Tensor& w, const Tensor& a_col, double tau,
        const std::vector<Tensor>& vs) const override;

    void collect(ParamSet& ps, const std::string& prefix) const;
    std::size_t dim() const { return dim_; }
    bool tau_input() const { return tau_input_; }

private:
    struct Trace {
        Tensor y;                  // final output
        std::vector<Tensor> dmul;  // per-layer activation derivative at z_k
    };
    Trace forward_trace(const Tensor& w, const Tensor& a_col, double tau) const;
    Tensor vjp_from(const Trace& tr, const Tensor& v) const;

    std::vector<Linear> layers_;
    Act act_ = Act::softplus;
    bool tau_input_ = true;
    std::size_t dim_ = 0;
};

// Fixed fields with closed-form transport, used as oracles in tests.
class ConstFlowField final : public FlowField {
public:
    explicit ConstFlowField(std::vector<double> c);
    Tensor eval(const Tensor& w, const Tensor& a_col, double tau) const override;
    Tensor vjp(const Tensor& w, const Tensor& a_col, double tau,
               const Tensor& v) const override;

private:
    Tensor c_row_;  // [1, d]
};

class LinearFlowField final : public FlowField {
public:
    explicit LinearFlowField(double lam) : lam_(lam) {}
    Tensor eval(const Tensor& w, const Tensor& a_col, double tau) const override;
    Tensor vjp(const Tensor& w, const Tensor& a_col, double tau,
               const Tensor& v) const override;

private:
    double lam_;
};

// r(w) = w A, so dr/dw = A^T with a known exact trace.
class MatrixFlowField final : public FlowField {
public:
    explicit MatrixFlowField(Tensor a);
    Tensor eval(const Tensor& w, const Tensor& a_col, double tau) const override;
    Tensor vjp(const Tensor& w, const Tensor& a_col, double tau,
               const Tensor& v) const override;
    double exact_trace() const;

private:
    Tensor a_;  // [d, d]
};

// --------------------------------------------------------------------------
// Wiener endpoints on per-series observation grids, packed time-major:
// block 0 is sqrt(t_0) * eps, block i adds sqrt(t_i - t_{i-1}) * eps.
// Requires equal lengths, strictly increasing times, first entry > 0.
Tensor sample_wiener(const std::vector<std::vector<double>>& times, std::size_t dim,
                     Rng& rng);

// Plain transport between the base and data sides (both taped).
Tensor flow_generate(const FlowField& f, const Tensor& z, const Tensor& a_col,
                     const SolverConfig& cfg);
Tensor flow_inverse(const FlowField& f, const Tensor& h, const Tensor& a_col,
                    const SolverConfig& cfg);

// --------------------------------------------------------------------------
struct AugmentedOptions {
    // Rademacher probe count for the divergence / Jacobian estimates;
    // 0 selects the exact basis sweep (width must be <= 16).
    std::size_t n_probes = 1;
    bool want_kinetic = false;
    bool want_jacobian = false;
    bool want_directional = false;
    double dir_delta = 1e-3;  // forward-difference step in tau
};

// Forward solve carrying per-row accumulators alongside the state:
//   trace_int   = integral of (estimated) div_w r
//   kinetic     = integral of |r|^2
//   jacobian    = integral of |v^T dr/dw|^2 over the same probes
//   directional = integral of |dr/dtau|^2 (forward difference)
// Disabled accumulators come back as exact zero columns.
struct AugmentedResult {
    Tensor h;            // [R, d]
    Tensor trace_int;    // [R, 1]
    Tensor kinetic;      // [R, 1]
    Tensor jacobian;     // [R, 1]
    Tensor directional;  // [R, 1]
};

AugmentedResult flow_forward_augmented(const FlowField& f, const Tensor& z,
                                       const Tensor& a_col, const SolverConfig& cfg,
                                       const AugmentedOptions& opts, Rng& probe_rng);

// --------------------------------------------------------------------------
// Exact log density of observed hidden sequences under the flow, plus the
// regularizers harvested from the same augmented solve.  `h` is packed
// time-major for `times` ([B][N], strictly increasing, first entry > 0).
//
// Pipeline: invert each row to the base side, score the base increments,
// then re-run the forward augmented solve from the recovered base points:
//   log p = log p_base(z_hat) - trace_int,
// summed per series.  `recon` is the mean squared row distance between the
// reproduced forward pass and the input, a drift diagnostic/penalty.
struct DensityResult {
    Tensor logp;       // [B, 1] per-series log density
    Tensor mean_logp;  // scalar
    Tensor z_hat;      // [R, d] recovered base points
    Tensor h_repro;    // [R, d] forward reproduction of h
    Tensor kinetic;    // scalar, mean over rows of the integrals
    Tensor jacobian;   // scalar
    Tensor directional;// scalar
    Tensor recon;      // scalar
};

DensityResult flow_log_density(const FlowField& f, const Tensor& h,
                               const std::vector<std::vector<double>>& times,
                               const SolverConfig& cfg, const AugmentedOptions& opts,
                               Rng& probe_rng);

// --------------------------------------------------------------------------
struct GeneratorConfig {
    std::size_t dim_h = 4;
    Act act = Act::softplus;
    bool tau_input = true;
    SolverConfig solver{OdeMethod::dopri5, 0.05, 1e-6, 1e-6, 100000};
    std::size_t n_probes = 1;
    double dir_delta = 1e-3;
};

// Trainable generator: owns the field and routes through the free functions
// with its solver settings.  `times` are per-series observation grids; shapes
// follow the packed time-major convention throughout.
struct Generator {
    GeneratorConfig cfg;
    MlpFlowField r_net;

    static Generator create(const GeneratorConfig& cfg, Rng& rng);
    void collect(ParamSet& ps, const std::string& prefix) const;

    // z -> h on the observation grids (adversarial sampling path).
    Tensor generate(const Tensor& z, const std::vector<std::vector<double>>& times) const;
    // h -> z (used by the density path; exposed for tests).
    Tensor inverse(const Tensor& h, const std::vector<std::vector<double>>& times) const;

    DensityResult log_density(const Tensor& h,
                              const std::vector<std::vector<double>>& times,
                              const AugmentedOptions& opts, Rng& probe_rng) const;
    // Options derived from the config (probe count, difference step) with the
    // requested accumulators switched on.
    AugmentedOptions density_options(bool kinetic, bool jacobian, bool directional) const;
};

}  // namespace tsgen
