#pragma once

// Differentiable ODE integration on top of the tensor tape.
//
// Two solvers are provided:
//
//   * rk4     -- classic fixed-step Runge-Kutta 4.  Step size `step_size`
//                (the span is split into round(|t1-t0|/h) uniform steps).
//   * dopri5  -- adaptive Dormand-Prince 5(4) with PI-free standard step
//                control: error norm is the RMS of err_i / (atol + rtol*|y_i|),
//                accept when <= 1, new step = h * clamp(0.9 * norm^(-1/5)).
//
// Both integrate the state *on the tape*: every arithmetic op inside a step
// runs through the tensor op set so reverse-mode differentiation through the
// whole solve (discrete adjoint of the unrolled scheme) works out of the box.
// Step-size selection for dopri5 reads plain values (error estimates are
// consulted as numbers, not differentiated through), which is the standard
// discrete-adjoint treatment: the accepted step sequence is a constant of the
// backward pass.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tsgen/tensor.hpp"

namespace tsgen {

enum class OdeMethod { rk4, dopri5 };

OdeMethod ode_method_from_string(const std::string& name);
std::string ode_method_to_string(OdeMethod m);

struct SolverConfig {
    OdeMethod method = OdeMethod::rk4;
    double step_size = 0.05;   // rk4 only
    double atol = 1e-6;        // dopri5 only
    double rtol = 1e-6;        // dopri5 only
    std::size_t max_steps = 100000;
};

struct OdeSolution {
    Tensor y1;                     // state at t1, same shape as y0
    std::size_t steps_taken = 0;   // accepted steps
    std::size_t steps_rejected = 0;
    double max_error_norm = 0.0;   // max scaled error norm among accepted steps (dopri5)
};

// Vector field: maps (t, y) -> dy/dt, with y and the result sharing a shape.
using OdeField = std::function<Tensor(double, const Tensor&)>;

// Integrate dy/dt = field(t, y) from t0 to t1 (t1 < t0 integrates backward in
// time with the same code path; dopri5 uses signed steps).  Throws
// numeric_error when the state goes non-finite or the step budget is exhausted.
OdeSolution integrate(const OdeField& field, const Tensor& y0, double t0, double t1,
                      const SolverConfig& cfg);

// Convenience wrapper for solving from t1 back to t0 (used by flow inversion).
OdeSolution integrate_reverse_time(const OdeField& field, const Tensor& y1, double t1, double t0,
                                   const SolverConfig& cfg);

// Batched fixed-step RK4 where every row of the [B, d] state advances over its
// own interval [t0[b], t1[b]] in `substeps` uniform steps.  The field receives
// the per-row times as a [B, 1] tensor (constant, off-tape) plus the current
// state.  Rows with t1[b] == t0[b] are exact identities (zero-length steps add
// exactly zero).  This is the workhorse for hidden-state propagation between
// observations, where each batch row carries its own time grid.
using RowOdeField = std::function<Tensor(const Tensor& t_rows, const Tensor& y)>;

Tensor integrate_rows(const RowOdeField& field, const Tensor& y0,
                      const std::vector<double>& t0, const std::vector<double>& t1,
                      std::size_t substeps);

}  // namespace tsgen
