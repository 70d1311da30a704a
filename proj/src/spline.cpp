#include "tsgen/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsgen/errors.hpp"

namespace tsgen {
namespace {

// Solve the natural-spline second-derivative system for one channel.
// Returns M[0..N-1] with M[0] = M[N-1] = 0 (natural boundary), solving the
// standard tridiagonal system
//   (h_{i-1}/6) M_{i-1} + ((h_{i-1}+h_i)/3) M_i + (h_i/6) M_{i+1}
//     = (y_{i+1}-y_i)/h_i - (y_i-y_{i-1})/h_{i-1}
// for interior i by the Thomas algorithm.
std::vector<double> second_derivatives(const std::vector<double>& t,
                                       const std::vector<double>& y) {
    const std::size_t n = t.size();
    std::vector<double> m(n, 0.0);
    if (n < 3) return m;  // two knots: straight line, M == 0

    const std::size_t k = n - 2;  // interior unknowns
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t i = 0; i < k; ++i) {
        double h0 = t[i + 1] - t[i];
        double h1 = t[i + 2] - t[i + 1];
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0;
    }
    // forward elimination (lower entries equal the previous row's upper)
    for (std::size_t i = 1; i < k; ++i) {
        double lower = (t[i + 1] - t[i]) / 6.0;
        double w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t i = k - 1; i >= 1; --i) {
        m[i] = (rhs[i - 1] - upper[i - 1] * m[i + 1]) / diag[i - 1];
    }
    return m;
}

}  // namespace

CubicSplinePath CubicSplinePath::fit(const std::vector<double>& times,
                                     const std::vector<double>& values, std::size_t dim) {
    const std::size_t n = times.size();
    if (n < 2) throw value_error("spline fit: need at least two knots");
    if (dim == 0) throw value_error("spline fit: need at least one value channel");
    if (values.size() != n * dim) {
        throw shape_error("spline fit: values must be N x dim = " + std::to_string(n) +
                          " x " + std::to_string(dim));
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(times[i] > times[i - 1])) {
            throw value_error("spline fit: knot times must be strictly increasing");
        }
    }

    CubicSplinePath path;
    path.dim_ = dim;
    path.times_ = times;
    path.coeffs_.assign((n - 1) * dim * 4, 0.0);

    std::vector<double> y(n);
    for (std::size_t c = 0; c < dim; ++c) {
        for (std::size_t i = 0; i < n; ++i) y[i] = values[i * dim + c];
        std::vector<double> m = second_derivatives(times, y);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            double h = times[i + 1] - times[i];
            double* cf = &path.coeffs_[(i * dim + c) * 4];
            cf[0] = y[i];
            cf[1] = (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
            cf[2] = m[i] / 2.0;
            cf[3] = (m[i + 1] - m[i]) / (6.0 * h);
        }
    }
    return path;
}

std::size_t CubicSplinePath::locate(double t) const {
    if (t < times_.front() || t > times_.back()) {
        throw value_error("spline eval: t=" + std::to_string(t) + " outside [" +
                          std::to_string(times_.front()) + ", " +
                          std::to_string(times_.back()) + "]");
    }
    // largest interval index i with times_[i] <= t (last interval covers t_max)
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t i = static_cast<std::size_t>(it - times_.begin());
    if (i > 0) --i;
    if (i + 1 >= times_.size()) i = times_.size() - 2;
    return i;
}

std::vector<double> CubicSplinePath::eval(double t) const {
    std::size_t i = locate(t);
    double u = t - times_[i];
    std::vector<double> out(1 + dim_);
    out[0] = t;  // clock channel is exactly linear
    for (std::size_t c = 0; c < dim_; ++c) {
        const double* cf = &coeffs_[(i * dim_ + c) * 4];
        out[1 + c] = cf[0] + u * (cf[1] + u * (cf[2] + u * cf[3]));
    }
    return out;
}

std::vector<double> CubicSplinePath::deriv(double t) const {
    std::size_t i = locate(t);
    double u = t - times_[i];
    std::vector<double> out(1 + dim_);
    out[0] = 1.0;  // d/dt of the clock channel
    for (std::size_t c = 0; c < dim_; ++c) {
        const double* cf = &coeffs_[(i * dim_ + c) * 4];
        out[1 + c] = cf[1] + u * (2.0 * cf[2] + u * 3.0 * cf[3]);
    }
    return out;
}

}  // namespace tsgen
