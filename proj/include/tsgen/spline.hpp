#pragma once

// Continuous control path built from a discrete sample: per value channel a
// natural cubic spline (C^2, zero second derivative at both ends), with an
// exactly linear clock channel prepended at index 0 so that deriv() channel 0
// is identically 1.  Immutable after fit; evaluation is value-level (the path
// feeds the CDE as data, not as trainable structure).

#include <cstddef>
#include <vector>

namespace tsgen {

class CubicSplinePath {
public:
    // times: strictly increasing, size N >= 2.
    // values: row-major [N, dim] observations (dim value channels).
    static CubicSplinePath fit(const std::vector<double>& times,
                               const std::vector<double>& values, std::size_t dim);

    // Both return 1 + dim entries: [t or 1, value channels...].
    std::vector<double> eval(double t) const;
    std::vector<double> deriv(double t) const;

    std::size_t channels() const { return 1 + dim_; }          // incl. clock channel
    std::size_t value_channels() const { return dim_; }
    const std::vector<double>& knot_times() const { return times_; }
    double t_min() const { return times_.front(); }
    double t_max() const { return times_.back(); }

private:
    CubicSplinePath() = default;

    std::size_t locate(double t) const;

    std::size_t dim_ = 0;
    std::vector<double> times_;
    // Per interval i, per value channel c: S(t) = a + b*u + c2*u^2 + d*u^3
    // with u = t - times_[i]; stored flat as [interval][channel][4].
    std::vector<double> coeffs_;
};

}  // namespace tsgen
