#pragma once

// Data regimes: synthetic sine mixtures, CSV ingestion with sliding windows,
// per-feature min-max scaling, and random observation dropping for the
// irregular regimes.  All datasets store *scaled* values in [0,1] and times
// normalized affinely onto [kTimeEps, 1] (a strictly positive first time keeps
// the generator's Brownian base measure non-degenerate).

#include <cstddef>
#include <string>
#include <vector>

#include "tsgen/rng.hpp"

namespace tsgen {

inline constexpr double kTimeEps = 0.02;

struct SeriesSample {
    std::vector<double> times;     // strictly increasing, within [kTimeEps, 1]
    std::vector<double> values;    // row-major [len, dim]
    std::size_t dim = 0;
    std::vector<std::size_t> kept_idx;  // original indices retained; empty for regular

    std::size_t length() const { return times.size(); }
    double value(std::size_t i, std::size_t c) const { return values[i * dim + c]; }
    void validate() const;  // throws value_error on broken invariants
};

struct FeatureScale {
    std::vector<double> min, max;

    double apply(double x, std::size_t c) const {
        return (x - min[c]) / (max[c] - min[c] + 1e-7);
    }
    double invert(double y, std::size_t c) const {
        return y * (max[c] - min[c] + 1e-7) + min[c];
    }
};

struct Dataset {
    std::vector<SeriesSample> samples;
    FeatureScale scale;
    std::size_t dim = 0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Time grid for a regular length-n window: eps + (1-eps) * i / (n-1).
std::vector<double> regular_time_grid(std::size_t n);

// Per sample and feature: f ~ U[0,1], phase ~ U[-pi,pi], x_i = sin(2*pi*f*i + phase)
// at integer steps i = 0..length-1; min-max scaled over the whole set.
Dataset gen_sines(std::size_t n, std::size_t dim, std::size_t length, Rng& rng);

// Sliding windows over a numeric CSV (optional single header auto-skipped),
// min-max scaled per feature over all windows.
Dataset load_csv_windows(const std::string& path, std::size_t window, std::size_t stride);

// Irregular regime: per sample always keep index 0, drop round(rate * N) of the
// remaining indices uniformly without replacement, then remap the survivors'
// index positions affinely so the first maps to kTimeEps and the last to 1.
Dataset drop_random(const Dataset& ds, double rate, Rng& rng);

// One CSV per sample (sample_000000.csv, ...) plus meta.json carrying dim and
// the fitted scale.  Irregular samples gain a leading `time` column.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace tsgen
