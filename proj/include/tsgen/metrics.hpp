#pragma once

// Post-hoc evaluation of generated series against held-out real ones.
//
// Both scores train a small fresh discrete GRU network from scratch:
//   * discriminative: classify real vs fake on an 80/20 split and report
//     |test accuracy - 0.5|, so 0 means indistinguishable and 0.5 means
//     trivially separable;
//   * predictive: train on one dataset, report mean absolute error on the
//     other (train-on-synthetic, test-on-real).  Two target conventions are
//     supported: predicting only the last feature one step ahead (the
//     regular-data convention) and predicting the entire next vector from
//     the current one plus the gap to the next stamp (the irregular one).
//
// Irregular inputs get the per-step time gap appended as an extra channel.
// Everything is deterministic given the RNG handed in.  KDE curves and
// flattened embeddings are exported for external plotting.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsgen/data.hpp"
#include "tsgen/rng.hpp"

namespace tsgen {

enum class PredictiveMode { one_step_last_feature, full_vector };

PredictiveMode predictive_mode_from_string(const std::string& name);
std::string predictive_mode_to_string(PredictiveMode m);

struct EvalConfig {
    std::size_t gru_layers = 2;
    std::size_t hidden_mult = 2;  // hidden width = mult * net input width
    double lr = 1e-3;
    std::size_t steps = 2000;
    std::size_t batch = 128;
    bool irregular = false;  // append the time-gap channel to net inputs
    PredictiveMode pred_mode = PredictiveMode::one_step_last_feature;
};

// |accuracy - 0.5|; split out so the formula is testable on its own.
double disc_score_from_accuracy(double accuracy);

double discriminative_score(const Dataset& real, const Dataset& fake,
                            const EvalConfig& cfg, Rng& rng);

// Trains on `train`, reports MAE on `test`.
double predictive_score(const Dataset& train, const Dataset& test,
                        const EvalConfig& cfg, Rng& rng);

struct EvalReport {
    double disc_score = 0.0;
    double pred_score = 0.0;           // trained on fake, tested on real
    double pred_score_original = 0.0;  // trained on real, tested on real
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
    std::uint64_t seed = 0;
};

EvalReport evaluate(const Dataset& real, const Dataset& fake, const EvalConfig& cfg,
                    std::uint64_t seed);
std::string eval_report_json(const EvalReport& r);

// Gaussian kernel density on an even grid spanning the data plus three
// bandwidths each side; Silverman's rule with a floor for degenerate spreads.
struct KdeCurve {
    std::vector<double> grid, density;
};

KdeCurve kde_export(const std::vector<double>& values, std::size_t n_grid);
void write_kde_csv(const std::string& path, const KdeCurve& curve);

// All sample values flattened row-major, one row per sample, with a leading
// `label` column ("real"/"fake"), for external 2-D projection.
void embedding_export(const Dataset& real, const Dataset& fake, const std::string& path);

}  // namespace tsgen
