#include "tsgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/nn.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor abs_t(const Tensor& x) {
    return custom_unary(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// Uniform sequence length across both datasets (the post-hoc nets batch whole
// sequences); returns that length.
std::size_t check_pair(const Dataset& a, const Dataset& b, const char* who) {
    if (a.empty() || b.empty()) throw value_error(std::string(who) + ": empty dataset");
    if (a.dim != b.dim) {
        throw value_error(std::string(who) + ": feature dims differ (" +
                          std::to_string(a.dim) + " vs " + std::to_string(b.dim) + ")");
    }
    const std::size_t len = a.samples.front().length();
    for (const Dataset* ds : {&a, &b}) {
        for (const auto& s : ds->samples) {
            if (s.length() != len) {
                throw value_error(std::string(who) +
                                  ": samples must share one sequence length");
            }
        }
    }
    if (len < 2) throw value_error(std::string(who) + ": sequences need >= 2 points");
    return len;
}

// Per-sample classifier features, flattened [len, width]: raw values plus,
// when requested, the time gap since the previous observation (the first gap
// is measured from 0).
std::vector<double> disc_features(const SeriesSample& s, bool with_dt) {
    const std::size_t len = s.length(), d = s.dim;
    const std::size_t w = d + (with_dt ? 1 : 0);
    std::vector<double> out(len * w);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = 0; c < d; ++c) out[i * w + c] = s.value(i, c);
        if (with_dt) out[i * w + d] = (i == 0) ? s.times[0] : s.times[i] - s.times[i - 1];
    }
    return out;
}

// Per-sample predictor input/target pairs over steps i = 0..len-2.
struct PredSample {
    std::vector<double> in;   // [steps, w_in]
    std::vector<double> tgt;  // [steps, w_out]
};

PredSample pred_features(const SeriesSample& s, PredictiveMode mode, bool with_dt) {
    const std::size_t len = s.length(), d = s.dim;
    const std::size_t steps = len - 1;
    PredSample out;
    if (mode == PredictiveMode::one_step_last_feature) {
        const std::size_t w_in = (d - 1) + (with_dt ? 1 : 0);
        out.in.resize(steps * w_in);
        out.tgt.resize(steps);
        for (std::size_t i = 0; i < steps; ++i) {
            for (std::size_t c = 0; c + 1 < d; ++c) out.in[i * w_in + c] = s.value(i, c);
            if (with_dt) {
                out.in[i * w_in + (d - 1)] =
                    (i == 0) ? s.times[0] : s.times[i] - s.times[i - 1];
            }
            out.tgt[i] = s.value(i + 1, d - 1);
        }
    } else {
        const std::size_t w_in = d + 1;  // the gap to the predicted stamp
        out.in.resize(steps * w_in);
        out.tgt.resize(steps * d);
        for (std::size_t i = 0; i < steps; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                out.in[i * w_in + c] = s.value(i, c);
                out.tgt[i * d + c] = s.value(i + 1, c);
            }
            out.in[i * w_in + d] = s.times[i + 1] - s.times[i];
        }
    }
    return out;
}

// Small discrete GRU stack with an affine head.
struct GruNet {
    std::vector<GruCell> cells;
    Linear head;

    static GruNet create(std::size_t in, std::size_t hidden, std::size_t layers,
                         std::size_t out, Rng& rng) {
        GruNet net;
        net.cells.push_back(GruCell::create(in, hidden, rng));
        for (std::size_t l = 1; l < layers; ++l) {
            net.cells.push_back(GruCell::create(hidden, hidden, rng));
        }
        net.head = Linear::create(hidden, out, WInit::xavier, rng);
        return net;
    }

    ParamSet params() const {
        ParamSet ps;
        for (std::size_t l = 0; l < cells.size(); ++l) {
            cells[l].collect(ps, "gru" + std::to_string(l));
        }
        head.collect(ps, "head");
        return ps;
    }
};

// Gathers step block i for the chosen rows of a flattened feature table.
Tensor step_block(const std::vector<const std::vector<double>*>& feats,
                  const std::vector<std::size_t>& rows, std::size_t i, std::size_t w) {
    std::vector<double> v(rows.size() * w);
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const double* src = feats[rows[b]]->data() + i * w;
        std::copy(src, src + w, v.begin() + b * w);
    }
    return Tensor::from({rows.size(), w}, std::move(v));
}

// Runs the stack over `n_steps` blocks and returns the top state after each
// step (only the last is kept unless `collect_all`).
std::vector<Tensor> run_stack(const GruNet& net,
                              const std::vector<const std::vector<double>*>& feats,
                              const std::vector<std::size_t>& rows, std::size_t n_steps,
                              std::size_t w, std::size_t hidden, bool collect_all) {
    const std::size_t b = rows.size();
    std::vector<Tensor> states(net.cells.size(), Tensor::zeros({b, hidden}));
    std::vector<Tensor> tops;
    for (std::size_t i = 0; i < n_steps; ++i) {
        Tensor x = step_block(feats, rows, i, w);
        for (std::size_t l = 0; l < net.cells.size(); ++l) {
            states[l] = net.cells[l].forward(l == 0 ? x : states[l - 1], states[l]);
        }
        if (collect_all || i + 1 == n_steps) tops.push_back(states.back());
    }
    return tops;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    }
    return idx;
}

std::vector<std::size_t> draw_batch(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> rows(std::min(batch, n));
    for (auto& r : rows) r = rng.uniform_int(n);
    return rows;
}

void validate_eval_cfg(const EvalConfig& cfg) {
    if (cfg.gru_layers == 0) throw value_error("eval: need at least one GRU layer");
    if (cfg.hidden_mult == 0) throw value_error("eval: hidden_mult must be positive");
    if (cfg.batch == 0) throw value_error("eval: batch must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
PredictiveMode predictive_mode_from_string(const std::string& name) {
    if (name == "one_step_last_feature") return PredictiveMode::one_step_last_feature;
    if (name == "full_vector") return PredictiveMode::full_vector;
    throw value_error("unknown predictive mode: " + name);
}

std::string predictive_mode_to_string(PredictiveMode m) {
    return m == PredictiveMode::one_step_last_feature ? "one_step_last_feature"
                                                      : "full_vector";
}

double disc_score_from_accuracy(double accuracy) { return std::abs(accuracy - 0.5); }

// ---------------------------------------------------------------------------
double discriminative_score(const Dataset& real, const Dataset& fake,
                            const EvalConfig& cfg, Rng& rng) {
    validate_eval_cfg(cfg);
    const std::size_t len = check_pair(real, fake, "discriminative_score");
    const std::size_t w = real.dim + (cfg.irregular ? 1 : 0);
    const std::size_t hidden = cfg.hidden_mult * w;

    // Feature tables and labels (real = 1, fake = 0), shuffled 80/20.
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (const auto& s : real.samples) {
        feats.push_back(disc_features(s, cfg.irregular));
        labels.push_back(1);
    }
    for (const auto& s : fake.samples) {
        feats.push_back(disc_features(s, cfg.irregular));
        labels.push_back(0);
    }
    const std::size_t total = feats.size();
    std::vector<std::size_t> order = shuffled_indices(total, rng);
    const std::size_t n_test = std::max<std::size_t>(1, total / 5);
    if (n_test >= total) throw value_error("discriminative_score: too few samples");
    std::vector<std::size_t> train(order.begin(), order.end() - n_test);
    std::vector<std::size_t> test(order.end() - n_test, order.end());

    std::vector<const std::vector<double>*> fp;
    fp.reserve(total);
    for (const auto& f : feats) fp.push_back(&f);

    GruNet net = GruNet::create(w, hidden, cfg.gru_layers, 2, rng);
    ParamSet ps = net.params();
    Adam opt(ps, cfg.lr);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> rows = draw_batch(train.size(), cfg.batch, rng);
        std::vector<std::size_t> picked;
        std::vector<int> y;
        for (auto r : rows) {
            picked.push_back(train[r]);
            y.push_back(labels[train[r]]);
        }
        Tape tape;
        Tensor top = run_stack(net, fp, picked, len, w, hidden, false).back();
        Tensor loss = mean(cross_entropy_logits(net.head.forward(top), y));
        opt.step(backward(loss));
    }

    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < test.size(); lo += 512) {
        const std::size_t hi = std::min(test.size(), lo + 512);
        std::vector<std::size_t> rows(test.begin() + lo, test.begin() + hi);
        Tensor top = run_stack(net, fp, rows, len, w, hidden, false).back();
        Tensor logits = net.head.forward(top);
        for (std::size_t b = 0; b < rows.size(); ++b) {
            const int pred = logits.at(b, 1) > logits.at(b, 0) ? 1 : 0;
            if (pred == labels[rows[b]]) ++correct;
        }
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
    return disc_score_from_accuracy(acc);
}

// ---------------------------------------------------------------------------
double predictive_score(const Dataset& train, const Dataset& test,
                        const EvalConfig& cfg, Rng& rng) {
    validate_eval_cfg(cfg);
    const std::size_t len = check_pair(train, test, "predictive_score");
    const std::size_t d = train.dim;
    if (cfg.pred_mode == PredictiveMode::one_step_last_feature && d < 2) {
        throw value_error("predictive_score: one-step mode needs >= 2 features");
    }
    const std::size_t steps = len - 1;
    const std::size_t w_in = cfg.pred_mode == PredictiveMode::one_step_last_feature
                                 ? (d - 1) + (cfg.irregular ? 1 : 0)
                                 : d + 1;
    const std::size_t w_out =
        cfg.pred_mode == PredictiveMode::one_step_last_feature ? 1 : d;
    const std::size_t hidden = cfg.hidden_mult * std::max<std::size_t>(w_in, 1);

    auto build = [&](const Dataset& ds, std::vector<std::vector<double>>& ins,
                     std::vector<std::vector<double>>& tgts) {
        for (const auto& s : ds.samples) {
            PredSample p = pred_features(s, cfg.pred_mode, cfg.irregular);
            ins.push_back(std::move(p.in));
            tgts.push_back(std::move(p.tgt));
        }
    };
    std::vector<std::vector<double>> tr_in, tr_tgt, te_in, te_tgt;
    build(train, tr_in, tr_tgt);
    build(test, te_in, te_tgt);

    std::vector<const std::vector<double>*> tr_in_p, tr_tgt_p, te_in_p, te_tgt_p;
    for (const auto& v : tr_in) tr_in_p.push_back(&v);
    for (const auto& v : tr_tgt) tr_tgt_p.push_back(&v);
    for (const auto& v : te_in) te_in_p.push_back(&v);
    for (const auto& v : te_tgt) te_tgt_p.push_back(&v);

    GruNet net = GruNet::create(w_in, hidden, cfg.gru_layers, w_out, rng);
    ParamSet ps = net.params();
    Adam opt(ps, cfg.lr);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> rows = draw_batch(tr_in_p.size(), cfg.batch, rng);
        Tape tape;
        std::vector<Tensor> tops = run_stack(net, tr_in_p, rows, steps, w_in, hidden, true);
        Tensor loss;
        for (std::size_t i = 0; i < steps; ++i) {
            Tensor pred = sigmoid(net.head.forward(tops[i]));
            Tensor tgt = step_block(tr_tgt_p, rows, i, w_out);
            Tensor l = mean(abs_t(sub(pred, tgt)));
            loss = (i == 0) ? l : add(loss, l);
        }
        loss = scale(loss, 1.0 / static_cast<double>(steps));
        opt.step(backward(loss));
    }

    // MAE over the whole test set.
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t lo = 0; lo < te_in_p.size(); lo += 512) {
        const std::size_t hi = std::min(te_in_p.size(), lo + 512);
        std::vector<std::size_t> rows(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        std::vector<Tensor> tops = run_stack(net, te_in_p, rows, steps, w_in, hidden, true);
        for (std::size_t i = 0; i < steps; ++i) {
            Tensor pred = sigmoid(net.head.forward(tops[i]));
            Tensor tgt = step_block(te_tgt_p, rows, i, w_out);
            for (std::size_t k = 0; k < pred.numel(); ++k) {
                abs_sum += std::abs(pred.at(k) - tgt.at(k));
                ++count;
            }
        }
    }
    return abs_sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
EvalReport evaluate(const Dataset& real, const Dataset& fake, const EvalConfig& cfg,
                    std::uint64_t seed) {
    EvalReport rep;
    rep.n_real = real.size();
    rep.n_fake = fake.size();
    rep.seed = seed;
    Rng root(seed);
    Rng r_disc = root.split(101), r_pred = root.split(202), r_orig = root.split(303);
    rep.disc_score = discriminative_score(real, fake, cfg, r_disc);
    rep.pred_score = predictive_score(fake, real, cfg, r_pred);
    rep.pred_score_original = predictive_score(real, real, cfg, r_orig);
    return rep;
}

std::string eval_report_json(const EvalReport& r) {
    nlohmann::json j;
    j["disc_score"] = r.disc_score;
    j["pred_score"] = r.pred_score;
    j["pred_score_original"] = r.pred_score_original;
    j["n_real"] = r.n_real;
    j["n_fake"] = r.n_fake;
    j["seed"] = r.seed;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
KdeCurve kde_export(const std::vector<double>& values, std::size_t n_grid) {
    if (values.size() < 2) throw value_error("kde_export: need at least 2 values");
    if (n_grid < 2) throw value_error("kde_export: need at least 2 grid points");
    const std::size_t n = values.size();

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(n - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        return i + 1 < n ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac : sorted[i];
    };
    double mean_v = 0.0;
    for (double v : values) mean_v += v;
    mean_v /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean_v) * (v - mean_v);
    var /= static_cast<double>(n - 1);
    const double sigma = std::sqrt(var);
    const double iqr_term = (quantile(0.75) - quantile(0.25)) / 1.34;

    double spread = std::min(sigma, iqr_term);
    if (spread <= 0.0) spread = std::max(sigma, iqr_term);
    double bw = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    if (bw <= 0.0) bw = std::max(1e-6, 1e-3 * std::max(1.0, std::abs(mean_v)));

    KdeCurve curve;
    curve.grid.resize(n_grid);
    curve.density.resize(n_grid);
    const double lo = sorted.front() - 3.0 * bw, hi = sorted.back() + 3.0 * bw;
    const double norm = 1.0 / (static_cast<double>(n) * bw * std::sqrt(2.0 * kPi));
    for (std::size_t g = 0; g < n_grid; ++g) {
        const double x = lo + (hi - lo) * static_cast<double>(g) /
                                  static_cast<double>(n_grid - 1);
        double acc = 0.0;
        for (double v : values) {
            const double u = (x - v) / bw;
            acc += std::exp(-0.5 * u * u);
        }
        curve.grid[g] = x;
        curve.density[g] = norm * acc;
    }
    return curve;
}

void write_kde_csv(const std::string& path, const KdeCurve& curve) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "grid,density\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", curve.grid[i]);
        out << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", curve.density[i]);
        out << buf << "\n";
    }
    if (!out) throw io_error("failed writing " + path);
}

// ---------------------------------------------------------------------------
void embedding_export(const Dataset& real, const Dataset& fake, const std::string& path) {
    check_pair(real, fake, "embedding_export");
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    const std::size_t len = real.samples.front().length();
    out << "label";
    for (std::size_t k = 0; k < len * real.dim; ++k) out << ",v" << k;
    out << "\n";
    char buf[64];
    auto dump = [&](const Dataset& ds, const char* label) {
        for (const auto& s : ds.samples) {
            out << label;
            for (double v : s.values) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << "," << buf;
            }
            out << "\n";
        }
    };
    dump(real, "real");
    dump(fake, "fake");
    if (!out) throw io_error("failed writing " + path);
}

}  // namespace tsgen
