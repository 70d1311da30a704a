// Command-line front end: dataset generation, training, sampling from a
// checkpoint, post-hoc evaluation, and plot-data export.
//
// Every command prints its fully resolved configuration as JSON before doing
// any work. Exit codes: 0 success, 1 I/O failure, 2 usage/config error,
// 3 numeric failure during training (message names the iteration).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsgen/data.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/metrics.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tsgen;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw io_error("write failed: " + path);
}

void print_resolved(const json& j) { std::cout << j.dump(2) << "\n"; }

// --------------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string kind;
    std::string out;
    std::string path;
    std::size_t n = 1000, dim = 5, len = 24;
    std::size_t window = 24, stride = 1;
    std::uint64_t seed = 42;
};

int run_gen_data(const GenDataArgs& a) {
    json resolved{{"command", "gen-data"}, {"kind", a.kind}, {"out", a.out}, {"seed", a.seed}};
    Dataset ds;
    if (a.kind == "sines") {
        resolved["n"] = a.n;
        resolved["dim"] = a.dim;
        resolved["len"] = a.len;
        print_resolved(resolved);
        Rng rng(a.seed);
        ds = gen_sines(a.n, a.dim, a.len, rng);
    } else {
        if (a.path.empty()) throw value_error("gen-data csv: --path is required");
        resolved["path"] = a.path;
        resolved["window"] = a.window;
        resolved["stride"] = a.stride;
        print_resolved(resolved);
        ds = load_csv_windows(a.path, a.window, a.stride);
    }
    save_dataset(ds, a.out);
    std::cout << "wrote " << ds.size() << " samples to " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------------------------ train

struct TrainArgs {
    std::string data, out, config_path, preset, resume;
    std::uint64_t seed = 0;
    std::size_t k_ae = 0, k_joint = 0, batch = 0, p_mle = 0;
    double irregular = 0.0;
    bool no_mle = false;
    // which flags were actually given on the command line
    bool has_seed = false, has_k_ae = false, has_k_joint = false, has_batch = false,
         has_p_mle = false, has_irregular = false;
};

int run_train(const TrainArgs& a) {
    Dataset data = load_dataset(a.data);

    Trainer trainer = [&] {
        if (!a.resume.empty()) {
            if (!a.preset.empty() || !a.config_path.empty() || a.has_seed || a.has_irregular ||
                a.has_batch || a.has_p_mle || a.no_mle) {
                throw value_error(
                    "train: --resume takes its configuration from the checkpoint; only "
                    "--k-ae/--k-joint may be given to extend the schedule");
            }
            Trainer t = Trainer::load_checkpoint(a.resume, std::move(data));
            t.override_schedule(a.has_k_ae ? a.k_ae : t.config().k_ae,
                                a.has_k_joint ? a.k_joint : t.config().k_joint);
            return t;
        }
        TrainConfig cfg;
        if (!a.preset.empty()) cfg = preset_config(a.preset);
        if (!a.config_path.empty())
            cfg = train_config_from_json_text(read_text_file(a.config_path), cfg);
        if (a.has_seed) cfg.seed = a.seed;
        if (a.has_k_ae) cfg.k_ae = a.k_ae;
        if (a.has_k_joint) cfg.k_joint = a.k_joint;
        if (a.has_batch) cfg.batch_size = a.batch;
        if (a.has_p_mle) cfg.p_mle = a.p_mle;
        if (a.has_irregular) cfg.irregular_rate = a.irregular;
        if (a.no_mle) cfg.mle_enabled = false;
        return Trainer(cfg, std::move(data));
    }();

    json resolved = json::parse(train_config_to_json_text(trainer.config()));
    json header{{"command", "train"},
                {"data", a.data},
                {"out", a.out},
                {"resume", a.resume},
                {"config", resolved}};
    print_resolved(header);

    trainer.run();

    fs::create_directories(a.out);
    trainer.write_log_csv(a.out + "/metrics.csv");
    trainer.write_trace(a.out + "/trace.log");
    trainer.save_checkpoint(a.out + "/checkpoint");
    save_dataset(trainer.training_data(), a.out + "/data_train");
    std::cout << "training complete: pretrain=" << trainer.pretrain_done()
              << " joint=" << trainer.joint_done() << " -> " << a.out << "\n";
    return 0;
}

// ----------------------------------------------------------------------- sample

struct SampleArgs {
    std::string ckpt, out, mode = "grid", times_from, hidden_times_from;
    std::size_t n = 0, len = 0;
    std::uint64_t seed = 42;
    bool has_len = false, has_mode = false;
};

int run_sample(const SampleArgs& a) {
    Trainer trainer = Trainer::load_checkpoint(a.ckpt, Dataset{});

    if (!a.times_from.empty() && (a.has_len || a.has_mode || !a.hidden_times_from.empty())) {
        throw value_error(
            "sample: --times-from fixes both grids; it cannot be combined with "
            "--len/--mode/--hidden-times-from");
    }
    if (a.mode != "grid" && a.mode != "uniform")
        throw value_error("sample: --mode must be grid or uniform");

    json resolved{{"command", "sample"}, {"ckpt", a.ckpt},   {"out", a.out},
                  {"n", a.n},            {"seed", a.seed},   {"mode", a.mode},
                  {"len", a.len},        {"times-from", a.times_from},
                  {"hidden-times-from", a.hidden_times_from}};
    print_resolved(resolved);

    Rng master(a.seed);
    Rng grid_rng = master.split(1);
    Rng wiener_rng = master.split(2);

    std::vector<std::vector<double>> hidden, query;
    if (!a.times_from.empty()) {
        Dataset src = load_dataset(a.times_from);
        if (src.empty()) throw value_error("sample: --times-from dataset is empty");
        for (const SeriesSample& s : src.samples) {
            hidden.push_back(s.times);
            query.push_back(s.times);
        }
    } else {
        if (!a.hidden_times_from.empty()) {
            Dataset src = load_dataset(a.hidden_times_from);
            if (src.empty()) throw value_error("sample: --hidden-times-from dataset is empty");
            for (const SeriesSample& s : src.samples) hidden.push_back(s.times);
        } else {
            hidden.push_back(regular_time_grid(trainer.sample_len()));
        }
        const std::size_t qlen = a.len == 0 ? trainer.sample_len() : a.len;
        if (a.mode == "grid") {
            query.push_back(regular_time_grid(qlen));
        } else {
            const std::size_t n_grids = std::max<std::size_t>(1, a.n);
            for (std::size_t g = 0; g < n_grids; ++g) {
                std::vector<double> t(qlen);
                for (double& v : t) v = grid_rng.uniform(kTimeEps, 1.0);
                std::sort(t.begin(), t.end());
                for (std::size_t j = 1; j < qlen; ++j)
                    if (t[j] <= t[j - 1]) t[j] = std::nextafter(t[j - 1], 2.0);
                query.push_back(std::move(t));
            }
        }
    }

    // The trainer consumes parallel grid lists; cycle both out to n entries.
    const std::size_t n_rows = std::max<std::size_t>(1, a.n);
    std::vector<std::vector<double>> hg(n_rows), qg(n_rows);
    for (std::size_t j = 0; j < n_rows; ++j) {
        hg[j] = hidden[j % hidden.size()];
        qg[j] = query[j % query.size()];
    }

    Dataset fake = trainer.sample(a.n, hg, qg, wiener_rng);
    save_dataset(fake, a.out);
    std::cout << "wrote " << fake.size() << " samples to " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------------------------- eval

struct EvalArgs {
    std::string real, fake, out;
    double irregular = 0.0;
    std::uint64_t seed = 42;
    std::size_t steps = 2000;
};

int run_eval(const EvalArgs& a) {
    json resolved{{"command", "eval"}, {"real", a.real},   {"fake", a.fake},
                  {"out", a.out},      {"seed", a.seed},   {"irregular", a.irregular},
                  {"steps", a.steps}};
    print_resolved(resolved);

    Dataset real = load_dataset(a.real);
    Dataset fake = load_dataset(a.fake);
    EvalConfig cfg;
    cfg.steps = a.steps;
    cfg.irregular = a.irregular > 0.0;
    cfg.pred_mode =
        cfg.irregular ? PredictiveMode::full_vector : PredictiveMode::one_step_last_feature;
    EvalReport report = evaluate(real, fake, cfg, a.seed);
    const std::string text = eval_report_json(report);
    std::cout << text << "\n";
    if (!a.out.empty()) write_text_file(a.out, text + "\n");
    return 0;
}

// ----------------------------------------------------------------- export-plots

struct PlotsArgs {
    std::string real, fake, out;
    std::size_t grid = 201;
};

int run_export_plots(const PlotsArgs& a) {
    json resolved{{"command", "export-plots"},
                  {"real", a.real},
                  {"fake", a.fake},
                  {"out", a.out},
                  {"grid", a.grid}};
    print_resolved(resolved);

    Dataset real = load_dataset(a.real);
    Dataset fake = load_dataset(a.fake);
    if (real.dim != fake.dim)
        throw value_error("export-plots: real and fake feature dimensions differ");
    fs::create_directories(a.out);

    for (std::size_t c = 0; c < real.dim; ++c) {
        auto feature_values = [c](const Dataset& ds) {
            std::vector<double> v;
            for (const SeriesSample& s : ds.samples)
                for (std::size_t i = 0; i < s.length(); ++i) v.push_back(s.value(i, c));
            return v;
        };
        write_kde_csv(a.out + "/kde_real_f" + std::to_string(c) + ".csv",
                      kde_export(feature_values(real), a.grid));
        write_kde_csv(a.out + "/kde_fake_f" + std::to_string(c) + ".csv",
                      kde_export(feature_values(fake), a.grid));
    }
    embedding_export(real, fake, a.out + "/embedding.csv");
    std::cout << "wrote KDE curves and embeddings to " << a.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-series generation pipeline"};
    app.require_subcommand(1);

    GenDataArgs gd;
    CLI::App* gen = app.add_subcommand("gen-data", "generate or import a dataset");
    gen->add_option("kind", gd.kind, "sines | csv")
        ->required()
        ->check(CLI::IsMember({"sines", "csv"}));
    gen->add_option("--n", gd.n, "number of samples (sines)");
    gen->add_option("--dim", gd.dim, "feature dimension (sines)");
    gen->add_option("--len", gd.len, "series length (sines)");
    gen->add_option("--path", gd.path, "input CSV file (csv)");
    gen->add_option("--window", gd.window, "window length (csv)");
    gen->add_option("--stride", gd.stride, "window stride (csv)");
    gen->add_option("--seed", gd.seed, "random seed");
    gen->add_option("--out", gd.out, "output dataset directory")->required();

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", tr.data, "training dataset directory")->required();
    train->add_option("--out", tr.out, "output directory")->required();
    train->add_option("--config", tr.config_path, "JSON config file");
    train->add_option("--preset", tr.preset, "named hyperparameter preset");
    train->add_option("--resume", tr.resume, "checkpoint directory to resume from");
    CLI::Option* o_seed = train->add_option("--seed", tr.seed, "random seed");
    CLI::Option* o_kae = train->add_option("--k-ae", tr.k_ae, "pre-training iterations");
    CLI::Option* o_kj = train->add_option("--k-joint", tr.k_joint, "joint iterations");
    CLI::Option* o_batch = train->add_option("--batch", tr.batch, "batch size");
    CLI::Option* o_pmle = train->add_option("--p-mle", tr.p_mle, "likelihood step period");
    CLI::Option* o_irr = train->add_option("--irregular", tr.irregular,
                                           "observation drop rate in [0,1)");
    train->add_flag("--no-mle", tr.no_mle, "disable the likelihood sub-step");

    SampleArgs sp;
    CLI::App* sample = app.add_subcommand("sample", "draw series from a checkpoint");
    sample->add_option("--ckpt", sp.ckpt, "checkpoint directory")->required();
    sample->add_option("--n", sp.n, "number of series to draw")->required();
    CLI::Option* o_len = sample->add_option("--len", sp.len, "query grid length");
    CLI::Option* o_mode = sample->add_option("--mode", sp.mode, "grid | uniform");
    sample->add_option("--times-from", sp.times_from,
                       "dataset directory supplying both hidden and query grids");
    sample->add_option("--hidden-times-from", sp.hidden_times_from,
                       "dataset directory supplying hidden grids only");
    sample->add_option("--seed", sp.seed, "random seed");
    sample->add_option("--out", sp.out, "output dataset directory")->required();

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score fake data against real data");
    eval_cmd->add_option("--real", ev.real, "real dataset directory")->required();
    eval_cmd->add_option("--fake", ev.fake, "fake dataset directory")->required();
    eval_cmd->add_option("--irregular", ev.irregular, "drop rate of the regime (0 = regular)");
    eval_cmd->add_option("--seed", ev.seed, "random seed");
    eval_cmd->add_option("--steps", ev.steps, "post-hoc training steps");
    eval_cmd->add_option("--out", ev.out, "also write the report JSON here");

    PlotsArgs pl;
    CLI::App* plots = app.add_subcommand("export-plots", "write KDE/embedding CSVs");
    plots->add_option("--real", pl.real, "real dataset directory")->required();
    plots->add_option("--fake", pl.fake, "fake dataset directory")->required();
    plots->add_option("--out", pl.out, "output directory")->required();
    plots->add_option("--grid", pl.grid, "KDE grid resolution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) return run_gen_data(gd);
        if (*train) {
            tr.has_seed = o_seed->count() > 0;
            tr.has_k_ae = o_kae->count() > 0;
            tr.has_k_joint = o_kj->count() > 0;
            tr.has_batch = o_batch->count() > 0;
            tr.has_p_mle = o_pmle->count() > 0;
            tr.has_irregular = o_irr->count() > 0;
            return run_train(tr);
        }
        if (*sample) {
            sp.has_len = o_len->count() > 0;
            sp.has_mode = o_mode->count() > 0;
            return run_sample(sp);
        }
        if (*eval_cmd) return run_eval(ev);
        if (*plots) return run_export_plots(pl);
    } catch (const numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const value_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
