#include "tsgen/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tsgen/data.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/rng.hpp"

using namespace tsgen;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("tsgen_trainer_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

Dataset const_dataset(std::size_t n, std::size_t len, std::size_t dim, double value) {
    Dataset ds;
    ds.dim = dim;
    ds.scale.min.assign(dim, 0.0);
    ds.scale.max.assign(dim, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        SeriesSample s;
        s.dim = dim;
        s.times = regular_time_grid(len);
        s.values.assign(len * dim, value);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<std::vector<double>> snapshot(const ParamSet& ps) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor& t = ps.tensor(i);
        out.emplace_back(t.data(), t.data() + t.numel());
    }
    return out;
}

bool same_params(const std::vector<std::vector<double>>& snap, const ParamSet& ps) {
    if (snap.size() != ps.size()) return false;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor& t = ps.tensor(i);
        if (snap[i].size() != t.numel()) return false;
        for (std::size_t k = 0; k < t.numel(); ++k)
            if (snap[i][k] != t.data()[k]) return false;
    }
    return true;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TrainConfig tiny_cfg() {
    TrainConfig cfg;
    cfg.k_ae = 0;
    cfg.k_joint = 0;
    cfg.batch_size = 3;
    cfg.hidden_mult = 2;
    cfg.substeps = 2;
    cfg.n_probes = 1;
    cfg.seed = 7;
    return cfg;
}

bool contains_line(const std::vector<std::string>& lines, const std::string& want) {
    for (const auto& l : lines)
        if (l == want) return true;
    return false;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("a no-op schedule leaves parameters, log, and trace alone") {
    Dataset ds = const_dataset(6, 5, 1, 0.4);
    Trainer t(tiny_cfg(), ds);
    auto before = snapshot(t.parameters());
    t.run();
    CHECK(same_params(before, t.parameters()));
    CHECK(t.log().empty());
    REQUIRE(t.trace().size() == 1);
    CHECK(t.trace()[0].rfind("run k_ae=0 k_joint=0", 0) == 0);
    CHECK(t.log_csv() == std::string(kMetricsCsvHeader) + "\n");
}

TEST_CASE("pre-training drives reconstruction error down on constant data") {
    Dataset ds = const_dataset(8, 5, 1, 0.5);
    TrainConfig cfg = tiny_cfg();
    cfg.k_ae = 200;
    cfg.batch_size = 4;
    cfg.lr_encoder = 5e-3;
    cfg.lr_decoder = 5e-3;
    Trainer t(cfg, ds);
    t.run();

    REQUIRE(t.log().size() == 200);
    CHECK(t.pretrain_done() == 200);
    CHECK(t.joint_done() == 0);
    for (std::size_t i = 0; i < t.log().size(); ++i) {
        const StepRecord& r = t.log()[i];
        CHECK(r.iter == i);
        CHECK(r.recon.has_value());
        CHECK_FALSE(r.disc.has_value());
        CHECK_FALSE(r.gen.has_value());
        CHECK_FALSE(r.mle.has_value());
        CHECK_FALSE(r.kinetic.has_value());
        CHECK_FALSE(r.jac.has_value());
        CHECK_FALSE(r.dir.has_value());
    }
    CHECK(*t.log().back().recon <= 1e-3);
    CHECK(*t.log().back().recon < *t.log().front().recon);

    // CSV shape: header plus one row per iteration, first cell the iteration.
    std::istringstream csv(t.log_csv());
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == kMetricsCsvHeader);
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
        ++rows;
    }
    CHECK(rows == 200);
}

TEST_CASE("zero learning rates run a full joint iteration without moving parameters") {
    Dataset ds = const_dataset(6, 5, 2, 0.3);
    TrainConfig cfg = tiny_cfg();
    cfg.k_joint = 1;
    cfg.p_mle = 1;
    cfg.lr_encoder = cfg.lr_decoder = cfg.lr_generator = cfg.lr_discriminator = 0.0;
    Trainer t(cfg, ds);
    auto before = snapshot(t.parameters());
    t.run();

    CHECK(same_params(before, t.parameters()));
    REQUIRE(t.log().size() == 1);
    const StepRecord& r = t.log()[0];
    CHECK(r.iter == 0);
    CHECK(r.recon.has_value());
    CHECK(r.disc.has_value());
    CHECK(r.gen.has_value());
    CHECK(r.mle.has_value());
    CHECK(r.kinetic.has_value());
    CHECK(r.jac.has_value());
    CHECK(r.dir.has_value());
    REQUIRE(t.trace().size() == 2);
    CHECK(t.trace()[1] == "joint iter=0 substeps=ae,mle,gan,assist");
}

TEST_CASE("the likelihood sub-step follows its period and its toggle") {
    Dataset ds = const_dataset(4, 4, 1, 0.6);
    TrainConfig cfg = tiny_cfg();
    cfg.batch_size = 2;
    cfg.k_joint = 4;
    cfg.p_mle = 2;
    cfg.reg_recon = 0.0;
    cfg.reg_kinetic = 0.05;
    cfg.reg_jacobian = 0.0;
    cfg.reg_directional = 0.0;

    SUBCASE("period two hits every other joint iteration") {
        Trainer t(cfg, ds);
        t.run();
        REQUIRE(t.log().size() == 4);
        CHECK(t.log()[0].mle.has_value());
        CHECK_FALSE(t.log()[1].mle.has_value());
        CHECK(t.log()[2].mle.has_value());
        CHECK_FALSE(t.log()[3].mle.has_value());
        // Only the penalty terms with nonzero weight get logged.
        CHECK(t.log()[0].kinetic.has_value());
        CHECK_FALSE(t.log()[0].jac.has_value());
        CHECK_FALSE(t.log()[0].dir.has_value());
        CHECK(contains_line(t.trace(), "joint iter=0 substeps=ae,mle,gan,assist"));
        CHECK(contains_line(t.trace(), "joint iter=1 substeps=ae,gan,assist"));
        CHECK(contains_line(t.trace(), "joint iter=2 substeps=ae,mle,gan,assist"));
        CHECK(contains_line(t.trace(), "joint iter=3 substeps=ae,gan,assist"));
    }

    SUBCASE("disabling the likelihood objective removes the sub-step entirely") {
        cfg.mle_enabled = false;
        cfg.k_joint = 2;
        Trainer t(cfg, ds);
        t.run();
        for (const StepRecord& r : t.log()) {
            CHECK_FALSE(r.mle.has_value());
            CHECK_FALSE(r.kinetic.has_value());
        }
        CHECK(contains_line(t.trace(), "joint iter=0 substeps=ae,gan,assist"));
        CHECK(contains_line(t.trace(), "joint iter=1 substeps=ae,gan,assist"));
        CHECK(t.trace()[0].find("mle=off") != std::string::npos);
    }
}

TEST_CASE("real-versus-real adversarial play settles at the coin-flip loss") {
    Rng data_rng(11);
    Dataset ds = gen_sines(16, 1, 6, data_rng);
    TrainConfig cfg = tiny_cfg();
    cfg.k_joint = 150;
    cfg.batch_size = 8;
    cfg.mle_enabled = false;
    Trainer t(cfg, ds);
    t.set_fake_verbatim_real(true);
    t.run();

    REQUIRE(t.log().size() == 150);
    double acc = 0.0;
    for (std::size_t i = 130; i < 150; ++i) {
        REQUIRE(t.log()[i].disc.has_value());
        acc += *t.log()[i].disc;
        // The verbatim seam skips the generator update, so no generator loss.
        CHECK_FALSE(t.log()[i].gen.has_value());
    }
    const double mean_disc = acc / 20.0;
    const double ln2 = std::log(2.0);
    CHECK(mean_disc >= ln2 - 0.1);
    CHECK(mean_disc <= ln2 + 0.1);
    CHECK(contains_line(t.trace(), "joint iter=0 substeps=ae,gan"));
}

TEST_CASE("identical configuration and seed reproduce logs and checkpoints bit-for-bit") {
    Rng data_rng(3);
    Dataset ds = gen_sines(10, 1, 8, data_rng);
    TrainConfig cfg = tiny_cfg();
    cfg.k_ae = 2;
    cfg.k_joint = 3;
    cfg.p_mle = 2;
    cfg.batch_size = 4;
    cfg.irregular_rate = 0.3;
    cfg.seed = 77;

    Trainer a(cfg, ds);
    Trainer b(cfg, ds);
    a.run();
    b.run();

    CHECK(a.log_csv() == b.log_csv());
    CHECK(a.trace() == b.trace());
    CHECK(a.training_data().samples[0].length() == 6);  // 8 points, 30% dropped

    const std::string da = temp_dir("detA"), db = temp_dir("detB");
    a.save_checkpoint(da);
    b.save_checkpoint(db);
    for (const char* f : {"manifest.json", "params.bin", "optim.bin", "rng.json", "config.json"}) {
        CAPTURE(f);
        CHECK(read_bytes(da + "/" + f) == read_bytes(db + "/" + f));
    }
}

TEST_CASE("a resumed run reproduces the straight-through run exactly") {
    Rng data_rng(5);
    Dataset ds = gen_sines(6, 1, 5, data_rng);
    TrainConfig cfg = tiny_cfg();
    cfg.k_ae = 2;
    cfg.k_joint = 6;
    cfg.p_mle = 3;
    cfg.reg_recon = 0.0;
    cfg.reg_jacobian = 0.0;
    cfg.reg_directional = 0.0;
    cfg.seed = 21;

    Trainer a(cfg, ds);
    a.run();
    const std::string dir_a = temp_dir("straight");
    a.save_checkpoint(dir_a);

    TrainConfig half = cfg;
    half.k_joint = 3;
    Trainer b(half, ds);
    b.run();
    const std::string dir_mid = temp_dir("mid");
    b.save_checkpoint(dir_mid);

    Trainer c = Trainer::load_checkpoint(dir_mid, ds);
    CHECK(c.pretrain_done() == 2);
    CHECK(c.joint_done() == 3);
    c.override_schedule(2, 6);
    c.run();

    CHECK(same_params(snapshot(a.parameters()), c.parameters()));
    const std::string dir_c = temp_dir("resumed");
    c.save_checkpoint(dir_c);
    for (const char* f : {"manifest.json", "params.bin", "optim.bin", "rng.json", "config.json"}) {
        CAPTURE(f);
        CHECK(read_bytes(dir_a + "/" + f) == read_bytes(dir_c + "/" + f));
    }

    // A checkpoint alone (no dataset) is enough to draw samples, and the
    // draws match the in-memory trainer's draws exactly.
    Trainer s = Trainer::load_checkpoint(dir_a, Dataset{});
    CHECK(s.dim_x() == a.dim_x());
    CHECK(s.sample_len() == a.sample_len());
    std::vector<std::vector<double>> hg{regular_time_grid(5)};
    std::vector<std::vector<double>> qg{regular_time_grid(9)};
    Rng r1(9), r2(9);
    Dataset fa = a.sample(3, hg, qg, r1);
    Dataset fs = s.sample(3, hg, qg, r2);
    REQUIRE(fa.size() == 3);
    REQUIRE(fs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(fa.samples[i].times == fs.samples[i].times);
        CHECK(fa.samples[i].values == fs.samples[i].values);
    }
}

TEST_CASE("sampling follows the requested grids, cycles them, and honors the seed") {
    Dataset ds = const_dataset(6, 5, 1, 0.4);
    TrainConfig cfg = tiny_cfg();
    cfg.batch_size = 2;
    Trainer t(cfg, ds);

    std::vector<std::vector<double>> hg{regular_time_grid(5),
                                        {0.05, 0.2, 0.35, 0.7, 0.95}};
    std::vector<std::vector<double>> qg{regular_time_grid(9),
                                        {0.1, 0.15, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}};

    Rng r1(14);
    Dataset out = t.sample(5, hg, qg, r1);
    REQUIRE(out.size() == 5);
    CHECK(out.dim == 1);
    for (std::size_t j = 0; j < out.size(); ++j) {
        CHECK(out.samples[j].length() == 9);
        CHECK(out.samples[j].dim == 1);
        CHECK(out.samples[j].times == qg[j % 2]);
    }

    Rng r2(14);
    Dataset again = t.sample(5, hg, qg, r2);
    for (std::size_t j = 0; j < out.size(); ++j)
        CHECK(out.samples[j].values == again.samples[j].values);

    Rng r3(15);
    Dataset other = t.sample(5, hg, qg, r3);
    CHECK(out.samples[0].values != other.samples[0].values);

    Rng r4(14);
    CHECK(t.sample(0, hg, qg, r4).empty());
    std::vector<std::vector<double>> short_q{regular_time_grid(9)};
    CHECK_THROWS_AS(t.sample(2, hg, short_q, r4), value_error);
    std::vector<std::vector<double>> ragged{regular_time_grid(5), regular_time_grid(4)};
    CHECK_THROWS_AS(t.sample(2, ragged, qg, r4), value_error);
}

TEST_CASE("the step trace records the executed schedule") {
    Dataset ds = const_dataset(4, 4, 1, 0.5);
    TrainConfig cfg = tiny_cfg();
    cfg.batch_size = 2;
    cfg.k_ae = 1;
    cfg.k_joint = 0;
    Trainer t(cfg, ds);
    t.run();
    REQUIRE(t.trace().size() == 2);
    CHECK(t.trace()[0].rfind("run k_ae=1 k_joint=0 p_mle=1 mle=on irregular=0 batch=2 seed=7",
                             0) == 0);
    CHECK(t.trace()[1] == "pretrain iter=0 substeps=ae");

    const std::string dir = temp_dir("trace");
    t.write_trace(dir + "/trace.log");
    std::string text = read_bytes(dir + "/trace.log");
    CHECK(text == t.trace()[0] + "\n" + t.trace()[1] + "\n");
    t.write_log_csv(dir + "/metrics.csv");
    CHECK(read_bytes(dir + "/metrics.csv") == t.log_csv());
}

TEST_CASE("non-finite losses abort with the failing iteration attached") {
    Dataset ds = const_dataset(4, 4, 1, 0.5);
    TrainConfig cfg = tiny_cfg();
    cfg.batch_size = 2;
    cfg.k_ae = 5;
    cfg.lr_encoder = cfg.lr_decoder = 1e300;
    Trainer t(cfg, ds);
    CHECK_THROWS_AS(t.run(), numeric_error);

    Trainer t2(cfg, ds);
    try {
        t2.run();
        FAIL("expected a numeric failure");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
        CHECK(e.iteration >= 0);
    }
}

TEST_CASE("presets cover the published grid and configs round-trip through JSON") {
    CHECK(preset_names().size() == 16);

    TrainConfig s = preset_config("sines-regular");
    CHECK(s.atol == 1e-2);
    CHECK(s.rtol == 1e-3);
    CHECK(s.p_mle == 1);
    CHECK(s.k_ae == 5000);
    CHECK(s.d_layer == 1);
    CHECK(s.r_acti == Act::softplus);
    CHECK(s.reg_recon == 0.01);
    CHECK(s.reg_kinetic == 0.05);
    CHECK(s.reg_jacobian == 0.1);
    CHECK(s.reg_directional == 0.1);
    CHECK(s.irregular_rate == 0.0);

    TrainConfig st = preset_config("stocks-drop30");
    CHECK(st.k_ae == 10000);
    CHECK(st.reg_kinetic == 0.0);
    CHECK(st.reg_jacobian == 0.0);
    CHECK(st.reg_directional == 0.05);
    CHECK(st.irregular_rate == 0.3);

    TrainConfig en = preset_config("energy-drop70");
    CHECK(en.r_acti == Act::sigmoid);
    CHECK(en.d_layer == 2);
    CHECK(en.k_ae == 2500);
    CHECK(en.atol == 1e-3);
    CHECK(en.rtol == 1e-2);

    CHECK_THROWS_AS(preset_config("nope"), value_error);

    for (const std::string& name : preset_names()) {
        TrainConfig c = preset_config(name);
        c.seed = 123;
        c.k_joint = 17;
        TrainConfig back = train_config_from_json_text(train_config_to_json_text(c), TrainConfig{});
        CHECK(back.atol == c.atol);
        CHECK(back.rtol == c.rtol);
        CHECK(back.p_mle == c.p_mle);
        CHECK(back.k_ae == c.k_ae);
        CHECK(back.k_joint == c.k_joint);
        CHECK(back.d_layer == c.d_layer);
        CHECK(back.r_acti == c.r_acti);
        CHECK(back.reg_recon == c.reg_recon);
        CHECK(back.reg_kinetic == c.reg_kinetic);
        CHECK(back.reg_jacobian == c.reg_jacobian);
        CHECK(back.reg_directional == c.reg_directional);
        CHECK(back.irregular_rate == c.irregular_rate);
        CHECK(back.seed == c.seed);
    }

    // Partial JSON falls back to the base; unknown keys are rejected.
    TrainConfig base;
    base.k_ae = 42;
    TrainConfig got = train_config_from_json_text(R"({"batch_size": 9})", base);
    CHECK(got.batch_size == 9);
    CHECK(got.k_ae == 42);
    CHECK_THROWS_AS(train_config_from_json_text(R"({"k_aee": 1})", base), value_error);
    CHECK_THROWS_AS(train_config_from_json_text("[1,2]", base), value_error);
    CHECK_THROWS_AS(train_config_from_json_text("{]", base), value_error);

    TrainConfig bad;
    bad.p_mle = 0;
    CHECK_THROWS_AS(bad.validate(), value_error);
    bad = TrainConfig{};
    bad.irregular_rate = 1.0;
    CHECK_THROWS_AS(bad.validate(), value_error);
    bad = TrainConfig{};
    bad.r_acti = Act::relu;
    CHECK_THROWS_AS(bad.validate(), value_error);
    bad = TrainConfig{};
    bad.atol = 0.0;
    CHECK_THROWS_AS(bad.validate(), value_error);
}

TEST_CASE("construction rejects ragged inputs and empty feature spaces") {
    Dataset ds = const_dataset(4, 5, 1, 0.5);
    ds.samples[2].times.pop_back();
    ds.samples[2].values.pop_back();
    CHECK_THROWS_AS(Trainer(tiny_cfg(), ds), value_error);

    Dataset none = const_dataset(4, 5, 1, 0.5);
    none.dim = 0;
    CHECK_THROWS_AS(Trainer(tiny_cfg(), none), value_error);
}

}  // TEST_SUITE
