#include "tsgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "tsgen/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsgen {

namespace {

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw io_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

// Mean over every entry of the squared reconstruction error.
Tensor recon_loss(const std::vector<Tensor>& xhat, const std::vector<Tensor>& x) {
    Tensor acc;
    std::size_t count = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor d = sub(xhat[i], x[i]);
        Tensor s = sum(mul(d, d));
        acc = i == 0 ? s : add(acc, s);
        count += x[i].numel();
    }
    return scale(acc, 1.0 / static_cast<double>(count));
}

struct PresetRow {
    const char* name;
    double atol, rtol;
    std::size_t p_mle, k_ae, d_layer;
    Act r_acti;
    double reg_recon, reg_kinetic, reg_jacobian, reg_directional;
    double irregular;
};

const PresetRow kPresets[] = {
    {"sines-regular", 1e-2, 1e-3, 1, 5000, 1, Act::softplus, 0.01, 0.05, 0.1, 0.1, 0.0},
    {"stocks-regular", 1e-2, 1e-3, 2, 10000, 1, Act::softplus, 0.01, 0.01, 0.05, 0.01, 0.0},
    {"energy-regular", 1e-3, 1e-2, 2, 5000, 2, Act::sigmoid, 0.01, 0.5, 0.1, 0.01, 0.0},
    {"mujoco-regular", 1e-3, 1e-2, 2, 5000, 2, Act::sigmoid, 0.01, 0.05, 0.01, 0.01, 0.0},
    {"sines-drop30", 1e-2, 1e-3, 2, 5000, 1, Act::softplus, 0.01, 0.05, 0.01, 0.01, 0.3},
    {"stocks-drop30", 1e-2, 1e-3, 2, 10000, 1, Act::softplus, 0.01, 0.0, 0.0, 0.05, 0.3},
    {"energy-drop30", 1e-3, 1e-2, 2, 5000, 2, Act::sigmoid, 0.01, 0.5, 0.1, 0.01, 0.3},
    {"mujoco-drop30", 1e-3, 1e-2, 2, 2500, 2, Act::sigmoid, 0.01, 0.5, 0.1, 0.01, 0.3},
    {"sines-drop50", 1e-2, 1e-3, 2, 5000, 2, Act::softplus, 0.01, 0.05, 0.01, 0.01, 0.5},
    {"stocks-drop50", 1e-3, 1e-3, 2, 10000, 1, Act::softplus, 0.0, 0.05, 0.01, 0.05, 0.5},
    {"energy-drop50", 1e-3, 1e-2, 2, 5000, 2, Act::sigmoid, 0.01, 0.5, 0.1, 0.01, 0.5},
    {"mujoco-drop50", 1e-3, 1e-2, 2, 1500, 2, Act::sigmoid, 0.1, 0.1, 0.01, 0.01, 0.5},
    {"sines-drop70", 1e-2, 1e-3, 2, 5000, 1, Act::softplus, 0.01, 0.05, 0.01, 0.01, 0.7},
    {"stocks-drop70", 1e-2, 1e-3, 1, 10000, 1, Act::softplus, 0.0, 0.05, 0.01, 0.05, 0.7},
    {"energy-drop70", 1e-3, 1e-2, 2, 2500, 2, Act::sigmoid, 0.01, 0.5, 0.1, 0.01, 0.7},
    {"mujoco-drop70", 1e-3, 1e-2, 2, 2500, 2, Act::sigmoid, 0.01, 0.5, 0.1, 0.01, 0.7},
};

json rng_state_json(const Rng& r) {
    return json{{"key", r.key()}, {"ctr", r.counter()}};
}

Rng rng_from_json(const json& j) {
    return Rng::from_state(j.at("key").get<std::uint64_t>(), j.at("ctr").get<std::uint64_t>());
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
    if (p_mle < 1) throw value_error("config: p_mle must be >= 1");
    if (batch_size < 1) throw value_error("config: batch_size must be >= 1");
    if (hidden_mult < 1) throw value_error("config: hidden_mult must be >= 1");
    if (substeps < 1) throw value_error("config: substeps must be >= 1");
    if (d_layer < 1) throw value_error("config: d_layer must be >= 1");
    if (!(atol > 0.0) || !(rtol > 0.0)) throw value_error("config: atol/rtol must be > 0");
    const double lrs[] = {lr_encoder, lr_decoder, lr_generator, lr_discriminator};
    for (double lr : lrs)
        if (lr < 0.0) throw value_error("config: learning rates must be >= 0");
    const double regs[] = {reg_recon, reg_kinetic, reg_jacobian, reg_directional};
    for (double w : regs)
        if (w < 0.0) throw value_error("config: penalty weights must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw value_error("config: Adam betas must lie in [0, 1)");
    if (irregular_rate < 0.0 || irregular_rate >= 1.0)
        throw value_error("config: irregular_rate must lie in [0, 1)");
    if (r_acti != Act::softplus && r_acti != Act::sigmoid && r_acti != Act::identity)
        throw value_error("config: r_acti must be softplus, sigmoid, or identity");
}

TrainConfig preset_config(const std::string& name) {
    for (const PresetRow& p : kPresets) {
        if (name == p.name) {
            TrainConfig cfg;
            cfg.atol = p.atol;
            cfg.rtol = p.rtol;
            cfg.p_mle = p.p_mle;
            cfg.k_ae = p.k_ae;
            cfg.d_layer = p.d_layer;
            cfg.r_acti = p.r_acti;
            cfg.reg_recon = p.reg_recon;
            cfg.reg_kinetic = p.reg_kinetic;
            cfg.reg_jacobian = p.reg_jacobian;
            cfg.reg_directional = p.reg_directional;
            cfg.irregular_rate = p.irregular;
            return cfg;
        }
    }
    std::string all;
    for (const PresetRow& p : kPresets) {
        if (!all.empty()) all += ", ";
        all += p.name;
    }
    throw value_error("unknown preset '" + name + "' (available: " + all + ")");
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const PresetRow& p : kPresets) out.emplace_back(p.name);
    return out;
}

namespace {

json config_to_json(const TrainConfig& c) {
    return json{{"k_ae", c.k_ae},
                {"k_joint", c.k_joint},
                {"p_mle", c.p_mle},
                {"batch_size", c.batch_size},
                {"lr_encoder", c.lr_encoder},
                {"lr_decoder", c.lr_decoder},
                {"lr_generator", c.lr_generator},
                {"lr_discriminator", c.lr_discriminator},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"reg_recon", c.reg_recon},
                {"reg_kinetic", c.reg_kinetic},
                {"reg_jacobian", c.reg_jacobian},
                {"reg_directional", c.reg_directional},
                {"atol", c.atol},
                {"rtol", c.rtol},
                {"d_layer", c.d_layer},
                {"r_acti", act_to_string(c.r_acti)},
                {"hidden_mult", c.hidden_mult},
                {"substeps", c.substeps},
                {"n_probes", c.n_probes},
                {"mle_enabled", c.mle_enabled},
                {"irregular_rate", c.irregular_rate},
                {"m_adv", c.m_adv},
                {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw value_error("config: expected a JSON object");
    for (const auto& [key, val] : j.items()) {
        if (key == "k_ae") c.k_ae = val.get<std::size_t>();
        else if (key == "k_joint") c.k_joint = val.get<std::size_t>();
        else if (key == "p_mle") c.p_mle = val.get<std::size_t>();
        else if (key == "batch_size") c.batch_size = val.get<std::size_t>();
        else if (key == "lr_encoder") c.lr_encoder = val.get<double>();
        else if (key == "lr_decoder") c.lr_decoder = val.get<double>();
        else if (key == "lr_generator") c.lr_generator = val.get<double>();
        else if (key == "lr_discriminator") c.lr_discriminator = val.get<double>();
        else if (key == "adam_beta1") c.adam_beta1 = val.get<double>();
        else if (key == "adam_beta2") c.adam_beta2 = val.get<double>();
        else if (key == "reg_recon") c.reg_recon = val.get<double>();
        else if (key == "reg_kinetic") c.reg_kinetic = val.get<double>();
        else if (key == "reg_jacobian") c.reg_jacobian = val.get<double>();
        else if (key == "reg_directional") c.reg_directional = val.get<double>();
        else if (key == "atol") c.atol = val.get<double>();
        else if (key == "rtol") c.rtol = val.get<double>();
        else if (key == "d_layer") c.d_layer = val.get<std::size_t>();
        else if (key == "r_acti") c.r_acti = act_from_string(val.get<std::string>());
        else if (key == "hidden_mult") c.hidden_mult = val.get<std::size_t>();
        else if (key == "substeps") c.substeps = val.get<std::size_t>();
        else if (key == "n_probes") c.n_probes = val.get<std::size_t>();
        else if (key == "mle_enabled") c.mle_enabled = val.get<bool>();
        else if (key == "irregular_rate") c.irregular_rate = val.get<double>();
        else if (key == "m_adv") c.m_adv = val.get<std::size_t>();
        else if (key == "seed") c.seed = val.get<std::uint64_t>();
        else throw value_error("config: unknown key '" + key + "'");
    }
    return c;
}

}  // namespace

TrainConfig train_config_from_json_text(const std::string& text, const TrainConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw value_error(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j, base);
}

std::string train_config_to_json_text(const TrainConfig& cfg) {
    return config_to_json(cfg).dump(2);
}

// ---------------------------------------------------------------------------
// Step records

std::string StepRecord::csv_row() const {
    std::string row = std::to_string(iter);
    const std::optional<double>* cells[] = {&recon, &disc, &gen, &mle, &kinetic, &jac, &dir};
    for (const auto* c : cells) {
        row += ',';
        if (c->has_value()) row += fmt17(**c);
    }
    return row;
}

// ---------------------------------------------------------------------------
// Construction

Trainer::Trainer(const TrainConfig& cfg, Dataset data) : cfg_(cfg) {
    cfg_.validate();
    Rng master(cfg_.seed);
    Rng init = master.split(1);
    batch_ = master.split(2);
    wiener_ = master.split(3);
    probe_ = master.split(4);
    query_ = master.split(5);

    if (!data.empty()) {
        if (data.dim == 0) throw value_error("trainer: dataset has no feature dimension");
        data_len_full_ = data.samples[0].length();
        for (const auto& s : data.samples) {
            if (s.length() != data_len_full_)
                throw value_error("trainer: samples must share one length");
        }
        if (cfg_.irregular_rate > 0.0) {
            Rng drop = master.split(6);
            data = drop_random(data, cfg_.irregular_rate, drop);
        }
        data_ = std::move(data);
        sample_len_ = data_.samples[0].length();
        dim_x_ = data_.dim;
        scale_ = data_.scale;
        paths_ = fit_paths(data_);
        build_model(init);
    }
}

void Trainer::build_model(Rng& init) {
    dim_h_ = cfg_.hidden_mult * dim_x_;

    EncoderConfig ec;
    ec.dim_x = dim_x_;
    ec.dim_h = dim_h_;
    ec.substeps = cfg_.substeps;
    enc_ = Encoder::create(ec, init);

    DecoderConfig dc;
    dc.dim_h = dim_h_;
    dc.dim_d = dim_h_;
    dc.dim_x = dim_x_;
    dc.out_act = cfg_.r_acti;
    dc.substeps = cfg_.substeps;
    dec_ = Decoder::create(dc, init);

    GeneratorConfig gc;
    gc.dim_h = dim_h_;
    gc.act = Act::softplus;
    gc.tau_input = true;
    gc.solver.method = OdeMethod::dopri5;
    gc.solver.step_size = 0.05;
    gc.solver.atol = cfg_.atol;
    gc.solver.rtol = cfg_.rtol;
    gc.solver.max_steps = 100000;
    gc.n_probes = cfg_.n_probes;
    gen_ = Generator::create(gc, init);

    DiscriminatorConfig qc;
    qc.dim_x = dim_x_;
    qc.dim_c = dim_h_;
    qc.d_layer = cfg_.d_layer;
    qc.substeps = cfg_.substeps;
    disc_ = Discriminator::create(qc, init);

    enc_ps_ = ParamSet{};
    dec_ps_ = ParamSet{};
    gen_ps_ = ParamSet{};
    disc_ps_ = ParamSet{};
    enc_.collect(enc_ps_, "enc");
    dec_.collect(dec_ps_, "dec");
    gen_.collect(gen_ps_, "gen");
    disc_.collect(disc_ps_, "disc");
    all_ps_ = ParamSet{};
    all_ps_.merge(enc_ps_, "");
    all_ps_.merge(dec_ps_, "");
    all_ps_.merge(gen_ps_, "");
    all_ps_.merge(disc_ps_, "");

    adam_enc_.emplace(enc_ps_, cfg_.lr_encoder, cfg_.adam_beta1, cfg_.adam_beta2);
    adam_dec_.emplace(dec_ps_, cfg_.lr_decoder, cfg_.adam_beta1, cfg_.adam_beta2);
    adam_gen_.emplace(gen_ps_, cfg_.lr_generator, cfg_.adam_beta1, cfg_.adam_beta2);
    adam_disc_.emplace(disc_ps_, cfg_.lr_discriminator, cfg_.adam_beta1, cfg_.adam_beta2);
}

void Trainer::override_schedule(std::size_t k_ae, std::size_t k_joint) {
    cfg_.k_ae = k_ae;
    cfg_.k_joint = k_joint;
}

// ---------------------------------------------------------------------------
// Batching

Trainer::Batch Trainer::gather_batch() {
    if (data_.empty()) throw value_error("trainer: no training data attached");
    Batch b;
    const std::size_t B = cfg_.batch_size;
    const std::size_t N = sample_len_;
    b.sp.reserve(B);
    b.pp.reserve(B);
    b.times.reserve(B);
    for (std::size_t k = 0; k < B; ++k) {
        const std::size_t j = static_cast<std::size_t>(batch_.uniform_int(data_.size()));
        b.sp.push_back(&data_.samples[j]);
        b.pp.push_back(&paths_[j]);
        b.times.push_back(data_.samples[j].times);
    }
    b.xs.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> block(B * dim_x_);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < dim_x_; ++c) block[r * dim_x_ + c] = b.sp[r]->value(i, c);
        b.xs.push_back(Tensor::from({B, dim_x_}, std::move(block)));
    }
    return b;
}

std::vector<std::vector<double>> Trainer::draw_query_times(const Batch& b) {
    const std::size_t B = b.times.size();
    const std::size_t N = b.times[0].size();
    const std::size_t M = cfg_.m_adv == 0 ? N : cfg_.m_adv;
    std::vector<std::vector<double>> qt(B);
    for (std::size_t r = 0; r < B; ++r) {
        qt[r].resize(M);
        for (std::size_t j = 0; j < M; ++j) qt[r][j] = query_.uniform(kTimeEps, 1.0);
        std::sort(qt[r].begin(), qt[r].end());
        for (std::size_t j = 1; j < M; ++j) {
            if (qt[r][j] <= qt[r][j - 1])
                qt[r][j] = std::nextafter(qt[r][j - 1], 2.0);
        }
    }
    return qt;
}

double Trainer::checked(double v, const char* tag, std::size_t iter) const {
    if (!std::isfinite(v)) {
        throw numeric_error(std::string("trainer: non-finite ") + tag + " loss at iteration " +
                                std::to_string(iter),
                            static_cast<long>(iter));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Sub-steps

double Trainer::ae_substep(const Batch& b, std::vector<Tensor>* stale_hidden) {
    Tape tape;
    std::vector<Tensor> hs = enc_.encode(b.sp, b.pp);
    if (stale_hidden) {
        stale_hidden->reserve(hs.size());
        for (const Tensor& h : hs) stale_hidden->push_back(h.detach());
    }
    HiddenSeq seq{hs, b.times};
    std::vector<Tensor> xhat = dec_.reconstruct(seq);
    Tensor loss = recon_loss(xhat, b.xs);
    const double v = loss.value();
    Gradients g = backward(loss);
    adam_enc_->step(g);
    adam_dec_->step(g);
    return v;
}

void Trainer::mle_substep(const Batch& b, const std::vector<Tensor>& stale_hidden,
                          StepRecord& rec) {
    const bool want_kin = cfg_.reg_kinetic > 0.0;
    const bool want_jac = cfg_.reg_jacobian > 0.0;
    const bool want_dir = cfg_.reg_directional > 0.0;
    Tape tape;
    Tensor h = pack_time_major(stale_hidden);
    AugmentedOptions opts = gen_.density_options(want_kin, want_jac, want_dir);
    DensityResult dr = gen_.log_density(h, b.times, opts, probe_);
    Tensor loss = scale(dr.mean_logp, -1.0);
    if (want_kin) loss = add(loss, scale(dr.kinetic, cfg_.reg_kinetic));
    if (want_jac) loss = add(loss, scale(dr.jacobian, cfg_.reg_jacobian));
    if (want_dir) loss = add(loss, scale(dr.directional, cfg_.reg_directional));
    if (cfg_.reg_recon > 0.0) loss = add(loss, scale(dr.recon, cfg_.reg_recon));

    rec.mle = checked(-dr.mean_logp.value(), "likelihood", rec.iter);
    if (want_kin) rec.kinetic = dr.kinetic.value();
    if (want_jac) rec.jac = dr.jacobian.value();
    if (want_dir) rec.dir = dr.directional.value();
    checked(loss.value(), "likelihood", rec.iter);

    Gradients g = backward(loss);
    adam_gen_->step(g);
}

void Trainer::gan_substeps(const Batch& b, StepRecord& rec, std::vector<std::string>& steps) {
    const std::size_t B = b.times.size();
    const std::size_t N = b.times[0].size();
    const std::vector<int> real_lbl(B, 0), fake_lbl(B, 1);

    Tensor z;
    std::vector<std::vector<double>> qt;
    std::vector<Tensor> hf_blocks;   // fake hidden states, no grad tracking
    std::vector<Tensor> xf_blocks;   // fake observations, no grad tracking
    if (fake_verbatim_real_) {
        qt = b.times;
        xf_blocks = b.xs;
    } else {
        z = sample_wiener(b.times, dim_h_, wiener_);
        qt = cfg_.irregular_rate > 0.0 ? draw_query_times(b) : b.times;
        Tensor h_fake = gen_.generate(z, b.times);
        hf_blocks = unpack_time_major(h_fake, N);
        HiddenSeq hf{hf_blocks, b.times};
        xf_blocks = dec_.decode_at(hf, qt);
    }

    {
        Tape tape;
        Tensor lg_real = disc_.logits(b.xs, b.times);
        Tensor lg_fake = disc_.logits(xf_blocks, qt);
        Tensor loss = scale(add(mean(cross_entropy_logits(lg_real, real_lbl)),
                                mean(cross_entropy_logits(lg_fake, fake_lbl))),
                            0.5);
        rec.disc = checked(loss.value(), "discriminator", rec.iter);
        Gradients g = backward(loss);
        adam_disc_->step(g);
    }
    steps.emplace_back("gan");
    if (fake_verbatim_real_) return;

    {
        Tape tape;
        Tensor h_fake = gen_.generate(z, b.times);
        HiddenSeq hf{unpack_time_major(h_fake, N), b.times};
        std::vector<Tensor> xf = dec_.decode_at(hf, qt);
        Tensor lg = disc_.logits(xf, qt);
        Tensor loss = mean(cross_entropy_logits(lg, real_lbl));
        rec.gen = checked(loss.value(), "generator", rec.iter);
        Gradients g = backward(loss);
        adam_gen_->step(g);
    }

    {
        Tape tape;
        HiddenSeq hf{hf_blocks, b.times};
        std::vector<Tensor> xf = dec_.decode_at(hf, qt);
        Tensor lg = disc_.logits(xf, qt);
        Tensor loss = mean(cross_entropy_logits(lg, fake_lbl));
        checked(loss.value(), "decoder-assist", rec.iter);
        Gradients g = backward(loss);
        adam_dec_->step(g);
    }
    steps.emplace_back("assist");
}

// ---------------------------------------------------------------------------
// Steps and the loop

namespace {

// Attaches the iteration to solver-raised numeric failures that lack one.
[[noreturn]] void rethrow_at(const numeric_error& e, std::size_t iter) {
    if (e.iteration >= 0) throw e;
    throw numeric_error(std::string(e.what()) + " (at iteration " + std::to_string(iter) + ")",
                        static_cast<long>(iter));
}

}  // namespace

void Trainer::pretrain_step() {
    Batch b = gather_batch();
    StepRecord rec;
    rec.iter = pretrain_done_ + joint_done_;
    try {
        rec.recon = checked(ae_substep(b, nullptr), "reconstruction", rec.iter);
    } catch (const numeric_error& e) {
        rethrow_at(e, rec.iter);
    }
    ++pretrain_done_;
    log_.push_back(rec);
    trace_.push_back("pretrain iter=" + std::to_string(rec.iter) + " substeps=ae");
}

void Trainer::joint_step() {
    const std::size_t k = joint_done_;
    Batch b = gather_batch();
    StepRecord rec;
    rec.iter = pretrain_done_ + joint_done_;
    std::vector<std::string> steps;

    try {
        const bool run_mle = cfg_.mle_enabled && (k % cfg_.p_mle == 0);
        std::vector<Tensor> stale_hidden;
        rec.recon = checked(ae_substep(b, run_mle ? &stale_hidden : nullptr), "reconstruction",
                            rec.iter);
        steps.emplace_back("ae");

        if (run_mle) {
            mle_substep(b, stale_hidden, rec);
            steps.emplace_back("mle");
        }

        gan_substeps(b, rec, steps);
    } catch (const numeric_error& e) {
        rethrow_at(e, rec.iter);
    }

    ++joint_done_;
    log_.push_back(rec);
    std::string joined;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) joined += ',';
        joined += steps[i];
    }
    trace_.push_back("joint iter=" + std::to_string(rec.iter) + " substeps=" + joined);
}

void Trainer::run() {
    char head[160];
    std::snprintf(head, sizeof head,
                  "run k_ae=%zu k_joint=%zu p_mle=%zu mle=%s irregular=%g batch=%zu seed=%llu",
                  cfg_.k_ae, cfg_.k_joint, cfg_.p_mle, cfg_.mle_enabled ? "on" : "off",
                  cfg_.irregular_rate, cfg_.batch_size,
                  static_cast<unsigned long long>(cfg_.seed));
    trace_.emplace_back(head);
    while (pretrain_done_ < cfg_.k_ae) pretrain_step();
    while (joint_done_ < cfg_.k_joint) joint_step();
}

// ---------------------------------------------------------------------------
// Logs

std::string Trainer::log_csv() const {
    std::string out = kMetricsCsvHeader;
    out += '\n';
    for (const StepRecord& r : log_) {
        out += r.csv_row();
        out += '\n';
    }
    return out;
}

void Trainer::write_log_csv(const std::string& path) const { write_text(path, log_csv()); }

void Trainer::write_trace(const std::string& path) const {
    std::string out;
    for (const std::string& line : trace_) {
        out += line;
        out += '\n';
    }
    write_text(path, out);
}

// ---------------------------------------------------------------------------
// Sampling

Dataset Trainer::sample(std::size_t n, const std::vector<std::vector<double>>& hidden_times,
                        const std::vector<std::vector<double>>& query_times, Rng& rng) const {
    Dataset out;
    out.dim = dim_x_;
    out.scale = scale_;
    if (n == 0) return out;
    if (dim_h_ == 0) throw value_error("sample: trainer has no model (empty dataset, no checkpoint)");
    if (hidden_times.empty() || hidden_times.size() != query_times.size())
        throw value_error("sample: need parallel, nonempty hidden/query grids");
    const std::size_t n_grids = hidden_times.size();
    const std::size_t Nh = hidden_times[0].size();
    const std::size_t M = query_times[0].size();
    for (std::size_t g = 0; g < n_grids; ++g) {
        if (hidden_times[g].size() != Nh || query_times[g].size() != M)
            throw value_error("sample: all grids of one kind must share a length");
    }
    if (Nh == 0 || M == 0) throw value_error("sample: grids must be nonempty");

    out.samples.reserve(n);
    const std::size_t chunk = std::max<std::size_t>(1, cfg_.batch_size);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t B = std::min(chunk, n - start);
        std::vector<std::vector<double>> ht(B), qt(B);
        for (std::size_t r = 0; r < B; ++r) {
            const std::size_t src = (start + r) % n_grids;
            ht[r] = hidden_times[src];
            qt[r] = query_times[src];
        }
        Tensor z = sample_wiener(ht, dim_h_, rng);
        Tensor h = gen_.generate(z, ht);
        HiddenSeq hs{unpack_time_major(h, Nh), ht};
        std::vector<Tensor> xs = dec_.decode_at(hs, qt);
        for (std::size_t r = 0; r < B; ++r) {
            SeriesSample s;
            s.dim = dim_x_;
            s.times = qt[r];
            s.values.resize(M * dim_x_);
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t c = 0; c < dim_x_; ++c) s.values[i * dim_x_ + c] = xs[i].at(r, c);
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpointing

void Trainer::save_checkpoint(const std::string& dir) const {
    if (dim_h_ == 0) throw value_error("save_checkpoint: trainer has no model");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create checkpoint directory: " + dir);

    json manifest = json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < all_ps_.size(); ++i) {
        const Tensor& t = all_ps_.tensor(i);
        manifest.push_back(json{{"name", all_ps_.name(i)},
                                {"shape", t.shape()},
                                {"dtype", "f64"},
                                {"offset", offset}});
        offset += t.numel() * sizeof(double);
    }
    write_text(dir + "/manifest.json", manifest.dump(2));

    {
        std::ofstream out(dir + "/params.bin", std::ios::binary);
        if (!out) throw io_error("cannot open for writing: " + dir + "/params.bin");
        for (std::size_t i = 0; i < all_ps_.size(); ++i) {
            const Tensor& t = all_ps_.tensor(i);
            write_doubles(out, t.data(), t.numel());
        }
        if (!out) throw io_error("write failed: " + dir + "/params.bin");
    }

    {
        std::ofstream out(dir + "/optim.bin", std::ios::binary);
        if (!out) throw io_error("cannot open for writing: " + dir + "/optim.bin");
        const Adam* optims[] = {&*adam_enc_, &*adam_dec_, &*adam_gen_, &*adam_disc_};
        for (const Adam* a : optims) {
            for (std::size_t i = 0; i < a->n_params(); ++i) {
                const Adam::Moments& m = a->moments(i);
                write_doubles(out, m.m.data(), m.m.size());
                write_doubles(out, m.v.data(), m.v.size());
            }
        }
        if (!out) throw io_error("write failed: " + dir + "/optim.bin");
    }

    json rj;
    rj["streams"] = json{{"batch", rng_state_json(batch_)},
                         {"wiener", rng_state_json(wiener_)},
                         {"probe", rng_state_json(probe_)},
                         {"query", rng_state_json(query_)}};
    rj["pretrain_done"] = pretrain_done_;
    rj["joint_done"] = joint_done_;
    rj["adam_t"] = json{{"enc", adam_enc_->t()},
                        {"dec", adam_dec_->t()},
                        {"gen", adam_gen_->t()},
                        {"disc", adam_disc_->t()}};
    write_text(dir + "/rng.json", rj.dump(2));

    json cj;
    cj["train"] = config_to_json(cfg_);
    cj["dim_x"] = dim_x_;
    cj["data_len_full"] = data_len_full_;
    cj["sample_len"] = sample_len_;
    cj["scale_min"] = scale_.min;
    cj["scale_max"] = scale_.max;
    write_text(dir + "/config.json", cj.dump(2));
}

Trainer Trainer::load_checkpoint(const std::string& dir, Dataset data) {
    json cj;
    try {
        cj = json::parse(read_text(dir + "/config.json"));
    } catch (const json::parse_error& e) {
        throw io_error("checkpoint config.json is not valid JSON: " + std::string(e.what()));
    }
    TrainConfig cfg = config_from_json(cj.at("train"), TrainConfig{});

    Trainer t(cfg, std::move(data));
    const std::size_t dim_x = cj.at("dim_x").get<std::size_t>();
    if (t.data_.empty()) {
        t.dim_x_ = dim_x;
        t.data_len_full_ = cj.at("data_len_full").get<std::size_t>();
        t.sample_len_ = cj.at("sample_len").get<std::size_t>();
        t.scale_.min = cj.at("scale_min").get<std::vector<double>>();
        t.scale_.max = cj.at("scale_max").get<std::vector<double>>();
        Rng init = Rng(t.cfg_.seed).split(1);
        t.build_model(init);
    } else if (t.dim_x_ != dim_x || t.data_len_full_ != cj.at("data_len_full").get<std::size_t>() ||
               t.sample_len_ != cj.at("sample_len").get<std::size_t>()) {
        throw value_error("load_checkpoint: dataset shape differs from the checkpoint's");
    }

    json manifest;
    try {
        manifest = json::parse(read_text(dir + "/manifest.json"));
    } catch (const json::parse_error& e) {
        throw io_error("checkpoint manifest.json is not valid JSON: " + std::string(e.what()));
    }
    if (!manifest.is_array() || manifest.size() != t.all_ps_.size())
        throw io_error("checkpoint manifest does not match the model (entry count)");

    std::ifstream pin(dir + "/params.bin", std::ios::binary);
    if (!pin) throw io_error("cannot open: " + dir + "/params.bin");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < t.all_ps_.size(); ++i) {
        const json& e = manifest.at(i);
        Tensor tensor = t.all_ps_.tensor(i);
        if (e.at("name").get<std::string>() != t.all_ps_.name(i) ||
            e.at("shape").get<Shape>() != tensor.shape() ||
            e.at("dtype").get<std::string>() != "f64" ||
            e.at("offset").get<std::size_t>() != offset) {
            throw io_error("checkpoint manifest mismatch at entry '" + t.all_ps_.name(i) + "'");
        }
        read_doubles(pin, tensor.data_mut(), tensor.numel());
        offset += tensor.numel() * sizeof(double);
    }
    if (!pin) throw io_error("params.bin truncated: " + dir);

    std::ifstream oin(dir + "/optim.bin", std::ios::binary);
    if (!oin) throw io_error("cannot open: " + dir + "/optim.bin");
    Adam* optims[] = {&*t.adam_enc_, &*t.adam_dec_, &*t.adam_gen_, &*t.adam_disc_};
    for (Adam* a : optims) {
        for (std::size_t i = 0; i < a->n_params(); ++i) {
            Adam::Moments& m = a->moments_mut(i);
            read_doubles(oin, m.m.data(), m.m.size());
            read_doubles(oin, m.v.data(), m.v.size());
        }
    }
    if (!oin) throw io_error("optim.bin truncated: " + dir);

    json rj;
    try {
        rj = json::parse(read_text(dir + "/rng.json"));
    } catch (const json::parse_error& e) {
        throw io_error("checkpoint rng.json is not valid JSON: " + std::string(e.what()));
    }
    const json& streams = rj.at("streams");
    t.batch_ = rng_from_json(streams.at("batch"));
    t.wiener_ = rng_from_json(streams.at("wiener"));
    t.probe_ = rng_from_json(streams.at("probe"));
    t.query_ = rng_from_json(streams.at("query"));
    t.pretrain_done_ = rj.at("pretrain_done").get<std::size_t>();
    t.joint_done_ = rj.at("joint_done").get<std::size_t>();
    const json& at = rj.at("adam_t");
    t.adam_enc_->set_t(at.at("enc").get<std::int64_t>());
    t.adam_dec_->set_t(at.at("dec").get<std::int64_t>());
    t.adam_gen_->set_t(at.at("gen").get<std::int64_t>());
    t.adam_disc_->set_t(at.at("disc").get<std::int64_t>());
    return t;
}

}  // namespace tsgen
