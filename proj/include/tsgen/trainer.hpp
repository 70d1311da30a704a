#pragma once

// Training orchestration: autoencoder pre-training followed by a joint loop
// that interleaves, per iteration, (a) an autoencoder refinement step, (b) a
// periodic exact-likelihood step on the generator, (c) an adversarial round
// (discriminator update, then a generator update through the frozen decoder
// and discriminator), and (d) a decoder-assist step that trains the decoder
// on the discriminator's fake-side classification loss.
//
// Every random decision flows from one seed through named counter-based
// streams, so identical configurations reproduce loss logs and checkpoints
// bit-for-bit, and a resumed run continues exactly where the saved run left
// off.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsgen/data.hpp"
#include "tsgen/decoder.hpp"
#include "tsgen/discriminator.hpp"
#include "tsgen/encoder.hpp"
#include "tsgen/generator.hpp"
#include "tsgen/nn.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/spline.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

struct TrainConfig {
    std::size_t k_ae = 5000;    // autoencoder pre-training iterations
    std::size_t k_joint = 3000; // joint iterations
    std::size_t p_mle = 1;      // likelihood step period within the joint loop
    std::size_t batch_size = 64;

    double lr_encoder = 1e-3;
    double lr_decoder = 1e-3;
    double lr_generator = 1e-3;
    double lr_discriminator = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;

    // Weights of the likelihood step's penalty terms; 0 disables a term.
    double reg_recon = 0.01;
    double reg_kinetic = 0.05;
    double reg_jacobian = 0.1;
    double reg_directional = 0.1;

    double atol = 1e-2;  // generator flow solve tolerances
    double rtol = 1e-3;

    std::size_t d_layer = 1;         // discriminator stack depth
    Act r_acti = Act::softplus;      // decoder output activation
    std::size_t hidden_mult = 4;     // hidden widths = hidden_mult * dim_x
    std::size_t substeps = 8;        // fixed RK4 substeps (encoder/decoder/discriminator)
    std::size_t n_probes = 1;        // divergence probes in the likelihood step (0 = exact)

    bool mle_enabled = true;
    double irregular_rate = 0.0;  // fraction of observations dropped at load
    std::size_t m_adv = 0;        // adversarial query count; 0 = match data length
    std::uint64_t seed = 42;

    void validate() const;  // throws value_error
};

// Named hyperparameter presets ("sines-regular", "stocks-drop30", ...).
TrainConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Flat JSON <-> config. Unknown keys are rejected; keys absent from the JSON
// keep their value from `base`.
TrainConfig train_config_from_json_text(const std::string& text, const TrainConfig& base);
std::string train_config_to_json_text(const TrainConfig& cfg);

// One row of the metrics log. Cells stay absent when the sub-step that
// produces them did not run in that iteration.
struct StepRecord {
    std::size_t iter = 0;
    std::optional<double> recon, disc, gen, mle, kinetic, jac, dir;
    std::string csv_row() const;  // no header; %.17g; absent cells empty
};

inline constexpr const char* kMetricsCsvHeader = "iter,recon,disc,gen,mle,kinetic,jac,dir";

class Trainer {
public:
    // `data` is the regular dataset; when cfg.irregular_rate > 0 the trainer
    // drops observations itself (deterministically from the seed) so the
    // irregular regimes are pure configuration changes.
    Trainer(const TrainConfig& cfg, Dataset data);

    // Runs the outstanding pre-training iterations, then the outstanding
    // joint iterations. Safe to call on a resumed trainer; completed phases
    // are skipped.
    void run();

    void pretrain_step();
    void joint_step();

    // Adjusts iteration totals (e.g. extending a resumed run). Counts are
    // absolute totals, not increments.
    void override_schedule(std::size_t k_ae, std::size_t k_joint);

    std::size_t pretrain_done() const { return pretrain_done_; }
    std::size_t joint_done() const { return joint_done_; }
    const TrainConfig& config() const { return cfg_; }
    const Dataset& training_data() const { return data_; }
    std::size_t dim_x() const { return dim_x_; }
    std::size_t sample_len() const { return sample_len_; }
    const ParamSet& parameters() const { return all_ps_; }

    const std::vector<StepRecord>& log() const { return log_; }
    const std::vector<std::string>& trace() const { return trace_; }
    std::string log_csv() const;  // header + all rows
    void write_log_csv(const std::string& path) const;
    void write_trace(const std::string& path) const;

    // Draws n fake series: Wiener noise on the hidden grids, flow transport,
    // then decoding at the query grids. Row j uses grid j % grids. Hidden
    // rows must share one length, query rows another; values come back in
    // the dataset's scaled space with the training scale attached.
    Dataset sample(std::size_t n, const std::vector<std::vector<double>>& hidden_times,
                   const std::vector<std::vector<double>>& query_times, Rng& rng) const;

    // Checkpoint directory: manifest.json, params.bin, optim.bin, rng.json,
    // config.json. Round-trips bit-exactly; `load_checkpoint` with an empty
    // dataset yields a sample-only trainer.
    void save_checkpoint(const std::string& dir) const;
    static Trainer load_checkpoint(const std::string& dir, Dataset data);

    // Test seam: the adversarial round presents the real batch verbatim as
    // the fake sample and skips the generator/decoder-assist updates.
    void set_fake_verbatim_real(bool on) { fake_verbatim_real_ = on; }

private:
    struct Batch {
        std::vector<const SeriesSample*> sp;
        std::vector<const CubicSplinePath*> pp;
        std::vector<std::vector<double>> times;  // per-row grids
        std::vector<Tensor> xs;                  // observation blocks [B, dim_x]
    };

    void build_model(Rng& init);
    Batch gather_batch();
    double ae_substep(const Batch& b, std::vector<Tensor>* stale_hidden);
    void mle_substep(const Batch& b, const std::vector<Tensor>& stale_hidden, StepRecord& rec);
    void gan_substeps(const Batch& b, StepRecord& rec, std::vector<std::string>& steps);
    std::vector<std::vector<double>> draw_query_times(const Batch& b);
    double checked(double v, const char* tag, std::size_t iter) const;

    TrainConfig cfg_;
    Dataset data_;
    std::vector<CubicSplinePath> paths_;
    FeatureScale scale_;
    std::size_t dim_x_ = 0, dim_h_ = 0;
    std::size_t data_len_full_ = 0, sample_len_ = 0;

    Encoder enc_;
    Decoder dec_;
    Generator gen_;
    Discriminator disc_;
    ParamSet enc_ps_, dec_ps_, gen_ps_, disc_ps_, all_ps_;
    std::optional<Adam> adam_enc_, adam_dec_, adam_gen_, adam_disc_;

    Rng batch_{0}, wiener_{0}, probe_{0}, query_{0};
    std::size_t pretrain_done_ = 0, joint_done_ = 0;
    bool fake_verbatim_real_ = false;

    std::vector<StepRecord> log_;
    std::vector<std::string> trace_;
};

}  // namespace tsgen
