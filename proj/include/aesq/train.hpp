#pragma once

#include "aesq/data.hpp"
#include "aesq/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aesq {

struct AdamState {
    std::map<std::string, Mat> m;
    std::map<std::string, Mat> v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update over the named parameters; gradients are
// read from each tensor's grad buffer (missing grad means zero).
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr);

struct TrainConfig {
    int batch_size = 16;
    int epochs = 10;
    double base_lr = 1e-3;
    double decay_factor = 0.1;
    int decay_every_epochs = 2;
    std::uint64_t seed = 0;
    // Augmentations (only apply when the dataset carries images).
    bool hf = false;
    double hf_prob = 0.5;
    bool rc = false;
    int rc_resize = 40;  // scaled 272 -> 224 at desk dims 40 -> 32
    int rc_crop = 32;
    bool padding = false;

    void validate() const;
};

// The training preset matching the reported protocol shape.
TrainConfig paper_preset();

double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double eval_srcc = 0.0;
    double eval_plcc = 0.0;
    double eval_emd = 0.0;
};

struct EvalResult {
    double srcc = 0.0;
    double plcc = 0.0;
    double mean_emd = 0.0;
};

// Predicted-vs-ground-truth MOS over the split. Constant predictions
// surface as UndefinedCorrelationError.
EvalResult evaluate(const Model& model, const Dataset& ds, const PseudoEncoder& enc);

struct TrainState {
    Model model;
    AdamState opt;
    Rng rng{0};
    int epoch = 0;  // next epoch to run
};

// Seeded-shuffle epoch/batch loop minimizing mean per-batch EMD loss.
// Evaluates on eval_ds (falling back to the train split) after each epoch.
std::vector<EpochLog> train(TrainState& state, const Dataset& train_ds, const Dataset* eval_ds,
                            const TrainConfig& cfg, const PseudoEncoder& enc,
                            int run_epochs = -1);

// ---- checkpointing ----

struct Checkpoint {
    ModelConfig config;
    std::vector<std::pair<std::string, Mat>> parameters;
    AdamState opt;
    int epoch = 0;
    std::string rng_state;
};

Checkpoint make_checkpoint(const TrainState& state);
TrainState restore_checkpoint(const Checkpoint& ckpt);

// Magic "AQCK", f64 LE payloads; bit-exact round trip.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace aesq
