// aesq: learnable-query aesthetic score prediction on synthetic data.
//
// Subcommands: gen-data, train, eval, predict, ablate, gradcheck.
// Exit codes: 0 success, 1 runtime/data error, 2 usage/config error.

#include <CLI11.hpp>
#include <json.hpp>

#include "aesq/data.hpp"
#include "aesq/errors.hpp"
#include "aesq/gradcheck.hpp"
#include "aesq/model.hpp"
#include "aesq/train.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "aesq 0.1.0";

std::uint64_t resolve_seed(std::uint64_t flag_seed) {
    if (const char* env = std::getenv("AESQ_SEED")) return std::stoull(env);
    return flag_seed;
}

void write_manifest(const std::string& path, const json& manifest) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest " + path);
    os << manifest.dump(2) << "\n";
}

// "AQE1" or "AQI1" datasets, distinguished by magic.
aesq::Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw aesq::FormatError("cannot open " + path, 0);
    char magic[4] = {};
    is.read(magic, 4);
    is.close();
    if (std::string(magic, 4) == "AQE1") return aesq::read_embeddings(path);
    if (std::string(magic, 4) == "AQI1") return aesq::read_images(path);
    throw aesq::FormatError("unrecognized dataset magic in " + path, 0);
}

struct DataShape {
    int n_p;
    int h_v;
    int k;
};

DataShape dataset_shape(const aesq::Dataset& ds, const aesq::DataConfig& dcfg) {
    if (ds.items.front().embeddings) {
        const auto& e = ds.items.front().embeddings->rows;
        return {static_cast<int>(e.rows()) - 1, static_cast<int>(e.cols()), ds.k()};
    }
    aesq::DataConfig cfg = dcfg;
    cfg.width = ds.items.front().image->width;
    cfg.channels = ds.items.front().image->channels;
    return {cfg.n_patches(), cfg.h_v, ds.k()};
}

void check_shape_compatible(const aesq::ModelConfig& mcfg, const DataShape& shape) {
    if (mcfg.k != shape.k)
        throw std::runtime_error("checkpoint expects K=" + std::to_string(mcfg.k) +
                                 " but dataset has K=" + std::to_string(shape.k));
    if (mcfg.h_v != shape.h_v || mcfg.n_p != shape.n_p)
        throw std::runtime_error(
            "checkpoint expects embeddings " + std::to_string(1 + mcfg.n_p) + "x" +
            std::to_string(mcfg.h_v) + " but dataset provides " + std::to_string(1 + shape.n_p) +
            "x" + std::to_string(shape.h_v));
}

// Deterministic 80/20 split for ablation sweeps.
std::pair<aesq::Dataset, aesq::Dataset> split_dataset(const aesq::Dataset& ds) {
    const std::size_t n_train = (ds.items.size() * 4) / 5;
    aesq::Dataset train, test;
    train.split = "train";
    test.split = "test";
    for (std::size_t i = 0; i < ds.items.size(); ++i)
        (i < n_train ? train : test).items.push_back(ds.items[i]);
    return {std::move(train), std::move(test)};
}

// ---- shared flag bundles ----

struct ModelFlags {
    int m = 2;
    int blocks = 4;
    int hq = 16;
    int heads = 2;
    int ffn_mult = 4;
    std::string mode = "LQ";
};

struct EncoderFlags {
    int patch = 8;
    int hv = 24;
    std::uint64_t encoder_seed = 7;
};

struct TrainFlags {
    int epochs = 10;
    int batch = 16;
    double lr = 1e-3;
    double decay_factor = 1.0;
    int decay_every = 2;
    bool hf = false;
    bool rc = false;
    bool padding = false;
    int rc_resize = 40;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--m", f.m, "number of learnable queries");
    cmd->add_option("--blocks", f.blocks, "transformer block count (even)");
    cmd->add_option("--hq", f.hq, "query hidden size");
    cmd->add_option("--heads", f.heads, "attention heads");
    cmd->add_option("--ffn-mult", f.ffn_mult, "feed-forward expansion factor");
    cmd->add_option("--mode", f.mode, "embedding source: LQ, CLS, CLS+P");
}

void add_encoder_flags(CLI::App* cmd, EncoderFlags& f) {
    cmd->add_option("--patch", f.patch, "patch size");
    cmd->add_option("--hv", f.hv, "frozen-embedding size");
    cmd->add_option("--encoder-seed", f.encoder_seed, "frozen encoder seed");
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--batch", f.batch, "batch size");
    cmd->add_option("--lr", f.lr, "base learning rate");
    cmd->add_option("--decay-factor", f.decay_factor, "lr multiplier per decay step");
    cmd->add_option("--decay-every", f.decay_every, "epochs between lr decays");
    cmd->add_flag("--hf", f.hf, "horizontal flip augmentation (p=0.5)");
    cmd->add_flag("--rc", f.rc, "resize + random crop augmentation");
    cmd->add_flag("--padding", f.padding, "letterbox content into a zero-filled square");
    cmd->add_option("--rc-resize", f.rc_resize, "resize target before random crop");
}

aesq::TrainConfig make_train_config(const TrainFlags& f, std::uint64_t seed, int crop_to) {
    aesq::TrainConfig cfg;
    cfg.batch_size = f.batch;
    cfg.epochs = f.epochs;
    cfg.base_lr = f.lr;
    cfg.decay_factor = f.decay_factor;
    cfg.decay_every_epochs = f.decay_every;
    cfg.seed = seed;
    cfg.hf = f.hf;
    cfg.rc = f.rc;
    cfg.rc_resize = f.rc_resize;
    cfg.rc_crop = crop_to;
    cfg.padding = f.padding;
    cfg.validate();
    return cfg;
}

json model_config_json(const aesq::ModelConfig& c) {
    return json{{"m", c.m},       {"h_q", c.h_q},   {"h_v", c.h_v},
                {"num_blocks", c.num_blocks}, {"num_heads", c.num_heads},
                {"ffn_mult", c.ffn_mult},     {"k", c.k},
                {"n_p", c.n_p},   {"seed", c.seed}, {"mode", aesq::to_string(c.mode)}};
}

json train_config_json(const aesq::TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"base_lr", c.base_lr},
                {"decay_factor", c.decay_factor},
                {"decay_every_epochs", c.decay_every_epochs},
                {"seed", c.seed},
                {"hf", c.hf},
                {"hf_prob", c.hf_prob},
                {"rc", c.rc},
                {"rc_resize", c.rc_resize},
                {"rc_crop", c.rc_crop},
                {"padding", c.padding}};
}

void write_log_csv(const std::string& path, const std::vector<aesq::EpochLog>& logs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write log " + path);
    os << "epoch,train_loss,eval_srcc,eval_plcc,lr\n";
    os.precision(17);
    for (const auto& row : logs)
        os << row.epoch << "," << row.train_loss << "," << row.eval_srcc << ","
           << row.eval_plcc << "," << row.lr << "\n";
}

struct SweepResult {
    std::string setting;
    double srcc;
    double plcc;
    double extra = std::nan("");  // axis-specific column
};

aesq::EvalResult run_sweep_point(const aesq::ModelConfig& mcfg, const aesq::TrainConfig& tcfg,
                                 const aesq::Dataset& train_ds, const aesq::Dataset& test_ds,
                                 const aesq::PseudoEncoder& enc, aesq::Model* out_model) {
    aesq::TrainState state;
    state.model = aesq::init_model(mcfg);
    state.rng = aesq::Rng(tcfg.seed);
    aesq::train(state, train_ds, &test_ds, tcfg, enc);
    aesq::EvalResult res;
    try {
        res = aesq::evaluate(state.model, test_ds, enc);
    } catch (const aesq::UndefinedCorrelationError&) {
        // Constant predictions (e.g. the CLS source, whose frozen row is the
        // same for every image) have no defined rank correlation.
        res.srcc = std::nan("");
        res.plcc = std::nan("");
        res.mean_emd = std::nan("");
    }
    if (out_model) *out_model = std::move(state.model);
    return res;
}

// Mean |MOS shift| when one patch row of the frozen embeddings is nudged.
double patch_sensitivity(const aesq::Model& model, const aesq::Dataset& test_ds,
                         const aesq::PseudoEncoder& enc) {
    double total = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < test_ds.items.size() && count < 20; ++i, ++count) {
        const auto& item = test_ds.items[i];
        aesq::ImageEmbeddings ev =
            item.embeddings ? *item.embeddings : enc.encode(*item.image);
        aesq::ScoreDistribution base{
            aesq::model_predict(model, ev).value().row(0).transpose()};
        aesq::ImageEmbeddings perturbed = ev;
        perturbed.rows.row(1).array() += 0.5;  // patch row, never the CLS row
        aesq::ScoreDistribution moved{
            aesq::model_predict(model, perturbed).value().row(0).transpose()};
        total += std::abs(aesq::dos_to_mos(moved) - aesq::dos_to_mos(base));
    }
    aesq::Tape::active().clear();
    return total / count;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kToolVersion) +
                 " — learnable-query aesthetic score prediction on synthetic data"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset (AQI1 + AQE1)");
    int gen_n = 0;
    std::uint64_t gen_seed = 0;
    int gen_k = 10, gen_width = 32, gen_channels = 3;
    EncoderFlags gen_enc;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of samples")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generation seed")->required();
    gen->add_option("--k", gen_k, "score bins")->check(CLI::Range(2, 1000));
    gen->add_option("--width", gen_width, "image width");
    gen->add_option("--channels", gen_channels, "image channels");
    add_encoder_flags(gen, gen_enc);
    gen->add_option("--out", gen_out, "output path prefix")->required();

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train a model and write checkpoint + log");
    std::string tr_data, tr_eval_data, tr_out, tr_preset = "toy";
    std::uint64_t tr_seed = 0;
    ModelFlags tr_model;
    EncoderFlags tr_enc;
    TrainFlags tr_flags;
    tr->add_option("--data", tr_data, "training dataset (AQE1 or AQI1)")->required();
    tr->add_option("--eval-data", tr_eval_data, "held-out dataset for per-epoch metrics");
    tr->add_option("--out", tr_out, "output path prefix")->required();
    tr->add_option("--preset", tr_preset, "toy or paper-shape")
        ->check(CLI::IsMember({"toy", "paper-shape"}));
    tr->add_option("--seed", tr_seed, "training seed (AESQ_SEED overrides)");
    add_model_flags(tr, tr_model);
    add_encoder_flags(tr, tr_enc);
    add_train_flags(tr, tr_flags);

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data;
    EncoderFlags ev_enc;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "dataset file")->required();
    add_encoder_flags(ev, ev_enc);

    // ---- predict ----
    auto* pr = app.add_subcommand("predict", "predict the DOS and MOS for one input");
    std::string pr_ckpt, pr_data;
    int pr_index = 0;
    EncoderFlags pr_enc;
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
    pr->add_option("--data", pr_data, "dataset file")->required();
    pr->add_option("--index", pr_index, "item index within the dataset");
    add_encoder_flags(pr, pr_enc);

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "sweep one ablation axis");
    std::string ab_axis, ab_data, ab_out;
    std::uint64_t ab_seed = 0;
    ModelFlags ab_model;
    EncoderFlags ab_enc;
    TrainFlags ab_flags;
    ab->add_option("--axis", ab_axis, "queries, embedding, or augmentation")
        ->required()
        ->check(CLI::IsMember({"queries", "embedding", "augmentation"}));
    ab->add_option("--data", ab_data, "dataset file (images required for augmentation)")
        ->required();
    ab->add_option("--out", ab_out, "optional CSV output path");
    ab->add_option("--seed", ab_seed, "shared sweep seed (AESQ_SEED overrides)");
    add_model_flags(ab, ab_model);
    add_encoder_flags(ab, ab_enc);
    add_train_flags(ab, ab_flags);

    // ---- gradcheck ----
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op class");
    std::uint64_t gc_seed = 7;
    double gc_fault = 1.0;
    gc->add_option("--seed", gc_seed, "suite seed");
    gc->add_option("--inject-gradient-fault", gc_fault,
                   "test hook: scale backward contributions by this factor")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            aesq::DataConfig dcfg;
            dcfg.width = gen_width;
            dcfg.channels = gen_channels;
            dcfg.patch = gen_enc.patch;
            dcfg.h_v = gen_enc.hv;
            dcfg.k = gen_k;
            const std::uint64_t seed = resolve_seed(gen_seed);

            aesq::Dataset ds = aesq::gen_synthetic(gen_n, dcfg, seed);
            aesq::PseudoEncoder enc(dcfg, gen_enc.encoder_seed);
            aesq::encode_dataset(ds, enc);
            aesq::write_images(gen_out + ".aqi", ds);
            aesq::write_embeddings(gen_out + ".aqe", ds);

            json manifest{{"tool", kToolVersion},
                          {"command", "gen-data"},
                          {"n", gen_n},
                          {"seed", seed},
                          {"encoder_seed", gen_enc.encoder_seed},
                          {"data",
                           {{"width", dcfg.width},
                            {"patch", dcfg.patch},
                            {"channels", dcfg.channels},
                            {"h_v", dcfg.h_v},
                            {"k", dcfg.k}}},
                          {"outputs", {gen_out + ".aqi", gen_out + ".aqe"}}};
            write_manifest(gen_out + ".manifest.json", manifest);
            std::cout << "wrote " << gen_out << ".aqi and " << gen_out << ".aqe (" << gen_n
                      << " samples, K=" << gen_k << ")\n";
        } else if (*tr) {
            if (tr_preset == "paper-shape") {
                // Reported training protocol at desk scale.
                if (tr->count("--batch") == 0) tr_flags.batch = 128;
                if (tr->count("--epochs") == 0) tr_flags.epochs = 10;
                if (tr->count("--lr") == 0) tr_flags.lr = 3e-5;
                if (tr->count("--decay-factor") == 0) tr_flags.decay_factor = 0.1;
                if (tr->count("--decay-every") == 0) tr_flags.decay_every = 2;
            }
            const std::uint64_t seed = resolve_seed(tr_seed);

            aesq::Dataset train_ds = load_dataset(tr_data);
            std::optional<aesq::Dataset> eval_ds;
            if (!tr_eval_data.empty()) eval_ds = load_dataset(tr_eval_data);

            aesq::DataConfig dcfg;
            dcfg.patch = tr_enc.patch;
            dcfg.h_v = tr_enc.hv;
            dcfg.k = train_ds.k();
            if (train_ds.items.front().image) {
                dcfg.width = train_ds.items.front().image->width;
                dcfg.channels = train_ds.items.front().image->channels;
            }
            const DataShape shape = dataset_shape(train_ds, dcfg);

            aesq::ModelConfig mcfg;
            mcfg.m = tr_model.m;
            mcfg.h_q = tr_model.hq;
            mcfg.h_v = shape.h_v;
            mcfg.num_blocks = tr_model.blocks;
            mcfg.num_heads = tr_model.heads;
            mcfg.ffn_mult = tr_model.ffn_mult;
            mcfg.k = shape.k;
            mcfg.n_p = shape.n_p;
            mcfg.seed = seed;
            mcfg.mode = aesq::embedding_mode_from_string(tr_model.mode);

            const int crop_to = train_ds.items.front().image
                                    ? train_ds.items.front().image->width
                                    : tr_flags.rc_resize;
            aesq::TrainConfig tcfg = make_train_config(tr_flags, seed, crop_to);

            aesq::PseudoEncoder enc(dcfg, tr_enc.encoder_seed);
            aesq::TrainState state;
            state.model = aesq::init_model(mcfg);
            state.rng = aesq::Rng(seed);
            auto logs =
                aesq::train(state, train_ds, eval_ds ? &*eval_ds : nullptr, tcfg, enc);

            aesq::save_checkpoint(tr_out + ".aqck", aesq::make_checkpoint(state));
            write_log_csv(tr_out + ".log.csv", logs);
            json manifest{{"tool", kToolVersion},
                          {"command", "train"},
                          {"preset", tr_preset},
                          {"seed", seed},
                          {"encoder_seed", tr_enc.encoder_seed},
                          {"data", tr_data},
                          {"eval_data", tr_eval_data},
                          {"model", model_config_json(mcfg)},
                          {"train", train_config_json(tcfg)},
                          {"outputs", {tr_out + ".aqck", tr_out + ".log.csv"}}};
            write_manifest(tr_out + ".manifest.json", manifest);

            const auto& last = logs.back();
            std::cout.precision(6);
            std::cout << "final epoch " << last.epoch << ": train_emd=" << last.train_loss
                      << " srcc=" << last.eval_srcc << " plcc=" << last.eval_plcc
                      << " lr=" << last.lr << "\n";
        } else if (*ev) {
            aesq::TrainState state = aesq::restore_checkpoint(aesq::load_checkpoint(ev_ckpt));
            aesq::Dataset ds = load_dataset(ev_data);
            aesq::DataConfig dcfg;
            dcfg.patch = ev_enc.patch;
            dcfg.h_v = ev_enc.hv;
            dcfg.k = ds.k();
            if (ds.items.front().image) {
                dcfg.width = ds.items.front().image->width;
                dcfg.channels = ds.items.front().image->channels;
            }
            check_shape_compatible(state.model.cfg, dataset_shape(ds, dcfg));
            aesq::PseudoEncoder enc(dcfg, ev_enc.encoder_seed);
            aesq::EvalResult res = aesq::evaluate(state.model, ds, enc);
            std::cout.precision(6);
            std::cout << "srcc=" << res.srcc << " plcc=" << res.plcc
                      << " mean_emd=" << res.mean_emd << " n=" << ds.items.size() << "\n";
        } else if (*pr) {
            aesq::TrainState state = aesq::restore_checkpoint(aesq::load_checkpoint(pr_ckpt));
            aesq::Dataset ds = load_dataset(pr_data);
            if (pr_index < 0 || pr_index >= static_cast<int>(ds.items.size()))
                throw std::runtime_error("index " + std::to_string(pr_index) +
                                         " out of range for dataset of " +
                                         std::to_string(ds.items.size()));
            aesq::DataConfig dcfg;
            dcfg.patch = pr_enc.patch;
            dcfg.h_v = pr_enc.hv;
            dcfg.k = ds.k();
            if (ds.items.front().image) {
                dcfg.width = ds.items.front().image->width;
                dcfg.channels = ds.items.front().image->channels;
            }
            check_shape_compatible(state.model.cfg, dataset_shape(ds, dcfg));
            aesq::PseudoEncoder enc(dcfg, pr_enc.encoder_seed);
            const auto& item = ds.items[pr_index];
            aesq::ImageEmbeddings evb =
                item.embeddings ? *item.embeddings : enc.encode(*item.image);
            aesq::ScoreDistribution dos{
                aesq::model_predict(state.model, evb).value().row(0).transpose()};
            aesq::Tape::active().clear();
            std::cout.precision(9);
            std::cout << "dos=";
            for (int i = 0; i < dos.k(); ++i) std::cout << (i ? "," : "") << dos.bins(i);
            std::cout << "\nmos=" << aesq::dos_to_mos(dos) << "\n";
        } else if (*ab) {
            const std::uint64_t seed = resolve_seed(ab_seed);
            aesq::Dataset full = load_dataset(ab_data);
            auto [train_ds, test_ds] = split_dataset(full);
            if (test_ds.items.empty())
                throw std::runtime_error("dataset too small to split for ablation");

            aesq::DataConfig dcfg;
            dcfg.patch = ab_enc.patch;
            dcfg.h_v = ab_enc.hv;
            dcfg.k = full.k();
            if (full.items.front().image) {
                dcfg.width = full.items.front().image->width;
                dcfg.channels = full.items.front().image->channels;
            }
            const DataShape shape = dataset_shape(full, dcfg);
            aesq::PseudoEncoder enc(dcfg, ab_enc.encoder_seed);

            aesq::ModelConfig base;
            base.m = ab_model.m;
            base.h_q = ab_model.hq;
            base.h_v = shape.h_v;
            base.num_blocks = ab_model.blocks;
            base.num_heads = ab_model.heads;
            base.ffn_mult = ab_model.ffn_mult;
            base.k = shape.k;
            base.n_p = shape.n_p;
            base.seed = seed;

            const int crop_to =
                full.items.front().image ? full.items.front().image->width : ab_flags.rc_resize;

            std::vector<SweepResult> table;
            std::string extra_name;
            if (ab_axis == "queries") {
                for (int m : {1, 2, 3, 4, 32}) {
                    aesq::ModelConfig mcfg = base;
                    mcfg.m = m;
                    aesq::EvalResult res = run_sweep_point(
                        mcfg, make_train_config(ab_flags, seed, crop_to), train_ds, test_ds, enc,
                        nullptr);
                    table.push_back({"M=" + std::to_string(m), res.srcc, res.plcc});
                }
            } else if (ab_axis == "embedding") {
                extra_name = "patch_sensitivity";
                for (auto mode :
                     {aesq::EmbeddingMode::CLS, aesq::EmbeddingMode::CLS_P, aesq::EmbeddingMode::LQ}) {
                    aesq::ModelConfig mcfg = base;
                    mcfg.mode = mode;
                    aesq::Model trained;
                    aesq::EvalResult res = run_sweep_point(
                        mcfg, make_train_config(ab_flags, seed, crop_to), train_ds, test_ds, enc,
                        &trained);
                    table.push_back({aesq::to_string(mode), res.srcc, res.plcc,
                                     patch_sensitivity(trained, test_ds, enc)});
                }
            } else {  // augmentation
                if (!full.items.front().image)
                    throw std::runtime_error(
                        "augmentation axis requires an AQI1 image dataset");
                for (bool padding : {false, true}) {
                    for (const std::string& aug : {"None", "HF", "RC", "HF+RC"}) {
                        TrainFlags f = ab_flags;
                        f.padding = padding;
                        f.hf = aug == "HF" || aug == "HF+RC";
                        f.rc = aug == "RC" || aug == "HF+RC";
                        aesq::EvalResult res = run_sweep_point(
                            base, make_train_config(f, seed, crop_to), train_ds, test_ds, enc,
                            nullptr);
                        table.push_back({std::string("padding=") + (padding ? "true" : "false") +
                                             " aug=" + aug,
                                         res.srcc, res.plcc});
                    }
                }
            }

            std::cout.precision(4);
            std::cout << "axis=" << ab_axis << " seed=" << seed << "\n";
            std::cout << "setting,srcc,plcc" << (extra_name.empty() ? "" : "," + extra_name)
                      << "\n";
            std::string csv = "setting,srcc,plcc" + (extra_name.empty() ? "" : "," + extra_name) +
                              "\n";
            for (const auto& row : table) {
                std::string line = row.setting + "," + std::to_string(row.srcc) + "," +
                                   std::to_string(row.plcc);
                if (!extra_name.empty()) line += "," + std::to_string(row.extra);
                std::cout << line << "\n";
                csv += line + "\n";
            }
            if (!ab_out.empty()) {
                std::ofstream os(ab_out);
                if (!os) throw std::runtime_error("cannot write " + ab_out);
                os << csv;
            }
        } else if (*gc) {
            if (gc_fault != 1.0) aesq::Tape::active().inject_fault(gc_fault);
            auto rows = aesq::run_gradient_suite(gc_seed);
            aesq::Tape::active().inject_fault(1.0);
            bool all_pass = true;
            std::cout.precision(3);
            for (const auto& row : rows) {
                std::cout << (row.passed() ? "PASS" : "FAIL") << "  " << row.op
                          << "  max_rel_error=" << std::scientific << row.max_rel_error
                          << "  tol=" << row.tolerance << std::defaultfloat << "\n";
                all_pass = all_pass && row.passed();
            }
            std::cout << (all_pass ? "gradient suite passed" : "gradient suite FAILED") << "\n";
            return all_pass ? 0 : 1;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
