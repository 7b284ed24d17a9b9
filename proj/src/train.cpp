#include "aesq/train.hpp"

#include "aesq/errors.hpp"
#include "binio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace aesq {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (base_lr <= 0.0) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
    if (decay_factor <= 0.0 || decay_factor > 1.0)
        throw std::invalid_argument("TrainConfig: decay_factor must be in (0, 1]");
    if (decay_every_epochs < 1)
        throw std::invalid_argument("TrainConfig: decay_every_epochs must be >= 1");
    if (hf_prob < 0.0 || hf_prob > 1.0)
        throw std::invalid_argument("TrainConfig: hf_prob must be in [0, 1]");
    if (rc && rc_crop > rc_resize)
        throw std::invalid_argument("TrainConfig: rc_crop exceeds rc_resize");
}

TrainConfig paper_preset() {
    TrainConfig cfg;
    cfg.batch_size = 128;
    cfg.epochs = 10;
    cfg.base_lr = 3e-5;
    cfg.decay_factor = 0.1;
    cfg.decay_every_epochs = 2;
    return cfg;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw std::invalid_argument("lr_at_epoch: epoch must be >= 0");
    return cfg.base_lr * std::pow(cfg.decay_factor, epoch / cfg.decay_every_epochs);
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be > 0");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        Mat g = p.has_grad() ? p.grad() : Mat::Zero(p.rows(), p.cols());
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
        auto mit = state.m.find(name);
        if (mit == state.m.end()) {
            state.m[name] = Mat::Zero(p.rows(), p.cols());
            state.v[name] = Mat::Zero(p.rows(), p.cols());
        }
        Mat& m = state.m[name];
        Mat& v = state.v[name];
        if (m.rows() != p.rows() || m.cols() != p.cols())
            throw std::invalid_argument("adam_step: moment shape mismatch for " + name);
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        const Mat m_hat = m / bc1;
        const Mat v_hat = v / bc2;
        p.raw_value().array() -=
            lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
        if (!p.value().allFinite())
            throw std::runtime_error("adam_step: non-finite parameter " + name);
    }
}

namespace {

ImageEmbeddings item_embeddings(const DataItem& item, const PseudoEncoder& enc) {
    if (item.embeddings) return *item.embeddings;
    if (item.image) return enc.encode(*item.image);
    throw std::invalid_argument("dataset item has neither image nor embeddings");
}

}  // namespace

EvalResult evaluate(const Model& model, const Dataset& ds, const PseudoEncoder& enc) {
    if (ds.items.empty()) throw std::invalid_argument("evaluate: empty dataset");
    std::vector<double> pred_mos, true_mos;
    double emd_sum = 0.0;
    for (const auto& item : ds.items) {
        const ImageEmbeddings ev = item_embeddings(item, enc);
        Tensor dos_hat_t = model_predict(model, ev);
        ScoreDistribution dos_hat{Eigen::VectorXd(dos_hat_t.value().row(0).transpose())};
        pred_mos.push_back(dos_to_mos(dos_hat));
        true_mos.push_back(dos_to_mos(item.dos));
        emd_sum += emd_loss(item.dos, dos_hat);
    }
    Tape::active().clear();  // evaluation needs no gradients
    EvalResult res;
    res.srcc = srcc(true_mos, pred_mos);
    res.plcc = plcc(true_mos, pred_mos);
    res.mean_emd = emd_sum / static_cast<double>(ds.items.size());
    return res;
}

std::vector<EpochLog> train(TrainState& state, const Dataset& train_ds, const Dataset* eval_ds,
                            const TrainConfig& cfg, const PseudoEncoder& enc, int run_epochs) {
    cfg.validate();
    if (train_ds.items.empty()) throw std::invalid_argument("train: empty dataset");
    const bool augmenting = cfg.hf || cfg.rc || cfg.padding;
    if (augmenting) {
        for (const auto& item : train_ds.items)
            if (!item.image)
                throw std::invalid_argument("train: augmentation requires image data");
    }

    auto params = state.model.named_parameters();
    const int last_epoch = run_epochs < 0 ? cfg.epochs : state.epoch + run_epochs;
    std::vector<EpochLog> logs;

    const int n = static_cast<int>(train_ds.items.size());
    for (; state.epoch < last_epoch; ++state.epoch) {
        const double lr = lr_at_epoch(cfg, state.epoch);

        // Seeded Fisher-Yates shuffle.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(state.rng.integer(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        int batch_count = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, n - start);
            Tape::active().clear();
            for (auto& [name, p] : params) p.zero_grad();

            Tensor batch_loss;
            for (int b = 0; b < bsz; ++b) {
                const DataItem& item = train_ds.items[order[start + b]];
                ImageEmbeddings ev;
                if (augmenting) {
                    SyntheticImage img = *item.image;
                    if (cfg.padding) img = pad_to_square(img, img.width);
                    if (cfg.hf && state.rng.bernoulli(cfg.hf_prob)) img = hflip(img);
                    if (cfg.rc) img = resize_random_crop(img, cfg.rc_resize, cfg.rc_crop, state.rng);
                    ev = enc.encode(img);
                } else {
                    ev = item_embeddings(item, enc);
                }
                Tensor sample_loss;
                try {
                    sample_loss = emd_loss_t(model_predict(state.model, ev), item.dos);
                } catch (const std::exception& e) {
                    throw std::runtime_error("train: epoch " + std::to_string(state.epoch) +
                                             ", batch " + std::to_string(batch_count) + ": " +
                                             e.what());
                }
                batch_loss = (b == 0) ? sample_loss : add(batch_loss, sample_loss);
            }
            Tensor mean_loss = scale(batch_loss, 1.0 / bsz);
            Tape::active().backward(mean_loss);
            adam_step(params, state.opt, lr);
            loss_sum += mean_loss.item();
            ++batch_count;
            Tape::active().clear();
        }

        EpochLog row;
        row.epoch = state.epoch;
        row.lr = lr;
        row.train_loss = loss_sum / batch_count;
        const Dataset& eds = eval_ds ? *eval_ds : train_ds;
        try {
            const EvalResult ev_res = evaluate(state.model, eds, enc);
            row.eval_srcc = ev_res.srcc;
            row.eval_plcc = ev_res.plcc;
            row.eval_emd = ev_res.mean_emd;
        } catch (const std::exception&) {
            // Correlations are undefined on tiny or constant splits; the
            // log still carries the loss curve.
            row.eval_srcc = std::nan("");
            row.eval_plcc = std::nan("");
            double emd_sum = 0.0;
            for (const auto& item : eds.items) {
                Tensor dos_hat = model_predict(state.model, item_embeddings(item, enc));
                emd_sum += emd_loss(item.dos,
                                    ScoreDistribution{dos_hat.value().row(0).transpose()});
            }
            Tape::active().clear();
            row.eval_emd = emd_sum / static_cast<double>(eds.items.size());
        }
        logs.push_back(row);
    }
    return logs;
}

// ---- checkpointing ----

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

void put_mat(std::ostream& os, const Mat& m) {
    binio::put_u32(os, static_cast<std::uint32_t>(m.rows()));
    binio::put_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) binio::put_f64(os, m(i, j));
}

Mat read_mat(binio::Reader& r) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Mat m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
    return m;
}

void put_string(std::ostream& os, const std::string& s) {
    binio::put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

Checkpoint make_checkpoint(const TrainState& state) {
    Checkpoint ckpt;
    ckpt.config = state.model.cfg;
    for (const auto& [name, p] : state.model.named_parameters())
        ckpt.parameters.emplace_back(name, p.value());
    ckpt.opt = state.opt;
    ckpt.epoch = state.epoch;
    ckpt.rng_state = state.rng.serialize();
    return ckpt;
}

TrainState restore_checkpoint(const Checkpoint& ckpt) {
    TrainState state;
    state.model = init_model(ckpt.config);
    auto params = state.model.named_parameters();
    if (params.size() != ckpt.parameters.size())
        throw FormatError("checkpoint parameter count mismatch", 0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != ckpt.parameters[i].first)
            throw FormatError("checkpoint parameter name mismatch: expected " + params[i].first +
                                  ", got " + ckpt.parameters[i].first,
                              0);
        const Mat& m = ckpt.parameters[i].second;
        if (m.rows() != params[i].second.rows() || m.cols() != params[i].second.cols())
            throw FormatError("checkpoint parameter shape mismatch for " + params[i].first, 0);
        params[i].second.raw_value() = m;
    }
    state.opt = ckpt.opt;
    state.epoch = ckpt.epoch;
    state.rng.deserialize(ckpt.rng_state);
    return state;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write("AQCK", 4);
    binio::put_u16(os, kCheckpointVersion);

    const ModelConfig& c = ckpt.config;
    for (int v : {c.m, c.h_q, c.h_v, c.num_blocks, c.num_heads, c.ffn_mult, c.k, c.n_p})
        binio::put_u32(os, static_cast<std::uint32_t>(v));
    binio::put_u64(os, c.seed);
    binio::put_u16(os, static_cast<std::uint16_t>(c.mode));
    binio::put_u32(os, static_cast<std::uint32_t>(ckpt.epoch));

    binio::put_u32(os, static_cast<std::uint32_t>(ckpt.parameters.size()));
    for (const auto& [name, m] : ckpt.parameters) {
        put_string(os, name);
        put_mat(os, m);
    }

    binio::put_u64(os, static_cast<std::uint64_t>(ckpt.opt.t));
    binio::put_f64(os, ckpt.opt.beta1);
    binio::put_f64(os, ckpt.opt.beta2);
    binio::put_f64(os, ckpt.opt.eps);
    binio::put_u32(os, static_cast<std::uint32_t>(ckpt.opt.m.size()));
    for (const auto& [name, m] : ckpt.opt.m) {
        put_string(os, name);
        put_mat(os, m);
        put_mat(os, ckpt.opt.v.at(name));
    }

    put_string(os, ckpt.rng_state);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    binio::Reader r(path);
    r.expect_magic("AQCK");
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);

    Checkpoint ckpt;
    ModelConfig& c = ckpt.config;
    c.m = static_cast<int>(r.u32());
    c.h_q = static_cast<int>(r.u32());
    c.h_v = static_cast<int>(r.u32());
    c.num_blocks = static_cast<int>(r.u32());
    c.num_heads = static_cast<int>(r.u32());
    c.ffn_mult = static_cast<int>(r.u32());
    c.k = static_cast<int>(r.u32());
    c.n_p = static_cast<int>(r.u32());
    c.seed = r.u64();
    const std::uint16_t mode = r.u16();
    if (mode > 2) throw FormatError("bad embedding mode in checkpoint", r.offset());
    c.mode = static_cast<EmbeddingMode>(mode);
    ckpt.epoch = static_cast<int>(r.u32());

    const std::uint32_t n_params = r.u32();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = r.string(r.u32());
        Mat m = read_mat(r);
        ckpt.parameters.emplace_back(std::move(name), std::move(m));
    }

    ckpt.opt.t = static_cast<std::int64_t>(r.u64());
    ckpt.opt.beta1 = r.f64();
    ckpt.opt.beta2 = r.f64();
    ckpt.opt.eps = r.f64();
    const std::uint32_t n_moments = r.u32();
    for (std::uint32_t i = 0; i < n_moments; ++i) {
        std::string name = r.string(r.u32());
        ckpt.opt.m[name] = read_mat(r);
        ckpt.opt.v[name] = read_mat(r);
    }

    ckpt.rng_state = r.string(r.u32());
    if (!r.at_eof()) throw FormatError("trailing bytes in checkpoint " + path, r.offset());
    return ckpt;
}

}  // namespace aesq
