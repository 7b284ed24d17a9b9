// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion runs independently so one red line never hides
// another.

#include "aesq/data.hpp"
#include "aesq/errors.hpp"
#include "aesq/gradcheck.hpp"
#include "aesq/metrics.hpp"
#include "aesq/model.hpp"
#include "aesq/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace aesq;

namespace {

bool bitwise_equal(const Mat& a, const Mat& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool models_bitwise_equal(const Model& a, const Model& b) {
    auto pa = a.named_parameters();
    auto pb = b.named_parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i].first != pb[i].first ||
            !bitwise_equal(pa[i].second.raw_value(), pb[i].second.raw_value()))
            return false;
    return true;
}

DataConfig toy_data_config() {
    DataConfig cfg;  // 32x32x3, patch 8, H_v 24, K 10
    return cfg;
}

ModelConfig toy_model_config(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.m = 2;
    cfg.h_q = 16;
    cfg.h_v = 24;
    cfg.num_blocks = 4;
    cfg.num_heads = 2;
    cfg.ffn_mult = 4;
    cfg.k = 10;
    cfg.n_p = 16;
    cfg.seed = seed;
    return cfg;
}

TrainConfig toy_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.epochs = 10;
    cfg.base_lr = 1e-3;
    cfg.decay_factor = 1.0;
    cfg.seed = seed;
    return cfg;
}

ScoreDistribution one_hot(int k, int at) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
    v(at) = 1.0;
    return {v};
}

std::string csv_of(const std::vector<EpochLog>& logs) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& r : logs)
        os << r.epoch << "," << r.train_loss << "," << r.eval_srcc << "," << r.eval_plcc << ","
           << r.eval_emd << "," << r.lr << "\n";
    return os.str();
}

int failures = 0;

void criterion(int number, const std::string& name, const std::function<bool()>& body) {
    bool ok = false;
    std::string note;
    try {
        ok = body();
    } catch (const std::exception& e) {
        note = std::string(" (threw: ") + e.what() + ")";
    }
    std::printf("[%s] %2d. %s%s\n", ok ? "PASS" : "FAIL", number, name.c_str(), note.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

}  // namespace

int main() {
    const auto tmp = std::filesystem::temp_directory_path() / "aesq_acceptance";
    std::filesystem::create_directories(tmp);

    criterion(1, "every op class passes finite-difference checks in under 60s", [] {
        const auto t0 = std::chrono::steady_clock::now();
        auto rows = run_gradient_suite(7);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool all = !rows.empty();
        for (const auto& r : rows) all = all && r.passed();
        return all && secs < 60.0;
    });

    criterion(2, "EMD loss: zero at identity, symmetric, adjacent one-hot = sqrt(1/2)", [] {
        Rng rng(3);
        for (int t = 0; t < 10; ++t) {
            Eigen::VectorXd a(10), b(10);
            for (int i = 0; i < 10; ++i) {
                a(i) = rng.uniform(1e-3, 1.0);
                b(i) = rng.uniform(1e-3, 1.0);
            }
            ScoreDistribution da = validate_dos(a / a.sum()), db = validate_dos(b / b.sum());
            if (emd_loss(da, da) != 0.0) return false;
            if (std::abs(emd_loss(da, db) - emd_loss(db, da)) > 1e-15) return false;
            if (emd_loss(da, db) < 0.0) return false;
        }
        const double adjacent = emd_loss(one_hot(2, 0), one_hot(2, 1));
        if (std::abs(adjacent - std::sqrt(0.5)) > 1e-12) return false;
        // Moving the same mass farther costs more.
        return emd_loss(one_hot(10, 0), one_hot(10, 9)) >
               emd_loss(one_hot(10, 0), one_hot(10, 1));
    });

    criterion(3, "DOS validation and MOS reduction behave as specified", [] {
        Eigen::VectorXd bad(3);
        bad << 0.5, -0.1, 0.6;
        try {
            validate_dos(bad);
            return false;
        } catch (const std::invalid_argument&) {
        }
        Eigen::VectorXd off(2);
        off << 0.5, 0.6;  // sum 1.1, outside the 1e-6 gate
        try {
            validate_dos(off);
            return false;
        } catch (const std::invalid_argument&) {
        }
        for (int k : {5, 10})
            for (int at = 0; at < k; ++at)
                if (std::abs(dos_to_mos(one_hot(k, at)) - (at + 1)) > 1e-12) return false;
        // Synthesized distributions stay valid and track their target MOS.
        double prev = 0.0;
        for (double mos : {1.5, 3.0, 5.5, 8.0, 9.5}) {
            ScoreDistribution d = dos_from_mos(mos, 10, 1.2);
            const double got = dos_to_mos(d);
            if (got <= prev) return false;
            prev = got;
        }
        return true;
    });

    criterion(4, "architecture: cross-attention on even blocks, patch-permutation "
                 "invariance, valid DOS output", [] {
        ModelConfig cfg = toy_model_config(11);
        Model model = init_model(cfg);
        Rng rng(12);
        ImageEmbeddings ev{rng.normal_mat(1 + cfg.n_p, cfg.h_v, 1.0)};

        std::vector<int> trace;
        Mat dos = model_predict(model, ev, &trace).value();
        if (trace != std::vector<int>{0, 2}) return false;
        if (std::abs(dos.sum() - 1.0) > 1e-12 || dos.minCoeff() <= 0.0) return false;

        // No positional embeddings on the frozen rows: shuffling patch rows
        // (CLS row pinned) must not change the prediction.
        ImageEmbeddings shuffled = ev;
        std::vector<int> perm(cfg.n_p);
        std::iota(perm.begin(), perm.end(), 0);
        Rng prng(13);
        for (int i = cfg.n_p - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<int>(prng.integer(i + 1))]);
        for (int i = 0; i < cfg.n_p; ++i) shuffled.rows.row(1 + i) = ev.rows.row(1 + perm[i]);
        Mat dos2 = model_predict(model, shuffled).value();
        if ((dos - dos2).cwiseAbs().maxCoeff() >= 1e-9) return false;

        // Pooling averages the query rows, and every sublayer is row-wise
        // equivariant, so reordering the learnable queries cannot move the
        // pooled embedding.
        Mat pooled = aesthetic_embedding(qformer_forward(model, ev), ev, EmbeddingMode::LQ)
                         .value();
        Mat q = model.bank.queries.raw_value();
        Mat q_swapped = q;
        q_swapped.row(0) = q.row(1);
        q_swapped.row(1) = q.row(0);
        model.bank.queries.raw_value() = q_swapped;
        Mat pooled2 = aesthetic_embedding(qformer_forward(model, ev), ev, EmbeddingMode::LQ)
                          .value();
        Tape::active().clear();
        return (pooled - pooled2).cwiseAbs().maxCoeff() < 1e-9;
    });

    criterion(5, "frozen encoder is bit-identical after training and receives no gradient", [] {
        DataConfig dcfg = toy_data_config();
        PseudoEncoder enc(dcfg, 7);
        const Mat map0 = enc.patch_map(), bias0 = enc.patch_bias(), cls0 = enc.cls_row(),
                  pos0 = enc.position_offsets();

        Dataset ds = gen_synthetic(32, dcfg, 21);
        encode_dataset(ds, enc);
        TrainState state;
        state.model = init_model(toy_model_config(21));
        state.rng = Rng(21);
        TrainConfig tcfg = toy_train_config(21);
        tcfg.epochs = 2;
        train(state, ds, nullptr, tcfg, enc);

        if (!bitwise_equal(map0, enc.patch_map()) || !bitwise_equal(bias0, enc.patch_bias()) ||
            !bitwise_equal(cls0, enc.cls_row()) || !bitwise_equal(pos0, enc.position_offsets()))
            return false;

        // The frozen embedding leaf stays gradient-free through a backward pass.
        Tape::active().clear();
        Tensor ev_leaf(ds.items[0].embeddings->rows, /*requires_grad=*/false);
        Tensor q = state.model.bank.queries;
        Tensor att = attention(q, ev_leaf, *state.model.bank.blocks[0].cross_attn, 2);
        Tape::active().backward(sum(square(att)));
        const bool ok = !ev_leaf.has_grad() && q.has_grad();
        Tape::active().clear();
        return ok;
    });

    criterion(6, "reported-protocol preset decays lr by 10x every 2 epochs from 3e-5", [] {
        TrainConfig cfg = paper_preset();
        if (cfg.batch_size != 128 || cfg.epochs != 10) return false;
        for (int e = 0; e < 10; ++e) {
            const double want = 3e-5 * std::pow(0.1, e / 2);
            if (std::abs(lr_at_epoch(cfg, e) - want) > 1e-18) return false;
        }
        return true;
    });

    criterion(7, "toy preset reaches SRCC and PLCC >= 0.7 on held-out data in under 10 min", [] {
        const auto t0 = std::chrono::steady_clock::now();
        DataConfig dcfg = toy_data_config();
        PseudoEncoder enc(dcfg, 7);
        Dataset train_ds = gen_synthetic(2000, dcfg, 100);
        Dataset test_ds = gen_synthetic(500, dcfg, 101);
        encode_dataset(train_ds, enc);
        encode_dataset(test_ds, enc);

        TrainState state;
        state.model = init_model(toy_model_config(5));
        state.rng = Rng(5);
        train(state, train_ds, &test_ds, toy_train_config(5), enc);
        EvalResult res = evaluate(state.model, test_ds, enc);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("      (srcc=%.4f plcc=%.4f in %.1fs)\n", res.srcc, res.plcc, secs);
        return res.srcc >= 0.7 && res.plcc >= 0.7 && secs < 600.0;
    });

    criterion(8, "a single batch is overfit to train EMD < 0.02 within 50 epochs", [] {
        DataConfig dcfg = toy_data_config();
        PseudoEncoder enc(dcfg, 7);
        Dataset ds = gen_synthetic(1, dcfg, 33);
        encode_dataset(ds, enc);

        TrainState state;
        state.model = init_model(toy_model_config(8));
        state.rng = Rng(8);
        TrainConfig tcfg = toy_train_config(8);
        tcfg.batch_size = 1;
        tcfg.epochs = 50;
        tcfg.base_lr = 3e-3;
        auto logs = train(state, ds, nullptr, tcfg, enc);
        std::printf("      (final train emd=%.5f)\n", logs.back().train_loss);
        return logs.back().train_loss < 0.02;
    });

    criterion(9, "ablations: query-count sweep completes; learnable queries feel patch "
                 "perturbations the CLS source cannot", [] {
        DataConfig dcfg = toy_data_config();
        PseudoEncoder enc(dcfg, 7);
        Dataset train_ds = gen_synthetic(200, dcfg, 55);
        Dataset test_ds = gen_synthetic(50, dcfg, 56);
        encode_dataset(train_ds, enc);
        encode_dataset(test_ds, enc);
        TrainConfig tcfg = toy_train_config(9);
        tcfg.epochs = 2;

        for (int m : {1, 2, 3, 4, 32}) {
            ModelConfig mcfg = toy_model_config(9);
            mcfg.m = m;
            TrainState state;
            state.model = init_model(mcfg);
            state.rng = Rng(9);
            auto logs = train(state, train_ds, &test_ds, tcfg, enc);
            if (!std::isfinite(logs.back().train_loss)) return false;
        }

        // Nudge one frozen patch row and compare MOS movement per source.
        auto sensitivity = [&](EmbeddingMode mode) {
            ModelConfig mcfg = toy_model_config(9);
            mcfg.mode = mode;
            TrainState state;
            state.model = init_model(mcfg);
            state.rng = Rng(9);
            train(state, train_ds, nullptr, tcfg, enc);
            double total = 0.0;
            for (int i = 0; i < 10; ++i) {
                ImageEmbeddings ev = *test_ds.items[i].embeddings;
                ScoreDistribution base{model_predict(state.model, ev).value().row(0).transpose()};
                ev.rows.row(1).array() += 0.5;
                ScoreDistribution moved{
                    model_predict(state.model, ev).value().row(0).transpose()};
                total += std::abs(dos_to_mos(moved) - dos_to_mos(base));
            }
            Tape::active().clear();
            return total / 10.0;
        };
        const double cls = sensitivity(EmbeddingMode::CLS);
        const double lq = sensitivity(EmbeddingMode::LQ);
        std::printf("      (patch sensitivity: CLS=%.2e LQ=%.2e)\n", cls, lq);
        return cls == 0.0 && lq > 0.0;
    });

    criterion(10, "determinism and persistence: bitwise reruns, resumable checkpoints, "
                  "exact round-trips, corrupt files rejected", [&tmp] {
        DataConfig dcfg = toy_data_config();
        PseudoEncoder enc(dcfg, 7);
        Dataset train_ds = gen_synthetic(64, dcfg, 71);
        Dataset test_ds = gen_synthetic(32, dcfg, 72);
        encode_dataset(train_ds, enc);
        encode_dataset(test_ds, enc);
        TrainConfig tcfg = toy_train_config(70);
        tcfg.epochs = 4;

        auto run = [&](int run_epochs, TrainState* out) {
            TrainState state;
            state.model = init_model(toy_model_config(70));
            state.rng = Rng(70);
            auto logs = train(state, train_ds, &test_ds, tcfg, enc, run_epochs);
            if (out) *out = std::move(state);
            return logs;
        };

        // Same seed, same bits.
        TrainState a, b;
        if (csv_of(run(-1, &a)) != csv_of(run(-1, &b))) return false;
        if (!models_bitwise_equal(a.model, b.model)) return false;

        // Stop after 2 epochs, checkpoint, reload, finish: identical to the
        // uninterrupted run.
        TrainState half;
        run(2, &half);
        const std::string ckpt_path = (tmp / "resume.aqck").string();
        save_checkpoint(ckpt_path, make_checkpoint(half));
        TrainState resumed = restore_checkpoint(load_checkpoint(ckpt_path));
        train(resumed, train_ds, &test_ds, tcfg, enc);
        if (!models_bitwise_equal(a.model, resumed.model)) return false;
        if (a.rng.serialize() != resumed.rng.serialize()) return false;

        // Embeddings file: write -> read -> write is byte-identical.
        const std::string e1 = (tmp / "rt1.aqe").string(), e2 = (tmp / "rt2.aqe").string();
        write_embeddings(e1, train_ds);
        Dataset round = read_embeddings(e1);
        write_embeddings(e2, round);
        std::ifstream f1(e1, std::ios::binary), f2(e2, std::ios::binary);
        std::stringstream s1, s2;
        s1 << f1.rdbuf();
        s2 << f2.rdbuf();
        if (s1.str() != s2.str()) return false;

        // A corrupted magic must be rejected as a format error.
        std::string bytes = s1.str();
        bytes[0] = 'X';
        const std::string bad = (tmp / "bad.aqe").string();
        std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
        try {
            read_embeddings(bad);
            return false;
        } catch (const FormatError&) {
        }
        return true;
    });

    if (failures == 0)
        std::printf("acceptance: all criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
