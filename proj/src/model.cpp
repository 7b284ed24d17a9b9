#include "aesq/model.hpp"

#include <cmath>
#include <stdexcept>

namespace aesq {

std::string to_string(EmbeddingMode mode) {
    switch (mode) {
        case EmbeddingMode::LQ: return "LQ";
        case EmbeddingMode::CLS: return "CLS";
        case EmbeddingMode::CLS_P: return "CLS+P";
    }
    throw std::logic_error("to_string: bad EmbeddingMode");
}

EmbeddingMode embedding_mode_from_string(const std::string& s) {
    if (s == "LQ") return EmbeddingMode::LQ;
    if (s == "CLS") return EmbeddingMode::CLS;
    if (s == "CLS+P" || s == "CLS_P") return EmbeddingMode::CLS_P;
    throw std::invalid_argument("unknown embedding mode: " + s);
}

void ModelConfig::validate() const {
    if (m < 1) throw std::invalid_argument("ModelConfig: query count m must be >= 1");
    if (h_q < 1 || h_v < 1 || k < 2 || n_p < 1 || ffn_mult < 1)
        throw std::invalid_argument("ModelConfig: all sizes must be positive (k >= 2)");
    if (num_blocks < 2 || num_blocks % 2 != 0)
        throw std::invalid_argument("ModelConfig: num_blocks must be a positive even number, got " +
                                    std::to_string(num_blocks));
    if (num_heads < 1 || h_q % num_heads != 0)
        throw std::invalid_argument("ModelConfig: num_heads (" + std::to_string(num_heads) +
                                    ") must divide h_q (" + std::to_string(h_q) + ")");
}

namespace {

constexpr double kInitSd = 0.02;

Tensor param(Mat m) { return Tensor(std::move(m), /*requires_grad=*/true); }

AttentionParams init_attention(Rng& rng, int h_kv, int h_q) {
    AttentionParams p;
    p.wq = param(rng.normal_mat(h_q, h_q, kInitSd));
    p.bq = param(Mat::Zero(1, h_q));
    p.wk = param(rng.normal_mat(h_kv, h_q, kInitSd));
    p.bk = param(Mat::Zero(1, h_q));
    p.wv = param(rng.normal_mat(h_kv, h_q, kInitSd));
    p.bv = param(Mat::Zero(1, h_q));
    p.wo = param(rng.normal_mat(h_q, h_q, kInitSd));
    p.bo = param(Mat::Zero(1, h_q));
    return p;
}

LayerNormParams init_layer_norm(int h) {
    return LayerNormParams{param(Mat::Ones(1, h)), param(Mat::Zero(1, h))};
}

void add_attention_params(std::vector<std::pair<std::string, Tensor>>& out,
                          const std::string& prefix, const AttentionParams& p) {
    out.emplace_back(prefix + ".wq", p.wq);
    out.emplace_back(prefix + ".bq", p.bq);
    out.emplace_back(prefix + ".wk", p.wk);
    out.emplace_back(prefix + ".bk", p.bk);
    out.emplace_back(prefix + ".wv", p.wv);
    out.emplace_back(prefix + ".bv", p.bv);
    out.emplace_back(prefix + ".wo", p.wo);
    out.emplace_back(prefix + ".bo", p.bo);
}

}  // namespace

Model init_model(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Model model;
    model.cfg = cfg;
    model.bank.queries = param(rng.normal_mat(cfg.m, cfg.h_q, kInitSd));
    for (int i = 0; i < cfg.num_blocks; ++i) {
        TransformerBlock blk;
        blk.self_attn = init_attention(rng, cfg.h_q, cfg.h_q);
        blk.ln_self = init_layer_norm(cfg.h_q);
        if (i % 2 == 0) {
            blk.cross_attn = init_attention(rng, cfg.h_v, cfg.h_q);
            blk.ln_cross = init_layer_norm(cfg.h_q);
        }
        const int h_ffn = cfg.ffn_mult * cfg.h_q;
        blk.ffn_w1 = param(rng.normal_mat(cfg.h_q, h_ffn, kInitSd));
        blk.ffn_b1 = param(Mat::Zero(1, h_ffn));
        blk.ffn_w2 = param(rng.normal_mat(h_ffn, cfg.h_q, kInitSd));
        blk.ffn_b2 = param(Mat::Zero(1, cfg.h_q));
        blk.ln_ffn = init_layer_norm(cfg.h_q);
        model.bank.blocks.push_back(std::move(blk));
    }
    model.head.w = param(rng.normal_mat(cfg.head_input_size(), cfg.k, kInitSd));
    model.head.b = param(Mat::Zero(1, cfg.k));
    return model;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("queries", bank.queries);
    for (std::size_t i = 0; i < bank.blocks.size(); ++i) {
        const auto& blk = bank.blocks[i];
        const std::string p = "block" + std::to_string(i);
        add_attention_params(out, p + ".self", blk.self_attn);
        out.emplace_back(p + ".ln_self.gain", blk.ln_self.gain);
        out.emplace_back(p + ".ln_self.bias", blk.ln_self.bias);
        if (blk.cross_attn) {
            add_attention_params(out, p + ".cross", *blk.cross_attn);
            out.emplace_back(p + ".ln_cross.gain", blk.ln_cross->gain);
            out.emplace_back(p + ".ln_cross.bias", blk.ln_cross->bias);
        }
        out.emplace_back(p + ".ffn.w1", blk.ffn_w1);
        out.emplace_back(p + ".ffn.b1", blk.ffn_b1);
        out.emplace_back(p + ".ffn.w2", blk.ffn_w2);
        out.emplace_back(p + ".ffn.b2", blk.ffn_b2);
        out.emplace_back(p + ".ln_ffn.gain", blk.ln_ffn.gain);
        out.emplace_back(p + ".ln_ffn.bias", blk.ln_ffn.bias);
    }
    out.emplace_back("head.w", head.w);
    out.emplace_back("head.b", head.b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
    return const_cast<Model*>(this)->named_parameters();
}

Tensor attention(const Tensor& queries_in, const Tensor& keys_vals_in,
                 const AttentionParams& params, int num_heads) {
    const Eigen::Index h_q = params.wq.cols();
    if (num_heads < 1 || h_q % num_heads != 0)
        throw std::invalid_argument("attention: head count " + std::to_string(num_heads) +
                                    " does not divide hidden size " + std::to_string(h_q));
    const Eigen::Index dh = h_q / num_heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor q = add_rowvec(matmul(queries_in, params.wq), params.bq);
    Tensor k = add_rowvec(matmul(keys_vals_in, params.wk), params.bk);
    Tensor v = add_rowvec(matmul(keys_vals_in, params.wv), params.bv);

    std::vector<Tensor> heads;
    heads.reserve(num_heads);
    for (int h = 0; h < num_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
        Tensor weights = softmax(scores, 1);
        heads.push_back(matmul(weights, vh));
    }
    Tensor ctx = num_heads == 1 ? heads[0] : concat_cols(heads);
    return add_rowvec(matmul(ctx, params.wo), params.bo);
}

namespace {

Tensor residual_norm(const Tensor& x, const Tensor& sublayer_out, const LayerNormParams& ln) {
    return layer_norm(add(x, sublayer_out), ln.gain, ln.bias);
}

Tensor feed_forward(const Tensor& x, const TransformerBlock& blk) {
    Tensor h = gelu(add_rowvec(matmul(x, blk.ffn_w1), blk.ffn_b1));
    return add_rowvec(matmul(h, blk.ffn_w2), blk.ffn_b2);
}

}  // namespace

Tensor qformer_forward(const Model& model, const ImageEmbeddings& e_v,
                       std::vector<int>* cross_trace) {
    const auto& cfg = model.cfg;
    if (e_v.rows.rows() != 1 + cfg.n_p || e_v.rows.cols() != cfg.h_v)
        throw std::invalid_argument(
            "qformer_forward: image embeddings are " + std::to_string(e_v.rows.rows()) + "x" +
            std::to_string(e_v.rows.cols()) + ", config expects " + std::to_string(1 + cfg.n_p) +
            "x" + std::to_string(cfg.h_v));

    Tensor ev(Mat(e_v.rows), /*requires_grad=*/false);  // frozen leaf
    Tensor x = model.bank.queries;
    for (int i = 0; i < cfg.num_blocks; ++i) {
        const auto& blk = model.bank.blocks[i];
        x = residual_norm(x, attention(x, x, blk.self_attn, cfg.num_heads), blk.ln_self);
        if (blk.cross_attn) {
            x = residual_norm(x, attention(x, ev, *blk.cross_attn, cfg.num_heads), *blk.ln_cross);
            if (cross_trace) cross_trace->push_back(i);
        }
        x = residual_norm(x, feed_forward(x, blk), blk.ln_ffn);
    }
    return x;
}

Tensor aesthetic_embedding(const Tensor& e_q, const ImageEmbeddings& e_v, EmbeddingMode mode) {
    switch (mode) {
        case EmbeddingMode::LQ:
            return mean_rows(e_q);
        case EmbeddingMode::CLS:
            return Tensor(Mat(e_v.rows.row(0)));
        case EmbeddingMode::CLS_P:
            return Tensor(Mat(e_v.rows.colwise().mean()));
    }
    throw std::logic_error("aesthetic_embedding: bad EmbeddingMode");
}

Tensor predict_dos(const Tensor& e_a, const PredictionHead& head) {
    if (e_a.rows() != 1 || e_a.cols() != head.w.rows())
        throw std::invalid_argument("predict_dos: embedding is " + std::to_string(e_a.rows()) +
                                    "x" + std::to_string(e_a.cols()) + ", head expects 1x" +
                                    std::to_string(head.w.rows()));
    return softmax(add_rowvec(matmul(e_a, head.w), head.b), 1);
}

Tensor model_predict(const Model& model, const ImageEmbeddings& e_v,
                     std::vector<int>* cross_trace) {
    Tensor e_a;
    if (model.cfg.mode == EmbeddingMode::LQ) {
        Tensor e_q = qformer_forward(model, e_v, cross_trace);
        e_a = aesthetic_embedding(e_q, e_v, EmbeddingMode::LQ);
    } else {
        e_a = aesthetic_embedding(Tensor(), e_v, model.cfg.mode);
    }
    return predict_dos(e_a, model.head);
}

}  // namespace aesq
