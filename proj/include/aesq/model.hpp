#pragma once

#include "aesq/data.hpp"
#include "aesq/metrics.hpp"
#include "aesq/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aesq {

enum class EmbeddingMode { LQ, CLS, CLS_P };

std::string to_string(EmbeddingMode mode);
EmbeddingMode embedding_mode_from_string(const std::string& s);

struct ModelConfig {
    int m = 2;            // query count
    int h_q = 16;         // query hidden size
    int h_v = 24;         // frozen-embedding size
    int num_blocks = 4;   // must be even
    int num_heads = 2;    // must divide h_q
    int ffn_mult = 4;
    int k = 10;           // score bins
    int n_p = 16;         // patch tokens
    std::uint64_t seed = 0;
    EmbeddingMode mode = EmbeddingMode::LQ;

    int head_input_size() const { return mode == EmbeddingMode::LQ ? h_q : h_v; }
    void validate() const;  // throws std::invalid_argument naming the violated constraint
};

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerNormParams {
    Tensor gain, bias;
};

struct TransformerBlock {
    AttentionParams self_attn;
    LayerNormParams ln_self;
    std::optional<AttentionParams> cross_attn;  // even-indexed blocks only
    std::optional<LayerNormParams> ln_cross;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    LayerNormParams ln_ffn;
};

struct QueryBank {
    Tensor queries;  // M x H_q, no positional embeddings
    std::vector<TransformerBlock> blocks;
};

struct PredictionHead {
    Tensor w;  // H_in x K
    Tensor b;  // 1 x K
};

struct Model {
    ModelConfig cfg;
    QueryBank bank;
    PredictionHead head;

    // Stable (name, tensor) enumeration of everything Eq-7-style training
    // updates; frozen encoder state never appears here.
    std::vector<std::pair<std::string, Tensor>> named_parameters();
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Seeded scaled-normal init (sigma 0.02), zero biases, unit layer-norm gains.
Model init_model(const ModelConfig& cfg);

// Multi-head scaled dot-product attention. kv may have a different hidden
// size than the queries (cross-attention).
Tensor attention(const Tensor& queries_in, const Tensor& keys_vals_in,
                 const AttentionParams& params, int num_heads);

// Runs the querying transformer; cross-attention fires on blocks 0, 2, ....
// When `cross_trace` is given, the indices of blocks that ran
// cross-attention are appended to it.
Tensor qformer_forward(const Model& model, const ImageEmbeddings& e_v,
                       std::vector<int>* cross_trace = nullptr);

// Pools per the embedding mode: LQ averages query embeddings, CLS takes the
// first frozen row, CLS_P averages all frozen rows.
Tensor aesthetic_embedding(const Tensor& e_q, const ImageEmbeddings& e_v, EmbeddingMode mode);

// softmax(W e_a + b): a valid K-bin probability row.
Tensor predict_dos(const Tensor& e_a, const PredictionHead& head);

// Full pipeline: forward, pool, head. Returns the 1xK predicted DOS.
Tensor model_predict(const Model& model, const ImageEmbeddings& e_v,
                     std::vector<int>* cross_trace = nullptr);

}  // namespace aesq
