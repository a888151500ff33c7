#pragma once

#include <cstdint>
#include <vector>

#include "feddpg/data.hpp"
#include "feddpg/serialize.hpp"
#include "feddpg/tensor.hpp"

namespace feddpg {

struct EncoderConfig {
    int d_e = 32;
    int layers = 2;
    int heads = 4;
    int d_ff = 64;
    int vocab_size = 128;
    int max_len = 64;
    int num_classes = 2;

    void validate() const;
    int head_dim() const { return d_e / heads; }
    bool operator==(const EncoderConfig&) const = default;
};

struct AttentionHead {
    Tensor wq, wk, wv;  // [d_e, head_dim]
    Tensor wo;          // [head_dim, d_e]
};

struct EncoderLayer {
    Tensor ln1_gain, ln1_bias;
    std::vector<AttentionHead> heads;
    Tensor attn_bias;  // [d_e]
    Tensor ln2_gain, ln2_bias;
    Tensor w_ff1, b_ff1;  // [d_e, d_ff], [d_ff]
    Tensor w_ff2, b_ff2;  // [d_ff, d_e], [d_e]
};

// The stand-in for the pre-trained language model: token + positional
// embeddings, a stack of pre-norm self-attention/FFN layers, mean pooling
// over all positions, and a linear classifier head. Once frozen, no training
// or unlearning round may change any of it (bit-exact digest contract).
struct EncoderParams {
    EncoderConfig config;
    Tensor token_table;  // [V, d_e]
    Tensor pos_table;    // [max_len, d_e]
    std::vector<EncoderLayer> layers;
    Tensor head_w;  // [d_e, K]
    bool frozen = false;

    static EncoderParams init(const EncoderConfig& cfg, uint64_t seed);

    void set_trainable(bool trainable);
    void freeze();

    std::vector<Tensor> tensors();  // fixed traversal order
    ParamBundle bundle() const;
    uint64_t digest() const;

    static EncoderParams from_bundle(const ParamBundle& bundle);
};

// token embedding lookup only (no positions); feeds the prompt generator's
// input average
Tensor embed_tokens(Tape& tape, const EncoderParams& enc, const std::vector<int>& ids);

// token + positional embedding, positions starting at pos_offset; the input
// is truncated from the right to fit max_len
Tensor embed(Tape& tape, const EncoderParams& enc, const std::vector<int>& ids, int pos_offset);

// one multi-head self-attention block (exposed for direct checks)
Tensor self_attention(Tape& tape, const Tensor& x, const EncoderLayer& layer, const EncoderConfig& cfg);

Tensor encode(Tape& tape, const EncoderParams& enc, const Tensor& z);           // [m,d_e] -> [m,d_e]
Tensor encode_classify(Tape& tape, const EncoderParams& enc, const Tensor& z);  // [m,d_e] -> [K]

struct PretrainResult {
    EncoderParams params;               // frozen on return
    std::vector<double> step_losses;    // mean batch loss per step
};

// Plain gradient descent on a pretext classification task, then freeze.
// Sequences are embedded at a random positional offset per sample so every
// positional row is exercised; deterministic under the given seed.
PretrainResult pretrain_backbone(const EncoderConfig& cfg, const TokenizedDataset& task, int steps,
                                 double lr, int batch_size, uint64_t seed);

}  // namespace feddpg
