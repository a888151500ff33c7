#include "feddpg/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "feddpg/digest.hpp"

namespace feddpg {

void EncoderConfig::validate() const {
    if (d_e < 2) throw std::invalid_argument("encoder: d_e must be >= 2");
    if (heads < 1 || d_e % heads != 0) {
        throw std::invalid_argument("encoder: d_e " + std::to_string(d_e) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    }
    if (layers < 1) throw std::invalid_argument("encoder: layers must be >= 1");
    if (d_ff < 1) throw std::invalid_argument("encoder: d_ff must be >= 1");
    if (vocab_size < 2) throw std::invalid_argument("encoder: vocab_size must be >= 2");
    if (max_len < 1) throw std::invalid_argument("encoder: max_len must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("encoder: num_classes must be >= 2");
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed_combine(seed, 0xe2c0de));
    const double s_de = 1.0 / std::sqrt(static_cast<double>(cfg.d_e));
    const double s_dh = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    const double s_ff = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));

    EncoderParams p;
    p.config = cfg;
    p.token_table = Tensor::uniform({cfg.vocab_size, cfg.d_e}, -s_de, s_de, rng);
    p.pos_table = Tensor::uniform({cfg.max_len, cfg.d_e}, -s_de, s_de, rng);
    for (int l = 0; l < cfg.layers; ++l) {
        EncoderLayer layer;
        layer.ln1_gain = Tensor::full({cfg.d_e}, 1.0);
        layer.ln1_bias = Tensor::zeros({cfg.d_e});
        for (int h = 0; h < cfg.heads; ++h) {
            AttentionHead head;
            head.wq = Tensor::uniform({cfg.d_e, cfg.head_dim()}, -s_de, s_de, rng);
            head.wk = Tensor::uniform({cfg.d_e, cfg.head_dim()}, -s_de, s_de, rng);
            head.wv = Tensor::uniform({cfg.d_e, cfg.head_dim()}, -s_de, s_de, rng);
            head.wo = Tensor::uniform({cfg.head_dim(), cfg.d_e}, -s_dh, s_dh, rng);
            layer.heads.push_back(std::move(head));
        }
        layer.attn_bias = Tensor::zeros({cfg.d_e});
        layer.ln2_gain = Tensor::full({cfg.d_e}, 1.0);
        layer.ln2_bias = Tensor::zeros({cfg.d_e});
        layer.w_ff1 = Tensor::uniform({cfg.d_e, cfg.d_ff}, -s_de, s_de, rng);
        layer.b_ff1 = Tensor::zeros({cfg.d_ff});
        layer.w_ff2 = Tensor::uniform({cfg.d_ff, cfg.d_e}, -s_ff, s_ff, rng);
        layer.b_ff2 = Tensor::zeros({cfg.d_e});
        p.layers.push_back(std::move(layer));
    }
    p.head_w = Tensor::uniform({cfg.d_e, cfg.num_classes}, -s_de, s_de, rng);
    return p;
}

void EncoderParams::set_trainable(bool trainable) {
    for (Tensor& t : tensors()) t.set_requires_grad(trainable);
}

void EncoderParams::freeze() {
    set_trainable(false);
    frozen = true;
}

std::vector<Tensor> EncoderParams::tensors() {
    std::vector<Tensor> out{token_table, pos_table};
    for (EncoderLayer& l : layers) {
        out.push_back(l.ln1_gain);
        out.push_back(l.ln1_bias);
        for (AttentionHead& h : l.heads) {
            out.push_back(h.wq);
            out.push_back(h.wk);
            out.push_back(h.wv);
            out.push_back(h.wo);
        }
        out.push_back(l.attn_bias);
        out.push_back(l.ln2_gain);
        out.push_back(l.ln2_bias);
        out.push_back(l.w_ff1);
        out.push_back(l.b_ff1);
        out.push_back(l.w_ff2);
        out.push_back(l.b_ff2);
    }
    out.push_back(head_w);
    return out;
}

ParamBundle EncoderParams::bundle() const {
    ParamBundle b;
    const std::vector<double> meta{static_cast<double>(config.d_e),     static_cast<double>(config.layers),
                                   static_cast<double>(config.heads),   static_cast<double>(config.d_ff),
                                   static_cast<double>(config.vocab_size), static_cast<double>(config.max_len),
                                   static_cast<double>(config.num_classes), frozen ? 1.0 : 0.0};
    b.push_back({"meta.config", Tensor::from({8}, meta)});
    b.push_back({"token_table", token_table});
    b.push_back({"pos_table", pos_table});
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        const EncoderLayer& layer = layers[l];
        b.push_back({prefix + "ln1_gain", layer.ln1_gain});
        b.push_back({prefix + "ln1_bias", layer.ln1_bias});
        for (size_t h = 0; h < layer.heads.size(); ++h) {
            const std::string hp = prefix + "h" + std::to_string(h) + ".";
            b.push_back({hp + "wq", layer.heads[h].wq});
            b.push_back({hp + "wk", layer.heads[h].wk});
            b.push_back({hp + "wv", layer.heads[h].wv});
            b.push_back({hp + "wo", layer.heads[h].wo});
        }
        b.push_back({prefix + "attn_bias", layer.attn_bias});
        b.push_back({prefix + "ln2_gain", layer.ln2_gain});
        b.push_back({prefix + "ln2_bias", layer.ln2_bias});
        b.push_back({prefix + "w_ff1", layer.w_ff1});
        b.push_back({prefix + "b_ff1", layer.b_ff1});
        b.push_back({prefix + "w_ff2", layer.w_ff2});
        b.push_back({prefix + "b_ff2", layer.b_ff2});
    }
    b.push_back({"head_w", head_w});
    return b;
}

uint64_t EncoderParams::digest() const { return params_digest(bundle()); }

EncoderParams EncoderParams::from_bundle(const ParamBundle& bundle) {
    if (bundle.empty() || bundle[0].name != "meta.config" || bundle[0].tensor.numel() != 8) {
        throw std::runtime_error("encoder bundle: missing meta.config entry");
    }
    const auto& meta = bundle[0].tensor.data();
    EncoderConfig cfg;
    cfg.d_e = static_cast<int>(meta[0]);
    cfg.layers = static_cast<int>(meta[1]);
    cfg.heads = static_cast<int>(meta[2]);
    cfg.d_ff = static_cast<int>(meta[3]);
    cfg.vocab_size = static_cast<int>(meta[4]);
    cfg.max_len = static_cast<int>(meta[5]);
    cfg.num_classes = static_cast<int>(meta[6]);
    EncoderParams p = EncoderParams::init(cfg, 0);

    size_t pos = 1;
    auto take = [&](const std::string& name, Tensor& dst) {
        if (pos >= bundle.size() || bundle[pos].name != name) {
            throw std::runtime_error("encoder bundle: expected tensor \"" + name + "\"");
        }
        if (bundle[pos].tensor.shape() != dst.shape()) {
            throw std::runtime_error("encoder bundle: tensor \"" + name + "\" has shape " +
                                     shape_str(bundle[pos].tensor.shape()) + ", expected " +
                                     shape_str(dst.shape()));
        }
        dst.data() = bundle[pos].tensor.data();
        ++pos;
    };
    take("token_table", p.token_table);
    take("pos_table", p.pos_table);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        EncoderLayer& layer = p.layers[l];
        take(prefix + "ln1_gain", layer.ln1_gain);
        take(prefix + "ln1_bias", layer.ln1_bias);
        for (size_t h = 0; h < layer.heads.size(); ++h) {
            const std::string hp = prefix + "h" + std::to_string(h) + ".";
            take(hp + "wq", layer.heads[h].wq);
            take(hp + "wk", layer.heads[h].wk);
            take(hp + "wv", layer.heads[h].wv);
            take(hp + "wo", layer.heads[h].wo);
        }
        take(prefix + "attn_bias", layer.attn_bias);
        take(prefix + "ln2_gain", layer.ln2_gain);
        take(prefix + "ln2_bias", layer.ln2_bias);
        take(prefix + "w_ff1", layer.w_ff1);
        take(prefix + "b_ff1", layer.b_ff1);
        take(prefix + "w_ff2", layer.w_ff2);
        take(prefix + "b_ff2", layer.b_ff2);
    }
    take("head_w", p.head_w);
    if (pos != bundle.size()) throw std::runtime_error("encoder bundle: unexpected extra tensors");
    if (meta[7] != 0.0) p.freeze();
    return p;
}

Tensor embed_tokens(Tape& tape, const EncoderParams& enc, const std::vector<int>& ids) {
    if (ids.empty()) throw std::runtime_error("embed: empty token sequence");
    return embed_rows(tape, enc.token_table, ids);
}

Tensor embed(Tape& tape, const EncoderParams& enc, const std::vector<int>& ids, int pos_offset) {
    const int budget = enc.config.max_len - pos_offset;
    if (pos_offset < 0 || budget < 1) {
        throw std::runtime_error("embed: position offset " + std::to_string(pos_offset) +
                                 " leaves no room under max_len " + std::to_string(enc.config.max_len));
    }
    std::vector<int> kept = ids;
    if (static_cast<int>(kept.size()) > budget) kept.resize(static_cast<size_t>(budget));
    if (kept.empty()) throw std::runtime_error("embed: empty token sequence");
    Tensor tok = embed_rows(tape, enc.token_table, kept);
    std::vector<int> positions(kept.size());
    for (size_t i = 0; i < positions.size(); ++i) positions[i] = pos_offset + static_cast<int>(i);
    Tensor pos = embed_rows(tape, enc.pos_table, positions);
    return add(tape, tok, pos);
}

Tensor self_attention(Tape& tape, const Tensor& x, const EncoderLayer& layer, const EncoderConfig& cfg) {
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    Tensor out;
    for (const AttentionHead& head : layer.heads) {
        Tensor q = matmul(tape, x, head.wq);
        Tensor k = matmul(tape, x, head.wk);
        Tensor v = matmul(tape, x, head.wv);
        Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_dh);
        Tensor weights = softmax_rows(tape, scores);
        Tensor mixed = matmul(tape, matmul(tape, weights, v), head.wo);
        out = out.defined() ? add(tape, out, mixed) : mixed;
    }
    return add_rowvec(tape, out, layer.attn_bias);
}

Tensor encode(Tape& tape, const EncoderParams& enc, const Tensor& z) {
    const EncoderConfig& cfg = enc.config;
    if (z.ndim() != 2 || z.dim(1) != cfg.d_e) {
        throw std::runtime_error("encode: expected [m," + std::to_string(cfg.d_e) + "] input, got " +
                                 shape_str(z.shape()));
    }
    if (z.dim(0) > cfg.max_len) {
        throw std::runtime_error("encode: sequence length " + std::to_string(z.dim(0)) + " exceeds max_len " +
                                 std::to_string(cfg.max_len));
    }
    Tensor h = z;
    for (const EncoderLayer& layer : enc.layers) {
        Tensor a = layer_norm(tape, h, layer.ln1_gain, layer.ln1_bias);
        h = add(tape, h, self_attention(tape, a, layer, cfg));
        Tensor f = layer_norm(tape, h, layer.ln2_gain, layer.ln2_bias);
        f = add_rowvec(tape, matmul(tape, f, layer.w_ff1), layer.b_ff1);
        f = gelu(tape, f);
        f = add_rowvec(tape, matmul(tape, f, layer.w_ff2), layer.b_ff2);
        h = add(tape, h, f);
    }
    return h;
}

Tensor encode_classify(Tape& tape, const EncoderParams& enc, const Tensor& z) {
    Tensor pooled = mean_rows(tape, encode(tape, enc, z));  // [1, d_e]
    Tensor logits = matmul(tape, pooled, enc.head_w);       // [1, K]
    return reshape(tape, logits, {enc.config.num_classes});
}

PretrainResult pretrain_backbone(const EncoderConfig& cfg, const TokenizedDataset& task, int steps,
                                 double lr, int batch_size, uint64_t seed) {
    cfg.validate();
    if (task.empty()) throw std::invalid_argument("pretrain: empty pretext task");
    if (task.num_classes != cfg.num_classes) {
        throw std::invalid_argument("pretrain: pretext label space " + std::to_string(task.num_classes) +
                                    " does not match encoder classes " + std::to_string(cfg.num_classes));
    }
    if (task.vocab_size > cfg.vocab_size) {
        throw std::invalid_argument("pretrain: pretext vocabulary exceeds encoder vocabulary");
    }
    if (batch_size < 1) throw std::invalid_argument("pretrain: batch_size must be >= 1");

    PretrainResult result;
    result.params = EncoderParams::init(cfg, seed);
    result.params.set_trainable(true);
    std::vector<Tensor> all = result.params.tensors();

    Rng order_rng(seed_combine(seed, 0xba7c4));
    Rng jitter_rng(seed_combine(seed, 0x0ff5e7));
    std::vector<int> perm(task.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    size_t cursor = perm.size();  // forces an initial shuffle

    for (int step = 0; step < steps; ++step) {
        Tape tape;
        Tensor total;
        int taken = 0;
        while (taken < batch_size) {
            if (cursor == perm.size()) {
                order_rng.shuffle(perm);
                cursor = 0;
            }
            const auto i = static_cast<size_t>(perm[cursor++]);
            ++taken;
            std::vector<int> ids = task.tokens(i);
            const int slack = cfg.max_len - static_cast<int>(ids.size());
            const int offset = slack > 0 ? jitter_rng.uniform_int(0, slack) : 0;
            Tensor logits = encode_classify(tape, result.params, embed(tape, result.params, ids, offset));
            Tensor loss = cross_entropy(tape, logits, task.labels[i]);
            total = total.defined() ? add(tape, total, loss) : loss;
        }
        Tensor mean_loss = scale(tape, total, 1.0 / static_cast<double>(taken));
        tape.backward(mean_loss);
        sgd_step(all, lr);
        result.step_losses.push_back(mean_loss.item());
    }
    result.params.freeze();
    return result;
}

}  // namespace feddpg
