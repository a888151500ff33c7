#include "feddpg/generator.hpp"

#include <cmath>
#include <stdexcept>

namespace feddpg {

InputMode input_mode_from_string(const std::string& s) {
    if (s == "prompt_and_text") return InputMode::prompt_and_text;
    if (s == "text_only") return InputMode::text_only;
    if (s == "prompt_only") return InputMode::prompt_only;
    if (s == "static_prompt") return InputMode::static_prompt;
    throw std::invalid_argument("unknown input_mode \"" + s + "\"");
}

std::string to_string(InputMode mode) {
    switch (mode) {
        case InputMode::prompt_and_text: return "prompt_and_text";
        case InputMode::text_only: return "text_only";
        case InputMode::prompt_only: return "prompt_only";
        case InputMode::static_prompt: return "static_prompt";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "gelu") return Activation::gelu;
    throw std::invalid_argument("unknown activation \"" + s + "\"");
}

std::string to_string(Activation act) { return act == Activation::tanh ? "tanh" : "gelu"; }

void GeneratorConfig::validate() const {
    if (d_e < 1) throw std::invalid_argument("generator: d_e must be >= 1");
    if (prompt_len < 1 && input_mode != InputMode::text_only) {
        throw std::invalid_argument("generator: prompt_len must be >= 1 in prompt modes");
    }
    if (prompt_len < 0) throw std::invalid_argument("generator: prompt_len must be >= 0");
    if (uses_mlp() && hidden < 1) {
        throw std::invalid_argument("generator: hidden width must be >= 1, got " + std::to_string(hidden));
    }
}

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed_combine(seed, 0x9e4e6a));
    GeneratorParams p;
    p.config = cfg;
    if (cfg.uses_mlp()) {
        const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.d_e));
        const double s_h = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
        p.w1 = Tensor::uniform({cfg.d_e, cfg.hidden}, -s_in, s_in, rng);
        p.b1 = Tensor::uniform({cfg.hidden}, -s_in, s_in, rng);
        p.w2 = Tensor::uniform({cfg.hidden, cfg.d_out()}, -s_h, s_h, rng);
        p.b2 = Tensor::uniform({cfg.d_out()}, -s_h, s_h, rng);
    } else {
        const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.d_e));
        p.p_static = Tensor::uniform({cfg.prompt_len, cfg.d_e}, -s_in, s_in, rng);
    }
    for (Tensor& t : p.trainable()) t.set_requires_grad(true);
    return p;
}

GeneratorParams GeneratorParams::clone() const {
    GeneratorParams p;
    p.config = config;
    if (w1.defined()) p.w1 = w1.clone();
    if (b1.defined()) p.b1 = b1.clone();
    if (w2.defined()) p.w2 = w2.clone();
    if (b2.defined()) p.b2 = b2.clone();
    if (p_static.defined()) p.p_static = p_static.clone();
    return p;
}

std::vector<Tensor> GeneratorParams::trainable() const {
    if (config.uses_mlp()) return {w1, b1, w2, b2};
    return {p_static};
}

ParamBundle GeneratorParams::bundle() const {
    ParamBundle b;
    const std::vector<double> meta{static_cast<double>(config.d_e),
                                   static_cast<double>(config.hidden),
                                   static_cast<double>(config.prompt_len),
                                   static_cast<double>(static_cast<int>(config.activation)),
                                   static_cast<double>(static_cast<int>(config.input_mode))};
    b.push_back({"meta.config", Tensor::from({5}, meta)});
    if (config.uses_mlp()) {
        b.push_back({"w1", w1});
        b.push_back({"b1", b1});
        b.push_back({"w2", w2});
        b.push_back({"b2", b2});
    } else {
        b.push_back({"p_static", p_static});
    }
    return b;
}

GeneratorParams GeneratorParams::from_bundle(const ParamBundle& bundle) {
    if (bundle.empty() || bundle[0].name != "meta.config" || bundle[0].tensor.numel() != 5) {
        throw std::runtime_error("generator bundle: missing meta.config entry");
    }
    const auto& meta = bundle[0].tensor.data();
    GeneratorConfig cfg;
    cfg.d_e = static_cast<int>(meta[0]);
    cfg.hidden = static_cast<int>(meta[1]);
    cfg.prompt_len = static_cast<int>(meta[2]);
    cfg.activation = static_cast<Activation>(static_cast<int>(meta[3]));
    cfg.input_mode = static_cast<InputMode>(static_cast<int>(meta[4]));
    GeneratorParams p = GeneratorParams::init(cfg, 0);
    size_t pos = 1;
    auto take = [&](const std::string& name, Tensor& dst) {
        if (pos >= bundle.size() || bundle[pos].name != name) {
            throw std::runtime_error("generator bundle: expected tensor \"" + name + "\"");
        }
        if (bundle[pos].tensor.shape() != dst.shape()) {
            throw std::runtime_error("generator bundle: tensor \"" + name + "\" has shape " +
                                     shape_str(bundle[pos].tensor.shape()) + ", expected " +
                                     shape_str(dst.shape()));
        }
        dst.data() = bundle[pos].tensor.data();
        ++pos;
    };
    if (cfg.uses_mlp()) {
        take("w1", p.w1);
        take("b1", p.b1);
        take("w2", p.w2);
        take("b2", p.b2);
    } else {
        take("p_static", p.p_static);
    }
    if (pos != bundle.size()) throw std::runtime_error("generator bundle: unexpected extra tensors");
    return p;
}

uint64_t GeneratorParams::digest() const { return params_digest(bundle()); }

size_t GeneratorParams::transmitted_bytes() const { return serialized_size(bundle()); }

int64_t param_count(const GeneratorConfig& cfg) {
    if (!cfg.uses_mlp()) {
        throw std::invalid_argument("param_count: defined for the MLP generator only");
    }
    cfg.validate();
    const int64_t d = cfg.d_e, h = cfg.hidden, p = cfg.prompt_len;
    return d * h + h + h * d * p + d * p;
}

Tensor mean_embedding(Tape& tape, const Tensor& x) {
    if (x.ndim() != 2) throw std::runtime_error("mean_embedding: expected [n,d_e] input, got " + shape_str(x.shape()));
    if (x.dim(0) == 0) throw std::runtime_error("mean_embedding: no non-pad rows in input");
    return mean_rows_exact(tape, x);
}

Tensor generate(Tape& tape, const GeneratorParams& gen, const Tensor& mean_embed) {
    const GeneratorConfig& cfg = gen.config;
    if (!cfg.uses_mlp()) throw std::runtime_error("generate: static_prompt mode has no generator network");
    if (mean_embed.numel() != cfg.d_e) {
        throw std::runtime_error("generate: expected mean embedding of size " + std::to_string(cfg.d_e) +
                                 ", got " + shape_str(mean_embed.shape()));
    }
    Tensor row = reshape(tape, mean_embed, {1, cfg.d_e});
    Tensor h = add_rowvec(tape, matmul(tape, row, gen.w1), gen.b1);
    h = cfg.activation == Activation::tanh ? tanh_op(tape, h) : gelu(tape, h);
    Tensor flat = add_rowvec(tape, matmul(tape, h, gen.w2), gen.b2);  // [1, d_e*|P|]
    return reshape(tape, flat, {cfg.prompt_len, cfg.d_e});
}

Tensor compose(Tape& tape, const Tensor& prompts, const Tensor& x, InputMode mode, int max_len) {
    if (mode == InputMode::text_only) return x;
    if (mode == InputMode::prompt_only) return prompts;
    if (prompts.ndim() != 2 || x.ndim() != 2 || prompts.dim(1) != x.dim(1)) {
        throw std::runtime_error("compose: prompt/text width mismatch " + shape_str(prompts.shape()) +
                                 " vs " + shape_str(x.shape()));
    }
    if (prompts.dim(0) > max_len) {
        throw std::runtime_error("compose: " + std::to_string(prompts.dim(0)) +
                                 " prompt rows exceed max_len " + std::to_string(max_len));
    }
    Tensor text = x;
    const int64_t budget = max_len - prompts.dim(0);
    if (x.dim(0) > budget) text = slice_rows(tape, x, budget);  // keep prompts, drop text tail
    return concat_rows(tape, prompts, text);
}

Tensor sample_logits(Tape& tape, const GeneratorParams& gen, const EncoderParams& enc,
                     const std::vector<int>& tokens) {
    const GeneratorConfig& cfg = gen.config;
    const int max_len = enc.config.max_len;
    if (cfg.input_mode == InputMode::text_only) {
        Tensor x = embed(tape, enc, tokens, 0);
        return encode_classify(tape, enc, compose(tape, Tensor(), x, cfg.input_mode, max_len));
    }
    // prompts occupy positions 0..|P|-1, real tokens are shifted past them
    std::vector<int> kept = tokens;
    const int budget = max_len - cfg.prompt_len;
    if (budget < 1) throw std::runtime_error("sample_logits: prompt length leaves no room for text");
    if (static_cast<int>(kept.size()) > budget) kept.resize(static_cast<size_t>(budget));
    Tensor prompts;
    if (cfg.input_mode == InputMode::static_prompt) {
        prompts = gen.p_static;
    } else {
        Tensor mean = mean_embedding(tape, embed_tokens(tape, enc, kept));
        prompts = generate(tape, gen, mean);
    }
    if (cfg.input_mode == InputMode::prompt_only) {
        return encode_classify(tape, enc, prompts);
    }
    Tensor x = embed(tape, enc, kept, cfg.prompt_len);
    return encode_classify(tape, enc, compose(tape, prompts, x, cfg.input_mode, max_len));
}

BatchStats forward_loss(Tape& tape, const TokenizedDataset& ds, const std::vector<int>& indices,
                        const GeneratorParams& gen, const EncoderParams& enc) {
    if (indices.empty()) throw std::runtime_error("forward_loss: empty batch");
    BatchStats stats;
    for (int idx : indices) {
        const auto i = static_cast<size_t>(idx);
        Tensor logits = sample_logits(tape, gen, enc, ds.tokens(i));
        if (argmax(logits) == ds.labels[i]) ++stats.correct;
        Tensor loss = cross_entropy(tape, logits, ds.labels[i]);
        stats.loss = stats.loss.defined() ? add(tape, stats.loss, loss) : loss;
    }
    return stats;
}

int predict(const GeneratorParams& gen, const EncoderParams& enc, const std::vector<int>& tokens) {
    Tape tape;
    tape.set_recording(false);
    return argmax(sample_logits(tape, gen, enc, tokens));
}

double evaluate_accuracy(const GeneratorParams& gen, const EncoderParams& enc, const TokenizedDataset& ds) {
    if (ds.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    size_t correct = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        if (predict(gen, enc, ds.tokens(i)) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void sgd_step(GeneratorParams& gen, double lr) {
    auto params = gen.trainable();
    sgd_step(params, lr);
}

}  // namespace feddpg
