#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feddpg/data.hpp"
#include "feddpg/encoder.hpp"
#include "feddpg/serialize.hpp"
#include "feddpg/tensor.hpp"

namespace feddpg {

enum class InputMode { prompt_and_text, text_only, prompt_only, static_prompt };

InputMode input_mode_from_string(const std::string& s);
std::string to_string(InputMode mode);

enum class Activation { tanh, gelu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation act);

struct GeneratorConfig {
    int d_e = 32;
    int hidden = 10;
    int prompt_len = 5;
    Activation activation = Activation::tanh;
    InputMode input_mode = InputMode::prompt_and_text;

    void validate() const;
    int d_out() const { return d_e * prompt_len; }
    bool uses_prompts() const { return input_mode != InputMode::text_only; }
    bool uses_mlp() const { return input_mode != InputMode::static_prompt; }
};

// theta_P: the only trainable (and only transmitted) parameters in the whole
// system. MLP modes hold the two-layer generator; static_prompt holds a fixed
// trainable prompt matrix instead (the classic soft-prompt baseline).
struct GeneratorParams {
    GeneratorConfig config;
    Tensor w1, b1;      // [d_e, hidden], [hidden]
    Tensor w2, b2;      // [hidden, d_e*|P|], [d_e*|P|]
    Tensor p_static;    // [|P|, d_e], static_prompt mode only

    static GeneratorParams init(const GeneratorConfig& cfg, uint64_t seed);

    GeneratorParams clone() const;  // deep copy, fresh gradient state
    std::vector<Tensor> trainable() const;  // handles share storage

    ParamBundle bundle() const;
    static GeneratorParams from_bundle(const ParamBundle& bundle);
    uint64_t digest() const;
    size_t transmitted_bytes() const;
};

// trainable parameter count of the MLP generator:
// d_e*h + h + h*d_e*|P| + d_e*|P|
int64_t param_count(const GeneratorConfig& cfg);

// exact column means over non-pad rows; bit-invariant under row permutation
Tensor mean_embedding(Tape& tape, const Tensor& x);

// flat = act(e*W1 + b1)*W2 + b2, reshaped row-major to [|P|, d_e]
Tensor generate(Tape& tape, const GeneratorParams& gen, const Tensor& mean_embed);

// z = [P; x] (or x / P alone depending on mode); on overflow the text tail
// is truncated, never the prompts
Tensor compose(Tape& tape, const Tensor& prompts, const Tensor& x, InputMode mode, int max_len);

// per-sample logits through the full prompt pipeline
Tensor sample_logits(Tape& tape, const GeneratorParams& gen, const EncoderParams& enc,
                     const std::vector<int>& tokens);

struct BatchStats {
    Tensor loss;  // summed over the batch
    int correct = 0;
};

BatchStats forward_loss(Tape& tape, const TokenizedDataset& ds, const std::vector<int>& indices,
                        const GeneratorParams& gen, const EncoderParams& enc);

int predict(const GeneratorParams& gen, const EncoderParams& enc, const std::vector<int>& tokens);

double evaluate_accuracy(const GeneratorParams& gen, const EncoderParams& enc, const TokenizedDataset& ds);

void sgd_step(GeneratorParams& gen, double lr);

}  // namespace feddpg
