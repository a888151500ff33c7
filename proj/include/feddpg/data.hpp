#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace feddpg {

// Token-id layout: 0 is the pad id, ids [1, 1+K*s) are per-class signal
// tokens in K contiguous blocks of s, everything above is the shared noise
// pool. Each position carries a class-signal token with probability
// signal_rate, otherwise a noise token.
struct SyntheticTaskSpec {
    int num_classes = 2;
    int vocab_size = 128;
    int seq_len_min = 10;
    int seq_len_max = 20;
    int signal_tokens_per_class = 8;
    double signal_rate = 0.3;
    uint64_t seed = 1;

    void validate() const;
    int pad_id() const { return 0; }
    // [lo, hi) of class cls's signal block
    std::pair<int, int> signal_range(int cls) const;
    std::pair<int, int> noise_range() const;
    int token_class(int token) const;  // -1 for noise/pad
};

struct TokenizedDataset {
    std::vector<std::vector<int>> sequences;  // possibly right-padded
    std::vector<int> lengths;                 // real length, trailing pads excluded
    std::vector<int> labels;
    int vocab_size = 0;
    int num_classes = 0;
    int pad_id = 0;
    std::optional<SyntheticTaskSpec> spec;  // generative provenance, when known

    size_t size() const { return sequences.size(); }
    bool empty() const { return sequences.empty(); }
    // unpadded token span of sample i
    std::vector<int> tokens(size_t i) const {
        return {sequences[i].begin(), sequences[i].begin() + lengths[i]};
    }
    int label(size_t i) const { return labels[i]; }

    void validate() const;
    uint64_t digest() const;

    TokenizedDataset subset(const std::vector<int>& indices) const;
};

TokenizedDataset generate_synthetic(const SyntheticTaskSpec& spec, int n_samples);

// right-pad to max_len, truncate overlong tails; lengths mark real content
TokenizedDataset tokenize_and_pad(const std::vector<std::vector<int>>& raw, const std::vector<int>& labels,
                                  int max_len, int pad_id, int vocab_size, int num_classes);

TokenizedDataset load_jsonl(const std::string& path, int vocab_size, int num_classes);
void save_jsonl(const TokenizedDataset& ds, const std::string& path);

// Exact likelihood-ratio classifier for the known generative process; the
// achievable ceiling for any model on the same spec. Ties toward class 0.
int bayes_predict(const SyntheticTaskSpec& spec, const std::vector<int>& tokens);
double bayes_accuracy(const SyntheticTaskSpec& spec, const TokenizedDataset& ds);

}  // namespace feddpg
