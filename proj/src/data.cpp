#include "feddpg/data.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "feddpg/digest.hpp"
#include "feddpg/rng.hpp"

namespace feddpg {

using nlohmann::json;

void SyntheticTaskSpec::validate() const {
    if (num_classes < 1) throw std::invalid_argument("task: num_classes must be >= 1");
    if (signal_tokens_per_class < 1) throw std::invalid_argument("task: signal_tokens_per_class must be >= 1");
    if (seq_len_min < 1 || seq_len_max < seq_len_min) {
        throw std::invalid_argument("task: invalid sequence length range [" + std::to_string(seq_len_min) +
                                    ", " + std::to_string(seq_len_max) + "]");
    }
    if (signal_rate < 0.0 || signal_rate > 1.0) throw std::invalid_argument("task: signal_rate outside [0,1]");
    const int first_noise = 1 + num_classes * signal_tokens_per_class;
    if (vocab_size <= first_noise) {
        throw std::invalid_argument("task: vocab_size " + std::to_string(vocab_size) +
                                    " leaves no noise tokens after pad + " + std::to_string(num_classes) +
                                    " signal blocks of " + std::to_string(signal_tokens_per_class));
    }
}

std::pair<int, int> SyntheticTaskSpec::signal_range(int cls) const {
    const int lo = 1 + cls * signal_tokens_per_class;
    return {lo, lo + signal_tokens_per_class};
}

std::pair<int, int> SyntheticTaskSpec::noise_range() const {
    return {1 + num_classes * signal_tokens_per_class, vocab_size};
}

int SyntheticTaskSpec::token_class(int token) const {
    if (token < 1 || token >= 1 + num_classes * signal_tokens_per_class) return -1;
    return (token - 1) / signal_tokens_per_class;
}

void TokenizedDataset::validate() const {
    if (sequences.size() != labels.size() || sequences.size() != lengths.size()) {
        throw std::invalid_argument("dataset: sequences/labels/lengths sizes disagree");
    }
    for (size_t i = 0; i < sequences.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw std::invalid_argument("dataset: sample " + std::to_string(i) + " label " +
                                        std::to_string(labels[i]) + " outside " +
                                        std::to_string(num_classes) + " classes");
        }
        for (int id : sequences[i]) {
            if (id < 0 || id >= vocab_size) {
                throw std::invalid_argument("dataset: sample " + std::to_string(i) + " token " +
                                            std::to_string(id) + " outside vocabulary of size " +
                                            std::to_string(vocab_size));
            }
        }
    }
}

uint64_t TokenizedDataset::digest() const {
    Digest d;
    d.update_i64(vocab_size);
    d.update_i64(num_classes);
    d.update_i64(static_cast<int64_t>(sequences.size()));
    for (size_t i = 0; i < sequences.size(); ++i) {
        d.update_i64(labels[i]);
        d.update_i64(lengths[i]);
        for (int id : sequences[i]) d.update_i64(id);
    }
    return d.value();
}

TokenizedDataset TokenizedDataset::subset(const std::vector<int>& indices) const {
    TokenizedDataset out;
    out.vocab_size = vocab_size;
    out.num_classes = num_classes;
    out.pad_id = pad_id;
    out.spec = spec;
    for (int i : indices) {
        out.sequences.push_back(sequences[static_cast<size_t>(i)]);
        out.lengths.push_back(lengths[static_cast<size_t>(i)]);
        out.labels.push_back(labels[static_cast<size_t>(i)]);
    }
    return out;
}

TokenizedDataset generate_synthetic(const SyntheticTaskSpec& spec, int n_samples) {
    spec.validate();
    Rng rng(spec.seed);
    TokenizedDataset ds;
    ds.vocab_size = spec.vocab_size;
    ds.num_classes = spec.num_classes;
    ds.pad_id = spec.pad_id();
    ds.spec = spec;
    const auto [noise_lo, noise_hi] = spec.noise_range();
    for (int s = 0; s < n_samples; ++s) {
        const int cls = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(spec.num_classes)));
        const int len = rng.uniform_int(spec.seq_len_min, spec.seq_len_max);
        std::vector<int> seq(static_cast<size_t>(len));
        const auto [sig_lo, sig_hi] = spec.signal_range(cls);
        for (int& tok : seq) {
            if (rng.bernoulli(spec.signal_rate)) {
                tok = rng.uniform_int(sig_lo, sig_hi - 1);
            } else {
                tok = rng.uniform_int(noise_lo, noise_hi - 1);
            }
        }
        ds.sequences.push_back(std::move(seq));
        ds.lengths.push_back(len);
        ds.labels.push_back(cls);
    }
    return ds;
}

namespace {

int unpadded_length(const std::vector<int>& seq, int pad_id) {
    int n = static_cast<int>(seq.size());
    while (n > 0 && seq[static_cast<size_t>(n - 1)] == pad_id) --n;
    return n;
}

}  // namespace

TokenizedDataset tokenize_and_pad(const std::vector<std::vector<int>>& raw, const std::vector<int>& labels,
                                  int max_len, int pad_id, int vocab_size, int num_classes) {
    if (raw.size() != labels.size()) throw std::invalid_argument("tokenize_and_pad: sequence/label count mismatch");
    if (pad_id < 0 || pad_id >= vocab_size) throw std::invalid_argument("tokenize_and_pad: pad_id not in vocabulary");
    TokenizedDataset ds;
    ds.vocab_size = vocab_size;
    ds.num_classes = num_classes;
    ds.pad_id = pad_id;
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].empty()) {
            throw std::invalid_argument("tokenize_and_pad: sample " + std::to_string(i) + " is empty");
        }
        std::vector<int> seq = raw[i];
        if (static_cast<int>(seq.size()) > max_len) seq.resize(static_cast<size_t>(max_len));
        const int real = unpadded_length(seq, pad_id);
        if (real == 0) {
            throw std::invalid_argument("tokenize_and_pad: sample " + std::to_string(i) + " is all padding");
        }
        seq.resize(static_cast<size_t>(max_len), pad_id);
        ds.sequences.push_back(std::move(seq));
        ds.lengths.push_back(real);
        ds.labels.push_back(labels[i]);
    }
    ds.validate();
    return ds;
}

TokenizedDataset load_jsonl(const std::string& path, int vocab_size, int num_classes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);
    TokenizedDataset ds;
    ds.vocab_size = vocab_size;
    ds.num_classes = num_classes;
    ds.pad_id = 0;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("tokens") || !obj.contains("label")) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected object with \"tokens\" and \"label\"");
        }
        std::vector<int> seq;
        try {
            seq = obj["tokens"].get<std::vector<int>>();
        } catch (const json::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": \"tokens\" must be an id list");
        }
        if (!obj["label"].is_number_integer()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": \"label\" must be an integer");
        }
        const int label = obj["label"].get<int>();
        if (label < 0 || label >= num_classes) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                                     " outside " + std::to_string(num_classes) + " classes");
        }
        for (int id : seq) {
            if (id < 0 || id >= vocab_size) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": token " + std::to_string(id) +
                                         " outside vocabulary of size " + std::to_string(vocab_size));
            }
        }
        ds.lengths.push_back(unpadded_length(seq, ds.pad_id));
        ds.sequences.push_back(std::move(seq));
        ds.labels.push_back(label);
    }
    return ds;
}

void save_jsonl(const TokenizedDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_jsonl: cannot open " + path + " for writing");
    for (size_t i = 0; i < ds.size(); ++i) {
        json obj;
        obj["tokens"] = ds.sequences[i];
        obj["label"] = ds.labels[i];
        out << obj.dump() << "\n";
    }
}

int bayes_predict(const SyntheticTaskSpec& spec, const std::vector<int>& tokens) {
    const auto [noise_lo, noise_hi] = spec.noise_range();
    const double log_sig = std::log(spec.signal_rate) - std::log(static_cast<double>(spec.signal_tokens_per_class));
    const double log_noise =
        std::log(1.0 - spec.signal_rate) - std::log(static_cast<double>(noise_hi - noise_lo));
    const double neg_inf = -std::numeric_limits<double>::infinity();
    int best = 0;
    double best_ll = neg_inf;
    for (int c = 0; c < spec.num_classes; ++c) {
        double ll = 0.0;
        for (int tok : tokens) {
            const int tc = spec.token_class(tok);
            if (tc == c) {
                ll += log_sig;
            } else if (tc >= 0) {
                ll = neg_inf;  // other classes' signal tokens never occur under c
                break;
            } else {
                ll += log_noise;
            }
        }
        if (c == 0 || ll > best_ll) {
            best = c;
            best_ll = ll;
        }
    }
    return best;
}

double bayes_accuracy(const SyntheticTaskSpec& spec, const TokenizedDataset& ds) {
    if (ds.empty()) throw std::invalid_argument("bayes_accuracy: empty dataset");
    size_t correct = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        if (bayes_predict(spec, ds.tokens(i)) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace feddpg
