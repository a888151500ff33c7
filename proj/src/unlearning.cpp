#include "feddpg/unlearning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace feddpg {

void UnlearnRequest::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("unlearn: lambda must be >= 0");
    if (forget_indices.empty() && (forget_fraction <= 0.0 || forget_fraction > 1.0)) {
        throw std::invalid_argument("unlearn: forget_fraction must be in (0,1]");
    }
    if (unlearn_epochs < 0) throw std::invalid_argument("unlearn: unlearn_epochs must be >= 0");
}

int relabel_one(int original_label, int num_classes, Rng& rng) {
    if (num_classes < 2) {
        throw std::invalid_argument("relabel: unlearning impossible with a single class");
    }
    const int draw = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(num_classes - 1)));
    return draw >= original_label ? draw + 1 : draw;
}

std::vector<RelabeledSample> relabel(const std::vector<int>& shard_indices, const TokenizedDataset& shard,
                                     int num_classes, Rng& rng) {
    std::vector<RelabeledSample> out;
    out.reserve(shard_indices.size());
    for (int idx : shard_indices) {
        const int original = shard.labels[static_cast<size_t>(idx)];
        out.push_back({idx, original, relabel_one(original, num_classes, rng)});
    }
    return out;
}

UnlearnSets draw_unlearn_sets(const TokenizedDataset& shard, const UnlearnRequest& request) {
    request.validate();
    const int n = static_cast<int>(shard.size());
    if (n == 0) throw std::invalid_argument("unlearn: client shard is empty");

    Rng rng(seed_combine(request.seed, 0xf09e7, static_cast<uint64_t>(request.client_id)));
    std::vector<int> forget = request.forget_indices;
    if (forget.empty()) {
        const int count = std::max<int>(1, static_cast<int>(std::llround(request.forget_fraction * n)));
        forget = rng.sample_without_replacement(n, std::min(count, n));
    } else {
        for (int idx : forget) {
            if (idx < 0 || idx >= n) {
                throw std::invalid_argument("unlearn: forget index " + std::to_string(idx) +
                                            " outside shard of size " + std::to_string(n));
            }
        }
        std::sort(forget.begin(), forget.end());
        forget.erase(std::unique(forget.begin(), forget.end()), forget.end());
    }
    if (forget.empty()) throw std::invalid_argument("unlearn: forget set is empty");

    std::vector<bool> in_forget(static_cast<size_t>(n), false);
    for (int idx : forget) in_forget[static_cast<size_t>(idx)] = true;
    std::vector<int> rest;
    for (int i = 0; i < n; ++i) {
        if (!in_forget[static_cast<size_t>(i)]) rest.push_back(i);
    }
    int retain_count = request.retain_sample_count < 0 ? static_cast<int>(forget.size())
                                                       : request.retain_sample_count;
    retain_count = std::min<int>(retain_count, static_cast<int>(rest.size()));

    UnlearnSets sets;
    if (retain_count > 0) {
        const auto pick = rng.sample_without_replacement(static_cast<int>(rest.size()), retain_count);
        for (int p : pick) sets.retain.push_back(rest[static_cast<size_t>(p)]);
    }
    sets.forget = relabel(forget, shard, shard.num_classes, rng);
    return sets;
}

Tensor unlearn_loss(Tape& tape, const TokenizedDataset& shard, const UnlearnSets& sets, double lambda,
                    const GeneratorParams& gen, const EncoderParams& enc) {
    if (sets.forget.empty()) throw std::invalid_argument("unlearn_loss: forget set is empty");
    Tensor total;
    for (int idx : sets.retain) {
        const auto i = static_cast<size_t>(idx);
        Tensor loss = cross_entropy(tape, sample_logits(tape, gen, enc, shard.tokens(i)), shard.labels[i]);
        total = total.defined() ? add(tape, total, loss) : loss;
    }
    if (lambda != 0.0) {
        Tensor forget_total;
        for (const RelabeledSample& s : sets.forget) {
            const auto i = static_cast<size_t>(s.shard_index);
            Tensor loss = cross_entropy(tape, sample_logits(tape, gen, enc, shard.tokens(i)), s.new_label);
            forget_total = forget_total.defined() ? add(tape, forget_total, loss) : loss;
        }
        Tensor weighted = scale(tape, forget_total, lambda);
        total = total.defined() ? add(tape, total, weighted) : weighted;
    }
    if (!total.defined()) {
        // lambda == 0 with an empty retain set: nothing to optimise
        total = Tensor::scalar(0.0);
    }
    return total;
}

GeneratorParams local_unlearn(const ClientState& client, const GeneratorParams& global,
                              const EncoderParams& enc, const UnlearnRequest& request,
                              UnlearnSets* sets_out) {
    request.validate();
    UnlearnSets sets = draw_unlearn_sets(client.shard, request);
    GeneratorParams local = global.clone();
    for (int epoch = 0; epoch < request.unlearn_epochs; ++epoch) {
        Tape tape;
        Tensor loss = unlearn_loss(tape, client.shard, sets, request.lambda, local, enc);
        tape.backward(loss);
        sgd_step(local, request.lr);
    }
    if (sets_out != nullptr) *sets_out = std::move(sets);
    return local;
}

void server_replace(ServerState& server, const GeneratorParams& unlearned) {
    const auto current = server.global_generator.trainable();
    const auto incoming = unlearned.trainable();
    if (current.size() != incoming.size()) {
        throw std::runtime_error("server_replace: parameter structure mismatch");
    }
    for (size_t k = 0; k < current.size(); ++k) {
        if (current[k].shape() != incoming[k].shape()) {
            throw std::runtime_error("server_replace: tensor " + std::to_string(k) + " has shape " +
                                     shape_str(incoming[k].shape()) + ", expected " +
                                     shape_str(current[k].shape()));
        }
    }
    server.global_generator = unlearned.clone();
    server.round += 1;
}

UnlearnReport evaluate_forgetting(const GeneratorParams& before, const GeneratorParams& after,
                                  const EncoderParams& enc, const TokenizedDataset& forget_set,
                                  const TokenizedDataset& retain_test,
                                  const std::vector<const ClientState*>& per_client_tests) {
    UnlearnReport report;
    report.forget_size = static_cast<int>(forget_set.size());
    report.forget_before = evaluate_accuracy(before, enc, forget_set);
    report.forget_after = evaluate_accuracy(after, enc, forget_set);
    report.global_before = evaluate_accuracy(before, enc, retain_test);
    report.global_after = evaluate_accuracy(after, enc, retain_test);
    for (const ClientState* client : per_client_tests) {
        ClientAccuracy acc;
        acc.id = client->id;
        acc.before = evaluate_accuracy(before, enc, client->shard);
        acc.after = evaluate_accuracy(after, enc, client->shard);
        report.clients.push_back(acc);
    }
    return report;
}

}  // namespace feddpg
