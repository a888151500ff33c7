#include "feddpg/federation.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <iostream>
#include <stdexcept>

namespace feddpg {

PartitionScheme partition_scheme_from_string(const std::string& s) {
    if (s == "iid") return PartitionScheme::iid;
    if (s == "label_skew") return PartitionScheme::label_skew;
    throw std::invalid_argument("unknown partition scheme \"" + s + "\"");
}

std::string to_string(PartitionScheme s) { return s == PartitionScheme::iid ? "iid" : "label_skew"; }

void RoundConfig::validate() const {
    if (num_clients < 1) throw std::invalid_argument("round: num_clients must be >= 1");
    if (selection_ratio <= 0.0 || selection_ratio > 1.0) {
        throw std::invalid_argument("round: selection_ratio must be in (0,1]");
    }
    if (selected_count() < 1) {
        throw std::invalid_argument("round: selection_ratio " + std::to_string(selection_ratio) +
                                    " selects no client out of " + std::to_string(num_clients));
    }
    if (local_epochs < 0) throw std::invalid_argument("round: local_epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("round: batch_size must be >= 1");
}

int RoundConfig::selected_count() const {
    return static_cast<int>(std::llround(selection_ratio * num_clients));
}

std::vector<std::vector<int>> partition_indices(const TokenizedDataset& ds, int num_clients,
                                                PartitionScheme scheme, double alpha, uint64_t seed) {
    if (num_clients < 1) throw std::invalid_argument("partition: num_clients must be >= 1");
    const int n = static_cast<int>(ds.size());
    if (n < num_clients) {
        throw std::invalid_argument("partition: dataset of " + std::to_string(n) +
                                    " samples cannot cover " + std::to_string(num_clients) + " clients");
    }
    Rng rng(seed_combine(seed, 0x9a27));
    std::vector<std::vector<int>> shards(static_cast<size_t>(num_clients));

    if (scheme == PartitionScheme::iid) {
        std::vector<int> perm(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
        rng.shuffle(perm);
        const int base = n / num_clients;
        const int rem = n % num_clients;
        size_t pos = 0;
        for (int c = 0; c < num_clients; ++c) {
            const int take = base + (c < rem ? 1 : 0);
            shards[static_cast<size_t>(c)].assign(perm.begin() + static_cast<long>(pos),
                                                  perm.begin() + static_cast<long>(pos) + take);
            pos += static_cast<size_t>(take);
        }
        return shards;
    }

    if (alpha <= 0.0) throw std::invalid_argument("partition: label_skew needs alpha > 0");
    // per class: shuffle its indices and split by Dirichlet(alpha) proportions
    // (largest-remainder rounding keeps the split exact)
    for (int cls = 0; cls < ds.num_classes; ++cls) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i) {
            if (ds.labels[static_cast<size_t>(i)] == cls) members.push_back(i);
        }
        if (members.empty()) continue;
        rng.shuffle(members);
        const auto weights = rng.dirichlet(alpha, num_clients);
        const int m = static_cast<int>(members.size());
        std::vector<int> counts(static_cast<size_t>(num_clients));
        std::vector<std::pair<double, int>> fractions;
        int assigned = 0;
        for (int c = 0; c < num_clients; ++c) {
            const double exact = weights[static_cast<size_t>(c)] * m;
            counts[static_cast<size_t>(c)] = static_cast<int>(std::floor(exact));
            assigned += counts[static_cast<size_t>(c)];
            fractions.push_back({exact - std::floor(exact), c});
        }
        std::sort(fractions.begin(), fractions.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int r = 0; r < m - assigned; ++r) ++counts[static_cast<size_t>(fractions[static_cast<size_t>(r)].second)];
        size_t pos = 0;
        for (int c = 0; c < num_clients; ++c) {
            for (int k = 0; k < counts[static_cast<size_t>(c)]; ++k) {
                shards[static_cast<size_t>(c)].push_back(members[pos++]);
            }
        }
    }
    return shards;
}

std::vector<TokenizedDataset> partition(const TokenizedDataset& ds, int num_clients, PartitionScheme scheme,
                                        double alpha, uint64_t seed) {
    std::vector<TokenizedDataset> out;
    for (const auto& idx : partition_indices(ds, num_clients, scheme, alpha, seed)) {
        out.push_back(ds.subset(idx));
    }
    return out;
}

std::vector<int> select_clients(int num_clients, double ratio, uint64_t seed, int round) {
    const int count = static_cast<int>(std::llround(ratio * num_clients));
    if (count < 1 || count > num_clients) {
        throw std::invalid_argument("select_clients: ratio " + std::to_string(ratio) + " selects " +
                                    std::to_string(count) + " of " + std::to_string(num_clients));
    }
    Rng rng(seed_combine(seed, 0x5e1ec7, static_cast<uint64_t>(round)));
    return rng.sample_without_replacement(num_clients, count);
}

LocalTrainResult local_train(const ClientState& client, const GeneratorParams& global,
                             const EncoderParams& enc, const RoundConfig& cfg, int round) {
    LocalTrainResult result;
    result.params = global.clone();
    result.samples = static_cast<int>(client.shard.size());
    if (client.shard.empty()) return result;

    Rng order(seed_combine(client.seed_base, static_cast<uint64_t>(round), 0x10ca1));
    std::vector<int> perm(client.shard.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);

    double loss_total = 0.0;
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        order.shuffle(perm);
        for (size_t start = 0; start < perm.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(perm.size(), start + static_cast<size_t>(cfg.batch_size));
            const std::vector<int> batch(perm.begin() + static_cast<long>(start),
                                         perm.begin() + static_cast<long>(stop));
            Tape tape;
            BatchStats stats = forward_loss(tape, client.shard, batch, result.params, enc);
            loss_total += stats.loss.item();
            tape.backward(stats.loss);
            sgd_step(result.params, cfg.lr);
        }
    }
    if (cfg.local_epochs > 0) {
        result.mean_sample_loss = loss_total / (static_cast<double>(cfg.local_epochs) * result.samples);
    }
    return result;
}

GeneratorParams aggregate(const std::vector<GeneratorParams>& updates, const std::vector<int>& ids) {
    if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
    auto client_name = [&](size_t i) {
        return ids.size() == updates.size() ? std::to_string(ids[i]) : ("#" + std::to_string(i));
    };
    GeneratorParams out = updates.front().clone();
    auto out_tensors = out.trainable();
    std::vector<std::vector<Tensor>> all;
    for (size_t c = 0; c < updates.size(); ++c) {
        auto tensors = updates[c].trainable();
        if (tensors.size() != out_tensors.size()) {
            throw std::runtime_error("aggregate: client " + client_name(c) + " has incompatible parameters");
        }
        for (size_t k = 0; k < tensors.size(); ++k) {
            if (tensors[k].shape() != out_tensors[k].shape()) {
                throw std::runtime_error("aggregate: client " + client_name(c) + " tensor " +
                                         std::to_string(k) + " has shape " + shape_str(tensors[k].shape()) +
                                         ", expected " + shape_str(out_tensors[k].shape()));
            }
        }
        all.push_back(std::move(tensors));
    }
    // mean as first + mean-of-deltas, accumulated in extended precision and
    // in ascending client order: identical updates aggregate to themselves
    // bit-exactly, and the result is within one ulp of the plain sum/N
    const auto n = static_cast<long double>(updates.size());
    for (size_t k = 0; k < out_tensors.size(); ++k) {
        auto& dst = out_tensors[k].data();
        const auto& base = all[0][k].data();
        for (size_t i = 0; i < dst.size(); ++i) {
            long double delta = 0.0L;
            for (size_t c = 1; c < all.size(); ++c) {
                delta += static_cast<long double>(all[c][k].data()[i]) - base[i];
            }
            dst[i] = static_cast<double>(base[i] + delta / n);
        }
    }
    return out;
}

std::vector<ClientState> make_clients(const TokenizedDataset& train, const RoundConfig& cfg,
                                      PartitionScheme scheme, double alpha, uint64_t seed,
                                      const GeneratorParams& init) {
    auto shards = partition(train, cfg.num_clients, scheme, alpha, seed);
    std::vector<ClientState> clients;
    clients.reserve(shards.size());
    for (size_t i = 0; i < shards.size(); ++i) {
        ClientState c;
        c.id = static_cast<int>(i);
        c.shard = std::move(shards[i]);
        c.local_generator = init.clone();
        c.seed_base = seed_combine(seed, 0xc11e57, i);
        clients.push_back(std::move(c));
    }
    return clients;
}

RoundMetrics run_round(ServerState& server, std::vector<ClientState>& clients, const EncoderParams& enc,
                       const RoundConfig& cfg, const TokenizedDataset& test_set, Transport& transport,
                       bool evaluate) {
    cfg.validate();
    if (!enc.frozen) throw std::runtime_error("run_round: encoder must be frozen before federated training");
    const auto t0 = std::chrono::steady_clock::now();

    RoundMetrics metrics;
    metrics.round = server.round;
    metrics.selected = select_clients(cfg.num_clients, cfg.selection_ratio, server.seed, server.round);

    std::vector<int> participants;
    for (int id : metrics.selected) {
        if (clients[static_cast<size_t>(id)].shard.empty()) {
            std::cerr << "warning: client " << id << " has an empty shard, skipping round " << server.round
                      << "\n";
            continue;
        }
        participants.push_back(id);
    }
    if (participants.empty()) throw std::runtime_error("run_round: no selected client has data");

    const size_t payload = server.global_generator.transmitted_bytes();
    for (int id : participants) {
        transport.send({server.round, id, false, "generator_params", payload});
    }

    std::vector<LocalTrainResult> results(participants.size());
    if (cfg.parallel_clients) {
        std::vector<std::future<LocalTrainResult>> futures;
        futures.reserve(participants.size());
        for (int id : participants) {
            futures.push_back(std::async(std::launch::async, [&, id] {
                return local_train(clients[static_cast<size_t>(id)], server.global_generator, enc, cfg,
                                   server.round);
            }));
        }
        for (size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
    } else {
        for (size_t i = 0; i < participants.size(); ++i) {
            results[i] = local_train(clients[static_cast<size_t>(participants[i])], server.global_generator,
                                     enc, cfg, server.round);
        }
    }

    std::vector<GeneratorParams> updates;
    updates.reserve(results.size());
    double loss_acc = 0.0;
    for (size_t i = 0; i < results.size(); ++i) {
        transport.send({server.round, participants[i], true, "generator_params", payload});
        clients[static_cast<size_t>(participants[i])].local_generator = results[i].params.clone();
        loss_acc += results[i].mean_sample_loss;
        updates.push_back(std::move(results[i].params));
    }

    server.global_generator = aggregate(updates, participants);
    server.round += 1;

    metrics.mean_local_loss = loss_acc / static_cast<double>(participants.size());
    metrics.bytes_transmitted = 2 * participants.size() * payload;
    if (evaluate) metrics.accuracy = evaluate_global(server.global_generator, test_set, enc);
    metrics.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return metrics;
}

double evaluate_global(const GeneratorParams& gen, const TokenizedDataset& test_set,
                       const EncoderParams& enc) {
    return evaluate_accuracy(gen, enc, test_set);
}

}  // namespace feddpg
