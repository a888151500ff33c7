#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feddpg/data.hpp"
#include "feddpg/encoder.hpp"
#include "feddpg/generator.hpp"

namespace feddpg {

enum class PartitionScheme { iid, label_skew };

PartitionScheme partition_scheme_from_string(const std::string& s);
std::string to_string(PartitionScheme s);

struct RoundConfig {
    int num_clients = 100;
    double selection_ratio = 0.10;
    int local_epochs = 1;
    double lr = 0.05;
    int batch_size = 8;
    bool parallel_clients = false;

    void validate() const;
    int selected_count() const;
};

struct ClientState {
    int id = 0;
    TokenizedDataset shard;
    GeneratorParams local_generator;
    uint64_t seed_base = 0;
};

struct ServerState {
    GeneratorParams global_generator;
    int round = 0;
    uint64_t encoder_digest = 0;
    uint64_t seed = 0;
};

// Client -> server traffic carries generator parameters and nothing else;
// every transfer in a simulation is logged here so the privacy boundary is
// checkable after the fact.
struct TransferRecord {
    int round = 0;
    int client_id = 0;
    bool to_server = false;
    std::string payload_kind;
    size_t bytes = 0;
};

class Transport {
public:
    void send(const TransferRecord& rec) {
        log_.push_back(rec);
        total_bytes_ += rec.bytes;
    }
    const std::vector<TransferRecord>& log() const { return log_; }
    size_t total_bytes() const { return total_bytes_; }

private:
    std::vector<TransferRecord> log_;
    size_t total_bytes_ = 0;
};

struct RoundMetrics {
    int round = 0;
    std::vector<int> selected;
    std::optional<double> accuracy;  // absent when evaluation was skipped
    double mean_local_loss = 0.0;
    size_t bytes_transmitted = 0;
    double wall_ms = 0.0;
};

// iid: seeded shuffle, contiguous equal split, remainder to low ids.
// label_skew: per class, Dirichlet(alpha) proportions across clients.
// Shards are disjoint and their union is the dataset.
std::vector<std::vector<int>> partition_indices(const TokenizedDataset& ds, int num_clients,
                                                PartitionScheme scheme, double alpha, uint64_t seed);
std::vector<TokenizedDataset> partition(const TokenizedDataset& ds, int num_clients, PartitionScheme scheme,
                                        double alpha, uint64_t seed);

// round(ratio*num_clients) ids, uniform without replacement, ascending;
// reseeded per round from (seed, round)
std::vector<int> select_clients(int num_clients, double ratio, uint64_t seed, int round);

struct LocalTrainResult {
    GeneratorParams params;
    double mean_sample_loss = 0.0;
    int samples = 0;
};

// copy the broadcast parameters, run local_epochs of seeded mini-batch
// gradient descent on the client shard; the encoder is never touched
LocalTrainResult local_train(const ClientState& client, const GeneratorParams& global,
                             const EncoderParams& enc, const RoundConfig& cfg, int round);

// unweighted element-wise mean, summed in the given (ascending id) order;
// never weighted by shard size
GeneratorParams aggregate(const std::vector<GeneratorParams>& updates, const std::vector<int>& ids = {});

std::vector<ClientState> make_clients(const TokenizedDataset& train, const RoundConfig& cfg,
                                      PartitionScheme scheme, double alpha, uint64_t seed,
                                      const GeneratorParams& init);

// select -> broadcast -> local train -> aggregate -> advance round
RoundMetrics run_round(ServerState& server, std::vector<ClientState>& clients, const EncoderParams& enc,
                       const RoundConfig& cfg, const TokenizedDataset& test_set, Transport& transport,
                       bool evaluate = true);

double evaluate_global(const GeneratorParams& gen, const TokenizedDataset& test_set,
                       const EncoderParams& enc);

}  // namespace feddpg
