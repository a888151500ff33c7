#pragma once

#include <cstdint>
#include <vector>

#include "feddpg/federation.hpp"

namespace feddpg {

struct UnlearnRequest {
    int client_id = 0;
    double forget_fraction = 0.2;     // used when forget_indices is empty
    std::vector<int> forget_indices;  // explicit shard-local indices
    double lambda = 1.0;
    int unlearn_epochs = 30;
    double lr = 0.05;
    int retain_sample_count = -1;  // -1: match the forget-set size
    uint64_t seed = 0;

    void validate() const;
};

struct RelabeledSample {
    int shard_index = 0;
    int original_label = 0;
    int new_label = 0;  // always != original_label
};

// uniform draw from the label space minus the original label
int relabel_one(int original_label, int num_classes, Rng& rng);
std::vector<RelabeledSample> relabel(const std::vector<int>& shard_indices, const TokenizedDataset& shard,
                                     int num_classes, Rng& rng);

struct UnlearnSets {
    std::vector<RelabeledSample> forget;  // with randomized replacement labels
    std::vector<int> retain;              // shard-local indices, original labels kept
};

// seeded choice of the forget set (unless given explicitly) and of the
// retained correct samples from the rest of the shard
UnlearnSets draw_unlearn_sets(const TokenizedDataset& shard, const UnlearnRequest& request);

// combined loss: sum of retained-sample loss plus lambda times the loss on
// relabeled forget samples; at lambda=0 this is exactly the retain-only loss
Tensor unlearn_loss(Tape& tape, const TokenizedDataset& shard, const UnlearnSets& sets, double lambda,
                    const GeneratorParams& gen, const EncoderParams& enc);

// full-batch gradient descent on the combined loss for unlearn_epochs steps
GeneratorParams local_unlearn(const ClientState& client, const GeneratorParams& global,
                              const EncoderParams& enc, const UnlearnRequest& request,
                              UnlearnSets* sets_out = nullptr);

// direct replacement: the global generator becomes the client's unlearned
// copy bit-for-bit; no aggregation, no other participants
void server_replace(ServerState& server, const GeneratorParams& unlearned);

struct ClientAccuracy {
    int id = 0;
    double before = 0.0;
    double after = 0.0;
};

struct UnlearnReport {
    int client_id = 0;
    double lambda = 0.0;
    int forget_size = 0;
    double forget_before = 0.0;  // forget-set accuracy under ORIGINAL labels
    double forget_after = 0.0;
    double global_initial = 0.0;  // accuracy at the very start of training
    double global_before = 0.0;
    double global_after = 0.0;
    std::vector<ClientAccuracy> clients;
};

// forget_set carries the original labels; per_client_tests are evaluated on
// each listed client's own shard
UnlearnReport evaluate_forgetting(const GeneratorParams& before, const GeneratorParams& after,
                                  const EncoderParams& enc, const TokenizedDataset& forget_set,
                                  const TokenizedDataset& retain_test,
                                  const std::vector<const ClientState*>& per_client_tests);

}  // namespace feddpg
