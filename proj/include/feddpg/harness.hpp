#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "feddpg/federation.hpp"
#include "feddpg/unlearning.hpp"

namespace feddpg {

// Flat experiment schema. Every key is optional in the config file and
// defaults to the reference toy setup; unknown keys are rejected. CLI flags
// override file values.
struct ExperimentConfig {
    // run control
    uint64_t seed = 1;
    int rounds = 100;
    std::string out_dir = "runs";
    int eval_every = 1;
    int checkpoint_every = 0;  // 0: final checkpoint only
    bool parallel_clients = false;

    // synthetic task (ignored when data_file is set)
    int task_classes = 2;
    int task_vocab = 128;
    int task_seq_min = 10;
    int task_seq_max = 20;
    int task_signal_tokens = 8;
    double task_signal_rate = 0.3;
    int train_samples = 5000;
    int test_samples = 2000;
    std::string data_file;  // JSONL training data
    std::string test_file;  // JSONL test data

    // frozen backbone
    int encoder_dim = 32;
    int encoder_layers = 2;
    int encoder_heads = 4;
    int encoder_ff = 64;
    int encoder_max_len = 64;
    std::string backbone = "pretrained";  // pretrained | random
    int pretrain_steps = 600;
    double pretrain_lr = 0.15;
    int pretrain_batch = 16;
    int pretrain_samples = 2000;
    double pretrain_signal_rate = 0.5;
    std::string encoder_cache;  // path of a reusable frozen backbone; "" pretrains inline

    // prompt generator
    int gen_hidden = 10;
    int prompt_len = 5;
    std::string input_mode = "prompt_and_text";
    std::string gen_activation = "tanh";

    // federation
    int num_clients = 100;
    double selection_ratio = 0.10;
    int local_epochs = 1;
    double local_lr = 0.05;
    int batch_size = 8;
    std::string partition = "iid";  // iid | label_skew
    double partition_alpha = 0.5;

    // unlearning
    int unlearn_client = -1;  // -1: seeded choice among participants
    double forget_fraction = 0.2;
    double unlearn_lambda = 1.0;
    int unlearn_epochs = 30;
    double unlearn_lr = 0.05;
    int unlearn_retain = -1;  // -1: match forget-set size
    int unlearn_report_clients = 5;

    // study axes
    std::vector<double> grid_ratios{0.05, 0.10, 0.20};
    std::vector<int> grid_prompt_lens{1, 5, 10};
    std::vector<int> grid_hiddens{5, 10, 20};

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    nlohmann::json to_json() const;
    void validate() const;
    std::string digest() const;  // canonical content fingerprint

    SyntheticTaskSpec task_spec() const;
    SyntheticTaskSpec test_spec() const;
    SyntheticTaskSpec pretext_spec() const;
    EncoderConfig encoder_config() const;
    GeneratorConfig generator_config() const;
    RoundConfig round_config() const;
};

struct RunResult {
    std::string run_dir;
    std::vector<RoundMetrics> rounds;      // executed rounds, 0-based indices
    double initial_accuracy = 0.0;
    double final_accuracy = 0.0;
    double bayes_ceiling = -1.0;           // -1 when the task has no known process
    uint64_t data_digest = 0;
    uint64_t test_digest = 0;
    uint64_t encoder_digest = 0;
    std::vector<uint64_t> generator_digests;  // global theta_P after each round
    size_t total_bytes = 0;
    size_t payload_bytes = 0;              // serialized theta_P size
    int64_t generator_params = 0;          // MLP parameter count
    GeneratorParams final_generator;
    Transport transport;
};

// pretrain (or load) and freeze the backbone for this config
EncoderParams prepare_encoder(const ExperimentConfig& cfg);

// pretrain/partition/federate/evaluate; artifacts under out_dir/run-<digest>
RunResult run_experiment(const ExperimentConfig& cfg, bool quiet = true);

struct AblationResult {
    std::map<std::string, RunResult> arms;  // keyed by input mode
    std::string table_path;
};

// the three input configurations on identical seeds and data
AblationResult run_ablation(const ExperimentConfig& cfg, bool quiet = true);

struct GridCell {
    double ratio = 0.0;
    int prompt_len = 0;
    int hidden = 0;
    double final_accuracy = 0.0;
    int64_t param_count = 0;
    size_t total_bytes = 0;
};

struct GridResult {
    std::vector<GridCell> cells;
    std::string table_path;
};

GridResult run_grid(const ExperimentConfig& cfg, bool quiet = true);

struct UnlearnRunResult {
    RunResult training;            // the federated rounds before unlearning
    UnlearnReport report;
    uint64_t replaced_digest = 0;  // digest of the client's unlearned theta_P
    uint64_t global_digest = 0;    // digest of the global theta_P after replacement
    std::string report_path;
};

// train per config, snapshot, unlearn one client's forget set, replace the
// global generator, and evaluate forgetting
UnlearnRunResult run_unlearning(const ExperimentConfig& cfg, bool quiet = true);

nlohmann::json unlearn_report_json(const UnlearnReport& report);

// round metrics serialization used for the metrics JSON-lines file
nlohmann::json round_metrics_json(const RoundMetrics& m, uint64_t generator_digest);

}  // namespace feddpg
