#include "feddpg/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "feddpg/digest.hpp"

namespace feddpg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kSaltData = 0xd47a;
constexpr uint64_t kSaltTest = 0x7e57;
constexpr uint64_t kSaltPretext = 0x9e7e;
constexpr uint64_t kSaltEncoder = 0xe2c;
constexpr uint64_t kSaltGenerator = 0x9e2;
constexpr uint64_t kSaltFederation = 0xfed;
constexpr uint64_t kSaltPartition = 0x9a27;
constexpr uint64_t kSaltUnlearnPick = 0x0241;
constexpr uint64_t kSaltUnlearnSets = 0x0242;
constexpr uint64_t kSaltUnlearnEval = 0x0243;

int64_t trainable_numel(const GeneratorParams& gen) {
    int64_t n = 0;
    for (const Tensor& t : gen.trainable()) n += t.numel();
    return n;
}

std::string hex64(uint64_t v) {
    Digest d;  // reuse the fixed-width hex formatting
    (void)d;
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    ExperimentConfig cfg;
    json base = cfg.to_json();
    for (const auto& [key, value] : j.items()) {
        if (!base.contains(key)) throw std::invalid_argument("config: unknown key \"" + key + "\"");
        base[key] = value;
    }
    auto take = [&](const char* key, auto& dst) {
        try {
            base.at(key).get_to(dst);
        } catch (const json::exception& e) {
            throw std::invalid_argument("config: bad value for \"" + std::string(key) + "\": " + e.what());
        }
    };
    take("seed", cfg.seed);
    take("rounds", cfg.rounds);
    take("out_dir", cfg.out_dir);
    take("eval_every", cfg.eval_every);
    take("checkpoint_every", cfg.checkpoint_every);
    take("parallel_clients", cfg.parallel_clients);
    take("task_classes", cfg.task_classes);
    take("task_vocab", cfg.task_vocab);
    take("task_seq_min", cfg.task_seq_min);
    take("task_seq_max", cfg.task_seq_max);
    take("task_signal_tokens", cfg.task_signal_tokens);
    take("task_signal_rate", cfg.task_signal_rate);
    take("train_samples", cfg.train_samples);
    take("test_samples", cfg.test_samples);
    take("data_file", cfg.data_file);
    take("test_file", cfg.test_file);
    take("encoder_dim", cfg.encoder_dim);
    take("encoder_layers", cfg.encoder_layers);
    take("encoder_heads", cfg.encoder_heads);
    take("encoder_ff", cfg.encoder_ff);
    take("encoder_max_len", cfg.encoder_max_len);
    take("backbone", cfg.backbone);
    take("pretrain_steps", cfg.pretrain_steps);
    take("pretrain_lr", cfg.pretrain_lr);
    take("pretrain_batch", cfg.pretrain_batch);
    take("pretrain_samples", cfg.pretrain_samples);
    take("pretrain_signal_rate", cfg.pretrain_signal_rate);
    take("encoder_cache", cfg.encoder_cache);
    take("gen_hidden", cfg.gen_hidden);
    take("prompt_len", cfg.prompt_len);
    take("input_mode", cfg.input_mode);
    take("gen_activation", cfg.gen_activation);
    take("num_clients", cfg.num_clients);
    take("selection_ratio", cfg.selection_ratio);
    take("local_epochs", cfg.local_epochs);
    take("local_lr", cfg.local_lr);
    take("batch_size", cfg.batch_size);
    take("partition", cfg.partition);
    take("partition_alpha", cfg.partition_alpha);
    take("unlearn_client", cfg.unlearn_client);
    take("forget_fraction", cfg.forget_fraction);
    take("unlearn_lambda", cfg.unlearn_lambda);
    take("unlearn_epochs", cfg.unlearn_epochs);
    take("unlearn_lr", cfg.unlearn_lr);
    take("unlearn_retain", cfg.unlearn_retain);
    take("unlearn_report_clients", cfg.unlearn_report_clients);
    take("grid_ratios", cfg.grid_ratios);
    take("grid_prompt_lens", cfg.grid_prompt_lens);
    take("grid_hiddens", cfg.grid_hiddens);
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["rounds"] = rounds;
    j["out_dir"] = out_dir;
    j["eval_every"] = eval_every;
    j["checkpoint_every"] = checkpoint_every;
    j["parallel_clients"] = parallel_clients;
    j["task_classes"] = task_classes;
    j["task_vocab"] = task_vocab;
    j["task_seq_min"] = task_seq_min;
    j["task_seq_max"] = task_seq_max;
    j["task_signal_tokens"] = task_signal_tokens;
    j["task_signal_rate"] = task_signal_rate;
    j["train_samples"] = train_samples;
    j["test_samples"] = test_samples;
    j["data_file"] = data_file;
    j["test_file"] = test_file;
    j["encoder_dim"] = encoder_dim;
    j["encoder_layers"] = encoder_layers;
    j["encoder_heads"] = encoder_heads;
    j["encoder_ff"] = encoder_ff;
    j["encoder_max_len"] = encoder_max_len;
    j["backbone"] = backbone;
    j["pretrain_steps"] = pretrain_steps;
    j["pretrain_lr"] = pretrain_lr;
    j["pretrain_batch"] = pretrain_batch;
    j["pretrain_samples"] = pretrain_samples;
    j["pretrain_signal_rate"] = pretrain_signal_rate;
    j["encoder_cache"] = encoder_cache;
    j["gen_hidden"] = gen_hidden;
    j["prompt_len"] = prompt_len;
    j["input_mode"] = input_mode;
    j["gen_activation"] = gen_activation;
    j["num_clients"] = num_clients;
    j["selection_ratio"] = selection_ratio;
    j["local_epochs"] = local_epochs;
    j["local_lr"] = local_lr;
    j["batch_size"] = batch_size;
    j["partition"] = partition;
    j["partition_alpha"] = partition_alpha;
    j["unlearn_client"] = unlearn_client;
    j["forget_fraction"] = forget_fraction;
    j["unlearn_lambda"] = unlearn_lambda;
    j["unlearn_epochs"] = unlearn_epochs;
    j["unlearn_lr"] = unlearn_lr;
    j["unlearn_retain"] = unlearn_retain;
    j["unlearn_report_clients"] = unlearn_report_clients;
    j["grid_ratios"] = grid_ratios;
    j["grid_prompt_lens"] = grid_prompt_lens;
    j["grid_hiddens"] = grid_hiddens;
    return j;
}

void ExperimentConfig::validate() const {
    if (rounds < 0) throw std::invalid_argument("config: rounds must be >= 0");
    if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
    if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
    if (backbone != "pretrained" && backbone != "random") {
        throw std::invalid_argument("config: backbone must be \"pretrained\" or \"random\"");
    }
    if (data_file.empty() != test_file.empty()) {
        throw std::invalid_argument("config: data_file and test_file must be set together");
    }
    input_mode_from_string(input_mode);
    activation_from_string(gen_activation);
    partition_scheme_from_string(partition);
    encoder_config().validate();
    generator_config().validate();
    round_config().validate();
    if (data_file.empty()) {
        task_spec().validate();
        if (train_samples < num_clients) {
            throw std::invalid_argument("config: train_samples must cover num_clients");
        }
        if (test_samples < 1) throw std::invalid_argument("config: test_samples must be >= 1");
        if (encoder_max_len < prompt_len + task_seq_max) {
            throw std::invalid_argument("config: encoder_max_len " + std::to_string(encoder_max_len) +
                                        " < prompt_len + task_seq_max = " +
                                        std::to_string(prompt_len + task_seq_max));
        }
    }
    if (backbone == "pretrained" && encoder_cache.empty()) {
        if (pretrain_steps < 0 || pretrain_samples < 1 || pretrain_batch < 1) {
            throw std::invalid_argument("config: invalid pretraining settings");
        }
    }
    if (grid_ratios.empty() || grid_prompt_lens.empty() || grid_hiddens.empty()) {
        throw std::invalid_argument("config: grid axes must be non-empty");
    }
    if (unlearn_report_clients < 0) throw std::invalid_argument("config: unlearn_report_clients must be >= 0");
}

std::string ExperimentConfig::digest() const { return digest_hex(to_json().dump()); }

SyntheticTaskSpec ExperimentConfig::task_spec() const {
    SyntheticTaskSpec s;
    s.num_classes = task_classes;
    s.vocab_size = task_vocab;
    s.seq_len_min = task_seq_min;
    s.seq_len_max = task_seq_max;
    s.signal_tokens_per_class = task_signal_tokens;
    s.signal_rate = task_signal_rate;
    s.seed = seed_combine(seed, kSaltData);
    return s;
}

SyntheticTaskSpec ExperimentConfig::test_spec() const {
    SyntheticTaskSpec s = task_spec();
    s.seed = seed_combine(seed, kSaltTest);
    return s;
}

SyntheticTaskSpec ExperimentConfig::pretext_spec() const {
    // same vocabulary and signal structure, disjoint samples and its own
    // (typically easier) signal rate: the backbone learns the task family,
    // prompts later steer it on the downstream data
    SyntheticTaskSpec s = task_spec();
    s.signal_rate = pretrain_signal_rate;
    s.seed = seed_combine(seed, kSaltPretext);
    return s;
}

EncoderConfig ExperimentConfig::encoder_config() const {
    EncoderConfig c;
    c.d_e = encoder_dim;
    c.layers = encoder_layers;
    c.heads = encoder_heads;
    c.d_ff = encoder_ff;
    c.vocab_size = task_vocab;
    c.max_len = encoder_max_len;
    c.num_classes = task_classes;
    return c;
}

GeneratorConfig ExperimentConfig::generator_config() const {
    GeneratorConfig c;
    c.d_e = encoder_dim;
    c.hidden = gen_hidden;
    c.prompt_len = prompt_len;
    c.activation = activation_from_string(gen_activation);
    c.input_mode = input_mode_from_string(input_mode);
    return c;
}

RoundConfig ExperimentConfig::round_config() const {
    RoundConfig c;
    c.num_clients = num_clients;
    c.selection_ratio = selection_ratio;
    c.local_epochs = local_epochs;
    c.lr = local_lr;
    c.batch_size = batch_size;
    c.parallel_clients = parallel_clients;
    return c;
}

EncoderParams prepare_encoder(const ExperimentConfig& cfg) {
    const EncoderConfig ec = cfg.encoder_config();
    if (cfg.backbone == "random") {
        EncoderParams p = EncoderParams::init(ec, seed_combine(cfg.seed, kSaltEncoder));
        p.freeze();
        return p;
    }
    if (!cfg.encoder_cache.empty() && fs::exists(cfg.encoder_cache)) {
        EncoderParams p = EncoderParams::from_bundle(load_params(cfg.encoder_cache));
        if (!(p.config == ec)) {
            throw std::runtime_error("encoder cache " + cfg.encoder_cache +
                                     " was built for a different encoder configuration");
        }
        if (!p.frozen) p.freeze();
        return p;
    }
    const TokenizedDataset pretext = generate_synthetic(cfg.pretext_spec(), cfg.pretrain_samples);
    PretrainResult res = pretrain_backbone(ec, pretext, cfg.pretrain_steps, cfg.pretrain_lr,
                                           cfg.pretrain_batch, seed_combine(cfg.seed, kSaltEncoder));
    if (!cfg.encoder_cache.empty()) save_params(res.params.bundle(), cfg.encoder_cache);
    return res.params;
}

json round_metrics_json(const RoundMetrics& m, uint64_t generator_digest) {
    json j;
    j["round"] = m.round;
    j["selected"] = m.selected;
    if (m.accuracy.has_value()) {
        j["accuracy"] = *m.accuracy;
    } else {
        j["accuracy"] = nullptr;
    }
    j["mean_local_loss"] = m.mean_local_loss;
    j["bytes_transmitted"] = m.bytes_transmitted;
    j["generator_digest"] = hex64(generator_digest);
    j["wall_ms"] = m.wall_ms;
    return j;
}

namespace {

struct Session {
    ExperimentConfig cfg;
    std::string run_dir;
    TokenizedDataset train;
    TokenizedDataset test;
    EncoderParams encoder;
    ServerState server;
    std::vector<ClientState> clients;
    std::ofstream metrics;
    RunResult result;
};

Session open_session(const ExperimentConfig& cfg, bool quiet) {
    cfg.validate();
    Session s;
    s.cfg = cfg;
    fs::create_directories(cfg.out_dir);
    s.run_dir = cfg.out_dir + "/run-" + cfg.digest();
    fs::create_directories(s.run_dir);
    {
        std::ofstream out(s.run_dir + "/config.json");
        out << cfg.to_json().dump(2) << "\n";
    }

    if (cfg.data_file.empty()) {
        s.train = generate_synthetic(cfg.task_spec(), cfg.train_samples);
        s.test = generate_synthetic(cfg.test_spec(), cfg.test_samples);
        s.result.bayes_ceiling = bayes_accuracy(*s.test.spec, s.test);
    } else {
        s.train = load_jsonl(cfg.data_file, cfg.task_vocab, cfg.task_classes);
        s.test = load_jsonl(cfg.test_file, cfg.task_vocab, cfg.task_classes);
        s.train.validate();
        s.test.validate();
    }
    if (!quiet) std::cerr << "[" << cfg.digest() << "] preparing backbone (" << cfg.backbone << ")\n";
    s.encoder = prepare_encoder(cfg);

    GeneratorParams init_gen = GeneratorParams::init(cfg.generator_config(), seed_combine(cfg.seed, kSaltGenerator));
    s.server.global_generator = init_gen.clone();
    s.server.round = 0;
    s.server.encoder_digest = s.encoder.digest();
    s.server.seed = seed_combine(cfg.seed, kSaltFederation);
    s.clients = make_clients(s.train, cfg.round_config(), partition_scheme_from_string(cfg.partition),
                             cfg.partition_alpha, seed_combine(cfg.seed, kSaltPartition), init_gen);

    s.result.run_dir = s.run_dir;
    s.result.data_digest = s.train.digest();
    s.result.test_digest = s.test.digest();
    s.result.encoder_digest = s.server.encoder_digest;
    s.result.payload_bytes = s.server.global_generator.transmitted_bytes();
    s.result.generator_params = trainable_numel(s.server.global_generator);
    s.result.initial_accuracy = evaluate_global(s.server.global_generator, s.test, s.encoder);

    {
        json meta;
        meta["config_digest"] = cfg.digest();
        meta["data_digest"] = hex64(s.result.data_digest);
        meta["test_digest"] = hex64(s.result.test_digest);
        meta["encoder_digest"] = hex64(s.result.encoder_digest);
        meta["bayes_ceiling"] = s.result.bayes_ceiling < 0 ? json(nullptr) : json(s.result.bayes_ceiling);
        meta["generator_params"] = s.result.generator_params;
        meta["payload_bytes"] = s.result.payload_bytes;
        meta["train_samples"] = s.train.size();
        meta["test_samples"] = s.test.size();
        std::ofstream out(s.run_dir + "/meta.json");
        out << meta.dump(2) << "\n";
    }

    s.metrics.open(s.run_dir + "/metrics.jsonl");
    if (!s.metrics) throw std::runtime_error("cannot open " + s.run_dir + "/metrics.jsonl for writing");
    RoundMetrics initial;
    initial.round = 0;
    initial.accuracy = s.result.initial_accuracy;
    s.metrics << round_metrics_json(initial, s.server.global_generator.digest()).dump() << "\n";
    return s;
}

void execute_round(Session& s, int r, Transport& transport, bool quiet) {
    const bool eval = (r % s.cfg.eval_every == 0) || (r == s.cfg.rounds);
    RoundMetrics m = run_round(s.server, s.clients, s.encoder, s.cfg.round_config(), s.test, transport, eval);
    m.round = r;  // rows count completed rounds, the initial row is round 0
    const uint64_t gd = s.server.global_generator.digest();
    s.metrics << round_metrics_json(m, gd).dump() << "\n";
    s.result.total_bytes += m.bytes_transmitted;
    s.result.generator_digests.push_back(gd);
    if (m.accuracy.has_value()) s.result.final_accuracy = *m.accuracy;
    s.result.rounds.push_back(std::move(m));
    if (s.cfg.checkpoint_every > 0 && r % s.cfg.checkpoint_every == 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "/generator_round%04d.fdp", r);
        save_params(s.server.global_generator.bundle(), s.run_dir + name);
    }
    if (!quiet && (r % 10 == 0 || r == s.cfg.rounds)) {
        std::cerr << "[" << s.cfg.digest() << "] round " << r << "/" << s.cfg.rounds;
        if (s.result.rounds.back().accuracy.has_value()) {
            std::cerr << "  acc=" << *s.result.rounds.back().accuracy;
        }
        std::cerr << "  loss=" << s.result.rounds.back().mean_local_loss << "\n";
    }
}

void finalize_session(Session& s) {
    if (s.cfg.rounds == 0) s.result.final_accuracy = s.result.initial_accuracy;
    save_params(s.server.global_generator.bundle(), s.run_dir + "/generator_final.fdp");
    save_params(s.encoder.bundle(), s.run_dir + "/encoder.fdp");
    s.result.final_generator = s.server.global_generator.clone();
    std::ofstream csv(s.run_dir + "/summary.csv");
    csv << "config_digest,input_mode,hidden,prompt_len,selection_ratio,rounds,final_accuracy,"
           "bayes_ceiling,generator_params,payload_bytes,total_bytes\n";
    csv << s.cfg.digest() << "," << s.cfg.input_mode << "," << s.cfg.gen_hidden << "," << s.cfg.prompt_len
        << "," << s.cfg.selection_ratio << "," << s.cfg.rounds << "," << s.result.final_accuracy << ","
        << s.result.bayes_ceiling << "," << s.result.generator_params << "," << s.result.payload_bytes << ","
        << s.result.total_bytes << "\n";
}

std::string shared_encoder_cache(const ExperimentConfig& cfg) {
    // backbone inputs only: cells of a study that share them reuse one file
    json j;
    j["seed"] = cfg.seed;
    j["encoder_dim"] = cfg.encoder_dim;
    j["encoder_layers"] = cfg.encoder_layers;
    j["encoder_heads"] = cfg.encoder_heads;
    j["encoder_ff"] = cfg.encoder_ff;
    j["encoder_max_len"] = cfg.encoder_max_len;
    j["task_vocab"] = cfg.task_vocab;
    j["task_classes"] = cfg.task_classes;
    j["backbone"] = cfg.backbone;
    j["pretrain_steps"] = cfg.pretrain_steps;
    j["pretrain_lr"] = cfg.pretrain_lr;
    j["pretrain_batch"] = cfg.pretrain_batch;
    j["pretrain_samples"] = cfg.pretrain_samples;
    j["pretrain_signal_rate"] = cfg.pretrain_signal_rate;
    j["task_seq_min"] = cfg.task_seq_min;
    j["task_seq_max"] = cfg.task_seq_max;
    j["task_signal_tokens"] = cfg.task_signal_tokens;
    return cfg.out_dir + "/encoder-" + digest_hex(j.dump()) + ".fdp";
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, bool quiet) {
    Session s = open_session(cfg, quiet);
    Transport transport;
    for (int r = 1; r <= cfg.rounds; ++r) execute_round(s, r, transport, quiet);
    finalize_session(s);
    s.result.transport = std::move(transport);
    return std::move(s.result);
}

AblationResult run_ablation(const ExperimentConfig& cfg, bool quiet) {
    ExperimentConfig base = cfg;
    if (base.encoder_cache.empty() && base.backbone == "pretrained") {
        fs::create_directories(base.out_dir);
        base.encoder_cache = shared_encoder_cache(base);
    }
    AblationResult result;
    const std::vector<std::string> modes{"prompt_and_text", "text_only", "prompt_only"};
    for (const std::string& mode : modes) {
        ExperimentConfig arm = base;
        arm.input_mode = mode;
        if (!quiet) std::cerr << "== ablation arm: " << mode << "\n";
        result.arms.emplace(mode, run_experiment(arm, quiet));
    }
    const uint64_t d0 = result.arms.begin()->second.data_digest;
    for (const auto& [mode, run] : result.arms) {
        if (run.data_digest != d0) throw std::runtime_error("ablation: arms saw different data");
    }
    result.table_path = base.out_dir + "/ablation-" + cfg.digest() + ".csv";
    std::ofstream csv(result.table_path);
    csv << "round";
    for (const std::string& mode : modes) csv << ",accuracy_" << mode;
    csv << "\n";
    const auto& rounds = result.arms.at(modes[0]).rounds;
    csv << "0";
    for (const std::string& mode : modes) csv << "," << result.arms.at(mode).initial_accuracy;
    csv << "\n";
    for (size_t i = 0; i < rounds.size(); ++i) {
        if (!rounds[i].accuracy.has_value()) continue;
        csv << rounds[i].round;
        for (const std::string& mode : modes) {
            csv << "," << result.arms.at(mode).rounds[i].accuracy.value_or(-1.0);
        }
        csv << "\n";
    }
    return result;
}

GridResult run_grid(const ExperimentConfig& cfg, bool quiet) {
    ExperimentConfig base = cfg;
    if (base.encoder_cache.empty() && base.backbone == "pretrained") {
        fs::create_directories(base.out_dir);
        base.encoder_cache = shared_encoder_cache(base);
    }
    GridResult result;
    for (double ratio : cfg.grid_ratios) {
        for (int plen : cfg.grid_prompt_lens) {
            for (int hidden : cfg.grid_hiddens) {
                ExperimentConfig cell = base;
                cell.selection_ratio = ratio;
                cell.prompt_len = plen;
                cell.gen_hidden = hidden;
                if (!quiet) {
                    std::cerr << "== grid cell ratio=" << ratio << " |P|=" << plen << " h=" << hidden << "\n";
                }
                RunResult run = run_experiment(cell, quiet);
                GridCell row;
                row.ratio = ratio;
                row.prompt_len = plen;
                row.hidden = hidden;
                row.final_accuracy = run.final_accuracy;
                row.param_count = param_count(cell.generator_config());
                row.total_bytes = run.total_bytes;
                result.cells.push_back(row);
            }
        }
    }
    result.table_path = base.out_dir + "/grid-" + cfg.digest() + ".csv";
    std::ofstream csv(result.table_path);
    csv << "selection_ratio,prompt_len,hidden,final_accuracy,param_count,total_bytes\n";
    for (const GridCell& c : result.cells) {
        csv << c.ratio << "," << c.prompt_len << "," << c.hidden << "," << c.final_accuracy << ","
            << c.param_count << "," << c.total_bytes << "\n";
    }
    return result;
}

json unlearn_report_json(const UnlearnReport& report) {
    json j;
    j["client_id"] = report.client_id;
    j["lambda"] = report.lambda;
    j["forget_size"] = report.forget_size;
    j["forget_accuracy"] = {{"before", report.forget_before}, {"after", report.forget_after}};
    j["global_accuracy"] = {{"initial", report.global_initial},
                            {"before", report.global_before},
                            {"after", report.global_after}};
    j["clients"] = json::array();
    for (const ClientAccuracy& c : report.clients) {
        j["clients"].push_back({{"id", c.id}, {"before", c.before}, {"after", c.after}});
    }
    return j;
}

UnlearnRunResult run_unlearning(const ExperimentConfig& cfg, bool quiet) {
    Session s = open_session(cfg, quiet);
    Transport transport;
    for (int r = 1; r <= cfg.rounds; ++r) execute_round(s, r, transport, quiet);

    // requesting client: configured id, or a seeded pick among participants
    std::vector<int> participants;
    for (const TransferRecord& rec : transport.log()) {
        if (rec.to_server) participants.push_back(rec.client_id);
    }
    std::sort(participants.begin(), participants.end());
    participants.erase(std::unique(participants.begin(), participants.end()), participants.end());
    int client_id = cfg.unlearn_client;
    if (client_id < 0) {
        if (participants.empty()) throw std::runtime_error("unlearn: no client participated in training");
        Rng pick(seed_combine(cfg.seed, kSaltUnlearnPick));
        client_id = participants[static_cast<size_t>(pick.uniform_below(participants.size()))];
    }
    if (client_id < 0 || client_id >= cfg.num_clients) {
        throw std::invalid_argument("unlearn: client id " + std::to_string(client_id) + " out of range");
    }
    const ClientState& client = s.clients[static_cast<size_t>(client_id)];

    UnlearnRequest request;
    request.client_id = client_id;
    request.forget_fraction = cfg.forget_fraction;
    request.lambda = cfg.unlearn_lambda;
    request.unlearn_epochs = cfg.unlearn_epochs;
    request.lr = cfg.unlearn_lr;
    request.retain_sample_count = cfg.unlearn_retain;
    request.seed = seed_combine(cfg.seed, kSaltUnlearnSets);

    const GeneratorParams before = s.server.global_generator.clone();
    UnlearnSets sets;
    GeneratorParams unlearned = local_unlearn(client, s.server.global_generator, s.encoder, request, &sets);

    const size_t payload = unlearned.transmitted_bytes();
    transport.send({s.server.round, client_id, true, "generator_params", payload});
    server_replace(s.server, unlearned);

    UnlearnRunResult out;
    out.replaced_digest = unlearned.digest();
    out.global_digest = s.server.global_generator.digest();

    std::vector<int> forget_indices;
    for (const RelabeledSample& f : sets.forget) forget_indices.push_back(f.shard_index);
    const TokenizedDataset forget_set = client.shard.subset(forget_indices);

    std::vector<int> pool;
    for (const ClientState& c : s.clients) {
        if (c.id != client_id && !c.shard.empty()) pool.push_back(c.id);
    }
    Rng eval_rng(seed_combine(cfg.seed, kSaltUnlearnEval));
    std::vector<const ClientState*> sampled;
    const int want = std::min<int>(cfg.unlearn_report_clients, static_cast<int>(pool.size()));
    if (want > 0) {
        for (int p : eval_rng.sample_without_replacement(static_cast<int>(pool.size()), want)) {
            sampled.push_back(&s.clients[static_cast<size_t>(pool[static_cast<size_t>(p)])]);
        }
    }

    out.report =
        evaluate_forgetting(before, s.server.global_generator, s.encoder, forget_set, s.test, sampled);
    out.report.client_id = client_id;
    out.report.lambda = request.lambda;
    out.report.global_initial = s.result.initial_accuracy;

    // replacement round in the metrics stream: one upload, no aggregation
    RoundMetrics rm;
    rm.round = cfg.rounds + 1;
    rm.selected = {client_id};
    rm.accuracy = out.report.global_after;
    rm.mean_local_loss = 0.0;
    rm.bytes_transmitted = payload;
    s.metrics << round_metrics_json(rm, out.global_digest).dump() << "\n";
    s.result.total_bytes += payload;
    s.result.rounds.push_back(rm);
    s.result.final_accuracy = out.report.global_after;

    finalize_session(s);
    s.result.transport = std::move(transport);
    out.training = std::move(s.result);
    out.report_path = s.run_dir + "/unlearn_report.json";
    std::ofstream rep(out.report_path);
    rep << unlearn_report_json(out.report).dump(2) << "\n";
    return out;
}

}  // namespace feddpg
