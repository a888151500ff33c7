#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "feddpg/harness.hpp"

namespace {

using feddpg::ExperimentConfig;
using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> rounds;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "experiment config file (JSON, flat schema)");
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set gen_hidden=20")
        ->take_all();
    cmd->add_option("--seed", opts.seed, "override the experiment seed");
    cmd->add_option("--out", opts.out, "override the output directory");
    cmd->add_option("--rounds", opts.rounds, "override the number of federated rounds");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    json j = json::object();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw std::runtime_error("cannot open config " + opts.config_path);
        in >> j;
    }
    for (const std::string& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("--set expects key=value, got \"" + kv + "\"");
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw;  // unquoted strings are taken literally
        }
        j[key] = value;
    }
    if (opts.seed) j["seed"] = *opts.seed;
    if (opts.out) j["out_dir"] = *opts.out;
    if (opts.rounds) j["rounds"] = *opts.rounds;
    return ExperimentConfig::from_json(j);
}

json run_summary(const feddpg::RunResult& run) {
    json j;
    j["run_dir"] = run.run_dir;
    j["initial_accuracy"] = run.initial_accuracy;
    j["final_accuracy"] = run.final_accuracy;
    if (run.bayes_ceiling >= 0) j["bayes_ceiling"] = run.bayes_ceiling;
    j["generator_params"] = run.generator_params;
    j["payload_bytes"] = run.payload_bytes;
    j["total_bytes"] = run.total_bytes;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedDPG: federated prompt-tuning with a dynamic prompt generator, plus unlearning"};
    app.require_subcommand(1);

    CommonOpts train_opts, ablate_opts, grid_opts, unlearn_opts, eval_opts, gen_opts;

    auto* train = app.add_subcommand("train", "run a federated training experiment");
    add_common(train, train_opts);

    auto* ablate = app.add_subcommand("ablate", "compare the three PLM input configurations");
    add_common(ablate, ablate_opts);

    auto* grid = app.add_subcommand("grid", "selection-ratio x prompt-length x hidden-width study");
    add_common(grid, grid_opts);

    auto* unlearn = app.add_subcommand("unlearn", "train, then unlearn one client's forget set");
    add_common(unlearn, unlearn_opts);

    auto* eval = app.add_subcommand("eval", "evaluate a generator checkpoint");
    add_common(eval, eval_opts);
    std::string eval_generator, eval_encoder, eval_data;
    eval->add_option("--generator", eval_generator, "generator checkpoint (.fdp)")->required();
    eval->add_option("--encoder", eval_encoder, "frozen encoder file (.fdp)")->required();
    eval->add_option("--data", eval_data, "JSONL dataset; defaults to the config's synthetic test set");

    auto* gen_data = app.add_subcommand("gen-data", "write a synthetic dataset as JSONL");
    add_common(gen_data, gen_opts);
    int gen_n = 1000;
    std::string gen_out;
    gen_data->add_option("--n", gen_n, "number of samples")->required();
    gen_data->add_option("--output", gen_out, "output JSONL path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            auto run = feddpg::run_experiment(resolve_config(train_opts), /*quiet=*/false);
            std::cout << run_summary(run).dump(2) << "\n";
        } else if (*ablate) {
            auto result = feddpg::run_ablation(resolve_config(ablate_opts), /*quiet=*/false);
            json j;
            j["table"] = result.table_path;
            for (const auto& [mode, run] : result.arms) j["final_accuracy"][mode] = run.final_accuracy;
            std::cout << j.dump(2) << "\n";
        } else if (*grid) {
            auto result = feddpg::run_grid(resolve_config(grid_opts), /*quiet=*/false);
            json j;
            j["table"] = result.table_path;
            j["cells"] = result.cells.size();
            std::cout << j.dump(2) << "\n";
        } else if (*unlearn) {
            auto result = feddpg::run_unlearning(resolve_config(unlearn_opts), /*quiet=*/false);
            json j = feddpg::unlearn_report_json(result.report);
            j["report_path"] = result.report_path;
            j["run_dir"] = result.training.run_dir;
            std::cout << j.dump(2) << "\n";
        } else if (*eval) {
            auto enc = feddpg::EncoderParams::from_bundle(feddpg::load_params(eval_encoder));
            if (!enc.frozen) enc.freeze();
            auto gen = feddpg::GeneratorParams::from_bundle(feddpg::load_params(eval_generator));
            feddpg::TokenizedDataset data;
            if (!eval_data.empty()) {
                data = feddpg::load_jsonl(eval_data, enc.config.vocab_size, enc.config.num_classes);
            } else {
                const auto cfg = resolve_config(eval_opts);
                data = feddpg::generate_synthetic(cfg.test_spec(), cfg.test_samples);
            }
            json j;
            j["accuracy"] = feddpg::evaluate_accuracy(gen, enc, data);
            j["samples"] = data.size();
            std::cout << j.dump(2) << "\n";
        } else if (*gen_data) {
            const auto cfg = resolve_config(gen_opts);
            const auto spec = cfg.task_spec();
            auto ds = feddpg::generate_synthetic(spec, gen_n);
            feddpg::save_jsonl(ds, gen_out);
            json j;
            j["path"] = gen_out;
            j["samples"] = ds.size();
            j["bayes_ceiling"] = feddpg::bayes_accuracy(spec, ds);
            std::cout << j.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
