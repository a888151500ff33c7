#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "feddpg/data.hpp"
#include "feddpg/digest.hpp"

using namespace feddpg;

namespace {

SyntheticTaskSpec reference_spec() {
    SyntheticTaskSpec s;
    s.num_classes = 2;
    s.vocab_size = 128;
    s.seq_len_min = 10;
    s.seq_len_max = 20;
    s.signal_tokens_per_class = 8;
    s.signal_rate = 0.3;
    s.seed = 42;
    return s;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("synthetic generation follows the signal layout") {
    SyntheticTaskSpec spec = reference_spec();

    SUBCASE("p=1.0 emits only the class's signal tokens") {
        spec.signal_rate = 1.0;
        const auto ds = generate_synthetic(spec, 200);
        for (size_t i = 0; i < ds.size(); ++i) {
            for (int tok : ds.tokens(i)) CHECK(spec.token_class(tok) == ds.labels[i]);
        }
    }
    SUBCASE("p=0.0 emits only noise; the oracle is reduced to guessing") {
        spec.signal_rate = 0.0;
        const auto ds = generate_synthetic(spec, 2000);
        for (size_t i = 0; i < ds.size(); ++i) {
            for (int tok : ds.tokens(i)) CHECK(spec.token_class(tok) == -1);
        }
        const double acc = bayes_accuracy(spec, ds);
        CHECK(acc > 0.44);
        CHECK(acc < 0.56);
    }
    SUBCASE("deterministic under the spec seed") {
        const auto a = generate_synthetic(spec, 500);
        const auto b = generate_synthetic(spec, 500);
        CHECK(a.digest() == b.digest());
        spec.seed += 1;
        CHECK(generate_synthetic(spec, 500).digest() != a.digest());
    }
    SUBCASE("labels stay balanced within 3 sigma") {
        const int n = 4000;
        const auto ds = generate_synthetic(spec, n);
        int ones = 0;
        for (int label : ds.labels) ones += label;
        const double sigma = std::sqrt(0.25 * n);
        CHECK(std::abs(ones - n / 2) <= 3.0 * sigma);
    }
}

TEST_CASE("bayes oracle on the reference task") {
    const SyntheticTaskSpec spec = reference_spec();
    const auto ds = generate_synthetic(spec, 10000);
    const double ceiling = bayes_accuracy(spec, ds);
    // p=0.3 over 10..20 positions: almost every sample carries a signal token
    CHECK(ceiling > 0.97);
    CHECK(ceiling <= 1.0);
}

TEST_CASE("tokenize_and_pad") {
    SUBCASE("short sequences get a pad suffix") {
        const auto ds = tokenize_and_pad({{5, 6, 7}}, {1}, 6, 0, 16, 2);
        CHECK(ds.sequences[0] == std::vector<int>{5, 6, 7, 0, 0, 0});
        CHECK(ds.lengths[0] == 3);
        CHECK(ds.tokens(0) == std::vector<int>{5, 6, 7});
    }
    SUBCASE("exact-length sequences are unchanged") {
        const auto ds = tokenize_and_pad({{1, 2, 3}}, {0}, 3, 0, 16, 2);
        CHECK(ds.sequences[0] == std::vector<int>{1, 2, 3});
        CHECK(ds.lengths[0] == 3);
    }
    SUBCASE("overlong tails are truncated") {
        const auto ds = tokenize_and_pad({{1, 2, 3, 4, 5}}, {0}, 3, 0, 16, 2);
        CHECK(ds.sequences[0] == std::vector<int>{1, 2, 3});
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(tokenize_and_pad({{}}, {0}, 4, 0, 16, 2), std::invalid_argument);
    }
}

TEST_CASE("jsonl round trip and validation") {
    const std::string path = temp_path("feddpg_test_data.jsonl");

    SUBCASE("empty file loads as an empty dataset") {
        std::ofstream(path).close();
        const auto ds = load_jsonl(path, 16, 2);
        CHECK(ds.size() == 0);
    }
    SUBCASE("single line") {
        std::ofstream out(path);
        out << R"({"tokens":[1,2],"label":0})" << "\n";
        out.close();
        const auto ds = load_jsonl(path, 16, 2);
        CHECK(ds.size() == 1);
        CHECK(ds.tokens(0) == std::vector<int>{1, 2});
        CHECK(ds.labels[0] == 0);
    }
    SUBCASE("label out of range is rejected with the line number") {
        std::ofstream out(path);
        out << R"({"tokens":[1],"label":0})" << "\n";
        out << R"({"tokens":[1],"label":7})" << "\n";
        out.close();
        try {
            load_jsonl(path, 16, 2);
            CHECK(false);
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SUBCASE("malformed line is rejected with the line number") {
        std::ofstream out(path);
        out << R"({"tokens":[1],"label":0})" << "\n";
        out << "not json" << "\n";
        out.close();
        try {
            load_jsonl(path, 16, 2);
            CHECK(false);
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SUBCASE("token id out of range is rejected") {
        std::ofstream out(path);
        out << R"({"tokens":[99],"label":0})" << "\n";
        out.close();
        CHECK_THROWS_AS(load_jsonl(path, 16, 2), std::runtime_error);
    }
    SUBCASE("save/load preserves every id and label") {
        const auto ds = generate_synthetic(reference_spec(), 300);
        save_jsonl(ds, path);
        const auto back = load_jsonl(path, ds.vocab_size, ds.num_classes);
        CHECK(back.digest() == ds.digest());
    }
    std::remove(path.c_str());
}

TEST_CASE("spec validation rejects degenerate layouts") {
    SyntheticTaskSpec spec = reference_spec();
    spec.vocab_size = 1 + spec.num_classes * spec.signal_tokens_per_class;  // no noise pool
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = reference_spec();
    spec.signal_rate = 1.5;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}
