#include <doctest.h>

#include <algorithm>
#include <set>

#include "feddpg/federation.hpp"

using namespace feddpg;

namespace {

SyntheticTaskSpec fed_task(uint64_t seed) {
    SyntheticTaskSpec s;
    s.num_classes = 2;
    s.vocab_size = 32;
    s.seq_len_min = 4;
    s.seq_len_max = 8;
    s.signal_tokens_per_class = 4;
    s.signal_rate = 0.7;
    s.seed = seed;
    return s;
}

EncoderConfig fed_encoder_config() {
    EncoderConfig c;
    c.d_e = 16;
    c.layers = 1;
    c.heads = 2;
    c.d_ff = 24;
    c.vocab_size = 32;
    c.max_len = 16;
    c.num_classes = 2;
    return c;
}

GeneratorConfig fed_generator_config() {
    GeneratorConfig c;
    c.d_e = 16;
    c.hidden = 4;
    c.prompt_len = 2;
    return c;
}

std::multiset<std::pair<std::vector<int>, int>> sample_multiset(const TokenizedDataset& ds) {
    std::multiset<std::pair<std::vector<int>, int>> out;
    for (size_t i = 0; i < ds.size(); ++i) out.insert({ds.tokens(i), ds.labels[i]});
    return out;
}

}  // namespace

TEST_CASE("iid partition") {
    const auto ds = generate_synthetic(fed_task(5), 100);

    SUBCASE("100 samples over 100 clients is one each") {
        const auto shards = partition_indices(ds, 100, PartitionScheme::iid, 0, 1);
        for (const auto& shard : shards) CHECK(shard.size() == 1);
    }
    SUBCASE("union of shards is the original multiset") {
        const auto shards = partition(ds, 7, PartitionScheme::iid, 0, 2);
        std::multiset<std::pair<std::vector<int>, int>> together;
        size_t total = 0;
        for (const auto& shard : shards) {
            total += shard.size();
            for (size_t i = 0; i < shard.size(); ++i) together.insert({shard.tokens(i), shard.labels[i]});
        }
        CHECK(total == ds.size());
        CHECK(together == sample_multiset(ds));
    }
    SUBCASE("disjoint index sets") {
        const auto shards = partition_indices(ds, 9, PartitionScheme::iid, 0, 3);
        std::vector<int> seen;
        for (const auto& shard : shards) seen.insert(seen.end(), shard.begin(), shard.end());
        std::sort(seen.begin(), seen.end());
        CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
        CHECK(seen.size() == ds.size());
    }
    SUBCASE("fewer samples than clients is an error") {
        CHECK_THROWS_AS(partition_indices(ds, 101, PartitionScheme::iid, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("label-skew partition with a large alpha approaches global proportions") {
    const auto ds = generate_synthetic(fed_task(11), 1000);
    double global_p1 = 0.0;
    for (int label : ds.labels) global_p1 += label;
    global_p1 /= static_cast<double>(ds.size());

    const auto shards = partition(ds, 10, PartitionScheme::label_skew, 1000.0, 4);
    size_t total = 0;
    for (const auto& shard : shards) {
        total += shard.size();
        REQUIRE(shard.size() > 0);
        double p1 = 0.0;
        for (int label : shard.labels) p1 += label;
        p1 /= static_cast<double>(shard.size());
        const double tv = std::abs(p1 - global_p1);  // two classes: TV = |dp|
        CHECK(tv <= 0.1);
    }
    CHECK(total == ds.size());
}

TEST_CASE("label-skew partition conserves samples at small alpha") {
    const auto ds = generate_synthetic(fed_task(13), 400);
    const auto shards = partition(ds, 8, PartitionScheme::label_skew, 0.2, 9);
    std::multiset<std::pair<std::vector<int>, int>> together;
    for (const auto& shard : shards) {
        for (size_t i = 0; i < shard.size(); ++i) together.insert({shard.tokens(i), shard.labels[i]});
    }
    CHECK(together == sample_multiset(ds));
}

TEST_CASE("client selection") {
    SUBCASE("ratio 1.0 selects everyone") {
        const auto ids = select_clients(12, 1.0, 3, 0);
        CHECK(ids.size() == 12);
        for (int i = 0; i < 12; ++i) CHECK(ids[static_cast<size_t>(i)] == i);
    }
    SUBCASE("5% of 100 is exactly 5 distinct sorted ids") {
        const auto ids = select_clients(100, 0.05, 3, 7);
        CHECK(ids.size() == 5);
        CHECK(std::is_sorted(ids.begin(), ids.end()));
        CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
        for (int id : ids) {
            CHECK(id >= 0);
            CHECK(id < 100);
        }
    }
    SUBCASE("same seed and round reproduce the selection; rounds differ") {
        CHECK(select_clients(100, 0.1, 9, 4) == select_clients(100, 0.1, 9, 4));
        CHECK(select_clients(100, 0.1, 9, 4) != select_clients(100, 0.1, 9, 5));
    }
}

TEST_CASE("local training") {
    EncoderParams enc = EncoderParams::init(fed_encoder_config(), 3);
    enc.freeze();
    GeneratorParams global = GeneratorParams::init(fed_generator_config(), 5);

    ClientState client;
    client.id = 0;
    client.shard = generate_synthetic(fed_task(17), 24);
    client.seed_base = 99;

    RoundConfig cfg;
    cfg.num_clients = 1;
    cfg.selection_ratio = 1.0;
    cfg.batch_size = 8;
    cfg.lr = 0.05;

    SUBCASE("zero epochs returns the broadcast bit-exactly") {
        cfg.local_epochs = 0;
        const auto res = local_train(client, global, enc, cfg, 0);
        CHECK(res.params.digest() == global.digest());
    }
    SUBCASE("zero learning rate returns the broadcast bit-exactly") {
        cfg.local_epochs = 2;
        cfg.lr = 0.0;
        const auto res = local_train(client, global, enc, cfg, 0);
        CHECK(res.params.digest() == global.digest());
    }
    SUBCASE("training on a separable shard reduces the loss") {
        cfg.local_epochs = 20;
        Tape probe;
        probe.set_recording(false);
        std::vector<int> all(client.shard.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        const double before = forward_loss(probe, client.shard, all, global, enc).loss.item();
        const auto res = local_train(client, global, enc, cfg, 0);
        const double after = forward_loss(probe, client.shard, all, res.params, enc).loss.item();
        CHECK(after < before);
    }
}

TEST_CASE("aggregation") {
    GeneratorConfig cfg;
    cfg.d_e = 1;
    cfg.hidden = 1;
    cfg.prompt_len = 2;

    auto with_values = [&](double w1, double b1, double w2a, double w2b) {
        GeneratorParams p = GeneratorParams::init(cfg, 1);
        p.w1.data() = {w1};
        p.b1.data() = {b1};
        p.w2.data() = {w2a, w2b};
        p.b2.data() = {0, 0};
        return p;
    };

    SUBCASE("mean of two updates") {
        const auto out = aggregate({with_values(1, 3, 0, 0), with_values(3, 5, 0, 0)});
        CHECK(out.w1.data()[0] == 2.0);
        CHECK(out.b1.data()[0] == 4.0);
    }
    SUBCASE("identical updates aggregate to themselves bit-exactly") {
        GeneratorParams p = GeneratorParams::init(fed_generator_config(), 21);
        const auto out = aggregate({p.clone(), p.clone(), p.clone()});
        CHECK(out.digest() == p.digest());
    }
    SUBCASE("matches an independent sum/N oracle within 1e-15") {
        Rng rng(31);
        std::vector<GeneratorParams> updates;
        for (int c = 0; c < 5; ++c) {
            GeneratorParams p = GeneratorParams::init(fed_generator_config(), 100 + static_cast<uint64_t>(c));
            updates.push_back(std::move(p));
        }
        const auto out = aggregate(updates);
        auto out_tensors = out.trainable();
        for (size_t k = 0; k < out_tensors.size(); ++k) {
            for (int64_t i = 0; i < out_tensors[k].numel(); ++i) {
                double expected = 0.0;
                for (const auto& u : updates) expected += u.trainable()[k].data()[static_cast<size_t>(i)];
                expected /= 5.0;
                CHECK(std::abs(out_tensors[k].data()[static_cast<size_t>(i)] - expected) <= 1e-15);
            }
        }
    }
    SUBCASE("aggregation is linear in its inputs") {
        std::vector<GeneratorParams> updates, scaled;
        for (int c = 0; c < 4; ++c) {
            GeneratorParams p = GeneratorParams::init(fed_generator_config(), 200 + static_cast<uint64_t>(c));
            GeneratorParams q = p.clone();
            for (Tensor& t : q.trainable()) {
                for (double& v : t.data()) v *= 3.0;
            }
            updates.push_back(std::move(p));
            scaled.push_back(std::move(q));
        }
        const auto mean = aggregate(updates);
        const auto mean_scaled = aggregate(scaled);
        auto a = mean.trainable();
        auto b = mean_scaled.trainable();
        for (size_t k = 0; k < a.size(); ++k) {
            for (int64_t i = 0; i < a[k].numel(); ++i) {
                CHECK(std::abs(3.0 * a[k].data()[static_cast<size_t>(i)] - b[k].data()[static_cast<size_t>(i)]) <=
                      1e-15);
            }
        }
    }
    SUBCASE("structural mismatch names the client") {
        GeneratorConfig other = fed_generator_config();
        other.prompt_len = 3;
        std::vector<GeneratorParams> updates;
        updates.push_back(GeneratorParams::init(fed_generator_config(), 1));
        updates.push_back(GeneratorParams::init(other, 2));
        try {
            aggregate(updates, {10, 42});
            CHECK(false);
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("42") != std::string::npos);
        }
    }
    SUBCASE("empty update list is rejected") {
        CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
    }
}

TEST_CASE("rounds") {
    EncoderParams enc = EncoderParams::init(fed_encoder_config(), 7);
    enc.freeze();
    const uint64_t enc_digest = enc.digest();

    const auto train = generate_synthetic(fed_task(23), 60);
    const auto test = generate_synthetic(fed_task(24), 40);

    RoundConfig cfg;
    cfg.num_clients = 6;
    cfg.selection_ratio = 0.5;
    cfg.local_epochs = 1;
    cfg.lr = 0.05;
    cfg.batch_size = 4;

    GeneratorParams init = GeneratorParams::init(fed_generator_config(), 77);
    auto clients = make_clients(train, cfg, PartitionScheme::iid, 0, 5, init);

    SUBCASE("lr=0 keeps the global parameters unchanged") {
        ServerState server{init.clone(), 0, enc_digest, 123};
        RoundConfig frozen_cfg = cfg;
        frozen_cfg.lr = 0.0;
        Transport transport;
        const auto m = run_round(server, clients, enc, frozen_cfg, test, transport);
        CHECK(server.global_generator.digest() == init.digest());
        CHECK(server.round == 1);
        CHECK(m.selected.size() == 3);
    }
    SUBCASE("encoder digest is untouched and bytes follow the accounting formula") {
        ServerState server{init.clone(), 0, enc_digest, 123};
        Transport transport;
        const auto m = run_round(server, clients, enc, cfg, test, transport);
        CHECK(enc.digest() == enc_digest);
        CHECK(m.bytes_transmitted == 2 * 3 * init.transmitted_bytes());
        CHECK(m.accuracy.has_value());
        REQUIRE(m.selected.size() == 3);
    }
    SUBCASE("only generator parameters ever travel to the server") {
        ServerState server{init.clone(), 0, enc_digest, 123};
        Transport transport;
        for (int r = 0; r < 3; ++r) run_round(server, clients, enc, cfg, test, transport);
        size_t uploads = 0;
        for (const auto& rec : transport.log()) {
            if (rec.to_server) {
                ++uploads;
                CHECK(rec.payload_kind == "generator_params");
            }
        }
        CHECK(uploads == 9);
    }
    SUBCASE("sequential and parallel clients produce bit-identical trajectories") {
        ServerState seq_server{init.clone(), 0, enc_digest, 55};
        ServerState par_server{init.clone(), 0, enc_digest, 55};
        auto seq_clients = make_clients(train, cfg, PartitionScheme::iid, 0, 5, init);
        auto par_clients = make_clients(train, cfg, PartitionScheme::iid, 0, 5, init);
        RoundConfig par_cfg = cfg;
        par_cfg.parallel_clients = true;
        Transport ta, tb;
        for (int r = 0; r < 4; ++r) {
            const auto ma = run_round(seq_server, seq_clients, enc, cfg, test, ta);
            const auto mb = run_round(par_server, par_clients, enc, par_cfg, test, tb);
            CHECK(ma.selected == mb.selected);
            CHECK(ma.accuracy == mb.accuracy);
            CHECK(seq_server.global_generator.digest() == par_server.global_generator.digest());
        }
    }
    SUBCASE("evaluation is deterministic and exact on an oracle-labeled set") {
        ServerState server{init.clone(), 0, enc_digest, 3};
        // labels rewritten to the model's own predictions -> accuracy 1.0
        TokenizedDataset oracle = test;
        for (size_t i = 0; i < oracle.size(); ++i) {
            oracle.labels[i] = predict(server.global_generator, enc, oracle.tokens(i));
        }
        CHECK(evaluate_global(server.global_generator, oracle, enc) == 1.0);
        CHECK(evaluate_global(server.global_generator, test, enc) ==
              evaluate_global(server.global_generator, test, enc));
    }
}

TEST_CASE("balanced labels keep an untrained model near chance") {
    EncoderParams enc = EncoderParams::init(fed_encoder_config(), 101);
    enc.freeze();
    GeneratorParams gen = GeneratorParams::init(fed_generator_config(), 102);
    SyntheticTaskSpec spec = fed_task(103);
    spec.signal_rate = 0.0;  // no class information at all
    const auto test = generate_synthetic(spec, 400);
    const double acc = evaluate_global(gen, test, enc);
    CHECK(acc >= 0.4);
    CHECK(acc <= 0.6);
}
