#include <doctest.h>

#include <map>

#include "feddpg/unlearning.hpp"
#include "gradcheck.hpp"

using namespace feddpg;

namespace {

EncoderConfig un_encoder_config() {
    EncoderConfig c;
    c.d_e = 8;
    c.layers = 1;
    c.heads = 2;
    c.d_ff = 12;
    c.vocab_size = 48;
    c.max_len = 16;
    c.num_classes = 4;
    return c;
}

GeneratorConfig un_generator_config() {
    GeneratorConfig c;
    c.d_e = 8;
    c.hidden = 4;
    c.prompt_len = 2;
    return c;
}

TokenizedDataset un_shard(uint64_t seed, int n) {
    SyntheticTaskSpec s;
    s.num_classes = 4;
    s.vocab_size = 48;
    s.seq_len_min = 3;
    s.seq_len_max = 6;
    s.signal_tokens_per_class = 4;
    s.signal_rate = 0.6;
    s.seed = seed;
    return generate_synthetic(s, n);
}

}  // namespace

TEST_CASE("relabeling") {
    SUBCASE("two classes: always the other label") {
        Rng rng(1);
        for (int i = 0; i < 50; ++i) {
            CHECK(relabel_one(0, 2, rng) == 1);
            CHECK(relabel_one(1, 2, rng) == 0);
        }
    }
    SUBCASE("never the original label") {
        Rng rng(2);
        for (int i = 0; i < 500; ++i) {
            const int orig = i % 4;
            const int fresh = relabel_one(orig, 4, rng);
            CHECK(fresh != orig);
            CHECK(fresh >= 0);
            CHECK(fresh < 4);
        }
    }
    SUBCASE("alternatives are uniform within 2% over 10k draws") {
        Rng rng(3);
        std::map<int, int> counts;
        const int n = 10000;
        for (int i = 0; i < n; ++i) ++counts[relabel_one(0, 4, rng)];
        for (int label : {1, 2, 3}) {
            const double freq = static_cast<double>(counts[label]) / n;
            CHECK(freq == doctest::Approx(1.0 / 3.0).epsilon(0.06));  // 1/3 +- 0.02
        }
    }
    SUBCASE("a single class cannot be unlearned") {
        Rng rng(4);
        CHECK_THROWS_AS(relabel_one(0, 1, rng), std::invalid_argument);
    }
}

TEST_CASE("unlearn set selection") {
    const auto shard = un_shard(7, 20);
    UnlearnRequest req;
    req.client_id = 3;
    req.forget_fraction = 0.2;
    req.seed = 9;

    const auto sets = draw_unlearn_sets(shard, req);
    CHECK(sets.forget.size() == 4);
    CHECK(sets.retain.size() == 4);
    for (const RelabeledSample& f : sets.forget) {
        CHECK(f.new_label != f.original_label);
        CHECK(f.original_label == shard.labels[static_cast<size_t>(f.shard_index)]);
        for (int r : sets.retain) CHECK(r != f.shard_index);  // retain excludes the forget set
    }

    SUBCASE("explicit indices are honored") {
        UnlearnRequest explicit_req = req;
        explicit_req.forget_indices = {1, 5, 5, 9};
        const auto s2 = draw_unlearn_sets(shard, explicit_req);
        REQUIRE(s2.forget.size() == 3);  // duplicates collapse
        CHECK(s2.forget[0].shard_index == 1);
        CHECK(s2.forget[1].shard_index == 5);
        CHECK(s2.forget[2].shard_index == 9);
    }
    SUBCASE("out-of-range indices are rejected") {
        UnlearnRequest bad = req;
        bad.forget_indices = {99};
        CHECK_THROWS_AS(draw_unlearn_sets(shard, bad), std::invalid_argument);
    }
}

TEST_CASE("unlearning loss") {
    EncoderParams enc = EncoderParams::init(un_encoder_config(), 5);
    enc.freeze();
    GeneratorParams gen = GeneratorParams::init(un_generator_config(), 6);
    const auto shard = un_shard(11, 12);

    UnlearnRequest req;
    req.client_id = 0;
    req.forget_fraction = 0.25;
    req.seed = 13;
    const auto sets = draw_unlearn_sets(shard, req);

    SUBCASE("lambda 0 equals the retain-only loss exactly, value and gradient") {
        Tape t;
        Tensor combined = unlearn_loss(t, shard, sets, 0.0, gen, enc);
        Tape t2;
        Tensor retain_only = forward_loss(t2, shard, sets.retain, gen, enc).loss;
        CHECK(combined.item() == retain_only.item());

        GeneratorParams a = gen.clone();
        GeneratorParams b = gen.clone();
        Tape ta;
        ta.backward(unlearn_loss(ta, shard, sets, 0.0, a, enc));
        Tape tb;
        tb.backward(forward_loss(tb, shard, sets.retain, b, enc).loss);
        const auto ga = a.trainable();
        const auto gb = b.trainable();
        for (size_t k = 0; k < ga.size(); ++k) CHECK(ga[k].grad() == gb[k].grad());
    }
    SUBCASE("combined gradient matches central differences at lambda=0.5") {
        auto forward = [&] {
            Tape t;
            t.set_recording(false);
            return unlearn_loss(t, shard, sets, 0.5, gen, enc).item();
        };
        Tape t;
        t.backward(unlearn_loss(t, shard, sets, 0.5, gen, enc));
        const auto rep = gradcheck::check(
            {{"w1", gen.w1}, {"b1", gen.b1}, {"w2", gen.w2}, {"b2", gen.b2}}, forward, 1e-5);
        CHECK(rep.max_rel_error <= 1e-4);
    }
    SUBCASE("empty forget set is a contract error") {
        UnlearnSets empty;
        empty.retain = sets.retain;
        Tape t;
        CHECK_THROWS_AS(unlearn_loss(t, shard, empty, 1.0, gen, enc), std::invalid_argument);
    }
}

TEST_CASE("local unlearning and replacement") {
    EncoderParams enc = EncoderParams::init(un_encoder_config(), 15);
    enc.freeze();
    const uint64_t enc_digest = enc.digest();
    GeneratorParams global = GeneratorParams::init(un_generator_config(), 16);

    ClientState client;
    client.id = 2;
    client.shard = un_shard(17, 16);
    client.seed_base = 18;

    UnlearnRequest req;
    req.client_id = 2;
    req.forget_fraction = 0.25;
    req.lambda = 1.0;
    req.lr = 0.05;
    req.seed = 19;

    SUBCASE("zero epochs returns the input bit-exactly") {
        req.unlearn_epochs = 0;
        const auto out = local_unlearn(client, global, enc, req);
        CHECK(out.digest() == global.digest());
    }
    SUBCASE("replacement installs the client parameters bit-exactly") {
        req.unlearn_epochs = 5;
        const auto out = local_unlearn(client, global, enc, req);
        CHECK(out.digest() != global.digest());

        ServerState server{global.clone(), 7, enc_digest, 1};
        GeneratorParams other_client = global.clone();
        server_replace(server, out);
        CHECK(server.global_generator.digest() == out.digest());
        CHECK(server.round == 8);
        CHECK(other_client.digest() == global.digest());  // nobody else is touched
        CHECK(enc.digest() == enc_digest);
    }
    SUBCASE("structurally different parameters are rejected") {
        GeneratorConfig other = un_generator_config();
        other.prompt_len = 3;
        ServerState server{global.clone(), 0, enc_digest, 1};
        CHECK_THROWS_AS(server_replace(server, GeneratorParams::init(other, 1)), std::runtime_error);
    }
}

TEST_CASE("forgetting evaluation") {
    EncoderParams enc = EncoderParams::init(un_encoder_config(), 21);
    enc.freeze();
    GeneratorParams gen = GeneratorParams::init(un_generator_config(), 22);
    const auto forget = un_shard(23, 8);
    const auto test = un_shard(24, 30);

    ClientState c1, c2;
    c1.id = 4;
    c1.shard = un_shard(25, 10);
    c2.id = 9;
    c2.shard = un_shard(26, 10);

    SUBCASE("identical parameters give zero deltas") {
        const auto report = evaluate_forgetting(gen, gen.clone(), enc, forget, test, {&c1, &c2});
        CHECK(report.forget_before == report.forget_after);
        CHECK(report.global_before == report.global_after);
        for (const auto& c : report.clients) CHECK(c.before == c.after);
    }
    SUBCASE("the report lists exactly the requested clients") {
        const auto report = evaluate_forgetting(gen, gen.clone(), enc, forget, test, {&c1, &c2});
        REQUIRE(report.clients.size() == 2);
        CHECK(report.clients[0].id == 4);
        CHECK(report.clients[1].id == 9);
        CHECK(report.forget_size == 8);
    }
}
