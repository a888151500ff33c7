#include <doctest.h>

#include <cmath>

#include "feddpg/tensor.hpp"
#include "gradcheck.hpp"

using namespace feddpg;

TEST_CASE("matmul products") {
    Tape t;
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    CHECK(matmul(t, eye, b).data() == b.data());

    Tensor row = Tensor::from({1, 2}, {1, 2});
    Tensor col = Tensor::from({2, 1}, {3, 4});
    CHECK(matmul(t, row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    bool threw = false;
    try {
        matmul(t, a, b);
    } catch (const std::runtime_error& e) {
        threw = true;
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("matmul gradient matches central differences") {
    Rng rng(7);
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng);
    Tensor b = Tensor::uniform({4, 2}, -1, 1, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);

    auto forward = [&] {
        Tape t;
        t.set_recording(false);
        return sum(t, matmul(t, a, b)).item();
    };
    Tape t;
    Tensor loss = sum(t, matmul(t, a, b));
    t.backward(loss);
    const auto rep = gradcheck::check({{"a", a}, {"b", b}}, forward, 1e-5);
    CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("softmax rows") {
    Tape t;
    Tensor flat = softmax_rows(t, Tensor::from({1, 2}, {0, 0}));
    CHECK(flat.data()[0] == doctest::Approx(0.5));
    CHECK(flat.data()[1] == doctest::Approx(0.5));

    Tensor big = softmax_rows(t, Tensor::from({1, 2}, {1000, 1000}));
    CHECK(big.data()[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(big.data()[0]));

    Tensor skew = softmax_rows(t, Tensor::from({1, 2}, {0.0, std::log(3.0)}));
    CHECK(skew.data()[0] == doctest::Approx(0.25));
    CHECK(skew.data()[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax rows sum to one for random finite input") {
    Rng rng(11);
    Tape t;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = Tensor::uniform({4, 7}, -50, 50, rng);
        Tensor y = softmax_rows(t, x);
        for (int i = 0; i < 4; ++i) {
            double row = 0.0;
            for (int j = 0; j < 7; ++j) row += y.data()[static_cast<size_t>(i * 7 + j)];
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax rejects NaN input") {
    Tape t;
    Tensor x = Tensor::from({1, 2}, {0.0, std::nan("")});
    CHECK_THROWS_AS(softmax_rows(t, x), std::runtime_error);
}

TEST_CASE("layer norm fixed points") {
    Tape t;
    Tensor gain3 = Tensor::full({3}, 1.0);
    Tensor bias3 = Tensor::zeros({3});
    Tensor constant = layer_norm(t, Tensor::from({1, 3}, {5, 5, 5}), gain3, bias3);
    for (double v : constant.data()) CHECK(v == doctest::Approx(0.0));

    Tensor gain2 = Tensor::full({2}, 1.0);
    Tensor bias2 = Tensor::zeros({2});
    Tensor standard = layer_norm(t, Tensor::from({1, 2}, {1, 3}), gain2, bias2);
    CHECK(standard.data()[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(standard.data()[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer norm gradient matches central differences") {
    Rng rng(13);
    Tensor x = Tensor::uniform({3, 5}, -2, 2, rng);
    Tensor gain = Tensor::uniform({5}, 0.5, 1.5, rng);
    Tensor bias = Tensor::uniform({5}, -0.5, 0.5, rng);
    for (Tensor* p : {&x, &gain, &bias}) p->set_requires_grad(true);

    auto forward = [&] {
        Tape t;
        t.set_recording(false);
        Tensor w = Tensor::from({3, 5}, [] {
            std::vector<double> v(15);
            for (size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i + 1);
            return v;
        }());
        return sum(t, mul(t, layer_norm(t, x, gain, bias), w)).item();
    };
    Tape t;
    Tensor w = Tensor::from({3, 5}, [] {
        std::vector<double> v(15);
        for (size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i + 1);
        return v;
    }());
    t.backward(sum(t, mul(t, layer_norm(t, x, gain, bias), w)));
    const auto rep = gradcheck::check({{"x", x}, {"gain", gain}, {"bias", bias}}, forward, 1e-5);
    CHECK(rep.max_rel_error <= 1e-5);
}

TEST_CASE("cross entropy values") {
    Tape t;
    CHECK(cross_entropy(t, Tensor::from({2}, {0, 0}), 0).item() == doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy(t, Tensor::from({2}, {10, -10}), 0).item() ==
          doctest::Approx(2.0611536181902037e-9).epsilon(1e-6));
    CHECK_THROWS_AS(cross_entropy(t, Tensor::from({2}, {0, 0}), 2), std::out_of_range);
    CHECK_THROWS_AS(cross_entropy(t, Tensor::from({2}, {0, 0}), -1), std::out_of_range);
}

TEST_CASE("cross entropy gradient is softmax minus one-hot") {
    Tensor logits = Tensor::from({3}, {0.5, -1.0, 2.0});
    logits.set_requires_grad(true);
    Tape t;
    t.backward(cross_entropy(t, logits, 1));

    double mx = 2.0, total = 0.0;
    std::vector<double> p(3);
    for (int j = 0; j < 3; ++j) total += std::exp(logits.data()[static_cast<size_t>(j)] - mx);
    for (int j = 0; j < 3; ++j) p[static_cast<size_t>(j)] = std::exp(logits.data()[static_cast<size_t>(j)] - mx) / total;
    CHECK(logits.grad()[0] == doctest::Approx(p[0]));
    CHECK(logits.grad()[1] == doctest::Approx(p[1] - 1.0));
    CHECK(logits.grad()[2] == doctest::Approx(p[2]));

    auto forward = [&] {
        Tape nt;
        nt.set_recording(false);
        return cross_entropy(nt, logits, 1).item();
    };
    const auto rep = gradcheck::check({{"logits", logits}}, forward, 1e-5);
    CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("backward basics") {
    Tensor w = Tensor::from({3}, {1, 2, 3});
    w.set_requires_grad(true);

    SUBCASE("sum gradient is ones") {
        Tape t;
        t.backward(sum(t, w));
        CHECK(w.grad() == std::vector<double>{1, 1, 1});
    }
    SUBCASE("sum of squares gradient is 2w") {
        Tape t;
        t.backward(sum(t, mul(t, w, w)));
        CHECK(w.grad() == std::vector<double>{2, 4, 6});
    }
    SUBCASE("backward on non-scalar is a contract error") {
        Tape t;
        Tensor y = mul(t, w, w);
        CHECK_THROWS_AS(t.backward(y), std::runtime_error);
    }
    SUBCASE("gradients accumulate until zeroed") {
        Tape t;
        t.backward(sum(t, w));
        Tape t2;
        t2.backward(sum(t2, w));
        CHECK(w.grad() == std::vector<double>{2, 2, 2});
        w.zero_grad();
        Tape t3;
        t3.backward(sum(t3, w));
        CHECK(w.grad() == std::vector<double>{1, 1, 1});
    }
    SUBCASE("clearing the record keeps values") {
        Tape t;
        Tensor y = sum(t, mul(t, w, w));
        t.clear();
        CHECK(t.size() == 0);
        CHECK(w.data() == std::vector<double>{1, 2, 3});
        CHECK(y.item() == doctest::Approx(14.0));
    }
}

TEST_CASE("grad is only populated for participating trainable tensors") {
    Tensor frozen = Tensor::from({2}, {1, 2});
    Tensor trainable = Tensor::from({2}, {3, 4});
    trainable.set_requires_grad(true);
    Tensor bystander = Tensor::from({2}, {9, 9});
    bystander.set_requires_grad(true);

    Tape t;
    t.backward(sum(t, mul(t, frozen, trainable)));
    CHECK(trainable.has_grad());
    CHECK_FALSE(frozen.has_grad());
    CHECK_FALSE(bystander.has_grad());
    CHECK(trainable.grad() == std::vector<double>{1, 2});
}

TEST_CASE("reshape keeps row-major order and round-trips bit-exactly") {
    Rng rng(17);
    Tape t;
    Tensor flat = Tensor::from({12}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    Tensor mat = reshape(t, flat, {3, 4});
    CHECK(mat.data()[4] == 4);  // row 1 starts at element 4
    CHECK(mat.data()[11] == 11);

    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = Tensor::uniform({6, 4}, -10, 10, rng);
        Tensor back = reshape(t, reshape(t, x, {2, 12}), {6, 4});
        CHECK(back.data() == x.data());
    }
    CHECK_THROWS_AS(reshape(t, flat, {5, 2}), std::runtime_error);
}

TEST_CASE("repeated forward passes are bit-identical") {
    Rng rng(23);
    Tensor a = Tensor::uniform({4, 4}, -1, 1, rng);
    Tensor g = Tensor::full({4}, 1.0);
    Tensor b = Tensor::zeros({4});
    auto run = [&] {
        Tape t;
        return softmax_rows(t, layer_norm(t, matmul(t, a, a), g, b)).data();
    };
    CHECK(run() == run());
}

TEST_CASE("mean_rows_exact is bit-invariant under row permutation") {
    Rng rng(29);
    Tensor x = Tensor::uniform({7, 5}, -3, 3, rng);
    std::vector<double> permuted(x.data());
    // rotate rows by 3
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 5; ++j) {
            permuted[static_cast<size_t>(i * 5 + j)] = x.data()[static_cast<size_t>(((i + 3) % 7) * 5 + j)];
        }
    }
    Tensor y = Tensor::from({7, 5}, permuted);
    Tape t;
    CHECK(mean_rows_exact(t, x).data() == mean_rows_exact(t, y).data());
}

TEST_CASE("slice and concat of rows") {
    Tape t;
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({1, 2}, {5, 6});
    Tensor z = concat_rows(t, a, b);
    CHECK(z.shape() == Shape{3, 2});
    CHECK(z.data() == std::vector<double>{1, 2, 3, 4, 5, 6});
    Tensor head = slice_rows(t, z, 2);
    CHECK(head.data() == a.data());
    CHECK_THROWS_AS(slice_rows(t, z, 4), std::runtime_error);
}

TEST_CASE("sgd step") {
    Tensor w = Tensor::from({1}, {1.0});
    w.set_requires_grad(true);
    std::vector<Tensor> params{w};

    SUBCASE("no grad, no change") {
        sgd_step(params, 0.5);
        CHECK(w.data()[0] == 1.0);
    }
    SUBCASE("w - lr*grad, grads zeroed after") {
        Tape t;
        t.backward(sum(t, scale(t, w, 2.0)));  // grad = 2
        sgd_step(params, 0.5);
        CHECK(w.data()[0] == doctest::Approx(0.0));
        CHECK_FALSE(w.has_grad());
    }
}
