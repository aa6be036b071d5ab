#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kt/models/builders.hpp"
#include "kt/models/checkpoint.hpp"
#include "kt/models/model.hpp"
#include "kt/models/trainer.hpp"
#include "kt/nn/ops.hpp"

using namespace kt;
using namespace kt::models;
using nn::Shape;
using nn::Tensor;

namespace {

Tensor random_image(const Shape& shape, nn::Rng& rng) {
    Tensor t(shape);
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform01());
    return t;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("ktedge_test_" + name);
}

}  // namespace

TEST_CASE("simplified squeezenet parameter counts") {
    nn::Rng rng(1);
    const auto m = build_simplified_squeezenet({40, 40, 3}, 7, rng);
    CHECK(m.parameter_count() == 8479);
    CHECK(checkpoint_payload_bytes(m) == 33916);
    CHECK(squeezenet_parameter_count(3, 7) == 8479);

    const auto small = build_simplified_squeezenet({28, 28, 1}, 2, rng);
    CHECK(small.parameter_count() == 7866);

    for (std::size_t c = 1; c <= 4; ++c)
        for (std::size_t n = 2; n <= 10; ++n) {
            const std::size_t closed = (16 * 9 * c + 16) + 740 + 804 + 2888 + 3144 + (n * 64 + n);
            CHECK(squeezenet_parameter_count(c, n) == closed);
            CHECK(build_simplified_squeezenet({20, 20, c}, n, rng).parameter_count() == closed);
        }
}

TEST_CASE("squeezenet layer plan") {
    nn::Rng rng(2);
    auto m = build_simplified_squeezenet({40, 40, 3}, 7, rng);
    CHECK(m.architecture() ==
          "input(40,40,3) > conv(16,3x3,s2,valid) > mish > maxpool(3x3,s2) > fire(4,16) > fire(4,16) > fire(8,32) > "
          "maxpool(3x3,s2) > fire(8,32) > dropout(0.5,seed=" +
              std::to_string(static_cast<const nn::Dropout<float>&>(m.layer(8)).seed()) +
              ") > conv(7,1x1,s1,valid) > gap");
    const auto logits = m.forward(Tensor({40, 40, 3}), Mode::infer);
    CHECK(logits.shape() == Shape{7});
    CHECK(logits.all_finite());
    // Zero input with zero biases propagates to zero logits.
    for (auto v : logits.values()) CHECK(v == 0.0f);

    // conv biases are zero and kernels bounded by the he_uniform limit.
    for (const auto* p : m.params()) {
        if (p->name.ends_with("/bias"))
            for (auto v : p->value.values()) CHECK(v == 0.0f);
    }
}

TEST_CASE("squeezenet rejects inputs that are too small") {
    nn::Rng rng(3);
    try {
        build_simplified_squeezenet({13, 13, 3}, 7, rng);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::invalid_argument);
        CHECK(std::string(e.what()).find("maxpool3") != std::string::npos);
    }
    CHECK_NOTHROW(build_simplified_squeezenet({15, 15, 3}, 7, rng));
    CHECK_THROWS_AS(build_simplified_squeezenet({2, 2, 1}, 2, rng), Error);
}

TEST_CASE("mlp builder") {
    nn::Rng rng(4);
    const auto m = build_mlp({4}, 8, 3, rng);
    CHECK(m.parameter_count() == 67);
    CHECK(m.predict_logits(Tensor({4})).shape() == Shape{3});
    CHECK_THROWS_AS(build_mlp({4}, 0, 3, rng), Error);
}

TEST_CASE("forward contract") {
    nn::Rng rng(5);
    auto m = build_simplified_squeezenet({20, 20, 1}, 3, rng);
    const auto x = random_image({20, 20, 1}, rng);
    const auto a = m.forward(x, Mode::infer);
    const auto b = m.forward(x, Mode::infer);
    CHECK(a == b);
    CHECK(m.predict_logits(x) == a);
    CHECK_THROWS_AS(m.forward(Tensor({20, 20, 3}), Mode::infer), Error);

    SUBCASE("train mode differs only through dropout") {
        auto copy = m;
        CHECK(copy.forward(x, Mode::train) == m.forward(x, Mode::train));
    }
}

TEST_CASE("mlp forward matches an independent implementation") {
    nn::Rng rng(6);
    auto m = build_mlp_seeded<double>({3}, 4, 2, 99);
    const auto params = m.params();
    const auto& w1 = params[0]->value;  // [3,4]
    const auto& b1 = params[1]->value;
    const auto& w2 = params[2]->value;  // [4,2]
    const auto& b2 = params[3]->value;
    for (int trial = 0; trial < 10; ++trial) {
        nn::Tensor64 x({3});
        for (auto& v : x.values()) v = rng.uniform(-2, 2);
        double h[4];
        for (int j = 0; j < 4; ++j) {
            double s = b1[j];
            for (int i = 0; i < 3; ++i) s += x[i] * w1[i * 4 + j];
            h[j] = s * std::tanh(std::log1p(std::exp(s)));
        }
        const auto logits = m.predict_logits(x);
        for (int k = 0; k < 2; ++k) {
            double s = b2[k];
            for (int j = 0; j < 4; ++j) s += h[j] * w2[j * 2 + k];
            CHECK(std::abs(logits[k] - s) < 1e-6);
        }
    }
}

TEST_CASE("train_step") {
    SUBCASE("repeated steps on one example drive the loss toward zero") {
        nn::Rng rng(7);
        auto m = build_mlp({6}, 16, 3, rng);
        nn::Adam<float> opt;
        const auto x = random_image({6}, rng);
        float first = 0, last = 0;
        for (int i = 0; i < 1000; ++i) {
            last = train_step(m, x, 2, opt);
            if (i == 0) first = last;
        }
        CHECK(last < first);
        CHECK(last < 0.01f);
        CHECK(opt.steps() == 1000);
    }
    SUBCASE("zero learning rate leaves parameters unchanged") {
        nn::Rng rng(8);
        auto m = build_mlp({6}, 5, 3, rng);
        const auto before = m.flat_parameters();
        nn::Adam<float> opt(nn::AdamConfig{0.0, 0.9, 0.999, 1e-7});
        train_step(m, random_image({6}, rng), 1, opt);
        CHECK(m.flat_parameters() == before);
    }
    SUBCASE("label out of range") {
        nn::Rng rng(9);
        auto m = build_mlp({2}, 2, 2, rng);
        nn::Adam<float> opt;
        CHECK_THROWS_AS(train_step(m, Tensor({2}), 2, opt), Error);
    }
    SUBCASE("single step reproduces a scalar-chain reference") {
        // One dense unit 1 -> 2 with weights (w0, w1) and zero bias; x = 1.5, label 0.
        std::vector<nn::LayerPtr<double>> layers;
        layers.push_back(std::make_unique<nn::Dense<double>>(
            "d", nn::Tensor64({1, 2}, std::vector<double>{0.3, -0.2}), nn::Tensor64({2})));
        Model64 m("dense-ref", {1}, 2, std::move(layers));
        nn::Adam<double> opt;
        const double loss = train_step(m, nn::Tensor64({1}, std::vector<double>{1.5}), 0, opt);

        const double z0 = 0.3 * 1.5, z1 = -0.2 * 1.5;
        const double lse = std::log(std::exp(z0) + std::exp(z1));
        CHECK(std::abs(loss - (lse - z0)) < 1e-12);
        // First Adam step moves each parameter by lr * sign(g) / (1 + eps/|g|).
        const double p0 = std::exp(z0 - lse);
        const double g_w0 = (p0 - 1.0) * 1.5;
        const double expected_w0 = 0.3 - 0.001 * g_w0 / (std::abs(g_w0) + 1e-7);
        CHECK(std::abs(m.params()[0]->value[0] - expected_w0) < 1e-12);
    }
}

TEST_CASE("stratified split") {
    nn::Rng rng(10);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 1000; ++i) labels.push_back(i % 7);
    const auto s = stratified_split(labels, 0.2, rng);
    CHECK(s.train.size() == 800);
    CHECK(s.validation.size() == 200);
    std::vector<int> seen(1000, 0);
    for (auto i : s.train) ++seen[i];
    for (auto i : s.validation) ++seen[i];
    for (auto c : seen) CHECK(c == 1);
    std::vector<int> per_class(7, 0);
    for (auto i : s.validation) ++per_class[labels[i]];
    for (auto c : per_class) CHECK((c == 28 || c == 29));
}

TEST_CASE("fit") {
    nn::Rng rng(11);
    data::LabeledSet semi;
    for (std::size_t c = 0; c < 7; ++c) semi.push_back({random_image({5}, rng), c});

    SUBCASE("10 epochs of batch 1 over 7 examples is 70 optimizer steps") {
        auto m = build_mlp({5}, 8, 7, rng);
        TrainSettings st;
        st.epochs = 10;
        st.batch_size = 1;
        const auto r = fit(m, semi, st, rng);
        CHECK(r.optimizer_steps == 70);
        CHECK(r.history.size() == 10);
        double min_loss = 1e300;
        for (const auto& e : r.history) min_loss = std::min(min_loss, e.loss);
        CHECK(r.best_value == min_loss);
        CHECK(r.best_value <= r.history.back().loss);
        CHECK(r.history[r.best_epoch - 1].loss == r.best_value);
    }
    SUBCASE("validation split and val_loss monitoring") {
        data::LabeledSet big;
        for (std::size_t i = 0; i < 1000; ++i) big.push_back({random_image({5}, rng), i % 2});
        auto m = build_mlp({5}, 4, 2, rng);
        TrainSettings st;
        st.epochs = 2;
        st.batch_size = 128;
        st.validation_ratio = 0.2;
        st.monitor = Monitor::val_loss;
        const auto r = fit(m, big, st, rng);
        CHECK(r.train_size == 800);
        CHECK(r.validation_size == 200);
        CHECK(r.optimizer_steps == 2 * 7);
        for (const auto& e : r.history) CHECK(e.val_loss.has_value());
        CHECK(r.best_value <= *r.history.back().val_loss);
        // The retained checkpoint reproduces its monitored value.
        std::vector<std::size_t> dummy;
        CHECK(r.best.parameter_count() == m.parameter_count());
    }
    SUBCASE("settings invariants") {
        auto m = build_mlp({5}, 4, 7, rng);
        TrainSettings bad;
        bad.validation_ratio = 0.2;
        bad.monitor = Monitor::loss;
        CHECK_THROWS_AS(fit(m, semi, bad, rng), Error);
        TrainSettings bad2;
        bad2.monitor = Monitor::val_loss;
        CHECK_THROWS_AS(fit(m, semi, bad2, rng), Error);
        CHECK_THROWS_AS(fit(m, data::LabeledSet{}, TrainSettings{}, rng), Error);
    }
}

TEST_CASE("checkpoint round trip and corruption") {
    nn::Rng rng(12);
    auto m = build_simplified_squeezenet({40, 40, 3}, 7, rng);
    // Perturb so the biases are not trivially zero.
    nn::Adam<float> opt;
    train_step(m, random_image({40, 40, 3}, rng), 3, opt);

    const auto bytes = encode_checkpoint(m);
    const std::size_t header = 4 + 2 + 4 + m.descriptor().size() + 8;
    CHECK(bytes.size() == header + 33916);
    CHECK(bytes[0] == 'K');
    CHECK(bytes[4] == 0x00);
    CHECK(bytes[5] == 0x01);

    const auto path = temp_path("roundtrip.ktck");
    save_checkpoint(m, path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.descriptor() == m.descriptor());
    CHECK(loaded.architecture() == m.architecture());
    CHECK(loaded.flat_parameters() == m.flat_parameters());
    const auto x = random_image({40, 40, 3}, rng);
    CHECK(loaded.predict_logits(x) == m.predict_logits(x));
    std::filesystem::remove(path);

    auto expect_code = [](std::vector<std::uint8_t> b, Errc code) {
        try {
            decode_checkpoint(b);
            FAIL("expected failure");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };
    auto bad_magic = bytes;
    bad_magic[1] = 'X';
    expect_code(bad_magic, Errc::checkpoint_magic);
    auto bad_version = bytes;
    bad_version[5] = 0x07;
    expect_code(bad_version, Errc::checkpoint_version);
    expect_code(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3), Errc::checkpoint_truncated);
    expect_code(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 8), Errc::checkpoint_truncated);
    auto bad_count = bytes;
    bad_count[header - 1] ^= 0x01;
    expect_code(bad_count, Errc::architecture_mismatch);

    try {
        decode_checkpoint(bytes, std::string("mlp:4:8:3:seed=1"));
        FAIL("expected mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::architecture_mismatch);
    }

    // Every single-byte header corruption yields a typed error, never a crash.
    for (std::size_t i = 0; i < header; ++i) {
        auto c = bytes;
        c[i] ^= 0xA5;
        try {
            decode_checkpoint(c);
        } catch (const Error&) {
        }
    }
}
