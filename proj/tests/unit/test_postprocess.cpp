#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../generators.hpp"
#include "../oracles.hpp"
#include "laptool/balance.hpp"
#include "laptool/error.hpp"
#include "laptool/postprocess.hpp"

using namespace laptool;

namespace {

std::vector<int> random_seq(Rng& rng, int len, int classes) {
    std::vector<int> out;
    for (int i = 0; i < len; ++i) out.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    return out;
}

BiRnnModel random_model(Rng& rng, int classes, int hidden, int max_len) {
    auto m = BiRnnModel::create(classes, hidden, max_len, 0, rng.next());
    m.forward = gen::gru(rng, classes, hidden, 0.6);
    m.backward = gen::gru(rng, classes, hidden, 0.6);
    m.output.weight = gen::mat(rng, 2 * hidden, classes, 0.6);
    m.output.bias = gen::vec(rng, classes, 0.3);
    for (auto& w : m.weights) w = rng.uniform(0.2, 2.0);
    return m;
}

}  // namespace

TEST_CASE("encode_sequence") {
    const std::vector<int> preds{2, 0};
    nn::Matrix expected(4, 3);
    expected << 0, 0, 1, 1, 0, 0, 1, 0, 0, 1, 0, 0;
    CHECK(encode_sequence(preds, 3, 4, 0) == expected);
    const auto empty = encode_sequence({}, 3, 2, 1);
    CHECK(empty.rows() == 2);
    CHECK(empty.col(1) == Eigen::VectorXd::Ones(2));
    const std::vector<int> too_long{0, 1, 2};
    CHECK_THROWS_AS(encode_sequence(too_long, 3, 2, 0), DomainError);
    const std::vector<int> bad{5};
    CHECK_THROWS_AS(encode_sequence(bad, 3, 2, 0), DomainError);
}

TEST_CASE("property: unpadded rows decode to the predictions") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        Rng rng(seed);
        const int classes = 2 + static_cast<int>(rng.below(10));
        const auto preds = random_seq(rng, static_cast<int>(rng.below(20)), classes);
        const auto m = encode_sequence(preds, classes, 25, 0);
        for (std::size_t t = 0; t < preds.size(); ++t) {
            Eigen::Index c;
            m.row(static_cast<Eigen::Index>(t)).maxCoeff(&c);
            CHECK(c == preds[t]);
            CHECK(m.row(static_cast<Eigen::Index>(t)).sum() == 1.0);
        }
    }
}

TEST_CASE("prediction sequence text round trip") {
    const VideoPredictionSeq seq{12, {3, 3, 0, 7}};
    std::stringstream s;
    seq.write(s);
    CHECK(VideoPredictionSeq::read(s) == seq);
    std::istringstream bad("4\nx\n");
    CHECK_THROWS_AS(VideoPredictionSeq::read(bad), ParseError);
}

TEST_CASE("property: distributions sum to one and match the oracle loss") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        Rng rng(seed);
        const int classes = 2 + static_cast<int>(rng.below(6));
        const auto model = random_model(rng, classes, 1 + static_cast<int>(rng.below(5)), 12);
        const auto preds = random_seq(rng, 1 + static_cast<int>(rng.below(12)), classes);
        auto truth = random_seq(rng, static_cast<int>(preds.size()), classes);
        truth[0] = -1;
        const auto encoded = encode_sequence(preds, classes, 12, 0);
        const auto q = birnn_forward(model, encoded);
        for (Eigen::Index t = 0; t < q.rows(); ++t) CHECK(q.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
        const double loss = sequence_loss(model, encoded, truth);
        CHECK(std::fabs(loss - static_cast<double>(oracle::birnn_loss(model, encoded, truth))) < 1e-12);
    }
}

TEST_CASE("property: reversing input and swapping directions reverses the output") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const int classes = 4, hidden = 3;
        const auto model = random_model(rng, classes, hidden, 10);
        auto swapped = model;
        std::swap(swapped.forward, swapped.backward);
        swapped.output.weight.topRows(hidden) = model.output.weight.bottomRows(hidden);
        swapped.output.weight.bottomRows(hidden) = model.output.weight.topRows(hidden);
        const auto encoded = encode_sequence(random_seq(rng, 10, classes), classes, 10, 0);
        const nn::Matrix reversed = encoded.colwise().reverse();
        const auto a = birnn_forward(model, encoded);
        const auto b = birnn_forward(swapped, reversed);
        CHECK((a - nn::Matrix(b.colwise().reverse())).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("a length-one sequence depends on both directions") {
    Rng rng(3);
    auto model = random_model(rng, 3, 2, 1);
    const auto encoded = encode_sequence(std::vector{1}, 3, 1, 0);
    const auto base = birnn_forward(model, encoded);
    auto f = model;
    f.forward.input_candidate.array() += 0.5;
    CHECK((birnn_forward(f, encoded) - base).cwiseAbs().maxCoeff() > 1e-6);
    auto b = model;
    b.backward.input_candidate.array() += 0.5;
    CHECK((birnn_forward(b, encoded) - base).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("padding is masked and weights scale the loss") {
    Rng rng(4);
    auto model = random_model(rng, 4, 3, 8);
    const std::vector<int> preds{1, 2, 3};
    const std::vector<int> truth{1, 2, 2};
    const auto encoded = encode_sequence(preds, 4, 8, 0);
    const double loss = sequence_loss(model, encoded, truth);
    // scoring padded frames with the padding class would change the value
    std::vector<int> padded_truth = truth;
    padded_truth.resize(8, 0);
    CHECK(sequence_loss(model, encoded, padded_truth) != loss);
    std::vector<int> masked_truth = truth;
    masked_truth.resize(8, -1);
    CHECK(sequence_loss(model, encoded, masked_truth) == loss);

    auto scaled = model;
    for (auto& w : scaled.weights) w *= 3.0;
    CHECK(sequence_loss(scaled, encoded, truth) == doctest::Approx(3.0 * loss).epsilon(1e-14));

    auto gp = BiRnnModel::zeros(4, 3, 8, 0);
    auto gs = BiRnnModel::zeros(4, 3, 8, 0);
    accumulate_sequence_gradients(model, encoded, masked_truth, gp);
    accumulate_sequence_gradients(scaled, encoded, masked_truth, gs);
    const auto p = gp.params(), s = gs.params();
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p[i].values.size(); ++j)
            CHECK(s[i].values[j] == doctest::Approx(3.0 * p[i].values[j]).epsilon(1e-12));
}

TEST_CASE("bi-RNN backprop agrees with finite differences") {
    Rng rng(5);
    auto model = random_model(rng, 5, 4, 9);
    const auto encoded = encode_sequence(random_seq(rng, 7, 5), 5, 9, 0);
    auto truth = random_seq(rng, 7, 5);
    truth[2] = -1;
    auto grads = BiRnnModel::zeros(5, 4, 9, 0);
    accumulate_sequence_gradients(model, encoded, truth, grads);
    const long double base = oracle::birnn_loss(model, encoded, truth);
    const auto report = nn::grad_check(
        [&] { return static_cast<double>(oracle::birnn_loss(model, encoded, truth) - base); }, model.params(),
        grads.params());
    CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(6);
    auto model = random_model(rng, 4, 3, 11);
    model.no_tool_index = 2;
    std::stringstream s;
    model.save(s);
    const auto back = BiRnnModel::load(s);
    CHECK(back.max_len == 11);
    CHECK(back.no_tool_index == 2);
    CHECK(back.superclass_count() == 4);
    CHECK(back.weights.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(back.weights[i] == doctest::Approx(model.weights[i]).epsilon(1e-6));
}

TEST_CASE("training on clean sequences learns to copy") {
    Rng rng(7);
    const int classes = 4;
    std::vector<PostprocessExample> corpus;
    std::vector<std::vector<int>> truths;
    for (int v = 0; v < 12; ++v) {
        // piecewise-constant phases like a surgical video
        std::vector<int> seq;
        while (seq.size() < 30) {
            const int c = static_cast<int>(rng.below(classes));
            const int len = 2 + static_cast<int>(rng.below(5));
            seq.insert(seq.end(), static_cast<std::size_t>(len), c);
        }
        seq.resize(30);
        corpus.push_back({seq, seq});
        truths.push_back(seq);
    }
    auto model = BiRnnModel::create(classes, 8, 30, 0, 3);
    model.weights = class_weights(truths, classes);
    PostprocessConfig cfg;
    cfg.epochs = 40;
    cfg.augment = false;
    cfg.seed = 2;
    const auto history = train_postprocessor(model, corpus, cfg);
    CHECK(history.back().loss < history.front().loss);
    for (const auto& ex : corpus) {
        const auto out = smooth_video(model, {1, ex.inputs});
        CHECK(out.preds == ex.inputs);
        CHECK(out.video_id == 1);
        CHECK(smooth_video(model, {1, ex.inputs}) == out);
    }
    CHECK_THROWS(train_postprocessor(model, std::span<const PostprocessExample>{}, cfg));
}

TEST_CASE("smoothing keeps the length and handles long or empty videos") {
    Rng rng(8);
    const auto model = random_model(rng, 5, 3, 6);
    const VideoPredictionSeq longer{2, random_seq(rng, 15, 5)};
    const auto out = smooth_video(model, longer);
    CHECK(out.preds.size() == 15);
    for (const int c : out.preds) CHECK((c >= 0 && c < 5));
    CHECK(smooth_video(model, {3, {}}).preds.empty());
}
