#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../generators.hpp"
#include "../oracles.hpp"
#include "laptool/error.hpp"
#include "laptool/metrics.hpp"

using namespace laptool;

namespace {

EvalRecord rec(const char* truth, const char* pred) {
    return {LabelVector::from_string(truth), LabelVector::from_string(pred), std::nullopt};
}

EvalRecord scored(const char* truth, std::vector<double> scores) {
    const auto t = LabelVector::from_string(truth);
    return {t, t, std::move(scores)};
}

}  // namespace

TEST_CASE("exact match") {
    const std::vector<EvalRecord> perfect{rec("101", "101"), rec("000", "000")};
    CHECK(exact_match_accuracy(perfect) == 1.0);
    const std::vector<EvalRecord> half{rec("101", "101"), rec("010", "011")};
    CHECK(exact_match_accuracy(half) == 0.5);
    CHECK_THROWS_AS(exact_match_accuracy({}), DomainError);
    const std::vector<EvalRecord> ragged{rec("101", "101"), rec("01", "01")};
    CHECK_THROWS_AS(exact_match_accuracy(ragged), DomainError);
}

TEST_CASE("per-class and overall precision and recall") {
    const std::vector<EvalRecord> perfect{rec("110", "110"), rec("011", "011")};
    const auto pc = pr_per_class(perfect);
    for (int t = 0; t < 3; ++t) {
        CHECK(pc.precision[t].value == 1.0);
        CHECK(pc.recall[t].value == 1.0);
    }
    CHECK(pr_overall(perfect).precision.value == 1.0);

    // tool 0 predicted everywhere, present in half the frames
    const std::vector<EvalRecord> everywhere{rec("10", "10"), rec("00", "10")};
    const auto e = pr_per_class(everywhere);
    CHECK(e.precision[0].value == 0.5);
    CHECK(e.recall[0].value == 1.0);
    CHECK(e.precision[1].undefined);
    CHECK(e.recall[1].undefined);
    CHECK(e.precision[1].value == 0.0);

    const std::vector<EvalRecord> single{rec("1", "1"), rec("0", "1"), rec("1", "0")};
    const auto one = pr_per_class(single);
    const auto pooled = pr_overall(single);
    CHECK(pooled.precision.value == one.precision[0].value);
    CHECK(pooled.recall.value == one.recall[0].value);
}

TEST_CASE("F1 forms") {
    CHECK(harmonic_f1(0.5, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(harmonic_f1(0.3, 0.3) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(harmonic_f1(0.0, 0.0) == 0.0);
    const std::vector<EvalRecord> perfect{rec("110", "110"), rec("011", "011")};
    const auto f = f1_scores(perfect);
    CHECK(f.from_per_class == 1.0);
    CHECK(f.from_overall == 1.0);
    CHECK(f.swapped_micro() == f.from_per_class);
    CHECK(f.swapped_macro() == f.from_overall);
}

TEST_CASE("average precision examples") {
    const std::vector<EvalRecord> ranked{scored("1", {0.9}), scored("1", {0.8}), scored("0", {0.1})};
    CHECK(mean_average_precision(ranked).mean == 1.0);
    const std::vector<EvalRecord> second{scored("0", {0.9}), scored("1", {0.2})};
    CHECK(mean_average_precision(second).mean == 0.5);
    const std::vector<EvalRecord> missing{rec("1", "1")};
    CHECK_THROWS_AS(mean_average_precision(missing), DomainError);
    const std::vector<EvalRecord> no_positive{scored("10", {0.9, 0.1}), scored("00", {0.2, 0.3})};
    const auto ap = mean_average_precision(no_positive);
    CHECK(ap.excluded_tools);
    CHECK_FALSE(ap.per_tool[1].has_value());
    CHECK(ap.mean == 1.0);
}

TEST_CASE("property: metrics match brute-force oracles") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const int k = 1 + static_cast<int>(rng.below(8));
        const auto rs = gen::eval_corpus(rng, 1 + static_cast<int>(rng.below(300)), k);
        CHECK(std::fabs(exact_match_accuracy(rs) - oracle::exact_match(rs)) < 1e-12);
        const auto c = oracle::counts(rs);
        const auto pc = pr_per_class(rs);
        double mp = 0, mr = 0, tp = 0, pred = 0, act = 0;
        for (int t = 0; t < k; ++t) {
            const double p = oracle::div0(c.tp[t], c.pred[t]), r = oracle::div0(c.tp[t], c.act[t]);
            CHECK(std::fabs(pc.precision[t].value - p) < 1e-12);
            CHECK(std::fabs(pc.recall[t].value - r) < 1e-12);
            mp += p / k;
            mr += r / k;
            tp += c.tp[t];
            pred += c.pred[t];
            act += c.act[t];
        }
        const auto ov = pr_overall(rs);
        CHECK(std::fabs(ov.precision.value - oracle::div0(tp, pred)) < 1e-12);
        CHECK(std::fabs(ov.recall.value - oracle::div0(tp, act)) < 1e-12);
        const auto f = f1_scores(rs);
        CHECK(std::fabs(f.from_per_class - oracle::f1(mp, mr)) < 1e-12);
        CHECK(std::fabs(f.from_overall - oracle::f1(oracle::div0(tp, pred), oracle::div0(tp, act))) < 1e-12);
        const auto ap = mean_average_precision(rs);
        for (int t = 0; t < k; ++t) {
            const double expected = oracle::ap_all_thresholds(rs, t);
            if (expected < 0) {
                CHECK_FALSE(ap.per_tool[t].has_value());
            } else {
                CHECK(std::fabs(*ap.per_tool[t] - expected) < 1e-12);
            }
        }
    }
}

TEST_CASE("property: permutation invariance, bounds and the subset property") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const int k = 2 + static_cast<int>(rng.below(6));
        auto rs = gen::eval_corpus(rng, 200, k);
        const auto before = evaluate(rs, ToolVocabulary::generic(k));
        rng.shuffle(std::span(rs));
        const auto after = evaluate(rs, ToolVocabulary::generic(k));
        CHECK(after.exact_match == doctest::Approx(before.exact_match).epsilon(1e-15));
        CHECK(after.f1.from_per_class == doctest::Approx(before.f1.from_per_class).epsilon(1e-15));
        CHECK(after.f1.from_overall == doctest::Approx(before.f1.from_overall).epsilon(1e-15));
        CHECK(after.ap->mean == doctest::Approx(before.ap->mean).epsilon(1e-12));

        for (const double v : {before.exact_match, before.per_class.mean_precision, before.per_class.mean_recall,
                               before.f1.from_per_class, before.f1.from_overall, before.ap->mean}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (int t = 0; t < k; ++t) {
            int agree = 0;
            for (const auto& r : rs) agree += r.truth.test(t) == r.pred_bits.test(t);
            CHECK(before.exact_match <= static_cast<double>(agree) / rs.size());
        }
    }
}

TEST_CASE("report output") {
    const std::vector<EvalRecord> rs{scored("10", {0.9, 0.1}), scored("01", {0.2, 0.7})};
    const auto report = evaluate(rs, ToolVocabulary({"a", "b"}));
    std::ostringstream kv, table;
    report.write_key_values(kv);
    report.write_table(table);
    CHECK(kv.str().find("exact_match=1.0000\n") != std::string::npos);
    CHECK(kv.str().find("tool.b.ap=1.0000\n") != std::string::npos);
    CHECK(kv.str().find("mAP=1.0000\n") != std::string::npos);
    CHECK(table.str().find("Exact match 100.00%") != std::string::npos);
    CHECK_THROWS_AS(evaluate(rs, ToolVocabulary::generic(3)), DomainError);
}
