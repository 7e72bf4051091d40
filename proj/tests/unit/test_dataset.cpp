#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../generators.hpp"
#include "../oracles.hpp"
#include "laptool/dataset.hpp"
#include "laptool/error.hpp"

using namespace laptool;

namespace {

// Feature value = frame index, so a window reveals which frames it used.
FeatureStore indexed_store(int video, int first, int last, int step = 1) {
    FeatureStore store(2);
    for (int f = first; f <= last; f += step) {
        FeatureStore::Vector v(2);
        v << f, video;
        store.insert({video, f}, v);
    }
    return store;
}

std::vector<int> window_frames(const SequenceWindow& w) {
    std::vector<int> out;
    for (const auto& f : w.features) out.push_back(static_cast<int>(f[0]));
    return out;
}

}  // namespace

TEST_CASE("parse a single annotation line") {
    std::istringstream in("1 25 0 0 1 1 0 0 0\n");
    const auto set = parse_annotations(in);
    REQUIRE(set.records.size() == 1);
    CHECK(set.records[0] == FrameRecord{1, 25, LabelVector::from_string("0011000")});
    CHECK(set.tools.size() == 7);
}

TEST_CASE("parse empty input and header") {
    std::istringstream empty("");
    CHECK(parse_annotations(empty).records.empty());
    std::istringstream with_header("# tools: Bipolar,Clipper,Grasper,Hook,Irrigator,Scissors,SpecimenBag\n\n2 0 1 0 0 0 0 0 0\n");
    const auto set = parse_annotations(with_header);
    CHECK(set.tools == ToolVocabulary::m2cai());
    CHECK(set.records.size() == 1);
}

TEST_CASE("parse errors carry the line number") {
    std::istringstream bad("1 0 0 0 1\n1 1 0 2 1\n");
    try {
        parse_annotations(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream short_line("1 0 0 0 1\n1 1 0 1\n");
    CHECK_THROWS_AS(parse_annotations(short_line), ParseError);
    std::istringstream duplicate("1 0 0 0 1\n1 0 0 1 1\n");
    CHECK_THROWS_AS(parse_annotations(duplicate), ParseError);
    std::istringstream negative("1 -1 0 0 1\n");
    CHECK_THROWS_AS(parse_annotations(negative), ParseError);
}

TEST_CASE("property: parse, serialize, parse is identity") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        AnnotationSet set{ToolVocabulary::m2cai(), gen::records(rng, 3, 40, 7)};
        std::stringstream s;
        write_annotations(s, set);
        const auto back = parse_annotations(s);
        CHECK(back.tools == set.tools);
        CHECK(back.records == set.records);
    }
}

TEST_CASE("import of the original per-video layout") {
    std::istringstream in(
        "Frame\tGrasper\tBipolar\tHook\tScissors\tClipper\tIrrigator\tSpecimenBag\n"
        "0\t1\t0\t0\t0\t0\t0\t0\n"
        "25\t1\t0\t1\t0\t0\t0\t0\n");
    const auto records = import_tool_annotation(in, 4, ToolVocabulary::m2cai());
    REQUIRE(records.size() == 2);
    CHECK(records[1].video_id == 4);
    CHECK(records[1].frame_index == 1);
    CHECK(records[1].labels.to_string() == "0011000");
}

TEST_CASE("window frames") {
    const auto store = indexed_store(1, 0, 120);
    CHECK(window_frames(make_window(store, {1, 100}, 5, 5)) == std::vector{80, 85, 90, 95, 100});
    CHECK(window_frames(make_window(store, {1, 100}, 1, 7)) == std::vector{100});
    CHECK(window_frames(make_window(store, {1, 3}, 5, 5)) == std::vector{0, 0, 0, 0, 3});
    CHECK_THROWS_AS(make_window(store, {1, 500}, 5, 5), LookupError);
    CHECK_THROWS_AS(make_window(store, {2, 0}, 5, 5), LookupError);
}

TEST_CASE("property: windows are causal and have exactly lambda frames") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        Rng rng(seed);
        const int first = static_cast<int>(rng.below(10));
        const auto store = indexed_store(1, first, first + 60, 1 + static_cast<int>(rng.below(3)));
        const auto frames = store.frames(1);
        for (int q = 0; q < 20; ++q) {
            const int query = frames[rng.below(frames.size())];
            const int length = 1 + static_cast<int>(rng.below(7));
            const int interval = 1 + static_cast<int>(rng.below(6));
            const auto w = make_window(store, {1, query}, length, interval);
            CHECK(static_cast<int>(w.features.size()) == length);
            const auto used = window_frames(w);
            CHECK(used.back() == query);
            for (std::size_t i = 0; i < used.size(); ++i) {
                CHECK(used[i] <= query);
                CHECK(used[i] >= first);
                if (i > 0) CHECK(used[i] >= used[i - 1]);
            }
            CHECK(window_frames(make_window(store, {1, query}, length, interval)) == used);
        }
    }
}

TEST_CASE("feature store validation and binary round trip") {
    FeatureStore store(3);
    FeatureStore::Vector bad(2);
    bad << 1, 2;
    CHECK_THROWS(store.insert({1, 0}, bad));
    FeatureStore::Vector nan(3);
    nan << 1, std::nan(""), 0;
    CHECK_THROWS(store.insert({1, 0}, nan));
    FeatureStore::Vector v(3);
    v << 0.5, -1.25, 2.0;
    store.insert({1, 0}, v);
    store.insert({1, 7}, v * 2);
    std::stringstream s;
    store.write_video(s, 1);
    FeatureStore back;
    back.read_video(s, 1);
    CHECK(back.dim() == 3);
    CHECK(back.frames(1) == std::vector{0, 7});
    CHECK(back.at({1, 7}) == v * 2);
    std::istringstream junk("NOPE");
    FeatureStore other;
    CHECK_THROWS_AS(other.read_video(junk, 1), ParseError);
}

TEST_CASE("corpus stats examples") {
    const std::vector<FrameRecord> one{{1, 0, LabelVector::from_string("0011000")}};
    const auto stats = corpus_stats(one, 7);
    CHECK(stats.total == 1);
    CHECK(stats.no_tools == 0);
    CHECK(stats.per_tool == std::vector<std::int64_t>{0, 0, 1, 1, 0, 0, 0});
}

TEST_CASE("property: corpus stats match an independent tally") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        const auto records = gen::records(rng, 10, 100, 7);
        const auto stats = corpus_stats(records, 7);
        const auto expected = oracle::tally(records, 7);
        CHECK(stats.total == expected.total);
        CHECK(stats.no_tools == expected.none);
        CHECK(stats.per_tool == expected.per_tool);
        CHECK(stats.per_labelset.size() == expected.per_set.size());
        for (const auto& [mask, n] : stats.per_labelset) CHECK(expected.per_set.at(LabelVector(7, mask).to_string()) == n);
    }
}
