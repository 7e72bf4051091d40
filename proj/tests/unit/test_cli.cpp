#include <doctest.h>

#include <fstream>
#include <map>

#include <json.hpp>

#include "../cli_harness.hpp"

using harness::run;
using harness::slurp;
using harness::TempDir;
namespace fs = std::filesystem;

namespace {

std::map<std::string, double> read_kv(const std::string& path) {
    std::ifstream in(path);
    std::map<std::string, double> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) out[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
    }
    return out;
}

}  // namespace

TEST_CASE("help for every command") {
    CHECK(run({"--help"}).code == 0);
    for (const auto* cmd :
         {"synth", "import-m2cai", "ingest", "balance", "train", "predict", "postprocess", "evaluate", "report"}) {
        const auto r = run({cmd, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("--out") != std::string::npos);
    }
}

TEST_CASE("usage errors exit 1") {
    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"ingest", "--out", "x"}).code == 1);
    CHECK(run({"train", "--annotations", "a", "--features", "f", "--powerset", "p", "--out", "o"}).code == 1);
}

TEST_CASE("empty annotation file is a data error naming the file") {
    TempDir d("cli_empty");
    std::ofstream(d / "empty.txt").close();
    const auto r = run({"ingest", "--annotations", d / "empty.txt", "--out", d / "out"});
    CHECK(r.code == 2);
    CHECK(r.err.find("empty.txt") != std::string::npos);
    const auto missing = run({"ingest", "--annotations", d / "nope.txt", "--out", d / "out"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("nope.txt") != std::string::npos);
}

TEST_CASE("ingest is idempotent and writes a manifest") {
    TempDir d("cli_ingest");
    REQUIRE(run({"synth", "--out", d / "data", "--seed", "3", "--videos", "4", "--frames", "60", "--test-videos", "1",
                 "--dim", "8"})
                .code == 0);
    const auto train_before = slurp(d / "data/train.txt");
    REQUIRE(run({"ingest", "--annotations", d / "data/train.txt", "--out", d / "a", "--superclasses", "8"}).code == 0);
    REQUIRE(run({"ingest", "--annotations", d / "data/train.txt", "--out", d / "b", "--superclasses", "8"}).code == 0);
    for (const auto* f : {"corpus_stats.csv", "cooccurrence.csv", "powerset.txt", "labelsets.csv"}) {
        CHECK(slurp(d / (std::string("a/") + f)) == slurp(d / (std::string("b/") + f)));
    }
    CHECK(slurp(d / "data/train.txt") == train_before);

    const auto manifest = nlohmann::json::parse(slurp(d / "a/ingest.manifest.json"));
    CHECK(manifest["command"] == "ingest");
    CHECK(manifest["inputs"].size() == 1);
    CHECK(manifest["inputs"][0]["sha1"].get<std::string>().size() == 40);
    CHECK(manifest["config_hash"] == nlohmann::json::parse(slurp(d / "b/ingest.manifest.json"))["config_hash"]);
}

TEST_CASE("config files with command-line override") {
    TempDir d("cli_config");
    {
        std::ofstream cfg(d / "synth.cfg");
        cfg << "# synthetic fixture\nvideos = 3\nframes = 40\ntest_videos = 1\ndim = 6\nseed = 5\n";
    }
    REQUIRE(run({"synth", "--config", d / "synth.cfg", "--out", d / "a", "--frames", "50"}).code == 0);
    std::ifstream in(d / "a/train.txt");
    int lines = 0;
    std::string line;
    while (std::getline(in, line)) lines += !line.empty() && line[0] != '#';
    CHECK(lines == 2 * 50);

    {
        std::ofstream cfg(d / "all.ini");
        cfg << "[synth]\nvideos=3\nframes=40\ntest_videos=1\ndim=6\nseed=5\nout=" << (d / "b") << "\n";
    }
    REQUIRE(run({"--config", d / "all.ini", "synth"}).code == 0);
    CHECK(fs::exists(d / "b/features/video_3.fstr"));
}

TEST_CASE("shared config keys are skipped by commands without the flag") {
    TempDir d("cli_shared");
    {
        std::ofstream cfg(d / "shared.ini");
        cfg << "seed = 5\n[synth]\nvideos=3\nframes=40\ntest_videos=1\ndim=6\n";
    }
    REQUIRE(run({"--config", d / "shared.ini", "synth", "--out", d / "data"}).code == 0);
    CHECK(run({"--config", d / "shared.ini", "ingest", "--annotations", d / "data/train.txt", "--out", d / "ingest"})
              .code == 0);

    {
        std::ofstream cfg(d / "bad.ini");
        cfg << "seed = 5\nno_such_flag = 1\n";
    }
    CHECK(run({"--config", d / "bad.ini", "ingest", "--annotations", d / "data/train.txt", "--out", d / "x"}).code == 1);
    {
        std::ofstream cfg(d / "section.ini");
        cfg << "[ingest]\nseed = 5\n";
    }
    CHECK(run({"--config", d / "section.ini", "ingest", "--annotations", d / "data/train.txt", "--out", d / "y"})
              .code == 1);
}

TEST_CASE("import of per-video tool files") {
    TempDir d("cli_import");
    fs::create_directories(d / "raw");
    for (int v : {1, 2}) {
        std::ofstream f(d / ("raw/tool_video_0" + std::to_string(v) + ".txt"));
        f << "Frame\tGrasper\tBipolar\tHook\tScissors\tClipper\tIrrigator\tSpecimenBag\n";
        f << "0\t1\t0\t0\t0\t0\t0\t0\n25\t0\t0\t1\t0\t0\t0\t0\n";
    }
    const auto r = run({"import-m2cai", "--dir", d / "raw", "--out", d / "train.txt"});
    REQUIRE(r.code == 0);
    const auto text = slurp(d / "train.txt");
    CHECK(text.find("2 1 0 0 0 1 0 0 0") != std::string::npos);
    CHECK(run({"import-m2cai", "--dir", d / "missing", "--out", d / "x.txt"}).code == 2);
}

TEST_CASE("numeric failure exits 3") {
    TempDir d("cli_numeric");
    REQUIRE(run({"synth", "--out", d / "data", "--seed", "3", "--videos", "3", "--frames", "40", "--test-videos", "1",
                 "--dim", "8"})
                .code == 0);
    REQUIRE(run({"ingest", "--annotations", d / "data/train.txt", "--out", d / "i", "--superclasses", "8"}).code == 0);
    const auto r = run({"train", "--annotations", d / "data/train.txt", "--features", d / "data/features", "--powerset",
                        d / "i/powerset.txt", "--out", d / "t", "--epochs", "3", "--lr", "1e308", "--seed", "1"});
    CHECK(r.code == 3);
}

TEST_CASE("full pipeline, smoothing does not hurt") {
    TempDir d("cli_pipeline");
    const auto r = harness::pipeline(d, "5");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const auto* f : {"train/history.csv", "train/model.lpnn", "pred/frames.csv", "post/birnn.lpnn",
                          "eval/rcnn.txt", "report/summary.csv", "train/train.manifest.json"}) {
        CHECK_MESSAGE(fs::exists(d / f), f);
    }
    const auto pre = read_kv(d / "eval/rcnn.kv");
    const auto post = read_kv(d / "eval/smoothed.kv");
    CHECK(pre.count("mAP") == 1);
    CHECK(post.at("exact_match") >= pre.at("exact_match"));
}
