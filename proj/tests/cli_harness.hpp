#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "laptool/cli.hpp"

namespace harness {

struct Result {
    int code = 0;
    std::string out, err;
};

inline Result run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"laptool"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = laptool::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / ("laptool_" + name + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

// Small synthetic pipeline: synth, ingest, balance, train, predict,
// postprocess, evaluate (before and after smoothing) and report.
// Returns the first failing step's result, or the last one.
inline Result pipeline(const TempDir& d, const std::string& seed, int epochs = 8) {
    const std::vector<std::vector<std::string>> steps{
        {"synth", "--out", d / "data", "--seed", seed, "--videos", "8", "--frames", "120", "--test-videos", "2", "--dim",
         "24"},
        {"ingest", "--annotations", d / "data/train.txt", "--out", d / "ingest", "--superclasses", "8"},
        {"balance", "--annotations", d / "data/train.txt", "--powerset", d / "ingest/powerset.txt", "--out",
         d / "balance", "--target", "15", "--seed", seed},
        {"train", "--annotations", d / "data/train.txt", "--features", d / "data/features", "--powerset",
         d / "ingest/powerset.txt", "--balanced", d / "balance/balanced.txt", "--out", d / "train", "--hidden", "16",
         "--epochs", std::to_string(epochs), "--batch", "8", "--lr", "1", "--decay-epochs", "10", "--seed", seed},
        {"predict", "--model", d / "train/model.lpnn", "--features", d / "data/features", "--annotations",
         d / "data/test.txt", "--out", d / "pred"},
        {"postprocess", "--powerset", d / "ingest/powerset.txt", "--predictions", d / "pred", "--out", d / "post",
         "--train-annotations", d / "data/train.txt", "--corrupt", "0.15", "--corrupt-copies", "2", "--hidden", "8",
         "--epochs", "10", "--seed", seed},
        {"evaluate", "--annotations", d / "data/test.txt", "--predictions", d / "pred", "--out", d / "eval", "--name",
         "rcnn"},
        {"evaluate", "--annotations", d / "data/test.txt", "--predictions", d / "post", "--powerset",
         d / "ingest/powerset.txt", "--out", d / "eval", "--name", "smoothed"},
        {"report", "--input", d / "eval/rcnn.kv", "--input", d / "eval/smoothed.kv", "--out", d / "report"},
    };
    Result last;
    for (const auto& s : steps) {
        last = run(s);
        if (last.code != 0) {
            last.err = s.front() + ": " + last.err;
            return last;
        }
    }
    return last;
}

}  // namespace harness
