#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace laptool::cli {

struct SynthOptions {
    std::string out;
    std::uint64_t seed = 7;
    int videos = 20;
    int frames = 300;
    int test_videos = 6;
    int dim = 64;
    int variants = 3;
    double noise = 1.5;
};

struct ImportOptions {
    std::string dir;
    std::string out;
    int frames_per_label = 25;
};

struct IngestOptions {
    std::string annotations;
    std::string out;
    int superclasses = 15;
};

struct BalanceOptions {
    std::string annotations;
    std::string powerset;
    std::string out;
    int target = 400;
    std::uint64_t seed = 0;
};

struct TrainOptions {
    std::string annotations;
    std::string features;
    std::string powerset;
    std::string balanced;
    std::string out;
    std::string strategy = "joint";
    double beta = 1.0;
    int lambda = 5;
    int dt = 5;
    int hidden = 64;
    int epochs = 100;
    int batch = 40;
    std::uint64_t seed = 0;
    double lr = 0.001;
    double lr_decay = 0.7;
    int decay_epochs = 5;
    double clip = 0.0;
    bool no_gru_bias = false;
};

struct PredictOptions {
    std::string model;
    std::string features;
    std::string annotations;
    std::string out;
};

struct PostprocessOptions {
    std::string powerset;
    std::string predictions;
    std::string out;
    std::string model;
    std::string train_annotations;
    std::string train_predictions;
    double corrupt = 0.0;
    int corrupt_copies = 1;
    int hidden = 64;
    int epochs = 50;
    int batch = 1;
    double lr = 0.5;
    double lr_decay = 0.7;
    int decay_epochs = 20;
    std::uint64_t seed = 0;
    bool no_augment = false;
    double noise = 0.1;
    double drop = 0.05;
    double clip = 5.0;
    int max_len = 0;
};

struct EvaluateOptions {
    std::string annotations;
    std::string predictions;
    std::string powerset;
    std::string out;
    std::string name = "report";
};

struct ReportOptions {
    std::vector<std::string> inputs;
    std::string out;
    std::string name = "summary";
};

void cmd_synth(const SynthOptions& o, std::ostream& log);
void cmd_import(const ImportOptions& o, std::ostream& log);
void cmd_ingest(const IngestOptions& o, std::ostream& log);
void cmd_balance(const BalanceOptions& o, std::ostream& log);
void cmd_train(const TrainOptions& o, std::ostream& log);
void cmd_predict(const PredictOptions& o, std::ostream& log);
void cmd_postprocess(const PostprocessOptions& o, std::ostream& log);
void cmd_evaluate(const EvaluateOptions& o, std::ostream& log);
void cmd_report(const ReportOptions& o, std::ostream& log);

}  // namespace laptool::cli
