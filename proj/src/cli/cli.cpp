#include "laptool/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "laptool/error.hpp"

namespace laptool {

namespace {

void add_postprocess_options(CLI::App& cmd, cli::PostprocessOptions& o) {
    cmd.add_option("--powerset", o.powerset, "Powerset file from `ingest`")->required();
    cmd.add_option("--predictions", o.predictions, "Directory of pred_video_<id>.txt files to smooth")->required();
    cmd.add_option("--out", o.out, "Output directory")->required();
    cmd.add_option("--model", o.model, "Existing post-processor checkpoint; skips training");
    cmd.add_option("--train-annotations", o.train_annotations, "Ground truth of the training videos");
    cmd.add_option("--train-predictions", o.train_predictions,
                   "RCNN predictions on the training videos (pred_video_<id>.txt)");
    cmd.add_option("--corrupt", o.corrupt,
                   "Also train on ground truth with this fraction of frames replaced by a random superclass")
        ->capture_default_str();
    cmd.add_option("--corrupt-copies", o.corrupt_copies, "Corrupted copies per training video")->capture_default_str();
    cmd.add_option("--hidden", o.hidden, "GRU hidden size per direction")->capture_default_str();
    cmd.add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    cmd.add_option("--batch", o.batch, "Videos per SGD step")->capture_default_str();
    cmd.add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
    cmd.add_option("--lr-decay", o.lr_decay, "Learning-rate decay factor")->capture_default_str();
    cmd.add_option("--decay-epochs", o.decay_epochs, "Epochs between decays")->capture_default_str();
    cmd.add_option("--seed", o.seed, "Random seed")->required();
    cmd.add_flag("--no-augment", o.no_augment, "Disable input noise and frame dropping");
    cmd.add_option("--noise", o.noise, "Uniform noise amplitude added to the one-hot inputs")->capture_default_str();
    cmd.add_option("--drop", o.drop, "Probability of dropping an input frame")->capture_default_str();
    cmd.add_option("--clip", o.clip, "Global gradient-norm clip (0 = off)")->capture_default_str();
    cmd.add_option("--max-len", o.max_len, "Padded sequence length (0 = longest video)")->capture_default_str();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    const auto e = s.find_last_not_of(" \t\r\"");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

/// Flags for `command` from a key=value file. Keys before any `[section]`
/// header apply to every command that has the flag; keys under `[name]` only
/// to that command.
void append_config_flags(const std::string& path, const std::string& command, const CLI::App& app,
                         const CLI::App& sub, std::vector<std::string>& out) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#' || line[first] == ';') continue;
        if (line[first] == '[') {
            const auto close = line.find(']', first);
            if (close == std::string::npos) throw ConfigError(path + ": line " + std::to_string(line_no) + ": bad section");
            section = trim(line.substr(first + 1, close - first - 1));
            continue;
        }
        if (!section.empty() && section != command) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ": line " + std::to_string(line_no) + ": expected key=value");
        auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        std::replace(key.begin(), key.end(), '_', '-');
        const auto* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
        if (opt == nullptr) {
            const auto subs = app.get_subcommands([](const CLI::App*) { return true; });
            const bool shared = section.empty() && key != "config" &&
                                std::any_of(subs.begin(), subs.end(), [&](const CLI::App* a) {
                                    return a->get_option_no_throw("--" + key) != nullptr;
                                });
            if (shared) continue;
            throw ConfigError(path + ": unknown key '" + key + "' for " + command);
        }
        if (opt->get_type_size() == 0) {
            if (value == "true" || value == "1") out.push_back("--" + key);
            continue;
        }
        out.push_back("--" + key);
        out.push_back(value);
    }
}

/// Replaces every `--config FILE` (before or after the command name) by the
/// file's flags placed right after the command name, so flags given on the
/// command line override them.
std::vector<std::string> expand_config(int argc, const char* const* argv, const CLI::App& app) {
    const std::vector<std::string> in(argv + 1, argv + argc);
    std::vector<std::string> files, before, rest;
    std::string command;
    const CLI::App* sub = nullptr;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const bool takes_file = in[i] == "--config" && i + 1 < in.size();
        if (takes_file || in[i].rfind("--config=", 0) == 0) {
            files.push_back(takes_file ? in[++i] : in[i].substr(9));
        } else if (sub == nullptr && !in[i].empty() && in[i][0] != '-' &&
                   (sub = app.get_subcommand_no_throw(in[i])) != nullptr) {
            command = in[i];
        } else {
            (sub ? rest : before).push_back(in[i]);
        }
    }
    std::vector<std::string> out = before;
    if (sub != nullptr) {
        out.push_back(command);
        for (const auto& path : files) append_config_flags(path, command, app, *sub, out);
    }
    out.insert(out.end(), rest.begin(), rest.end());
    // CLI::App::parse(vector) expects the arguments in reverse order
    std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"LapTool-Net pipeline: label-powerset tool presence detection on frame sequences", "laptool"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string unused_global_config;
    // expanded by expand_config before parsing; declared here for --help
    app.add_option("--config", unused_global_config, "key=value file; keys under [command] apply to that command only");

    cli::SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth", "Write the seeded synthetic phase-grammar fixture");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--seed", synth.seed, "Random seed")->required();
    c_synth->add_option("--videos", synth.videos, "Number of videos")->capture_default_str();
    c_synth->add_option("--frames", synth.frames, "Frames per video")->capture_default_str();
    c_synth->add_option("--test-videos", synth.test_videos, "Held-out videos (the highest ids)")->capture_default_str();
    c_synth->add_option("--dim", synth.dim, "Feature dimension")->capture_default_str();
    c_synth->add_option("--variants", synth.variants, "Appearance variants per tool")->capture_default_str();
    c_synth->add_option("--noise", synth.noise, "Feature noise standard deviation (total over all dims)")
        ->capture_default_str();

    cli::ImportOptions import;
    auto* c_import = app.add_subcommand(
        "import-m2cai", "Convert per-video tool annotation files (e.g. tool_video_01.txt) to one annotation file");
    c_import->add_option("--dir", import.dir, "Directory of the original tool annotation files")->required();
    c_import->add_option("--out", import.out, "Output annotation file")->required();
    c_import->add_option("--frames-per-label", import.frames_per_label, "Video frames per annotated frame")
        ->capture_default_str();

    cli::IngestOptions ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Corpus statistics, co-occurrence and the powerset map");
    c_ingest->add_option("--annotations", ingest.annotations, "Annotation file")->required();
    c_ingest->add_option("--out", ingest.out, "Output directory")->required();
    c_ingest->add_option("--superclasses", ingest.superclasses, "Number of retained label-sets (K-hat)")
        ->capture_default_str();

    cli::BalanceOptions balance;
    auto* c_balance = app.add_subcommand("balance", "Uniform re-sampling over superclasses");
    c_balance->add_option("--annotations", balance.annotations, "Annotation file")->required();
    c_balance->add_option("--powerset", balance.powerset, "Powerset file from `ingest`")->required();
    c_balance->add_option("--out", balance.out, "Output directory")->required();
    c_balance->add_option("--target", balance.target, "Frames per superclass")->capture_default_str();
    c_balance->add_option("--seed", balance.seed, "Random seed")->required();

    cli::TrainOptions tr;
    auto* c_train = app.add_subcommand("train", "Train the recurrent classifier and decision model");
    c_train->add_option("--annotations", tr.annotations, "Annotation file")->required();
    c_train->add_option("--features", tr.features, "Feature directory (video_<id>.fstr)")->required();
    c_train->add_option("--powerset", tr.powerset, "Powerset file from `ingest`")->required();
    c_train->add_option("--balanced", tr.balanced, "Balanced index from `balance` (default: every annotated frame)");
    c_train->add_option("--out", tr.out, "Output directory")->required();
    c_train->add_option("--strategy", tr.strategy, "ml_only, lp_direct, sequential, alternate_cnn_fc2, alternate_all or joint")
        ->capture_default_str();
    c_train->add_option("--beta", tr.beta, "Weight of the multiclass loss")->capture_default_str();
    c_train->add_option("--lambda", tr.lambda, "Frames per window")->capture_default_str();
    c_train->add_option("--dt", tr.dt, "Frame interval inside a window")->capture_default_str();
    c_train->add_option("--hidden", tr.hidden, "GRU hidden size")->capture_default_str();
    c_train->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
    c_train->add_option("--batch", tr.batch, "Windows per SGD step")->capture_default_str();
    c_train->add_option("--seed", tr.seed, "Random seed")->required();
    c_train->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
    c_train->add_option("--lr-decay", tr.lr_decay, "Learning-rate decay factor")->capture_default_str();
    c_train->add_option("--decay-epochs", tr.decay_epochs, "Epochs between decays")->capture_default_str();
    c_train->add_option("--clip", tr.clip, "Global gradient-norm clip (0 = off)")->capture_default_str();
    c_train->add_flag("--no-gru-bias", tr.no_gru_bias, "GRU without bias vectors");

    cli::PredictOptions pred;
    auto* c_predict = app.add_subcommand("predict", "Per-frame predictions for every annotated frame");
    c_predict->add_option("--model", pred.model, "Checkpoint from `train`")->required();
    c_predict->add_option("--features", pred.features, "Feature directory")->required();
    c_predict->add_option("--annotations", pred.annotations, "Annotation file listing the frames to predict")->required();
    c_predict->add_option("--out", pred.out, "Output directory")->required();

    cli::PostprocessOptions post;
    auto* c_post = app.add_subcommand("postprocess", "Train and/or apply the bi-directional RNN post-processor");
    add_postprocess_options(*c_post, post);

    cli::EvaluateOptions eval;
    auto* c_eval = app.add_subcommand("evaluate", "Exact match, precision/recall, F1 and mAP");
    c_eval->add_option("--annotations", eval.annotations, "Ground-truth annotation file")->required();
    c_eval->add_option("--predictions", eval.predictions,
                       "Prediction directory (frames.csv, or pred_video_<id>.txt with --powerset)")
        ->required();
    c_eval->add_option("--powerset", eval.powerset, "Powerset file, needed for pred_video_<id>.txt inputs");
    c_eval->add_option("--out", eval.out, "Output directory")->required();
    c_eval->add_option("--name", eval.name, "Report file stem")->capture_default_str();

    cli::ReportOptions rep;
    auto* c_report = app.add_subcommand("report", "Side-by-side table of several evaluation reports");
    c_report->add_option("--input", rep.inputs, "A .kv report from `evaluate` (repeatable)")->required();
    c_report->add_option("--out", rep.out, "Output directory")->required();
    c_report->add_option("--name", rep.name, "Summary file stem")->capture_default_str();

    std::string unused_config;
    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--config", unused_config, "key=value file of this command's flags; command-line flags win");
    }

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv, app);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*c_synth) cli::cmd_synth(synth, out);
        if (*c_import) cli::cmd_import(import, out);
        if (*c_ingest) cli::cmd_ingest(ingest, out);
        if (*c_balance) cli::cmd_balance(balance, out);
        if (*c_train) cli::cmd_train(tr, out);
        if (*c_predict) cli::cmd_predict(pred, out);
        if (*c_post) cli::cmd_postprocess(post, out);
        if (*c_eval) cli::cmd_evaluate(eval, out);
        if (*c_report) cli::cmd_report(rep, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
    return exit_ok;
}

}  // namespace laptool
