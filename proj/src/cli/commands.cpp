#include "cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>

#include "cli/manifest.hpp"
#include "laptool/balance.hpp"
#include "laptool/dataset.hpp"
#include "laptool/error.hpp"
#include "laptool/labelspace.hpp"
#include "laptool/metrics.hpp"
#include "laptool/model.hpp"
#include "laptool/postprocess.hpp"
#include "laptool/synthetic.hpp"

namespace laptool::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

template <typename T>
std::string str(const T& v) {
    if constexpr (std::is_same_v<T, double>) {
        return num(v);
    } else if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_convertible_v<T, std::string>) {
        return std::string(v);
    } else {
        return std::to_string(v);
    }
}

void require_file(const std::string& path, const std::string& what, const std::string& hint) {
    if (path.empty()) throw ConfigError("missing --" + what);
    if (!fs::is_regular_file(path)) {
        throw ParseError(what + " '" + path + "' not found" + (hint.empty() ? "" : "; " + hint));
    }
}

void require_dir(const std::string& path, const std::string& what, const std::string& hint) {
    if (path.empty()) throw ConfigError("missing --" + what);
    if (!fs::is_directory(path)) {
        throw ParseError(what + " directory '" + path + "' not found" + (hint.empty() ? "" : "; " + hint));
    }
}

fs::path make_out_dir(const std::string& out) {
    if (out.empty()) throw ConfigError("missing --out");
    fs::create_directories(out);
    return out;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    return f;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot read " + path.string());
    return f;
}

AnnotationSet load_annotations(const std::string& path) {
    require_file(path, "annotations", "");
    auto set = parse_annotations(fs::path(path));
    if (set.records.empty()) throw ParseError("annotation file '" + path + "' contains no frames");
    return set;
}

PowersetMap load_powerset(const std::string& path) {
    require_file(path, "powerset", "run `laptool ingest` to create powerset.txt");
    auto in = open_in(path);
    try {
        return PowersetMap::read(in);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void check_tools(const ToolVocabulary& a, const ToolVocabulary& b, const std::string& what) {
    if (!(a == b)) throw ParseError(what + ": tool vocabulary differs from the powerset's");
}

std::string pred_file_name(int video_id) { return "pred_video_" + std::to_string(video_id) + ".txt"; }

std::map<int, VideoPredictionSeq> read_prediction_dir(const fs::path& dir) {
    static const std::regex pattern(R"(pred_video_(-?\d+)\.txt)");
    std::map<int, VideoPredictionSeq> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (!entry.is_regular_file() || !std::regex_match(name, m, pattern)) continue;
        auto in = open_in(entry.path());
        VideoPredictionSeq seq;
        try {
            seq = VideoPredictionSeq::read(in);
        } catch (const ParseError& e) {
            throw ParseError(entry.path().string() + ": " + e.what());
        }
        out[seq.video_id] = std::move(seq);
    }
    return out;
}

std::vector<int> superclass_sequence(const AnnotationSet& set, int video_id, const PowersetMap& map) {
    std::vector<int> seq;
    for (const auto& r : set.video(video_id)) seq.push_back(map.find(r.labels));
    return seq;
}

void write_cooccurrence(std::ostream& out, const CooccurrenceMatrix& c, const ToolVocabulary& tools) {
    out << "tool";
    for (const auto& n : tools.names()) out << ',' << n;
    out << '\n';
    for (int a = 0; a < c.size(); ++a) {
        out << tools.name(a);
        for (int b = 0; b < c.size(); ++b) out << ',' << c(a, b);
        out << '\n';
    }
}

void write_corpus_stats(std::ostream& out, const CorpusStats& s, const ToolVocabulary& tools) {
    out << "tool,frames\n";
    for (int k = 0; k < tools.size(); ++k) out << tools.name(k) << ',' << s.per_tool[static_cast<std::size_t>(k)] << '\n';
    out << "NoTool," << s.no_tools << '\n';
    out << "Total," << s.total << '\n';
}

}  // namespace

void cmd_synth(const SynthOptions& o, std::ostream& log) {
    SyntheticConfig config;
    config.videos = o.videos;
    config.frames_per_video = o.frames;
    config.test_videos = o.test_videos;
    config.feature_dim = o.dim;
    config.tool_variants = o.variants;
    config.noise_sd = o.noise;
    config.seed = o.seed;
    config.validate();
    const auto out = make_out_dir(o.out);
    const auto corpus = make_synthetic_corpus(config);
    {
        auto f = open_out(out / "train.txt");
        write_annotations(f, corpus.train);
    }
    {
        auto f = open_out(out / "test.txt");
        write_annotations(f, corpus.test);
    }
    fs::create_directories(out / "features");
    corpus.features.save_directory(out / "features");

    Manifest m("synth");
    m.set_seed(o.seed);
    m.set("out", o.out);
    m.set("videos", str(o.videos));
    m.set("frames", str(o.frames));
    m.set("test_videos", str(o.test_videos));
    m.set("dim", str(o.dim));
    m.set("variants", str(o.variants));
    m.set("noise", str(o.noise));
    m.add_output(out, "train.txt");
    m.add_output(out, "test.txt");
    for (int v : corpus.features.video_ids()) m.add_output(out, fs::path("features") / ("video_" + std::to_string(v) + ".fstr"));
    m.write(out);
    log << "synth: " << corpus.train.records.size() << " training and " << corpus.test.records.size()
        << " test frames written to " << out.string() << '\n';
}

void cmd_import(const ImportOptions& o, std::ostream& log) {
    require_dir(o.dir, "dir", "");
    if (o.out.empty()) throw ConfigError("missing --out");
    // tool_video_01.txt, video01-tool.txt, ...: the last number is the video id
    static const std::regex pattern(R"((?:.*\D)?(\d+)\D*\.txt)");
    std::vector<std::pair<int, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(o.dir)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (!entry.is_regular_file() || name.find("tool") == std::string::npos) continue;
        if (std::regex_match(name, m, pattern)) files.emplace_back(std::stoi(m[1]), entry.path());
    }
    if (files.empty()) throw ParseError("no tool annotation files (*tool*<id>*.txt) in " + o.dir);
    std::sort(files.begin(), files.end());
    AnnotationSet set;
    set.tools = ToolVocabulary::m2cai();
    for (const auto& [id, path] : files) {
        auto in = open_in(path);
        try {
            auto records = import_tool_annotation(in, id, set.tools, o.frames_per_label);
            set.records.insert(set.records.end(), records.begin(), records.end());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    const fs::path out_path(o.out);
    const auto dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
    fs::create_directories(dir);
    {
        auto f = open_out(out_path);
        write_annotations(f, set);
    }
    Manifest m("import");
    m.set("out", o.out);
    m.set("frames_per_label", str(o.frames_per_label));
    for (const auto& [id, path] : files) m.add_input(path);
    m.add_output(dir, out_path.filename());
    m.write(dir);
    log << "import: " << files.size() << " videos, " << set.records.size() << " frames -> " << o.out << '\n';
}

void cmd_ingest(const IngestOptions& o, std::ostream& log) {
    if (o.superclasses < 1) throw ConfigError("--superclasses must be >= 1");
    const auto set = load_annotations(o.annotations);
    const auto out = make_out_dir(o.out);
    const auto labels = set.labels();
    const auto stats = corpus_stats(set.records, set.tools.size());
    const auto map = build_powerset_map(set.tools, labels, o.superclasses);
    {
        auto f = open_out(out / "corpus_stats.csv");
        write_corpus_stats(f, stats, set.tools);
    }
    {
        auto f = open_out(out / "cooccurrence.csv");
        write_cooccurrence(f, cooccurrence(labels, set.tools.size()), set.tools);
    }
    {
        auto f = open_out(out / "powerset.txt");
        map.write(f);
    }
    {
        std::vector<std::pair<std::uint32_t, std::int64_t>> sets(stats.per_labelset.begin(), stats.per_labelset.end());
        std::stable_sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        auto f = open_out(out / "labelsets.csv");
        f << "labelset,frames,fraction,retained\n";
        for (const auto& [mask, count] : sets) {
            const LabelVector v(set.tools.size(), mask);
            f << v.to_string() << ',' << count << ',' << num(static_cast<double>(count) / static_cast<double>(stats.total))
              << ',' << (map.contains(v) ? 1 : 0) << '\n';
        }
    }
    Manifest m("ingest");
    m.set("annotations", o.annotations);
    m.set("out", o.out);
    m.set("superclasses", str(o.superclasses));
    m.add_input(o.annotations);
    for (const char* name : {"corpus_stats.csv", "cooccurrence.csv", "powerset.txt", "labelsets.csv"}) m.add_output(out, name);
    m.write(out);

    log << "ingest: " << stats.total << " frames in " << set.video_ids().size() << " videos\n";
    for (int k = 0; k < set.tools.size(); ++k) {
        log << "  " << set.tools.name(k) << ' ' << stats.per_tool[static_cast<std::size_t>(k)] << '\n';
    }
    log << "  no tool " << stats.no_tools << '\n';
    log << "  " << map.size() << " superclasses cover " << num(100.0 * map.coverage(labels)) << "% of frames\n";
}

void cmd_balance(const BalanceOptions& o, std::ostream& log) {
    const auto set = load_annotations(o.annotations);
    const auto map = load_powerset(o.powerset);
    check_tools(set.tools, map.tools(), o.annotations);
    const auto out = make_out_dir(o.out);
    const auto index = balance_by_powerset(set.records, map, o.target, o.seed);
    {
        auto f = open_out(out / "balanced.txt");
        index.write(f);
    }
    std::map<FrameKey, LabelVector> labels;
    for (const auto& r : set.records) labels.emplace(r.key(), r.labels);
    std::vector<LabelVector> sampled;
    for (const auto& k : index.sampled) sampled.push_back(labels.at(k));
    const auto before = corpus_stats(set.records, set.tools.size());
    std::vector<FrameRecord> balanced_records;
    for (const auto& k : index.sampled) balanced_records.push_back({k.video_id, k.frame_index, labels.at(k)});
    const auto after = corpus_stats(balanced_records, set.tools.size());
    {
        auto f = open_out(out / "balanced_stats.csv");
        f << "tool,before,after\n";
        for (int k = 0; k < set.tools.size(); ++k) {
            const auto i = static_cast<std::size_t>(k);
            f << set.tools.name(k) << ',' << before.per_tool[i] << ',' << after.per_tool[i] << '\n';
        }
        f << "NoTool," << before.no_tools << ',' << after.no_tools << '\n';
        f << "Total," << before.total << ',' << after.total << '\n';
        f << "NormalizedEntropy," << num(normalized_tool_entropy(before.per_tool)) << ','
          << num(normalized_tool_entropy(after.per_tool)) << '\n';
    }
    {
        auto f = open_out(out / "cooccurrence_balanced.csv");
        write_cooccurrence(f, cooccurrence(sampled, set.tools.size()), set.tools);
    }
    {
        auto f = open_out(out / "class_weights.txt");
        for (double w : class_weights(set.records, map)) f << num(w) << '\n';
    }
    Manifest m("balance");
    m.set_seed(o.seed);
    m.set("annotations", o.annotations);
    m.set("powerset", o.powerset);
    m.set("out", o.out);
    m.set("target", str(o.target));
    m.add_input(o.annotations);
    m.add_input(o.powerset);
    for (const char* name : {"balanced.txt", "balanced_stats.csv", "cooccurrence_balanced.csv", "class_weights.txt"}) {
        m.add_output(out, name);
    }
    m.write(out);
    log << "balance: " << index.sampled.size() << " frames (" << o.target << " x " << map.size() << " superclasses)\n";
}

void cmd_train(const TrainOptions& o, std::ostream& log) {
    TrainConfig config;
    config.strategy = parse_strategy(o.strategy);
    config.epochs = o.epochs;
    config.batch_size = o.batch;
    config.schedule = {o.lr, o.lr_decay, o.decay_epochs};
    config.seed = o.seed;
    config.beta = o.beta;
    config.clip_norm = o.clip;
    config.validate();
    if (o.lambda < 1 || o.dt < 1) throw ConfigError("--lambda and --dt must be >= 1");
    if (o.hidden < 1) throw ConfigError("--hidden must be >= 1");

    const auto set = load_annotations(o.annotations);
    const auto map = load_powerset(o.powerset);
    check_tools(set.tools, map.tools(), o.annotations);
    require_dir(o.features, "features", "");
    const auto store = FeatureStore::load_directory(o.features);

    std::vector<FrameRecord> records;
    if (!o.balanced.empty()) {
        require_file(o.balanced, "balanced", "run `laptool balance` first");
        auto in = open_in(o.balanced);
        const auto index = BalancedIndex::read(in);
        std::map<FrameKey, const FrameRecord*> by_key;
        for (const auto& r : set.records) by_key.emplace(r.key(), &r);
        for (const auto& k : index.sampled) {
            const auto it = by_key.find(k);
            if (it == by_key.end()) {
                throw ParseError(o.balanced + ": frame (" + std::to_string(k.video_id) + ", " +
                                 std::to_string(k.frame_index) + ") is not in " + o.annotations);
            }
            records.push_back(*it->second);
        }
    } else {
        records = set.records;
    }
    const auto windows = make_windows(store, records, map, o.lambda, o.dt);

    RcnnModel::Options options;
    options.input_dim = store.dim();
    options.hidden_dim = o.hidden;
    options.window_length = o.lambda;
    options.window_interval = o.dt;
    options.beta = o.beta;
    options.head = head_for(config.strategy);
    options.gru_bias = !o.no_gru_bias;
    auto model = RcnnModel::create(map, options, o.seed);

    const auto out = make_out_dir(o.out);
    auto history = open_out(out / "history.csv");
    history << "epoch,phase,rate,L,L_f,L_g,exact_match\n";
    train(model, windows, config, [&](const EpochStats& s) {
        history << s.epoch << ',' << s.phase << ',' << num(s.rate) << ',' << num(s.loss) << ',' << num(s.ml_loss) << ','
                << num(s.mc_loss) << ',' << num(s.exact_match) << '\n';
        log << "epoch " << s.epoch << (s.phase ? " (phase 2)" : "") << " L=" << num(s.loss)
            << " exact_match=" << num(s.exact_match) << '\n';
    });
    history.close();
    {
        auto f = open_out(out / "model.lpnn");
        model.save(f);
    }

    Manifest m("train");
    m.set_seed(o.seed);
    m.set("annotations", o.annotations);
    m.set("features", o.features);
    m.set("powerset", o.powerset);
    m.set("balanced", o.balanced);
    m.set("out", o.out);
    m.set("strategy", o.strategy);
    m.set("beta", str(o.beta));
    m.set("lambda", str(o.lambda));
    m.set("dt", str(o.dt));
    m.set("hidden", str(o.hidden));
    m.set("epochs", str(o.epochs));
    m.set("batch", str(o.batch));
    m.set("lr", str(o.lr));
    m.set("lr_decay", str(o.lr_decay));
    m.set("decay_epochs", str(o.decay_epochs));
    m.set("clip", str(o.clip));
    m.set("no_gru_bias", str(o.no_gru_bias));
    m.add_input(o.annotations);
    m.add_input(o.features);
    m.add_input(o.powerset);
    if (!o.balanced.empty()) m.add_input(o.balanced);
    m.add_output(out, "history.csv");
    m.add_output(out, "model.lpnn");
    m.write(out);
    log << "train: " << windows.size() << " windows, model written to " << (out / "model.lpnn").string() << '\n';
}

void cmd_predict(const PredictOptions& o, std::ostream& log) {
    require_file(o.model, "model", "run `laptool train` first");
    auto model_in = open_in(o.model);
    const auto model = RcnnModel::load(model_in);
    const auto set = load_annotations(o.annotations);
    check_tools(set.tools, model.map.tools(), o.annotations);
    require_dir(o.features, "features", "");
    const auto store = FeatureStore::load_directory(o.features);
    if (store.dim() != model.input_dim()) {
        throw ShapeError("features have dimension " + std::to_string(store.dim()) + ", model expects " +
                         std::to_string(model.input_dim()));
    }
    const auto out = make_out_dir(o.out);

    Manifest m("predict");
    m.set("model", o.model);
    m.set("features", o.features);
    m.set("annotations", o.annotations);
    m.set("out", o.out);
    m.add_input(o.model);
    m.add_input(o.features);
    m.add_input(o.annotations);

    auto frames = open_out(out / "frames.csv");
    frames << "video,frame,superclass,bits";
    for (const auto& n : set.tools.names()) frames << ",score_" << n;
    frames << '\n';
    bool all_mapped = true;
    std::size_t count = 0;
    std::vector<VideoPredictionSeq> sequences;
    for (int v : set.video_ids()) {
        VideoPredictionSeq seq{v, {}};
        for (const auto& r : set.video(v)) {
            const auto window = make_window(store, r.key(), model.window_length, model.window_interval);
            const auto p = predict(model, window);
            frames << r.video_id << ',' << r.frame_index << ',' << p.superclass << ',' << p.bits.to_string();
            for (Eigen::Index k = 0; k < p.scores.size(); ++k) frames << ',' << num(p.scores[k]);
            frames << '\n';
            seq.preds.push_back(p.superclass);
            all_mapped = all_mapped && p.superclass >= 0;
            ++count;
        }
        sequences.push_back(std::move(seq));
    }
    frames.close();
    m.add_output(out, "frames.csv");
    if (all_mapped) {
        for (const auto& seq : sequences) {
            auto f = open_out(out / pred_file_name(seq.video_id));
            seq.write(f);
            f.close();
            m.add_output(out, pred_file_name(seq.video_id));
        }
    } else {
        log << "predict: some frames fall outside the powerset; per-video superclass files not written\n";
    }
    m.write(out);
    log << "predict: " << count << " frames in " << sequences.size() << " videos\n";
}

void cmd_postprocess(const PostprocessOptions& o, std::ostream& log) {
    const auto map = load_powerset(o.powerset);
    require_dir(o.predictions, "predictions", "run `laptool predict` first");
    const auto inputs = read_prediction_dir(o.predictions);
    if (inputs.empty()) throw ParseError("no pred_video_*.txt files in " + o.predictions);
    const auto out = make_out_dir(o.out);

    Manifest m("postprocess");
    m.set("powerset", o.powerset);
    m.set("predictions", o.predictions);
    m.set("out", o.out);
    m.add_input(o.powerset);
    m.add_input(o.predictions);

    BiRnnModel model;
    if (!o.model.empty()) {
        require_file(o.model, "model", "");
        auto in = open_in(o.model);
        model = BiRnnModel::load(in);
        if (model.superclass_count() != map.size()) throw ShapeError("post-processor superclass count differs from powerset");
        m.set("model", o.model);
        m.add_input(o.model);
    } else {
        if (o.train_annotations.empty()) throw ConfigError("postprocess needs --model or --train-annotations");
        if (o.train_predictions.empty() && !(o.corrupt > 0.0)) {
            throw ConfigError("postprocess training needs --train-predictions and/or --corrupt > 0");
        }
        if (o.corrupt_copies < 1) throw ConfigError("--corrupt-copies must be >= 1");
        const auto train_set = load_annotations(o.train_annotations);
        check_tools(train_set.tools, map.tools(), o.train_annotations);
        std::map<int, VideoPredictionSeq> train_preds;
        if (!o.train_predictions.empty()) {
            require_dir(o.train_predictions, "train-predictions", "run `laptool predict` on the training videos first");
            train_preds = read_prediction_dir(o.train_predictions);
        }
        Rng rng(o.seed);
        std::vector<PostprocessExample> corpus;
        std::vector<std::vector<int>> truths;
        int max_len = o.max_len;
        for (int v : train_set.video_ids()) {
            const auto truth = superclass_sequence(train_set, v, map);
            truths.push_back(truth);
            max_len = std::max(max_len, static_cast<int>(truth.size()));
            if (!o.train_predictions.empty()) {
                const auto it = train_preds.find(v);
                if (it == train_preds.end()) throw ParseError("no training prediction for video " + std::to_string(v));
                if (it->second.preds.size() != truth.size()) {
                    throw ParseError("training prediction for video " + std::to_string(v) + " has " +
                                     std::to_string(it->second.preds.size()) + " frames, annotations have " +
                                     std::to_string(truth.size()));
                }
                corpus.push_back({it->second.preds, truth});
            }
            if (o.corrupt > 0.0) {
                std::vector<int> clean(truth);
                for (auto& c : clean) c = c < 0 ? map.no_tool_index() : c;
                for (int copy = 0; copy < o.corrupt_copies; ++copy) {
                    corpus.push_back({corrupt_predictions(clean, o.corrupt, map.size(), rng), truth});
                }
            }
        }
        for (const auto& [v, seq] : inputs) max_len = std::max(max_len, static_cast<int>(seq.preds.size()));
        if (o.hidden < 1) throw ConfigError("--hidden must be >= 1");
        model = BiRnnModel::create(map.size(), o.hidden, max_len, map.no_tool_index(), o.seed);
        model.weights = class_weights(truths, map.size());

        PostprocessConfig config;
        config.epochs = o.epochs;
        config.batch_size = o.batch;
        config.schedule = {o.lr, o.lr_decay, o.decay_epochs};
        config.seed = o.seed;
        config.augment = !o.no_augment;
        config.noise_amplitude = o.noise;
        config.drop_probability = o.drop;
        config.clip_norm = o.clip;
        config.validate();
        auto history = open_out(out / "postprocess_history.csv");
        history << "epoch,rate,L\n";
        train_postprocessor(model, corpus, config, [&](const PostprocessEpoch& e) {
            history << e.epoch << ',' << num(e.rate) << ',' << num(e.loss) << '\n';
            log << "epoch " << e.epoch << " L=" << num(e.loss) << '\n';
        });
        history.close();
        {
            auto f = open_out(out / "birnn.lpnn");
            model.save(f);
        }
        m.set_seed(o.seed);
        m.set("train_annotations", o.train_annotations);
        m.set("train_predictions", o.train_predictions);
        m.set("corrupt", str(o.corrupt));
        m.set("corrupt_copies", str(o.corrupt_copies));
        m.set("hidden", str(o.hidden));
        m.set("epochs", str(o.epochs));
        m.set("batch", str(o.batch));
        m.set("lr", str(o.lr));
        m.set("lr_decay", str(o.lr_decay));
        m.set("decay_epochs", str(o.decay_epochs));
        m.set("no_augment", str(o.no_augment));
        m.set("noise", str(o.noise));
        m.set("drop", str(o.drop));
        m.set("clip", str(o.clip));
        m.set("max_len", str(o.max_len));
        m.add_input(o.train_annotations);
        if (!o.train_predictions.empty()) m.add_input(o.train_predictions);
        m.add_output(out, "postprocess_history.csv");
        m.add_output(out, "birnn.lpnn");
    }

    for (const auto& [v, seq] : inputs) {
        for (int c : seq.preds) {
            if (c >= map.size()) throw ParseError("video " + std::to_string(v) + ": superclass " + std::to_string(c) + " out of range");
        }
        const auto smoothed = smooth_video(model, seq);
        auto f = open_out(out / pred_file_name(v));
        smoothed.write(f);
        f.close();
        m.add_output(out, pred_file_name(v));
    }
    m.write(out);
    log << "postprocess: smoothed " << inputs.size() << " videos\n";
}

void cmd_evaluate(const EvaluateOptions& o, std::ostream& log) {
    const auto set = load_annotations(o.annotations);
    require_dir(o.predictions, "predictions", "run `laptool predict` first");
    const fs::path dir(o.predictions);
    std::vector<EvalRecord> records;
    Manifest m("evaluate");
    m.set("annotations", o.annotations);
    m.set("predictions", o.predictions);
    m.set("out", o.out);
    m.set("name", o.name);
    m.add_input(o.annotations);

    const int k = set.tools.size();
    if (fs::is_regular_file(dir / "frames.csv")) {
        m.add_input(dir / "frames.csv");
        auto in = open_in(dir / "frames.csv");
        std::string line;
        std::getline(in, line);
        std::map<FrameKey, EvalRecord> by_key;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
            if (static_cast<int>(cells.size()) != 4 + k) throw ParseError("frames.csv: expected " + std::to_string(4 + k) + " columns", line_no);
            EvalRecord r;
            r.pred_bits = LabelVector::from_string(cells[3]);
            if (r.pred_bits.size() != k) throw ParseError("frames.csv: label width mismatch", line_no);
            std::vector<double> scores;
            for (int t = 0; t < k; ++t) scores.push_back(std::stod(cells[static_cast<std::size_t>(4 + t)]));
            r.scores = std::move(scores);
            by_key[{std::stoi(cells[0]), std::stoi(cells[1])}] = std::move(r);
        }
        for (const auto& truth : set.records) {
            const auto it = by_key.find(truth.key());
            if (it == by_key.end()) {
                throw ParseError("frames.csv has no prediction for video " + std::to_string(truth.video_id) + " frame " +
                                 std::to_string(truth.frame_index));
            }
            auto r = it->second;
            r.truth = truth.labels;
            records.push_back(std::move(r));
        }
    } else {
        const auto map = load_powerset(o.powerset);
        check_tools(set.tools, map.tools(), o.annotations);
        m.set("powerset", o.powerset);
        m.add_input(o.powerset);
        m.add_input(o.predictions);
        const auto preds = read_prediction_dir(dir);
        for (int v : set.video_ids()) {
            const auto it = preds.find(v);
            if (it == preds.end()) throw ParseError("no predictions for video " + std::to_string(v) + " in " + o.predictions);
            const auto frames = set.video(v);
            if (it->second.preds.size() != frames.size()) {
                throw ParseError("video " + std::to_string(v) + ": " + std::to_string(it->second.preds.size()) +
                                 " predictions for " + std::to_string(frames.size()) + " annotated frames");
            }
            for (std::size_t i = 0; i < frames.size(); ++i) {
                records.push_back({frames[i].labels, map.from_superclass(it->second.preds[i]), std::nullopt});
            }
        }
    }
    const auto report = evaluate(records, set.tools);
    const auto out = make_out_dir(o.out);
    {
        auto f = open_out(out / (o.name + ".txt"));
        report.write_table(f);
    }
    {
        auto f = open_out(out / (o.name + ".kv"));
        report.write_key_values(f);
    }
    m.add_output(out, o.name + ".txt");
    m.add_output(out, o.name + ".kv");
    m.write(out);
    report.write_table(log);
}

void cmd_report(const ReportOptions& o, std::ostream& log) {
    if (o.inputs.empty()) throw ConfigError("report needs at least one --input");
    const std::vector<std::string> columns{"exact_match",       "f1_from_per_class", "f1_from_overall",
                                           "mean_precision_per_class", "mean_recall_per_class", "mAP"};
    std::vector<std::pair<std::string, std::map<std::string, std::string>>> rows;
    Manifest m("report");
    m.set("out", o.out);
    m.set("name", o.name);
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
        const auto& path = o.inputs[i];
        require_file(path, "input", "run `laptool evaluate` first");
        m.set("input." + std::to_string(i), path);
        m.add_input(path);
        auto in = open_in(path);
        std::map<std::string, std::string> kv;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError(path + ": expected key=value", line_no);
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        rows.emplace_back(fs::path(path).stem().string(), std::move(kv));
    }
    const auto out = make_out_dir(o.out);
    {
        auto f = open_out(out / (o.name + ".csv"));
        f << "report";
        for (const auto& c : columns) f << ',' << c;
        f << '\n';
        for (const auto& [name, kv] : rows) {
            f << name;
            for (const auto& c : columns) {
                const auto it = kv.find(c);
                f << ',' << (it == kv.end() ? "" : it->second);
            }
            f << '\n';
        }
    }
    std::ostringstream table;
    table << std::left;
    table.width(16);
    table << "report";
    for (const auto& c : columns) {
        table << "  ";
        table.width(static_cast<std::streamsize>(c.size()));
        table << c;
    }
    table << '\n';
    for (const auto& [name, kv] : rows) {
        table.width(16);
        table << name;
        for (const auto& c : columns) {
            const auto it = kv.find(c);
            table << "  ";
            table.width(static_cast<std::streamsize>(c.size()));
            table << (it == kv.end() ? "-" : it->second);
        }
        table << '\n';
    }
    {
        auto f = open_out(out / (o.name + ".txt"));
        f << table.str();
    }
    m.add_output(out, o.name + ".csv");
    m.add_output(out, o.name + ".txt");
    m.write(out);
    log << table.str();
}

}  // namespace laptool::cli
