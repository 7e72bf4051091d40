#include "laptool/model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "laptool/error.hpp"
#include "laptool/rng.hpp"

namespace laptool {

namespace {

constexpr const char* kVocabPrefix = "vocab/";

int fc1_outputs(const PowersetMap& map, Head head) {
    return head == Head::direct_lp ? map.size() : map.tool_count();
}

/// Per-tool marginals of a superclass distribution.
nn::Vector marginals(const PowersetMap& map, const nn::Vector& distribution) {
    nn::Vector p = nn::Vector::Zero(map.tool_count());
    for (int s = 0; s < map.size(); ++s) {
        const auto& bits = map.from_superclass(s);
        for (int k = 0; k < map.tool_count(); ++k) {
            if (bits.test(k)) p[k] += distribution[s];
        }
    }
    return p;
}

LabelVector threshold_bits(const nn::Vector& scores) {
    LabelVector bits(static_cast<int>(scores.size()));
    for (int k = 0; k < bits.size(); ++k) bits.set(k, scores[k] >= 0.5);
    return bits;
}

struct StepPlan {
    LossWeights weights;
    bool gru = true;
    bool fc1 = true;
    bool fc2 = true;
};

nn::ParamList select(RcnnModel& model, const StepPlan& plan) {
    nn::ParamList out;
    if (plan.gru) model.gru.collect("gru.", out);
    if (plan.fc1) model.fc1.collect("fc1.", out);
    if (plan.fc2 && model.head != Head::direct_lp) model.fc2.collect("fc2.", out);
    return out;
}

nn::ParamList select(RcnnGrads& grads, const StepPlan& plan) {
    nn::ParamList out;
    if (plan.gru) grads.gru.collect("gru.", out);
    if (plan.fc1) grads.fc1.collect("fc1.", out);
    if (plan.fc2 && grads.head != Head::direct_lp) grads.fc2.collect("fc2.", out);
    return out;
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
    if (name == "ml_only") return Strategy::ml_only;
    if (name == "lp_direct") return Strategy::lp_direct;
    if (name == "sequential") return Strategy::sequential;
    if (name == "alternate_cnn_fc2") return Strategy::alternate_cnn_fc2;
    if (name == "alternate_all") return Strategy::alternate_all;
    if (name == "joint") return Strategy::joint;
    throw ConfigError("unknown training strategy '" + name + "'");
}

std::string to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::ml_only: return "ml_only";
        case Strategy::lp_direct: return "lp_direct";
        case Strategy::sequential: return "sequential";
        case Strategy::alternate_cnn_fc2: return "alternate_cnn_fc2";
        case Strategy::alternate_all: return "alternate_all";
        case Strategy::joint: return "joint";
    }
    throw ConfigError("unknown training strategy");
}

Head head_for(Strategy strategy) {
    switch (strategy) {
        case Strategy::ml_only: return Head::threshold;
        case Strategy::lp_direct: return Head::direct_lp;
        default: return Head::decision;
    }
}

RcnnModel RcnnModel::zeros(PowersetMap map, const Options& options) {
    if (options.beta < 0) throw ConfigError("beta must be >= 0");
    if (options.window_length < 1 || options.window_interval < 1) throw ConfigError("window length and interval must be >= 1");
    RcnnModel m;
    m.head = options.head;
    m.window_length = options.window_length;
    m.window_interval = options.window_interval;
    m.beta = options.beta;
    m.gru = nn::GruParams::zeros(options.input_dim, options.hidden_dim, options.gru_bias);
    m.fc1 = nn::FcParams::zeros(options.hidden_dim, fc1_outputs(map, options.head));
    m.fc2 = nn::FcParams::zeros(map.tool_count(), map.size());
    m.map = std::move(map);
    return m;
}

RcnnModel RcnnModel::create(PowersetMap map, const Options& options, std::uint64_t seed) {
    RcnnModel m = zeros(std::move(map), options);
    Rng rng(seed);
    m.gru = nn::GruParams::glorot(options.input_dim, options.hidden_dim, rng, options.gru_bias);
    m.fc1 = nn::FcParams::glorot(options.hidden_dim, fc1_outputs(m.map, options.head), rng);
    m.fc2 = nn::FcParams::glorot(m.map.tool_count(), m.map.size(), rng);
    return m;
}

nn::ParamList RcnnModel::params() {
    nn::ParamList out;
    gru.collect("gru.", out);
    fc1.collect("fc1.", out);
    if (head != Head::direct_lp) fc2.collect("fc2.", out);
    return out;
}

void RcnnModel::save(std::ostream& out) {
    std::vector<nn::NamedTensor> tensors;
    tensors.push_back({"hparams",
                       {9},
                       {static_cast<float>(input_dim()), static_cast<float>(hidden_dim()),
                        static_cast<float>(tool_count()), static_cast<float>(superclass_count()),
                        static_cast<float>(window_length), static_cast<float>(window_interval),
                        static_cast<float>(beta), static_cast<float>(static_cast<int>(head)),
                        gru.use_bias ? 1.0f : 0.0f}});
    std::string names;
    for (int k = 0; k < map.tool_count(); ++k) names += (k ? "," : "") + map.tools().name(k);
    tensors.push_back({kVocabPrefix + names, {0}, {}});
    nn::NamedTensor entries{"map.entries",
                            {static_cast<std::uint32_t>(map.size()), static_cast<std::uint32_t>(map.tool_count())},
                            {}};
    for (const auto& v : map.entries()) {
        for (int k = 0; k < v.size(); ++k) entries.data.push_back(v.test(k) ? 1.0f : 0.0f);
    }
    tensors.push_back(std::move(entries));
    for (const auto& p : params()) tensors.push_back(nn::to_tensor(p));
    nn::write_checkpoint(out, tensors);
}

RcnnModel RcnnModel::load(std::istream& in) {
    const auto tensors = nn::read_checkpoint(in);
    const auto& h = nn::find_tensor(tensors, "hparams");
    if (h.data.size() != 9) throw ParseError("checkpoint: hparams has wrong size");

    std::vector<std::string> names;
    for (const auto& t : tensors) {
        if (t.name.rfind(kVocabPrefix, 0) == 0) {
            std::istringstream list(t.name.substr(std::string(kVocabPrefix).size()));
            std::string name;
            while (std::getline(list, name, ',')) names.push_back(name);
        }
    }
    const auto& e = nn::find_tensor(tensors, "map.entries");
    if (e.dims.size() != 2 || e.dims[1] != names.size()) throw ParseError("checkpoint: map.entries shape mismatch");
    std::vector<LabelVector> entries;
    for (std::uint32_t s = 0; s < e.dims[0]; ++s) {
        LabelVector v(static_cast<int>(e.dims[1]));
        for (std::uint32_t k = 0; k < e.dims[1]; ++k) v.set(static_cast<int>(k), e.data[s * e.dims[1] + k] != 0.0f);
        entries.push_back(v);
    }

    Options options;
    options.input_dim = static_cast<int>(h.data[0]);
    options.hidden_dim = static_cast<int>(h.data[1]);
    options.window_length = static_cast<int>(h.data[4]);
    options.window_interval = static_cast<int>(h.data[5]);
    options.beta = h.data[6];
    options.head = static_cast<Head>(static_cast<int>(h.data[7]));
    options.gru_bias = h.data[8] != 0.0f;
    RcnnModel m = zeros(PowersetMap(ToolVocabulary(std::move(names)), std::move(entries)), options);
    if (m.tool_count() != static_cast<int>(h.data[2]) || m.superclass_count() != static_cast<int>(h.data[3])) {
        throw ParseError("checkpoint: hparams disagree with embedded powerset map");
    }
    for (const auto& p : m.params()) nn::assign(p, nn::find_tensor(tensors, p.name));
    return m;
}

RcnnGrads RcnnGrads::like(const RcnnModel& model) {
    RcnnGrads g;
    g.head = model.head;
    g.gru = nn::GruParams::zeros(model.input_dim(), model.hidden_dim(), model.gru.use_bias);
    g.fc1 = nn::FcParams::zeros(model.fc1.input_dim(), model.fc1.output_dim());
    g.fc2 = nn::FcParams::zeros(model.fc2.input_dim(), model.fc2.output_dim());
    return g;
}

nn::ParamList RcnnGrads::params() {
    nn::ParamList out;
    gru.collect("gru.", out);
    fc1.collect("fc1.", out);
    if (head != Head::direct_lp) fc2.collect("fc2.", out);
    return out;
}

void RcnnGrads::clear() { nn::zero(params()); }

RcnnForward forward(const RcnnModel& model, const SequenceWindow& window) {
    if (static_cast<int>(window.features.size()) != model.window_length) {
        throw ShapeError("window has " + std::to_string(window.features.size()) + " frames, model expects " +
                         std::to_string(model.window_length));
    }
    RcnnForward pass;
    pass.gru = nn::gru_forward_trace(window.features, model.gru);
    pass.logits1 = nn::fc_forward(pass.gru.output(), model.fc1);
    if (model.head == Head::direct_lp) {
        pass.distribution = nn::softmax(pass.logits1);
        pass.scores = marginals(model.map, pass.distribution);
    } else {
        pass.scores = nn::sigmoid(pass.logits1);
        pass.logits2 = nn::fc_forward(pass.scores, model.fc2);
        pass.distribution = nn::softmax(pass.logits2);
    }
    return pass;
}

nn::Vector forward_f(const RcnnModel& model, const SequenceWindow& window) { return forward(model, window).scores; }

nn::Vector forward_g(const RcnnModel& model, const nn::Vector& scores) {
    if (scores.size() != model.tool_count()) {
        throw ShapeError("forward_g: " + std::to_string(scores.size()) + " scores, expected " +
                         std::to_string(model.tool_count()));
    }
    return nn::softmax(nn::fc_forward(scores, model.fc2));
}

int argmax(const nn::Vector& values) {
    if (values.size() == 0) throw DomainError("argmax of an empty vector");
    int best = 0;
    for (int i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

Prediction predict(const RcnnModel& model, const SequenceWindow& window) {
    const auto pass = forward(model, window);
    Prediction p;
    p.scores = pass.scores;
    if (model.head == Head::threshold) {
        p.bits = threshold_bits(pass.scores);
        p.superclass = model.map.find(p.bits);
    } else {
        p.superclass = argmax(pass.distribution);
        p.bits = model.map.from_superclass(p.superclass);
    }
    return p;
}

LossBreakdown joint_loss(const RcnnModel& model, const SequenceWindow& window) {
    if (window.target < 0 || window.target >= model.superclass_count()) {
        throw DomainError("joint_loss: window target is out of vocabulary");
    }
    const auto pass = forward(model, window);
    LossBreakdown loss;
    if (model.head == Head::direct_lp) {
        loss.mc = nn::softmax_ce_from_logits(pass.logits1, window.target);
    } else {
        loss.ml = nn::sigmoid_ce_from_logits(pass.logits1, window.target_bits);
        loss.mc = nn::softmax_ce_from_logits(pass.logits2, window.target);
    }
    loss.total = loss.ml + model.beta * loss.mc;
    return loss;
}

LossBreakdown backward(const RcnnModel& model, const RcnnForward& pass, const SequenceWindow& window,
                       LossWeights weights, RcnnGrads& grads) {
    if (pass.gru.empty()) throw StateError("backward called before forward");
    if (window.target < 0 || window.target >= model.superclass_count()) {
        throw DomainError("backward: window target is out of vocabulary");
    }
    LossBreakdown loss;
    nn::Vector d_logits1;
    if (model.head == Head::direct_lp) {
        loss.mc = nn::softmax_ce_from_logits(pass.logits1, window.target);
        d_logits1 = weights.mc * nn::softmax_ce_logit_grad(pass.logits1, window.target);
    } else {
        loss.ml = nn::sigmoid_ce_from_logits(pass.logits1, window.target_bits);
        loss.mc = nn::softmax_ce_from_logits(pass.logits2, window.target);
        d_logits1 = weights.ml * nn::sigmoid_ce_logit_grad(pass.logits1, window.target_bits);
        if (weights.mc != 0.0) {
            const nn::Vector d_logits2 = weights.mc * nn::softmax_ce_logit_grad(pass.logits2, window.target);
            const nn::Vector d_scores = nn::fc_backward(pass.scores, d_logits2, model.fc2, grads.fc2);
            d_logits1 += d_scores.cwiseProduct(pass.scores.cwiseProduct((1.0 - pass.scores.array()).matrix()));
        }
    }
    const nn::Vector d_hidden = nn::fc_backward(pass.gru.output(), d_logits1, model.fc1, grads.fc1);
    nn::gru_backward_final(pass.gru, d_hidden, model.gru, grads.gru);
    loss.total = loss.ml + model.beta * loss.mc;
    return loss;
}

LossBreakdown accumulate_gradients(const RcnnModel& model, const SequenceWindow& window, LossWeights weights,
                                   RcnnGrads& grads) {
    return backward(model, forward(model, window), window, weights, grads);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (beta < 0) throw ConfigError("beta must be >= 0");
    schedule.validate();
}

TrainResult train(RcnnModel& model, std::span<const SequenceWindow> windows, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    config.validate();
    if (model.head != head_for(config.strategy)) {
        throw ConfigError("model head does not match strategy " + to_string(config.strategy));
    }
    model.beta = config.beta;

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].target >= 0) order.push_back(i);
    }
    if (order.empty()) throw DomainError("train: no in-vocabulary training windows");

    // (even step, odd step) plans per phase
    std::vector<std::pair<StepPlan, StepPlan>> phases;
    const StepPlan ml_plan{{1.0, 0.0}, true, true, false};
    switch (config.strategy) {
        case Strategy::ml_only: phases.push_back({ml_plan, ml_plan}); break;
        case Strategy::lp_direct: {
            const StepPlan p{{0.0, 1.0}, true, true, false};
            phases.push_back({p, p});
            break;
        }
        case Strategy::sequential: {
            const StepPlan fc2_only{{0.0, 1.0}, false, false, true};
            phases.push_back({ml_plan, ml_plan});
            phases.push_back({fc2_only, fc2_only});
            break;
        }
        case Strategy::alternate_cnn_fc2: phases.push_back({ml_plan, {{0.0, 1.0}, true, false, true}}); break;
        case Strategy::alternate_all: phases.push_back({ml_plan, {{0.0, 1.0}, true, true, true}}); break;
        case Strategy::joint: {
            const StepPlan p{{1.0, config.beta}, true, true, true};
            phases.push_back({p, p});
            break;
        }
    }

    Rng rng(config.seed);
    RcnnGrads grads = RcnnGrads::like(model);
    TrainResult result;
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (std::size_t phase = 0; phase < phases.size(); ++phase) {
        std::size_t step = 0;
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            rng.shuffle(std::span(order));
            const double rate = config.schedule.rate(epoch);
            for (std::size_t begin = 0; begin < order.size(); begin += batch, ++step) {
                const auto& plan = step % 2 == 0 ? phases[phase].first : phases[phase].second;
                const auto end = std::min(order.size(), begin + batch);
                grads.clear();
                for (std::size_t i = begin; i < end; ++i) {
                    accumulate_gradients(model, windows[order[i]], plan.weights, grads);
                }
                auto g = select(grads, plan);
                nn::scale(g, 1.0 / static_cast<double>(end - begin));
                if (config.clip_norm > 0) nn::clip_global_norm(g, config.clip_norm);
                if (!nn::all_finite(g)) throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
                nn::sgd_step(select(model, plan), g, rate);
            }

            EpochStats stats;
            stats.epoch = epoch;
            stats.phase = static_cast<int>(phase);
            stats.rate = rate;
            std::size_t exact = 0;
            for (auto i : order) {
                const auto& w = windows[i];
                const auto loss = joint_loss(model, w);
                stats.loss += loss.total;
                stats.ml_loss += loss.ml;
                stats.mc_loss += loss.mc;
                if (predict(model, w).bits == w.target_bits) ++exact;
            }
            const auto n = static_cast<double>(order.size());
            stats.loss /= n;
            stats.ml_loss /= n;
            stats.mc_loss /= n;
            stats.exact_match = static_cast<double>(exact) / n;
            if (!std::isfinite(stats.loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
            result.history.push_back(stats);
            if (on_epoch) on_epoch(stats);
        }
    }
    return result;
}

std::vector<SequenceWindow> make_windows(const FeatureStore& store, std::span<const FrameRecord> records,
                                         const PowersetMap& map, int length, int interval) {
    std::vector<SequenceWindow> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto w = make_window(store, r.key(), length, interval);
        w.target_bits = r.labels;
        w.target = map.find(r.labels);
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace laptool
