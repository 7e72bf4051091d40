#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laptool/dataset.hpp"
#include "laptool/labelspace.hpp"
#include "laptool/nn.hpp"

namespace laptool {

enum class Strategy { ml_only, lp_direct, sequential, alternate_cnn_fc2, alternate_all, joint };

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy strategy);

/// How the final label-set is decided.
enum class Head {
    decision,   // P = sigmoid(fc1), Q = softmax(fc2(P)), c = argmax Q
    threshold,  // P = sigmoid(fc1), bits = P >= 0.5 (multilabel baseline, no LP)
    direct_lp,  // fc1 has one output per superclass, Q = softmax(fc1)
};

Head head_for(Strategy strategy);

/// Recurrent classifier f (GRU + fc1) composed with decision model g (fc2).
struct RcnnModel {
    nn::GruParams gru;
    nn::FcParams fc1;
    nn::FcParams fc2;  // unused for Head::direct_lp
    PowersetMap map;
    Head head = Head::decision;
    int window_length = 5;
    int window_interval = 5;
    double beta = 1.0;

    struct Options {
        int input_dim = 0;
        int hidden_dim = 64;
        int window_length = 5;
        int window_interval = 5;
        double beta = 1.0;
        Head head = Head::decision;
        bool gru_bias = true;
    };

    /// Glorot matrices, zero biases, drawn from `seed`.
    static RcnnModel create(PowersetMap map, const Options& options, std::uint64_t seed);
    /// Every weight and bias zero.
    static RcnnModel zeros(PowersetMap map, const Options& options);

    int tool_count() const { return map.tool_count(); }
    int superclass_count() const { return map.size(); }
    int input_dim() const { return gru.input_dim(); }
    int hidden_dim() const { return gru.hidden_dim(); }

    nn::ParamList params();

    void save(std::ostream& out);
    static RcnnModel load(std::istream& in);
};

/// Gradients share RcnnModel's parameter layout.
struct RcnnGrads {
    nn::GruParams gru;
    nn::FcParams fc1;
    nn::FcParams fc2;
    Head head = Head::decision;

    static RcnnGrads like(const RcnnModel& model);
    nn::ParamList params();
    void clear();
};

struct RcnnForward {
    nn::GruTrace gru;
    nn::Vector logits1;
    nn::Vector scores;  // P: per-tool confidence
    nn::Vector logits2;
    nn::Vector distribution;  // Q: per-superclass probability (empty for Head::threshold)
};

RcnnForward forward(const RcnnModel& model, const SequenceWindow& window);

/// P. For Head::direct_lp the per-tool marginals of Q.
nn::Vector forward_f(const RcnnModel& model, const SequenceWindow& window);
/// Q = softmax(fc2(P)).
nn::Vector forward_g(const RcnnModel& model, const nn::Vector& scores);

struct Prediction {
    int superclass = -1;  // -1 only for Head::threshold when bits fall outside the map
    LabelVector bits;
    nn::Vector scores;
};

/// argmax with ties to the lowest index.
int argmax(const nn::Vector& values);

Prediction predict(const RcnnModel& model, const SequenceWindow& window);

struct LossBreakdown {
    double total = 0.0;
    double ml = 0.0;  // L_f
    double mc = 0.0;  // L_g
};

/// L = L_f + beta * L_g. Requires window.target (DomainError otherwise).
/// For Head::direct_lp, L_f = 0 and L_g is the softmax loss on fc1.
LossBreakdown joint_loss(const RcnnModel& model, const SequenceWindow& window);

/// Weight applied to each loss term during backward.
struct LossWeights {
    double ml = 1.0;
    double mc = 1.0;
};

/// Adds d(ml * L_f + mc * L_g)/dθ into `grads` and returns the unweighted losses.
LossBreakdown accumulate_gradients(const RcnnModel& model, const SequenceWindow& window, LossWeights weights,
                                   RcnnGrads& grads);
/// Backward from a forward pass recorded by `forward`. Throws StateError when
/// `pass` holds no trace.
LossBreakdown backward(const RcnnModel& model, const RcnnForward& pass, const SequenceWindow& window,
                       LossWeights weights, RcnnGrads& grads);

struct TrainConfig {
    Strategy strategy = Strategy::joint;
    int epochs = 100;
    int batch_size = 40;
    nn::LrSchedule schedule;
    std::uint64_t seed = 0;
    double beta = 1.0;
    /// 0 disables clipping.
    double clip_norm = 0.0;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    int phase = 0;  // 1 for sequential training's fc2 phase
    double rate = 0.0;
    double loss = 0.0;
    double ml_loss = 0.0;
    double mc_loss = 0.0;
    double exact_match = 0.0;  // on the training windows
};

struct TrainResult {
    std::vector<EpochStats> history;
};

/// Windows with target < 0 are skipped. Strategies:
///   ml_only           L_f on gru + fc1
///   lp_direct         softmax CE on fc1 (one output per superclass), all weights
///   sequential        L_f on gru + fc1 for `epochs`, then L_g on fc2 only for `epochs`
///   alternate_cnn_fc2 per batch: L_f on gru + fc1, then L_g on gru + fc2
///   alternate_all     per batch: L_f on gru + fc1, then L_g on everything
///   joint             L_f + beta L_g on everything
/// The model's head must match the strategy (see head_for).
TrainResult train(RcnnModel& model, std::span<const SequenceWindow> windows, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Windows for every record, targets from `map` (-1 when out of vocabulary).
std::vector<SequenceWindow> make_windows(const FeatureStore& store, std::span<const FrameRecord> records,
                                         const PowersetMap& map, int length, int interval);

}  // namespace laptool
