#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "laptool/nn.hpp"

namespace laptool {

struct VideoPredictionSeq {
    int video_id = 0;
    std::vector<int> preds;

    /// First line: video id; then one superclass index per line.
    void write(std::ostream& out) const;
    static VideoPredictionSeq read(std::istream& in);

    friend bool operator==(const VideoPredictionSeq&, const VideoPredictionSeq&) = default;
};

/// One-hot rows for `preds`, then one-hot `no_tool_index` rows up to
/// `max_len`. Throws DomainError when preds is longer than max_len or an
/// index is out of range.
nn::Matrix encode_sequence(std::span<const int> preds, int superclass_count, int max_len, int no_tool_index);

/// Bi-directional GRU over one-hot superclass sequences with a shared output
/// layer on the concatenated states.
struct BiRnnModel {
    nn::GruParams forward;
    nn::GruParams backward;
    nn::FcParams output;  // 2 * hidden -> superclass_count
    std::vector<double> weights;
    int max_len = 0;
    int no_tool_index = 0;

    static BiRnnModel create(int superclass_count, int hidden_dim, int max_len, int no_tool_index, std::uint64_t seed);
    static BiRnnModel zeros(int superclass_count, int hidden_dim, int max_len, int no_tool_index);

    int superclass_count() const { return output.output_dim(); }
    int hidden_dim() const { return forward.hidden_dim(); }

    nn::ParamList params();

    void save(std::ostream& out);
    static BiRnnModel load(std::istream& in);
};

struct BiRnnForward {
    nn::GruTrace forward;
    nn::GruTrace backward;  // in reversed time order
    nn::Matrix logits;
    nn::Matrix distributions;  // row t = softmax output for frame t
};

BiRnnForward birnn_forward_trace(const BiRnnModel& model, const nn::Matrix& encoded);
/// Row t is the superclass distribution for frame t.
nn::Matrix birnn_forward(const BiRnnModel& model, const nn::Matrix& encoded);

/// Mean over scored frames of w_y * -log q_y. `truth[t] < 0` and frames at or
/// beyond truth.size() are not scored.
double sequence_loss(const BiRnnModel& model, const nn::Matrix& encoded, std::span<const int> truth);
/// Adds the gradient of sequence_loss into `grads`; returns the loss.
double accumulate_sequence_gradients(const BiRnnModel& model, const nn::Matrix& encoded, std::span<const int> truth,
                                     BiRnnModel& grads);

struct PostprocessExample {
    std::vector<int> inputs;  // RCNN predictions
    std::vector<int> truth;   // ground-truth superclasses, -1 = unscored
};

struct PostprocessConfig {
    int epochs = 50;
    int batch_size = 1;  // videos per step
    nn::LrSchedule schedule{0.5, 0.7, 20};
    std::uint64_t seed = 0;
    bool augment = true;
    double noise_amplitude = 0.1;
    double drop_probability = 0.05;
    /// 0 disables clipping.
    double clip_norm = 5.0;

    void validate() const;
};

struct PostprocessEpoch {
    int epoch = 0;
    double rate = 0.0;
    double loss = 0.0;  // mean over videos, un-augmented
};

/// SGD on sequence_loss. `model.weights` must already be set (see
/// class_weights); with augmentation each epoch perturbs the one-hot inputs
/// by uniform noise in [-a, a] (clamped at 0) and drops frames.
std::vector<PostprocessEpoch> train_postprocessor(BiRnnModel& model, std::span<const PostprocessExample> corpus,
                                                  const PostprocessConfig& config,
                                                  const std::function<void(const PostprocessEpoch&)>& on_epoch = {});

/// argmax per frame, padding discarded. Sequences longer than max_len are
/// processed unpadded.
VideoPredictionSeq smooth_video(const BiRnnModel& model, const VideoPredictionSeq& seq);

}  // namespace laptool
