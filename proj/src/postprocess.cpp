#include "laptool/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "laptool/error.hpp"
#include "laptool/rng.hpp"

namespace laptool {

namespace {

std::vector<nn::Vector> rows_of(const nn::Matrix& m, bool reversed) {
    std::vector<nn::Vector> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        rows[static_cast<std::size_t>(reversed ? m.rows() - 1 - t : t)] = m.row(t);
    }
    return rows;
}

void check_encoded(const BiRnnModel& model, const nn::Matrix& encoded) {
    if (encoded.rows() == 0) throw DomainError("bi-rnn: empty input sequence");
    if (encoded.cols() != model.forward.input_dim()) {
        throw ShapeError("bi-rnn: input rows have " + std::to_string(encoded.cols()) + " columns, expected " +
                         std::to_string(model.forward.input_dim()));
    }
}

std::size_t scored_frames(std::span<const int> truth, Eigen::Index rows) {
    std::size_t n = 0;
    for (std::size_t t = 0; t < truth.size() && static_cast<Eigen::Index>(t) < rows; ++t) n += truth[t] >= 0 ? 1 : 0;
    return n;
}

}  // namespace

void VideoPredictionSeq::write(std::ostream& out) const {
    out << video_id << '\n';
    for (int p : preds) out << p << '\n';
}

VideoPredictionSeq VideoPredictionSeq::read(std::istream& in) {
    VideoPredictionSeq seq;
    std::string line;
    std::size_t line_no = 0;
    bool have_id = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        long long value = 0;
        std::string rest;
        if (!(fields >> value) || (fields >> rest)) throw ParseError("prediction file: expected one integer", line_no);
        if (!have_id) {
            seq.video_id = static_cast<int>(value);
            have_id = true;
        } else {
            if (value < 0) throw ParseError("prediction file: negative superclass index", line_no);
            seq.preds.push_back(static_cast<int>(value));
        }
    }
    if (!have_id) throw ParseError("prediction file: missing video id");
    return seq;
}

nn::Matrix encode_sequence(std::span<const int> preds, int superclass_count, int max_len, int no_tool_index) {
    if (static_cast<int>(preds.size()) > max_len) {
        throw DomainError("sequence of length " + std::to_string(preds.size()) + " exceeds max_len " +
                          std::to_string(max_len));
    }
    if (no_tool_index < 0 || no_tool_index >= superclass_count) throw DomainError("no-tool index out of range");
    nn::Matrix encoded = nn::Matrix::Zero(max_len, superclass_count);
    for (int t = 0; t < max_len; ++t) {
        const int c = t < static_cast<int>(preds.size()) ? preds[static_cast<std::size_t>(t)] : no_tool_index;
        if (c < 0 || c >= superclass_count) throw DomainError("superclass index " + std::to_string(c) + " out of range");
        encoded(t, c) = 1.0;
    }
    return encoded;
}

BiRnnModel BiRnnModel::zeros(int superclass_count, int hidden_dim, int max_len, int no_tool_index) {
    if (max_len < 1) throw ConfigError("bi-rnn max_len must be >= 1");
    if (no_tool_index < 0 || no_tool_index >= superclass_count) throw ConfigError("no-tool index out of range");
    BiRnnModel m;
    m.forward = nn::GruParams::zeros(superclass_count, hidden_dim);
    m.backward = nn::GruParams::zeros(superclass_count, hidden_dim);
    m.output = nn::FcParams::zeros(2 * hidden_dim, superclass_count);
    m.weights.assign(static_cast<std::size_t>(superclass_count), 1.0);
    m.max_len = max_len;
    m.no_tool_index = no_tool_index;
    return m;
}

BiRnnModel BiRnnModel::create(int superclass_count, int hidden_dim, int max_len, int no_tool_index,
                              std::uint64_t seed) {
    BiRnnModel m = zeros(superclass_count, hidden_dim, max_len, no_tool_index);
    Rng rng(seed);
    m.forward = nn::GruParams::glorot(superclass_count, hidden_dim, rng);
    m.backward = nn::GruParams::glorot(superclass_count, hidden_dim, rng);
    m.output = nn::FcParams::glorot(2 * hidden_dim, superclass_count, rng);
    return m;
}

nn::ParamList BiRnnModel::params() {
    nn::ParamList out;
    forward.collect("fwd.", out);
    backward.collect("bwd.", out);
    output.collect("fc3.", out);
    return out;
}

void BiRnnModel::save(std::ostream& out) {
    std::vector<nn::NamedTensor> tensors;
    tensors.push_back({"hparams",
                       {4},
                       {static_cast<float>(superclass_count()), static_cast<float>(hidden_dim()),
                        static_cast<float>(max_len), static_cast<float>(no_tool_index)}});
    nn::NamedTensor w{"class_weights", {static_cast<std::uint32_t>(weights.size())}, {}};
    for (double x : weights) w.data.push_back(static_cast<float>(x));
    tensors.push_back(std::move(w));
    for (const auto& p : params()) tensors.push_back(nn::to_tensor(p));
    nn::write_checkpoint(out, tensors);
}

BiRnnModel BiRnnModel::load(std::istream& in) {
    const auto tensors = nn::read_checkpoint(in);
    const auto& h = nn::find_tensor(tensors, "hparams");
    if (h.data.size() != 4) throw ParseError("checkpoint: hparams has wrong size");
    BiRnnModel m = zeros(static_cast<int>(h.data[0]), static_cast<int>(h.data[1]), static_cast<int>(h.data[2]),
                         static_cast<int>(h.data[3]));
    const auto& w = nn::find_tensor(tensors, "class_weights");
    if (w.data.size() != m.weights.size()) throw ParseError("checkpoint: class_weights has wrong size");
    std::copy(w.data.begin(), w.data.end(), m.weights.begin());
    for (const auto& p : m.params()) nn::assign(p, nn::find_tensor(tensors, p.name));
    return m;
}

BiRnnForward birnn_forward_trace(const BiRnnModel& model, const nn::Matrix& encoded) {
    check_encoded(model, encoded);
    BiRnnForward pass;
    pass.forward = nn::gru_forward_trace(rows_of(encoded, false), model.forward);
    pass.backward = nn::gru_forward_trace(rows_of(encoded, true), model.backward);
    const auto steps = encoded.rows();
    const int hidden = model.hidden_dim();
    pass.logits.resize(steps, model.superclass_count());
    pass.distributions.resize(steps, model.superclass_count());
    nn::Vector joined(2 * hidden);
    for (Eigen::Index t = 0; t < steps; ++t) {
        joined.head(hidden) = pass.forward.steps[static_cast<std::size_t>(t)].output;
        joined.tail(hidden) = pass.backward.steps[static_cast<std::size_t>(steps - 1 - t)].output;
        const nn::Vector logits = nn::fc_forward(joined, model.output);
        pass.logits.row(t) = logits;
        pass.distributions.row(t) = nn::softmax(logits);
    }
    return pass;
}

nn::Matrix birnn_forward(const BiRnnModel& model, const nn::Matrix& encoded) {
    return birnn_forward_trace(model, encoded).distributions;
}

double sequence_loss(const BiRnnModel& model, const nn::Matrix& encoded, std::span<const int> truth) {
    const auto pass = birnn_forward_trace(model, encoded);
    const auto n = scored_frames(truth, encoded.rows());
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 0; t < truth.size() && static_cast<Eigen::Index>(t) < encoded.rows(); ++t) {
        if (truth[t] < 0) continue;
        const nn::Vector logits = pass.logits.row(static_cast<Eigen::Index>(t));
        sum += model.weights.at(static_cast<std::size_t>(truth[t])) * nn::softmax_ce_from_logits(logits, truth[t]);
    }
    return sum / static_cast<double>(n);
}

double accumulate_sequence_gradients(const BiRnnModel& model, const nn::Matrix& encoded, std::span<const int> truth,
                                     BiRnnModel& grads) {
    const auto pass = birnn_forward_trace(model, encoded);
    const auto steps = encoded.rows();
    const auto n = scored_frames(truth, steps);
    if (n == 0) return 0.0;
    const int hidden = model.hidden_dim();
    const nn::Vector zero_state = nn::Vector::Zero(hidden);
    std::vector<nn::Vector> d_forward(static_cast<std::size_t>(steps), zero_state);
    std::vector<nn::Vector> d_backward(static_cast<std::size_t>(steps), zero_state);
    double sum = 0.0;
    nn::Vector joined(2 * hidden);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        if (ut >= truth.size() || truth[ut] < 0) continue;
        const int y = truth[ut];
        const double w = model.weights.at(static_cast<std::size_t>(y)) / static_cast<double>(n);
        const nn::Vector logits = pass.logits.row(t);
        sum += model.weights[static_cast<std::size_t>(y)] * nn::softmax_ce_from_logits(logits, y);
        joined.head(hidden) = pass.forward.steps[ut].output;
        joined.tail(hidden) = pass.backward.steps[static_cast<std::size_t>(steps - 1 - t)].output;
        const nn::Vector d_joined = nn::fc_backward(joined, w * nn::softmax_ce_logit_grad(logits, y), model.output,
                                                    grads.output);
        d_forward[ut] = d_joined.head(hidden);
        d_backward[static_cast<std::size_t>(steps - 1 - t)] = d_joined.tail(hidden);
    }
    nn::gru_backward(pass.forward, d_forward, model.forward, grads.forward);
    nn::gru_backward(pass.backward, d_backward, model.backward, grads.backward);
    return sum / static_cast<double>(n);
}

void PostprocessConfig::validate() const {
    if (epochs < 1) throw ConfigError("post-processor epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("post-processor batch size must be >= 1");
    if (noise_amplitude < 0) throw ConfigError("noise amplitude must be >= 0");
    if (drop_probability < 0 || drop_probability >= 1) throw ConfigError("drop probability must be in [0, 1)");
    schedule.validate();
}

std::vector<PostprocessEpoch> train_postprocessor(BiRnnModel& model, std::span<const PostprocessExample> corpus,
                                                  const PostprocessConfig& config,
                                                  const std::function<void(const PostprocessEpoch&)>& on_epoch) {
    config.validate();
    if (corpus.empty()) throw DomainError("train_postprocessor: empty corpus");
    if (model.weights.size() != static_cast<std::size_t>(model.superclass_count())) {
        throw ShapeError("post-processor class weights do not match superclass count");
    }
    for (const auto& ex : corpus) {
        if (ex.inputs.size() != ex.truth.size()) throw ShapeError("post-processor example: inputs and truth differ in length");
        if (static_cast<int>(ex.inputs.size()) > model.max_len) throw DomainError("post-processor example longer than max_len");
    }

    const int classes = model.superclass_count();
    Rng rng(config.seed);
    BiRnnModel grads = BiRnnModel::zeros(classes, model.hidden_dim(), model.max_len, model.no_tool_index);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<PostprocessEpoch> history;
    const auto batch = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        const double rate = config.schedule.rate(epoch);
        for (std::size_t begin = 0; begin < order.size(); begin += batch) {
            const auto end = std::min(order.size(), begin + batch);
            auto g = grads.params();
            nn::zero(g);
            for (std::size_t i = begin; i < end; ++i) {
                const auto& ex = corpus[order[i]];
                std::vector<int> inputs;
                std::vector<int> truth;
                if (config.augment && config.drop_probability > 0) {
                    for (std::size_t t = 0; t < ex.inputs.size(); ++t) {
                        if (rng.bernoulli(config.drop_probability)) continue;
                        inputs.push_back(ex.inputs[t]);
                        truth.push_back(ex.truth[t]);
                    }
                } else {
                    inputs = ex.inputs;
                    truth = ex.truth;
                }
                nn::Matrix encoded = encode_sequence(inputs, classes, model.max_len, model.no_tool_index);
                if (config.augment && config.noise_amplitude > 0) {
                    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(inputs.size()); ++t) {
                        for (Eigen::Index c = 0; c < encoded.cols(); ++c) {
                            const double v = encoded(t, c) + rng.uniform(-config.noise_amplitude, config.noise_amplitude);
                            encoded(t, c) = std::max(0.0, v);
                        }
                    }
                }
                accumulate_sequence_gradients(model, encoded, truth, grads);
            }
            nn::scale(g, 1.0 / static_cast<double>(end - begin));
            if (config.clip_norm > 0) nn::clip_global_norm(g, config.clip_norm);
            if (!nn::all_finite(g)) throw NumericError("post-processor: non-finite gradient at epoch " + std::to_string(epoch));
            nn::sgd_step(model.params(), g, rate);
        }

        PostprocessEpoch stats{epoch, rate, 0.0};
        for (const auto& ex : corpus) {
            stats.loss += sequence_loss(model, encode_sequence(ex.inputs, classes, model.max_len, model.no_tool_index),
                                        ex.truth);
        }
        stats.loss /= static_cast<double>(corpus.size());
        if (!std::isfinite(stats.loss)) throw NumericError("post-processor: non-finite loss at epoch " + std::to_string(epoch));
        history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return history;
}

VideoPredictionSeq smooth_video(const BiRnnModel& model, const VideoPredictionSeq& seq) {
    VideoPredictionSeq out{seq.video_id, {}};
    if (seq.preds.empty()) return out;
    const int len = static_cast<int>(seq.preds.size());
    const auto q = birnn_forward(model, encode_sequence(seq.preds, model.superclass_count(), std::max(len, model.max_len),
                                                        model.no_tool_index));
    out.preds.reserve(seq.preds.size());
    for (int t = 0; t < len; ++t) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < q.cols(); ++c) {
            if (q(t, c) > q(t, best)) best = c;
        }
        out.preds.push_back(static_cast<int>(best));
    }
    return out;
}

}  // namespace laptool
