#include "laptool/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include "laptool/error.hpp"

namespace laptool::nn {

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'L', 'P', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Dense>
ParamRef view(const std::string& name, Dense& m) {
    std::vector<std::uint32_t> shape;
    if constexpr (Dense::RowsAtCompileTime == 1) {
        shape = {static_cast<std::uint32_t>(m.size())};
    } else {
        shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    }
    return {name, std::move(shape), std::span<double>(m.data(), static_cast<std::size_t>(m.size()))};
}

Matrix uniform_matrix(int rows, int cols, double limit, Rng& rng) {
    Matrix m(rows, cols);
    // column-major fill order is part of the seeded contract
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
    }
    return m;
}

double glorot_limit(int fan_in, int fan_out) { return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); }

void check_dims(const Vector& input, const Vector& previous, const GruParams& p) {
    if (input.size() != p.input_dim()) {
        throw ShapeError("gru: input has " + std::to_string(input.size()) + " features, expected " +
                         std::to_string(p.input_dim()));
    }
    if (previous.size() != p.hidden_dim()) {
        throw ShapeError("gru: state has " + std::to_string(previous.size()) + " units, expected " +
                         std::to_string(p.hidden_dim()));
    }
}

void check_pairing(const ParamList& a, const ParamList& b) {
    if (a.size() != b.size()) throw ShapeError("parameter lists differ in length");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].values.size() != b[i].values.size()) {
            throw ShapeError("parameter '" + a[i].name + "' and gradient '" + b[i].name + "' differ in size");
        }
    }
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

GruParams GruParams::zeros(int input_dim, int hidden_dim, bool use_bias) {
    if (input_dim < 1 || hidden_dim < 1) throw ShapeError("gru: dimensions must be positive");
    GruParams p;
    p.input_update = p.input_reset = p.input_candidate = Matrix::Zero(input_dim, hidden_dim);
    p.hidden_update = p.hidden_reset = p.hidden_candidate = Matrix::Zero(hidden_dim, hidden_dim);
    p.bias_update = p.bias_reset = p.bias_candidate = Vector::Zero(hidden_dim);
    p.use_bias = use_bias;
    return p;
}

GruParams GruParams::glorot(int input_dim, int hidden_dim, Rng& rng, bool use_bias) {
    GruParams p = zeros(input_dim, hidden_dim, use_bias);
    const double in_limit = glorot_limit(input_dim, hidden_dim);
    const double hidden_limit = glorot_limit(hidden_dim, hidden_dim);
    p.input_update = uniform_matrix(input_dim, hidden_dim, in_limit, rng);
    p.input_reset = uniform_matrix(input_dim, hidden_dim, in_limit, rng);
    p.input_candidate = uniform_matrix(input_dim, hidden_dim, in_limit, rng);
    p.hidden_update = uniform_matrix(hidden_dim, hidden_dim, hidden_limit, rng);
    p.hidden_reset = uniform_matrix(hidden_dim, hidden_dim, hidden_limit, rng);
    p.hidden_candidate = uniform_matrix(hidden_dim, hidden_dim, hidden_limit, rng);
    return p;
}

void GruParams::collect(const std::string& prefix, ParamList& out) {
    out.push_back(view(prefix + "input_update", input_update));
    out.push_back(view(prefix + "input_reset", input_reset));
    out.push_back(view(prefix + "input_candidate", input_candidate));
    out.push_back(view(prefix + "hidden_update", hidden_update));
    out.push_back(view(prefix + "hidden_reset", hidden_reset));
    out.push_back(view(prefix + "hidden_candidate", hidden_candidate));
    if (use_bias) {
        out.push_back(view(prefix + "bias_update", bias_update));
        out.push_back(view(prefix + "bias_reset", bias_reset));
        out.push_back(view(prefix + "bias_candidate", bias_candidate));
    }
}

FcParams FcParams::zeros(int input_dim, int output_dim) {
    if (input_dim < 1 || output_dim < 1) throw ShapeError("fc: dimensions must be positive");
    return {Matrix::Zero(input_dim, output_dim), Vector::Zero(output_dim)};
}

FcParams FcParams::glorot(int input_dim, int output_dim, Rng& rng) {
    FcParams p = zeros(input_dim, output_dim);
    p.weight = uniform_matrix(input_dim, output_dim, glorot_limit(input_dim, output_dim), rng);
    return p;
}

FcParams FcParams::identity(int dim) {
    FcParams p = zeros(dim, dim);
    p.weight.setIdentity();
    return p;
}

void FcParams::collect(const std::string& prefix, ParamList& out) {
    out.push_back(view(prefix + "weight", weight));
    out.push_back(view(prefix + "bias", bias));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

Vector softmax(const Vector& x) {
    if (x.size() == 0) throw ShapeError("softmax of an empty vector");
    const Vector e = (x.array() - x.maxCoeff()).exp().matrix();
    return e / e.sum();
}

Vector fc_forward(const Vector& x, const FcParams& p) {
    if (x.size() != p.input_dim()) {
        throw ShapeError("fc: input has " + std::to_string(x.size()) + " values, expected " +
                         std::to_string(p.input_dim()));
    }
    return x * p.weight + p.bias;
}

Vector fc_backward(const Vector& x, const Vector& d_out, const FcParams& p, FcParams& grads) {
    grads.weight.noalias() += x.transpose() * d_out;
    grads.bias += d_out;
    return d_out * p.weight.transpose();
}

const Vector& GruTrace::output() const {
    if (steps.empty()) throw StateError("gru trace is empty");
    return steps.back().output;
}

Vector gru_step(const Vector& input, const Vector& previous, const GruParams& p, GruStepCache* cache) {
    check_dims(input, previous, p);
    const Vector update = sigmoid(input * p.input_update + previous * p.hidden_update + p.bias_update);
    const Vector reset = sigmoid(input * p.input_reset + previous * p.hidden_reset + p.bias_reset);
    const Vector gated = reset.cwiseProduct(previous);
    const Vector candidate =
        (input * p.input_candidate + gated * p.hidden_candidate + p.bias_candidate).array().tanh().matrix();
    Vector output = previous + update.cwiseProduct(candidate - previous);
    if (cache) *cache = {input, previous, update, reset, candidate, output};
    return output;
}

Vector gru_forward(std::span<const Vector> sequence, const GruParams& p) {
    return gru_forward(sequence, p, Vector::Zero(p.hidden_dim()));
}

Vector gru_forward(std::span<const Vector> sequence, const GruParams& p, const Vector& h0) {
    if (sequence.empty()) throw DomainError("gru_forward: empty sequence");
    Vector h = h0;
    for (const auto& v : sequence) h = gru_step(v, h, p);
    return h;
}

GruTrace gru_forward_trace(std::span<const Vector> sequence, const GruParams& p) {
    return gru_forward_trace(sequence, p, Vector::Zero(p.hidden_dim()));
}

GruTrace gru_forward_trace(std::span<const Vector> sequence, const GruParams& p, const Vector& h0) {
    if (sequence.empty()) throw DomainError("gru_forward: empty sequence");
    GruTrace trace;
    trace.steps.resize(sequence.size());
    Vector h = h0;
    for (std::size_t t = 0; t < sequence.size(); ++t) h = gru_step(sequence[t], h, p, &trace.steps[t]);
    return trace;
}

Vector gru_backward(const GruTrace& trace, std::span<const Vector> d_states, const GruParams& p, GruParams& grads,
                    std::vector<Vector>* d_inputs) {
    if (trace.empty()) throw StateError("gru_backward called without a recorded forward pass");
    if (d_states.size() != trace.steps.size()) {
        throw ShapeError("gru_backward: " + std::to_string(d_states.size()) + " state gradients for " +
                         std::to_string(trace.steps.size()) + " steps");
    }
    if (d_inputs) d_inputs->assign(trace.steps.size(), Vector());

    Vector dh = Vector::Zero(p.hidden_dim());
    for (std::size_t t = trace.steps.size(); t-- > 0;) {
        const auto& s = trace.steps[t];
        dh += d_states[t];

        const Vector d_update = dh.cwiseProduct(s.candidate - s.previous);
        const Vector d_candidate = dh.cwiseProduct(s.update);
        Vector d_previous = dh - dh.cwiseProduct(s.update);

        const Vector d_cand_pre = d_candidate.cwiseProduct((1.0 - s.candidate.array().square()).matrix());
        const Vector gated = s.reset.cwiseProduct(s.previous);
        grads.input_candidate.noalias() += s.input.transpose() * d_cand_pre;
        grads.hidden_candidate.noalias() += gated.transpose() * d_cand_pre;
        const Vector d_gated = d_cand_pre * p.hidden_candidate.transpose();
        const Vector d_reset = d_gated.cwiseProduct(s.previous);
        d_previous += d_gated.cwiseProduct(s.reset);

        const Vector d_update_pre =
            d_update.cwiseProduct(s.update.cwiseProduct((1.0 - s.update.array()).matrix()));
        const Vector d_reset_pre = d_reset.cwiseProduct(s.reset.cwiseProduct((1.0 - s.reset.array()).matrix()));
        grads.input_update.noalias() += s.input.transpose() * d_update_pre;
        grads.hidden_update.noalias() += s.previous.transpose() * d_update_pre;
        grads.input_reset.noalias() += s.input.transpose() * d_reset_pre;
        grads.hidden_reset.noalias() += s.previous.transpose() * d_reset_pre;
        if (p.use_bias) {
            grads.bias_update += d_update_pre;
            grads.bias_reset += d_reset_pre;
            grads.bias_candidate += d_cand_pre;
        }
        d_previous.noalias() += d_update_pre * p.hidden_update.transpose();
        d_previous.noalias() += d_reset_pre * p.hidden_reset.transpose();

        if (d_inputs) {
            (*d_inputs)[t] = d_update_pre * p.input_update.transpose() + d_reset_pre * p.input_reset.transpose() +
                             d_cand_pre * p.input_candidate.transpose();
        }
        dh = std::move(d_previous);
    }
    return dh;
}

Vector gru_backward_final(const GruTrace& trace, const Vector& d_final, const GruParams& p, GruParams& grads) {
    if (trace.empty()) throw StateError("gru_backward called without a recorded forward pass");
    std::vector<Vector> d_states(trace.steps.size(), Vector::Zero(p.hidden_dim()));
    d_states.back() = d_final;
    return gru_backward(trace, d_states, p, grads);
}

double sigmoid_ce_loss(const Vector& probabilities, const LabelVector& target) {
    if (probabilities.size() != target.size()) throw ShapeError("sigmoid_ce_loss: size mismatch");
    double sum = 0.0;
    for (int k = 0; k < target.size(); ++k) {
        const double p = probabilities[k];
        sum += target.test(k) ? std::log(std::max(p, kProbabilityFloor))
                              : std::log(std::max(1.0 - p, kProbabilityFloor));
    }
    return -sum / static_cast<double>(target.size());
}

double sigmoid_ce_from_logits(const Vector& logits, const LabelVector& target) {
    if (logits.size() != target.size()) throw ShapeError("sigmoid_ce_from_logits: size mismatch");
    double sum = 0.0;
    for (int k = 0; k < target.size(); ++k) {
        const double x = logits[k];
        const double y = target.test(k) ? 1.0 : 0.0;
        sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    return sum / static_cast<double>(target.size());
}

Vector sigmoid_ce_logit_grad(const Vector& logits, const LabelVector& target) {
    if (logits.size() != target.size()) throw ShapeError("sigmoid_ce_logit_grad: size mismatch");
    Vector g = sigmoid(logits);
    for (int k = 0; k < target.size(); ++k) g[k] -= target.test(k) ? 1.0 : 0.0;
    return g / static_cast<double>(target.size());
}

double softmax_ce_loss(const Vector& distribution, int target) {
    if (target < 0 || target >= distribution.size()) {
        throw DomainError("softmax_ce_loss: target " + std::to_string(target) + " out of range");
    }
    return -std::log(std::max(distribution[target], kProbabilityFloor));
}

double weighted_softmax_ce_loss(const Vector& distribution, int target, std::span<const double> weights) {
    if (static_cast<Eigen::Index>(weights.size()) != distribution.size()) {
        throw ShapeError("weighted_softmax_ce_loss: weight count mismatch");
    }
    const double loss = softmax_ce_loss(distribution, target);
    return weights[static_cast<std::size_t>(target)] * loss;
}

double softmax_ce_from_logits(const Vector& logits, int target) {
    if (target < 0 || target >= logits.size()) {
        throw DomainError("softmax_ce_from_logits: target " + std::to_string(target) + " out of range");
    }
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits[target];
}

Vector softmax_ce_logit_grad(const Vector& logits, int target) {
    if (target < 0 || target >= logits.size()) throw DomainError("softmax_ce_logit_grad: target out of range");
    Vector g = softmax(logits);
    g[target] -= 1.0;
    return g;
}

void LrSchedule::validate() const {
    if (!(initial_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("learning-rate decay must be in (0, 1]");
    if (epochs_per_decay < 1) throw ConfigError("epochs per decay must be >= 1");
}

double LrSchedule::rate(int epoch) const {
    return initial_rate * std::pow(decay, static_cast<double>(epoch / epochs_per_decay));
}

void sgd_step(const ParamList& params, const ParamList& grads, double rate) {
    check_pairing(params, grads);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].values;
        const auto g = grads[i].values;
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= rate * g[j];
    }
}

void sgd_step(const ParamList& params, const ParamList& grads, const LrSchedule& schedule, int epoch) {
    sgd_step(params, grads, schedule.rate(epoch));
}

void zero(const ParamList& params) {
    for (const auto& p : params) std::fill(p.values.begin(), p.values.end(), 0.0);
}

void scale(const ParamList& params, double factor) {
    for (const auto& p : params) {
        for (auto& v : p.values) v *= factor;
    }
}

double global_norm(const ParamList& params) {
    double sum = 0.0;
    for (const auto& p : params) {
        for (double v : p.values) sum += v * v;
    }
    return std::sqrt(sum);
}

double clip_global_norm(const ParamList& params, double max_norm) {
    const double norm = global_norm(params);
    if (max_norm > 0.0 && norm > max_norm) scale(params, max_norm / norm);
    return norm;
}

bool all_finite(const ParamList& params) {
    for (const auto& p : params) {
        for (double v : p.values) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

GradCheckReport grad_check(const std::function<double()>& loss, const ParamList& params, const ParamList& analytic,
                           double epsilon) {
    check_pairing(params, analytic);
    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].values;
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double saved = values[j];
            values[j] = saved + epsilon;
            const double plus = loss();
            values[j] = saved - epsilon;
            const double minus = loss();
            values[j] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                throw NumericError("grad_check: non-finite loss perturbing " + params[i].name);
            }
            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double backprop = analytic[i].values[j];
            const double denom = std::max({std::abs(backprop), std::abs(numeric), 1e-8});
            const double err = std::abs(backprop - numeric) / denom;
            ++report.checked;
            if (err > report.max_relative_error) {
                report.max_relative_error = err;
                report.worst_param = params[i].name;
                report.worst_index = j;
            }
        }
    }
    return report;
}

void write_checkpoint(std::ostream& out, std::span<const NamedTensor> tensors) {
    out.write(kCheckpointMagic.data(), 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        std::size_t expected = 1;
        for (auto d : t.dims) expected *= d;
        if (expected != t.data.size()) throw ShapeError("tensor '" + t.name + "' data does not match its dims");
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put_u32(out, d);
        for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) throw Error("checkpoint write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kCheckpointMagic) throw ParseError("checkpoint: bad magic");
    const auto version = get_u32(in);
    if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = get_u32(in);
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const auto name_len = get_u32(in);
        if (name_len > (1u << 20)) throw ParseError("checkpoint: implausible name length");
        t.name.resize(name_len);
        if (!in.read(t.name.data(), name_len)) throw ParseError("checkpoint truncated");
        const auto rank = get_u32(in);
        if (rank > 8) throw ParseError("checkpoint: implausible tensor rank");
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(get_u32(in));
            total *= t.dims.back();
        }
        if (total > (std::size_t{1} << 30)) throw ParseError("checkpoint: implausible tensor size");
        t.data.resize(total);
        for (auto& v : t.data) v = std::bit_cast<float>(get_u32(in));
        tensors.push_back(std::move(t));
    }
    return tensors;
}

NamedTensor to_tensor(const ParamRef& p) {
    NamedTensor t{p.name, p.shape, {}};
    t.data.reserve(p.values.size());
    for (double v : p.values) t.data.push_back(static_cast<float>(v));
    return t;
}

void assign(const ParamRef& p, const NamedTensor& tensor) {
    if (tensor.dims != p.shape || tensor.data.size() != p.values.size()) {
        throw ShapeError("checkpoint tensor '" + tensor.name + "' does not match parameter '" + p.name + "'");
    }
    std::copy(tensor.data.begin(), tensor.data.end(), p.values.begin());
}

const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, const std::string& name) {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw ParseError("checkpoint: missing tensor '" + name + "'");
}

}  // namespace laptool::nn
