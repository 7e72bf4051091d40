#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "laptool/labelspace.hpp"
#include "laptool/rng.hpp"

namespace laptool::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::RowVectorXd;

/// Flat mutable view over one parameter (or gradient) tensor.
struct ParamRef {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::span<double> values;
};

using ParamList = std::vector<ParamRef>;

/// Row-vector GRU. For input v and previous state h:
///   update    = sigmoid(v * input_update    + h * hidden_update    + bias_update)
///   reset     = sigmoid(v * input_reset     + h * hidden_reset     + bias_reset)
///   candidate = tanh   (v * input_candidate + (reset . h) * hidden_candidate + bias_candidate)
///   h'        = (1 - update) . h + update . candidate
/// Biases stay zero and are not exposed as parameters when `use_bias` is false.
struct GruParams {
    Matrix input_update, input_reset, input_candidate;     // input_dim x hidden_dim
    Matrix hidden_update, hidden_reset, hidden_candidate;  // hidden_dim x hidden_dim
    Vector bias_update, bias_reset, bias_candidate;        // hidden_dim
    bool use_bias = true;

    static GruParams zeros(int input_dim, int hidden_dim, bool use_bias = true);
    /// Matrices uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)); biases zero.
    static GruParams glorot(int input_dim, int hidden_dim, Rng& rng, bool use_bias = true);

    int input_dim() const { return static_cast<int>(input_update.rows()); }
    int hidden_dim() const { return static_cast<int>(input_update.cols()); }

    void collect(const std::string& prefix, ParamList& out);
};

struct FcParams {
    Matrix weight;  // input_dim x output_dim
    Vector bias;    // output_dim

    static FcParams zeros(int input_dim, int output_dim);
    static FcParams glorot(int input_dim, int output_dim, Rng& rng);
    static FcParams identity(int dim);

    int input_dim() const { return static_cast<int>(weight.rows()); }
    int output_dim() const { return static_cast<int>(weight.cols()); }

    void collect(const std::string& prefix, ParamList& out);
};

Vector sigmoid(const Vector& x);
double sigmoid(double x);
/// Max-subtracted; sums to 1.
Vector softmax(const Vector& x);

Vector fc_forward(const Vector& x, const FcParams& p);
/// Accumulates into `grads`; returns dL/dx.
Vector fc_backward(const Vector& x, const Vector& d_out, const FcParams& p, FcParams& grads);

struct GruStepCache {
    Vector input, previous, update, reset, candidate, output;
};

/// Recorded forward pass, one cache per step.
struct GruTrace {
    std::vector<GruStepCache> steps;

    bool empty() const { return steps.empty(); }
    const Vector& output() const;
};

Vector gru_step(const Vector& input, const Vector& previous, const GruParams& p, GruStepCache* cache = nullptr);

/// Left fold of gru_step; h0 defaults to zeros. Throws DomainError on an
/// empty sequence.
Vector gru_forward(std::span<const Vector> sequence, const GruParams& p);
Vector gru_forward(std::span<const Vector> sequence, const GruParams& p, const Vector& h0);
GruTrace gru_forward_trace(std::span<const Vector> sequence, const GruParams& p);
GruTrace gru_forward_trace(std::span<const Vector> sequence, const GruParams& p, const Vector& h0);

/// Backpropagation through time. `d_states[t]` is the external gradient on
/// the state after step t (size must equal the trace length). Accumulates
/// parameter gradients into `grads`, optionally writes input gradients, and
/// returns the gradient with respect to h0. Throws StateError on an empty trace.
Vector gru_backward(const GruTrace& trace, std::span<const Vector> d_states, const GruParams& p, GruParams& grads,
                    std::vector<Vector>* d_inputs = nullptr);
/// Gradient only on the final state.
Vector gru_backward_final(const GruTrace& trace, const Vector& d_final, const GruParams& p, GruParams& grads);

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean binary cross-entropy over K on probabilities (clamped at 1e-12).
double sigmoid_ce_loss(const Vector& probabilities, const LabelVector& target);
/// Same quantity from logits, stable for any magnitude.
double sigmoid_ce_from_logits(const Vector& logits, const LabelVector& target);
/// d/dlogits of sigmoid_ce_from_logits: (sigmoid(x) - y) / K.
Vector sigmoid_ce_logit_grad(const Vector& logits, const LabelVector& target);

/// -log q_target (clamped at 1e-12).
double softmax_ce_loss(const Vector& distribution, int target);
double weighted_softmax_ce_loss(const Vector& distribution, int target, std::span<const double> weights);
/// log-sum-exp(x) - x_target.
double softmax_ce_from_logits(const Vector& logits, int target);
/// softmax(x) - onehot(target).
Vector softmax_ce_logit_grad(const Vector& logits, int target);

struct LrSchedule {
    double initial_rate = 0.001;
    double decay = 0.7;
    int epochs_per_decay = 5;

    void validate() const;
    /// initial_rate * decay^floor(epoch / epochs_per_decay)
    double rate(int epoch) const;
};

/// p -= rate * g, pairwise by position. Names and sizes must match.
void sgd_step(const ParamList& params, const ParamList& grads, double rate);
void sgd_step(const ParamList& params, const ParamList& grads, const LrSchedule& schedule, int epoch);

void zero(const ParamList& params);
void scale(const ParamList& params, double factor);
double global_norm(const ParamList& params);
/// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
double clip_global_norm(const ParamList& params, double max_norm);
bool all_finite(const ParamList& params);

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;

    bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

/// Central finite differences of `loss` against `analytic` gradients.
/// Relative error per entry: |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-8).
/// Parameters are restored afterwards. Throws NumericError when the loss is
/// not finite.
GradCheckReport grad_check(const std::function<double()>& loss, const ParamList& params,
                           const ParamList& analytic, double epsilon = 1e-5);

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// "LPNN", u32 version, u32 tensor count, then per tensor: u32 name length,
/// name bytes, u32 rank, rank x u32 dims, f32 data. All little-endian.
void write_checkpoint(std::ostream& out, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

NamedTensor to_tensor(const ParamRef& p);
/// Copies tensor values into `p` after checking shape.
void assign(const ParamRef& p, const NamedTensor& tensor);
const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, const std::string& name);

}  // namespace laptool::nn
