#pragma once

// Independent reference implementations used only by the tests. Everything
// here is written with plain loops over the parameter storage and shares no
// code with the library's numerics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "laptool/dataset.hpp"
#include "laptool/labelspace.hpp"
#include "laptool/metrics.hpp"
#include "laptool/model.hpp"
#include "laptool/nn.hpp"
#include "laptool/postprocess.hpp"

namespace oracle {

template <typename T>
using Vec = std::vector<T>;

template <typename T>
T sigm(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Vec<T> to_vec(const laptool::nn::Vector& v) {
    Vec<T> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<T>(v(i));
    return out;
}

// out[j] = sum_i x[i] * m(i, j)
template <typename T>
Vec<T> row_times(const Vec<T>& x, const laptool::nn::Matrix& m) {
    Vec<T> out(static_cast<std::size_t>(m.cols()), T(0));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        T acc = 0;
        for (Eigen::Index i = 0; i < m.rows(); ++i) acc += x[static_cast<std::size_t>(i)] * static_cast<T>(m(i, j));
        out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
}

template <typename T>
Vec<T> gru_step(const laptool::nn::GruParams& p, const Vec<T>& v, const Vec<T>& h) {
    const auto n = static_cast<std::size_t>(p.hidden_dim());
    const auto zi = row_times(v, p.input_update), zh = row_times(h, p.hidden_update);
    const auto ri = row_times(v, p.input_reset), rh = row_times(h, p.hidden_reset);
    Vec<T> z(n), r(n), rh_prod(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        z[j] = sigm(zi[j] + zh[j] + static_cast<T>(p.bias_update(jj)));
        r[j] = sigm(ri[j] + rh[j] + static_cast<T>(p.bias_reset(jj)));
        rh_prod[j] = r[j] * h[j];
    }
    const auto ci = row_times(v, p.input_candidate), ch = row_times(rh_prod, p.hidden_candidate);
    Vec<T> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        const T cand = std::tanh(ci[j] + ch[j] + static_cast<T>(p.bias_candidate(static_cast<Eigen::Index>(j))));
        out[j] = (T(1) - z[j]) * h[j] + z[j] * cand;
    }
    return out;
}

template <typename T>
Vec<T> gru_fold(const laptool::nn::GruParams& p, const std::vector<Vec<T>>& seq) {
    Vec<T> h(static_cast<std::size_t>(p.hidden_dim()), T(0));
    for (const auto& v : seq) h = gru_step(p, v, h);
    return h;
}

template <typename T>
Vec<T> fc(const laptool::nn::FcParams& p, const Vec<T>& x) {
    auto out = row_times(x, p.weight);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += static_cast<T>(p.bias(static_cast<Eigen::Index>(j)));
    return out;
}

template <typename T>
T softmax_ce(const Vec<T>& logits, int target) {
    const T m = *std::max_element(logits.begin(), logits.end());
    T s = 0;
    for (const T z : logits) s += std::exp(z - m);
    return m + std::log(s) - logits[static_cast<std::size_t>(target)];
}

template <typename T>
T sigmoid_ce(const Vec<T>& logits, const laptool::LabelVector& y) {
    T s = 0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const T z = logits[k];
        const T softplus = std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
        s += softplus - (y.test(static_cast<int>(k)) ? z : T(0));
    }
    return s / static_cast<T>(logits.size());
}

struct JointLoss {
    long double ml = 0, mc = 0, total = 0;
};

inline JointLoss rcnn_loss(const laptool::RcnnModel& model, const laptool::SequenceWindow& w) {
    using LD = long double;
    std::vector<Vec<LD>> seq;
    for (const auto& f : w.features) seq.push_back(to_vec<LD>(f));
    const auto h = gru_fold(model.gru, seq);
    const auto z1 = fc(model.fc1, h);
    JointLoss out;
    if (model.head == laptool::Head::direct_lp) {
        out.mc = softmax_ce(z1, w.target);
        out.total = static_cast<LD>(model.beta) * out.mc;
        return out;
    }
    out.ml = sigmoid_ce(z1, w.target_bits);
    Vec<LD> p(z1.size());
    for (std::size_t k = 0; k < z1.size(); ++k) p[k] = sigm(z1[k]);
    out.mc = softmax_ce(fc(model.fc2, p), w.target);
    out.total = out.ml + static_cast<LD>(model.beta) * out.mc;
    return out;
}

inline long double birnn_loss(const laptool::BiRnnModel& model, const laptool::nn::Matrix& encoded,
                              std::span<const int> truth) {
    using LD = long double;
    const auto steps = static_cast<std::size_t>(encoded.rows());
    std::vector<Vec<LD>> rows(steps);
    for (std::size_t t = 0; t < steps; ++t) rows[t] = to_vec<LD>(encoded.row(static_cast<Eigen::Index>(t)));
    const auto n = static_cast<std::size_t>(model.hidden_dim());
    std::vector<Vec<LD>> fwd(steps), bwd(steps);
    Vec<LD> h(n, 0);
    for (std::size_t t = 0; t < steps; ++t) fwd[t] = h = gru_step(model.forward, rows[t], h);
    h.assign(n, 0);
    for (std::size_t t = steps; t-- > 0;) bwd[t] = h = gru_step(model.backward, rows[t], h);
    LD sum = 0;
    int scored = 0;
    for (std::size_t t = 0; t < steps && t < truth.size(); ++t) {
        if (truth[t] < 0) continue;
        Vec<LD> joined = fwd[t];
        joined.insert(joined.end(), bwd[t].begin(), bwd[t].end());
        sum += static_cast<LD>(model.weights[static_cast<std::size_t>(truth[t])]) *
               softmax_ce(fc(model.output, joined), truth[t]);
        ++scored;
    }
    return scored ? sum / scored : 0;
}

inline std::vector<std::vector<std::int64_t>> cooccurrence(std::span<const laptool::LabelVector> frames, int k) {
    std::vector<std::vector<std::int64_t>> c(static_cast<std::size_t>(k), std::vector<std::int64_t>(k, 0));
    for (const auto& f : frames) {
        const auto s = f.to_string();
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                if (s[a] == '1' && s[b] == '1') ++c[a][b];
    }
    return c;
}

struct Tally {
    std::int64_t total = 0, none = 0;
    std::vector<std::int64_t> per_tool;
    std::map<std::string, std::int64_t> per_set;
};

inline Tally tally(std::span<const laptool::FrameRecord> records, int k) {
    Tally t;
    t.per_tool.assign(static_cast<std::size_t>(k), 0);
    for (const auto& r : records) {
        const auto s = r.labels.to_string();
        ++t.total;
        if (s.find('1') == std::string::npos) ++t.none;
        for (int i = 0; i < k; ++i) t.per_tool[i] += s[i] == '1';
        ++t.per_set[s];
    }
    return t;
}

// Metric oracles work on the string form of the vectors.

inline double exact_match(std::span<const laptool::EvalRecord> rs) {
    int hit = 0;
    for (const auto& r : rs) hit += r.truth.to_string() == r.pred_bits.to_string();
    return double(hit) / double(rs.size());
}

struct Counts {
    std::vector<double> tp, pred, act;
};

inline Counts counts(std::span<const laptool::EvalRecord> rs) {
    const int k = rs.front().truth.size();
    Counts c{std::vector<double>(k), std::vector<double>(k), std::vector<double>(k)};
    for (const auto& r : rs) {
        const auto y = r.truth.to_string(), p = r.pred_bits.to_string();
        for (int i = 0; i < k; ++i) {
            if (y[i] == '1' && p[i] == '1') c.tp[i] += 1;
            if (p[i] == '1') c.pred[i] += 1;
            if (y[i] == '1') c.act[i] += 1;
        }
    }
    return c;
}

inline double div0(double a, double b) { return b == 0 ? 0.0 : a / b; }

inline double f1(double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); }

// AP as the mean, over positives, of precision at that positive's score
// threshold (every item scoring at least as high counts as retrieved).
// Equals the ranked-sum form when scores are distinct.
inline double ap_all_thresholds(std::span<const laptool::EvalRecord> rs, int tool) {
    double sum = 0;
    int positives = 0;
    for (const auto& a : rs) {
        if (!a.truth.test(tool)) continue;
        ++positives;
        const double s = (*a.scores)[tool];
        int retrieved = 0, relevant = 0;
        for (const auto& b : rs) {
            if ((*b.scores)[tool] >= s) {
                ++retrieved;
                relevant += b.truth.test(tool);
            }
        }
        sum += double(relevant) / double(retrieved);
    }
    return positives ? sum / positives : -1.0;
}

}  // namespace oracle
