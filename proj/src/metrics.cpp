#include "laptool/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "laptool/error.hpp"

namespace laptool {

namespace {

int width_of(std::span<const EvalRecord> records) {
    if (records.empty()) throw DomainError("metrics: empty corpus");
    const int k = records.front().truth.size();
    for (const auto& r : records) {
        if (r.truth.size() != k || r.pred_bits.size() != k) throw DomainError("metrics: inconsistent label width");
    }
    return k;
}

std::string fixed(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

}  // namespace

double exact_match_accuracy(std::span<const EvalRecord> records) {
    width_of(records);
    const auto hits = std::count_if(records.begin(), records.end(),
                                    [](const EvalRecord& r) { return r.pred_bits == r.truth; });
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

Ratio safe_ratio(double numerator, double denominator) {
    if (denominator == 0.0) return {0.0, true};
    return {numerator / denominator, false};
}

ToolCounts tool_counts(std::span<const EvalRecord> records) {
    const int k = width_of(records);
    ToolCounts c;
    c.correct.assign(static_cast<std::size_t>(k), 0);
    c.predicted.assign(static_cast<std::size_t>(k), 0);
    c.actual.assign(static_cast<std::size_t>(k), 0);
    for (const auto& r : records) {
        const auto truth = r.truth.value();
        const auto pred = r.pred_bits.value();
        for (int t = 0; t < k; ++t) {
            const bool y = (truth >> t) & 1u;
            const bool p = (pred >> t) & 1u;
            const auto i = static_cast<std::size_t>(t);
            c.actual[i] += y;
            c.predicted[i] += p;
            c.correct[i] += y && p;
        }
    }
    return c;
}

PerClassPR pr_per_class(std::span<const EvalRecord> records) {
    const auto c = tool_counts(records);
    PerClassPR pr;
    const auto k = c.correct.size();
    for (std::size_t t = 0; t < k; ++t) {
        pr.precision.push_back(safe_ratio(static_cast<double>(c.correct[t]), static_cast<double>(c.predicted[t])));
        pr.recall.push_back(safe_ratio(static_cast<double>(c.correct[t]), static_cast<double>(c.actual[t])));
        pr.mean_precision += pr.precision.back().value;
        pr.mean_recall += pr.recall.back().value;
    }
    pr.mean_precision /= static_cast<double>(k);
    pr.mean_recall /= static_cast<double>(k);
    return pr;
}

OverallPR pr_overall(std::span<const EvalRecord> records) {
    const auto c = tool_counts(records);
    const auto sum = [](const std::vector<long long>& v) {
        return static_cast<double>(std::accumulate(v.begin(), v.end(), 0LL));
    };
    return {safe_ratio(sum(c.correct), sum(c.predicted)), safe_ratio(sum(c.correct), sum(c.actual))};
}

double harmonic_f1(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

F1Scores f1_scores(std::span<const EvalRecord> records) {
    const auto pc = pr_per_class(records);
    const auto ov = pr_overall(records);
    return {harmonic_f1(pc.mean_precision, pc.mean_recall), harmonic_f1(ov.precision.value, ov.recall.value)};
}

AveragePrecision mean_average_precision(std::span<const EvalRecord> records) {
    const int k = width_of(records);
    for (const auto& r : records) {
        if (!r.scores) throw DomainError("mean_average_precision: record without scores");
        if (static_cast<int>(r.scores->size()) != k) throw DomainError("mean_average_precision: score width mismatch");
    }
    AveragePrecision ap;
    std::vector<std::size_t> order(records.size());
    int with_positives = 0;
    for (int t = 0; t < k; ++t) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto ti = static_cast<std::size_t>(t);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return (*records[a].scores)[ti] > (*records[b].scores)[ti];
        });
        long long positives = 0;
        for (const auto& r : records) positives += r.truth.test(t) ? 1 : 0;
        if (positives == 0) {
            ap.per_tool.emplace_back();
            ap.excluded_tools = true;
            continue;
        }
        double sum = 0.0;
        long long hits = 0;
        for (std::size_t n = 0; n < order.size(); ++n) {
            if (!records[order[n]].truth.test(t)) continue;
            ++hits;
            // recall steps by 1/positives exactly at each hit
            sum += static_cast<double>(hits) / static_cast<double>(n + 1);
        }
        const double value = sum / static_cast<double>(positives);
        ap.per_tool.emplace_back(value);
        ap.mean += value;
        ++with_positives;
    }
    ap.mean = with_positives > 0 ? ap.mean / with_positives : 0.0;
    return ap;
}

MetricsReport evaluate(std::span<const EvalRecord> records, const ToolVocabulary& tools) {
    const int k = width_of(records);
    if (k != tools.size()) throw DomainError("evaluate: vocabulary size does not match label width");
    MetricsReport report;
    report.tool_names = tools.names();
    report.frames = records.size();
    report.exact_match = exact_match_accuracy(records);
    report.per_class = pr_per_class(records);
    for (int t = 0; t < k; ++t) {
        const auto i = static_cast<std::size_t>(t);
        report.per_tool_f1.push_back(
            harmonic_f1(report.per_class.precision[i].value, report.per_class.recall[i].value));
    }
    report.overall = pr_overall(records);
    report.f1 = f1_scores(records);
    const bool have_scores =
        std::all_of(records.begin(), records.end(), [](const EvalRecord& r) { return r.scores.has_value(); });
    if (have_scores) report.ap = mean_average_precision(records);
    return report;
}

void MetricsReport::write_key_values(std::ostream& out) const {
    out << "frames=" << frames << '\n';
    out << "exact_match=" << fixed(exact_match) << '\n';
    out << "mean_precision_per_class=" << fixed(per_class.mean_precision) << '\n';
    out << "mean_recall_per_class=" << fixed(per_class.mean_recall) << '\n';
    out << "precision_overall=" << fixed(overall.precision.value) << '\n';
    out << "recall_overall=" << fixed(overall.recall.value) << '\n';
    out << "f1_from_per_class=" << fixed(f1.from_per_class) << '\n';
    out << "f1_from_overall=" << fixed(f1.from_overall) << '\n';
    out << "f1_macro=" << fixed(f1.from_per_class) << '\n';
    out << "f1_micro=" << fixed(f1.from_overall) << '\n';
    out << "f1_micro_swapped=" << fixed(f1.swapped_micro()) << '\n';
    out << "f1_macro_swapped=" << fixed(f1.swapped_macro()) << '\n';
    if (ap) out << "mAP=" << fixed(ap->mean) << '\n';
    for (std::size_t t = 0; t < tool_names.size(); ++t) {
        const auto& name = tool_names[t];
        out << "tool." << name << ".precision=" << fixed(per_class.precision[t].value) << '\n';
        out << "tool." << name << ".recall=" << fixed(per_class.recall[t].value) << '\n';
        out << "tool." << name << ".f1=" << fixed(per_tool_f1[t]) << '\n';
        if (per_class.precision[t].undefined) out << "tool." << name << ".precision_undefined=1\n";
        if (per_class.recall[t].undefined) out << "tool." << name << ".recall_undefined=1\n";
        if (ap && ap->per_tool[t]) out << "tool." << name << ".ap=" << fixed(*ap->per_tool[t]) << '\n';
    }
}

void MetricsReport::write_table(std::ostream& out) const {
    const auto pct = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << 100.0 * v;
        return s.str();
    };
    out << std::left << std::setw(14) << "Tool" << std::right << std::setw(10) << "P(%)" << std::setw(10) << "R(%)"
        << std::setw(10) << "F1(%)";
    if (ap) out << std::setw(10) << "AP(%)";
    out << '\n';
    for (std::size_t t = 0; t < tool_names.size(); ++t) {
        out << std::left << std::setw(14) << tool_names[t] << std::right << std::setw(10)
            << pct(per_class.precision[t].value) << std::setw(10) << pct(per_class.recall[t].value) << std::setw(10)
            << pct(per_tool_f1[t]);
        if (ap) out << std::setw(10) << (ap->per_tool[t] ? pct(*ap->per_tool[t]) : std::string("-"));
        out << '\n';
    }
    out << std::left << std::setw(14) << "Mean" << std::right << std::setw(10) << pct(per_class.mean_precision)
        << std::setw(10) << pct(per_class.mean_recall) << std::setw(10) << pct(f1.from_per_class);
    if (ap) out << std::setw(10) << pct(ap->mean);
    out << "\n\n";
    out << "Exact match " << pct(exact_match) << "%  F1 per-class " << pct(f1.from_per_class) << "%  F1 overall "
        << pct(f1.from_overall) << "%  (frames " << frames << ")\n";
}

}  // namespace laptool
