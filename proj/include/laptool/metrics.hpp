#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laptool/labelspace.hpp"

namespace laptool {

struct EvalRecord {
    LabelVector truth;
    LabelVector pred_bits;
    std::optional<std::vector<double>> scores;  // per-tool confidence, needed for AP
};

/// Fraction of records whose predicted vector equals the truth bit-for-bit.
/// Throws DomainError on an empty corpus.
double exact_match_accuracy(std::span<const EvalRecord> records);

/// A ratio whose denominator may be zero. 0/0 is reported as 0 with `undefined` set.
struct Ratio {
    double value = 0.0;
    bool undefined = false;
};

Ratio safe_ratio(double numerator, double denominator);

struct ToolCounts {
    std::vector<long long> correct;    // predicted and present
    std::vector<long long> predicted;  // predicted present
    std::vector<long long> actual;     // present in truth
};

ToolCounts tool_counts(std::span<const EvalRecord> records);

struct PerClassPR {
    std::vector<Ratio> precision;
    std::vector<Ratio> recall;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
};

PerClassPR pr_per_class(std::span<const EvalRecord> records);

struct OverallPR {
    Ratio precision;
    Ratio recall;
};

OverallPR pr_overall(std::span<const EvalRecord> records);

/// 2PR/(P+R), 0 when P+R = 0.
double harmonic_f1(double precision, double recall);

struct F1Scores {
    double from_per_class = 0.0;  // harmonic mean of the per-class means (conventional macro-F1)
    double from_overall = 0.0;    // harmonic mean of pooled P/R (conventional micro-F1)

    /// The same two values under swapped micro/macro names, as some published tables use.
    double swapped_micro() const { return from_per_class; }
    double swapped_macro() const { return from_overall; }
};

F1Scores f1_scores(std::span<const EvalRecord> records);

struct AveragePrecision {
    std::vector<std::optional<double>> per_tool;  // empty when the tool has no positives
    double mean = 0.0;                            // over tools with positives
    bool excluded_tools = false;
};

/// Non-interpolated AP per tool: rank by score descending (ties keep record
/// order), AP = sum_n (R_n - R_{n-1}) P_n. Throws DomainError if any record
/// lacks scores.
AveragePrecision mean_average_precision(std::span<const EvalRecord> records);

struct MetricsReport {
    std::vector<std::string> tool_names;
    std::size_t frames = 0;
    double exact_match = 0.0;
    PerClassPR per_class;
    std::vector<double> per_tool_f1;
    OverallPR overall;
    F1Scores f1;
    std::optional<AveragePrecision> ap;

    /// `key=value` lines, stable order.
    void write_key_values(std::ostream& out) const;
    /// Per-tool P/R/F1(/AP) table plus the aggregate row.
    void write_table(std::ostream& out) const;
};

MetricsReport evaluate(std::span<const EvalRecord> records, const ToolVocabulary& tools);

}  // namespace laptool
