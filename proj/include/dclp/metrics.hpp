#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dclp {

/// k x k counts, rows = gold label, columns = predicted label.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::uint64_t> counts;

    explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}
    static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

    std::uint64_t& at(std::size_t gold, std::size_t pred) { return counts[gold * k + pred]; }
    std::uint64_t at(std::size_t gold, std::size_t pred) const { return counts[gold * k + pred]; }
    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t gold_count(std::size_t c) const;       // row sum
    std::uint64_t predicted_count(std::size_t c) const;  // column sum

    /// Header row of predicted labels, then one row per gold label.
    std::string to_csv() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> gold, std::span<const std::size_t> pred, std::size_t k);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct AveragedMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct AucResult {
    double macro = 0.0;
    std::vector<std::optional<double>> per_class;  // nullopt when the class was skipped
    std::vector<std::size_t> skipped;               // classes without positives or negatives
};

struct ClassReport {
    std::vector<ClassMetrics> per_class;
    AveragedMetrics macro;
    AveragedMetrics weighted;
    double accuracy = 0.0;
    double mcc = 0.0;
    std::uint64_t total = 0;
    std::optional<AucResult> auc;
};

/// Per-class P/R/F1 with 0/0 taken as 0, macro and support-weighted
/// averages, accuracy and MCC. Throws DataError on an empty matrix.
ClassReport class_report(const ConfusionMatrix& cm);

/// Multiclass Matthews correlation; 0 when the denominator vanishes.
double mcc(const ConfusionMatrix& cm);

/// Mann-Whitney AUC of `scores` for the positives, ties counted half.
double binary_auc(std::span<const double> scores, const std::vector<bool>& positive);

/// One-vs-rest AUC per class on probability rows; macro over classes that
/// have both positives and negatives.
AucResult roc_auc_ovr(std::span<const std::size_t> gold, const std::vector<std::vector<double>>& probs);

/// "json" (full precision) or "table" (two decimals). Throws UsageError otherwise.
std::string render_report(const ClassReport& report, const std::string& format);
ClassReport parse_report_json(const std::string& text);

}  // namespace dclp
