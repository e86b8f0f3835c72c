#include "dclp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>

#include "dclp/error.hpp"

namespace dclp {

using json = nlohmann::json;

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
    ConfusionMatrix cm(rows.size());
    for (std::size_t g = 0; g < rows.size(); ++g) {
        if (rows[g].size() != rows.size()) throw ShapeError("confusion matrix must be square");
        for (std::size_t p = 0; p < rows.size(); ++p) cm.at(g, p) = rows[g][p];
    }
    return cm;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < k; ++c) t += at(c, c);
    return t;
}

std::uint64_t ConfusionMatrix::gold_count(std::size_t c) const {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p < k; ++p) n += at(c, p);
    return n;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t c) const {
    std::uint64_t n = 0;
    for (std::size_t g = 0; g < k; ++g) n += at(g, c);
    return n;
}

std::string ConfusionMatrix::to_csv() const {
    std::string out = "gold\\pred";
    for (std::size_t p = 0; p < k; ++p) out += "," + std::to_string(p);
    out += "\n";
    for (std::size_t g = 0; g < k; ++g) {
        out += std::to_string(g);
        for (std::size_t p = 0; p < k; ++p) out += "," + std::to_string(at(g, p));
        out += "\n";
    }
    return out;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> gold, std::span<const std::size_t> pred, std::size_t k) {
    if (gold.size() != pred.size()) {
        throw ShapeError(std::to_string(gold.size()) + " gold labels vs " + std::to_string(pred.size()) + " predictions");
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= k || pred[i] >= k) {
            throw ValidationError("label out of range at example " + std::to_string(i) + " (k=" + std::to_string(k) + ")");
        }
        ++cm.at(gold[i], pred[i]);
    }
    return cm;
}

double mcc(const ConfusionMatrix& cm) {
    const double s = static_cast<double>(cm.total());
    if (s == 0.0) throw DataError("MCC of an empty confusion matrix");
    const double c = static_cast<double>(cm.trace());
    double pt = 0.0, pp = 0.0, tt = 0.0;
    for (std::size_t k = 0; k < cm.k; ++k) {
        const double p = static_cast<double>(cm.predicted_count(k));
        const double t = static_cast<double>(cm.gold_count(k));
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    const double den = (s * s - pp) * (s * s - tt);
    if (den <= 0.0) return 0.0;
    return (c * s - pt) / std::sqrt(den);
}

ClassReport class_report(const ConfusionMatrix& cm) {
    ClassReport r;
    r.total = cm.total();
    if (cm.k == 0 || r.total == 0) throw DataError("empty confusion matrix");
    for (std::size_t c = 0; c < cm.k; ++c) {
        const double tp = static_cast<double>(cm.at(c, c));
        ClassMetrics m;
        m.support = cm.gold_count(c);
        m.precision = ratio(tp, static_cast<double>(cm.predicted_count(c)));
        m.recall = ratio(tp, static_cast<double>(m.support));
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        r.per_class.push_back(m);
    }
    // sum first, divide once: a perfect report averages to exactly 1
    const double k = static_cast<double>(cm.k);
    const double total = static_cast<double>(r.total);
    for (const auto& m : r.per_class) {
        r.macro.precision += m.precision;
        r.macro.recall += m.recall;
        r.macro.f1 += m.f1;
        const double w = static_cast<double>(m.support);
        r.weighted.precision += w * m.precision;
        r.weighted.recall += w * m.recall;
        r.weighted.f1 += w * m.f1;
    }
    for (double* v : {&r.macro.precision, &r.macro.recall, &r.macro.f1}) *v /= k;
    for (double* v : {&r.weighted.precision, &r.weighted.recall, &r.weighted.f1}) *v /= total;
    r.accuracy = static_cast<double>(cm.trace()) / total;
    r.mcc = mcc(cm);
    return r;
}

double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    if (positive.size() != n) throw ShapeError("AUC scores and labels differ in length");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (positive[order[t]]) {
                pos_rank_sum += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("AUC needs both positives and negatives");
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

AucResult roc_auc_ovr(std::span<const std::size_t> gold, const std::vector<std::vector<double>>& probs) {
    if (gold.size() != probs.size()) throw ShapeError("AUC gold/probability count mismatch");
    if (probs.empty()) throw DataError("AUC of an empty set");
    const std::size_t k = probs.front().size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != k) throw ShapeError("ragged probability rows");
        const double s = std::accumulate(probs[i].begin(), probs[i].end(), 0.0);
        if (std::abs(s - 1.0) > 1e-6) throw ValidationError("probability row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
    AucResult out;
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<double> scores(gold.size());
    std::vector<bool> positive(gold.size());
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            scores[i] = probs[i][c];
            positive[i] = gold[i] == c;
            n_pos += positive[i] ? 1 : 0;
        }
        if (n_pos == 0 || n_pos == gold.size()) {
            out.per_class.push_back(std::nullopt);
            out.skipped.push_back(c);
            continue;
        }
        const double auc = binary_auc(scores, positive);
        out.per_class.push_back(auc);
        sum += auc;
        ++used;
    }
    out.macro = used ? sum / static_cast<double>(used) : 0.0;
    return out;
}

std::string render_report(const ClassReport& report, const std::string& format) {
    if (format == "json") {
        json j;
        j["accuracy"] = report.accuracy;
        j["mcc"] = report.mcc;
        j["total"] = report.total;
        json classes = json::array();
        for (const auto& m : report.per_class) {
            classes.push_back({{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}});
        }
        j["classes"] = classes;
        j["macro"] = {{"precision", report.macro.precision}, {"recall", report.macro.recall}, {"f1", report.macro.f1}};
        j["weighted"] = {{"precision", report.weighted.precision}, {"recall", report.weighted.recall}, {"f1", report.weighted.f1}};
        if (report.auc) {
            json per = json::array();
            for (const auto& a : report.auc->per_class) per.push_back(a ? json(*a) : json(nullptr));
            j["auc"] = {{"macro", report.auc->macro}, {"per_class", per}, {"skipped", report.auc->skipped}};
        }
        return j.dump(2) + "\n";
    }
    if (format == "table") {
        std::string out;
        char line[160];
        std::snprintf(line, sizeof line, "%-14s %9s %9s %9s %9s\n", "class", "precision", "recall", "f1-score", "support");
        out += line;
        for (std::size_t c = 0; c < report.per_class.size(); ++c) {
            const auto& m = report.per_class[c];
            std::snprintf(line, sizeof line, "%-14zu %9.2f %9.2f %9.2f %9llu\n", c, m.precision, m.recall, m.f1,
                          static_cast<unsigned long long>(m.support));
            out += line;
        }
        const auto total = static_cast<unsigned long long>(report.total);
        std::snprintf(line, sizeof line, "%-14s %9.2f %9.2f %9.2f %9llu\n", "macro avg", report.macro.precision,
                      report.macro.recall, report.macro.f1, total);
        out += line;
        std::snprintf(line, sizeof line, "%-14s %9.2f %9.2f %9.2f %9llu\n", "weighted avg", report.weighted.precision,
                      report.weighted.recall, report.weighted.f1, total);
        out += line;
        std::snprintf(line, sizeof line, "%-14s %9.2f\n%-14s %9.2f\n", "accuracy", report.accuracy, "mcc", report.mcc);
        out += line;
        if (report.auc) {
            std::snprintf(line, sizeof line, "%-14s %9.2f\n", "roc auc", report.auc->macro);
            out += line;
        }
        return out;
    }
    throw UsageError("unknown report format '" + format + "' (expected json or table)");
}

ClassReport parse_report_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ClassReport r;
        r.accuracy = j.at("accuracy").get<double>();
        r.mcc = j.at("mcc").get<double>();
        r.total = j.at("total").get<std::uint64_t>();
        for (const auto& c : j.at("classes")) {
            r.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>(),
                                   c.at("support").get<std::uint64_t>()});
        }
        for (auto [key, target] : {std::pair{"macro", &r.macro}, std::pair{"weighted", &r.weighted}}) {
            const auto& a = j.at(key);
            *target = {a.at("precision").get<double>(), a.at("recall").get<double>(), a.at("f1").get<double>()};
        }
        if (j.contains("auc")) {
            AucResult auc;
            auc.macro = j["auc"].at("macro").get<double>();
            for (const auto& a : j["auc"].at("per_class")) {
                auc.per_class.push_back(a.is_null() ? std::nullopt : std::optional<double>(a.get<double>()));
            }
            auc.skipped = j["auc"].at("skipped").get<std::vector<std::size_t>>();
            r.auc = auc;
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
}

}  // namespace dclp
