#include "dclp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "dclp/error.hpp"

namespace dclp {

namespace {

double evaluate(const ScalarFn& fn) {
    Graph g;
    return fn(g).item();
}

// Entries with the largest analytic magnitude, ties by index. Small entries
// sit below the finite-difference resolution (about ulp(f) / 2h).
std::vector<std::size_t> probe_indices(const std::vector<double>& grad, std::size_t max_entries) {
    std::vector<std::size_t> idx(grad.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (max_entries == 0 || max_entries >= idx.size()) return idx;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
    idx.resize(max_entries);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::vector<std::string> GradCheckReport::failures() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (!e.passed) out.push_back(e.name);
    return out;
}

std::string GradCheckReport::to_text() const {
    std::ostringstream os;
    os.precision(3);
    for (const auto& e : entries) {
        os << (e.passed ? "PASS " : "FAIL ") << e.name << " checked=" << e.checked << " max_error=" << std::scientific
           << e.max_error << " (analytic " << e.worst_analytic << ", numeric " << e.worst_numeric << ")"
           << std::defaultfloat << "\n";
    }
    os << (passed ? "PASS" : "FAIL") << " overall max_error=" << std::scientific << max_error << "\n";
    return os.str();
}

GradCheckReport grad_check(const ScalarFn& fn, const std::vector<NamedTensor>& params, const GradCheckOptions& options) {
    const double first = evaluate(fn);
    const double second = evaluate(fn);
    if (std::memcmp(&first, &second, sizeof(double)) != 0) {
        throw DeterminismError("forward returned " + std::to_string(first) + " then " + std::to_string(second));
    }

    GradMap analytic;
    {
        Graph g;
        Var loss = fn(g);
        analytic = g.backward(loss);
    }

    GradCheckReport report;
    for (const auto& [name, tensor] : params) {
        GradCheckEntry entry;
        entry.name = name;
        auto it = analytic.find(tensor);
        const std::vector<double> zeros(tensor->size(), 0.0);
        const std::vector<double>& grad = it != analytic.end() ? it->second : zeros;
        for (std::size_t i : probe_indices(grad, options.max_entries)) {
            const double saved = tensor->data[i];
            tensor->data[i] = saved + options.h;
            const double plus = evaluate(fn);
            tensor->data[i] = saved - options.h;
            const double minus = evaluate(fn);
            tensor->data[i] = saved;
            const double numeric = (plus - minus) / (2.0 * options.h);
            const double a = grad[i];
            const double diff = std::abs(a - numeric);
            const double err = std::abs(a) < 1e-8 ? diff : diff / std::max(std::abs(a), std::abs(numeric));
            ++entry.checked;
            if (err > entry.max_error || std::isnan(err)) {
                entry.max_error = err;
                entry.worst_index = i;
                entry.worst_analytic = a;
                entry.worst_numeric = numeric;
            }
        }
        entry.passed = entry.max_error <= options.tol;
        report.passed = report.passed && entry.passed;
        report.max_error = std::max(report.max_error, entry.max_error);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace dclp
