#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dclp/graph.hpp"

namespace dclp {

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

struct GradCheckOptions {
    double h = 1e-6;
    double tol = 1e-5;
    /// Entries probed per tensor, largest analytic magnitude first; 0 probes all.
    std::size_t max_entries = 0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool passed = true;
    double max_error = 0.0;

    std::vector<std::string> failures() const;
    std::string to_text() const;
};

/// Builds a scalar on the given graph from the parameters it closes over.
using ScalarFn = std::function<Var(Graph&)>;

/// Compares backward() against central differences (f(p+h) - f(p-h)) / 2h.
/// The per-entry error is relative, |a - n| / max(|a|, |n|), falling back to
/// the absolute difference when |a| < 1e-8. Throws DeterminismError if two
/// evaluations of `fn` at the same point differ.
GradCheckReport grad_check(const ScalarFn& fn, const std::vector<NamedTensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace dclp
