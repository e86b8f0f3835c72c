#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dclp/config.hpp"
#include "dclp/grad_check.hpp"

namespace dclp {

/// First/second moment estimates keyed by parameter name.
struct AdamState {
    std::map<std::string, std::vector<double>> first;
    std::map<std::string, std::vector<double>> second;
    std::uint64_t step = 0;
};

/// Bias-corrected Adam update using each tensor's accumulated `grad`.
/// Moments are created on first use; a size mismatch with existing state or
/// a missing gradient throws StateError.
void adam_step(const std::vector<NamedTensor>& params, AdamState& state, const AdamHyper& hyper);

}  // namespace dclp
