#include "dclp/adam.hpp"

#include <cmath>

#include "dclp/error.hpp"

namespace dclp {

void adam_step(const std::vector<NamedTensor>& params, AdamState& state, const AdamHyper& hyper) {
    hyper.validate();
    for (const auto& [name, tensor] : params) {
        if (tensor->grad.size() != tensor->size()) throw StateError("no gradient for '" + name + "'");
        for (auto* moments : {&state.first, &state.second}) {
            auto [it, inserted] = moments->try_emplace(name, tensor->size(), 0.0);
            if (it->second.size() != tensor->size()) {
                throw StateError("moment for '" + name + "' has " + std::to_string(it->second.size()) + " entries, parameter has " +
                                 std::to_string(tensor->size()));
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(hyper.beta1, t);
    const double correction2 = 1.0 - std::pow(hyper.beta2, t);
    for (const auto& [name, tensor] : params) {
        auto& m = state.first[name];
        auto& v = state.second[name];
        for (std::size_t i = 0; i < tensor->size(); ++i) {
            const double g = tensor->grad[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            tensor->data[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

}  // namespace dclp
