#include "dclp/graph.hpp"

#include "dclp/error.hpp"

namespace dclp {

const Tensor& Var::value() const {
    if (!graph_) throw ContractError("use of an unbound Var");
    return graph_->value(id_);
}

double Var::item() const {
    const Tensor& t = value();
    if (t.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(t.shape));
    return t.data[0];
}

Var Graph::constant(Tensor value) {
    Node node;
    node.owned = std::move(value);
    node.owned.requires_grad = false;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Tensor& tensor) {
    if (auto it = param_index_.find(&tensor); it != param_index_.end()) return Var(this, it->second);
    Node node;
    node.external = &tensor;
    node.needs_grad = tensor.requires_grad;
    nodes_.push_back(std::move(node));
    param_index_.emplace(&tensor, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

void Graph::check_owner(const Var& v) const {
    if (v.graph() != this) throw ContractError("operand belongs to a different graph");
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    Node node;
    node.owned = std::move(value);
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        check_owner(in);
        node.inputs.push_back(in.id());
        node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const { return nodes_.at(id).value(); }

std::vector<double>& Graph::grad(std::size_t id) {
    Node& node = nodes_.at(id);
    if (node.grad.empty()) node.grad.assign(node.value().size(), 0.0);
    return node.grad;
}

GradMap Graph::backward(Var loss) {
    check_owner(loss);
    if (value(loss.id()).size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_string(value(loss.id()).shape));
    }
    for (Node& node : nodes_) node.grad.clear();
    grad(loss.id())[0] = 1.0;

    last_visits_ = 0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.backward || node.grad.empty()) continue;
        node.backward(*this, i);
        ++last_visits_;
    }

    GradMap grads;
    for (const auto& [tensor, id] : param_index_) {
        if (!tensor->requires_grad) continue;
        Node& node = nodes_[id];
        if (node.grad.empty()) node.grad.assign(tensor->size(), 0.0);
        grads.emplace(tensor, node.grad);
    }
    return grads;
}

}  // namespace dclp
