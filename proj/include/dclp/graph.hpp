#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "dclp/tensor.hpp"

namespace dclp {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;

    Graph* graph() const noexcept { return graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    std::size_t size() const { return value().size(); }
    double item() const;

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Parameter tensor -> gradient of the loss with respect to it.
using GradMap = std::unordered_map<const Tensor*, std::vector<double>>;

/// Define-by-run tape. Nodes are appended in evaluation order, so the
/// insertion order is already topological; backward walks it in reverse.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf owning its value; never receives a gradient.
    Var constant(Tensor value);

    /// Leaf referring to an external tensor (no copy). Repeated calls with the
    /// same tensor return the same node. The tensor must outlive the graph.
    Var param(const Tensor& tensor);

    /// Appends an operation node. `backward` must add this node's upstream
    /// gradient contribution into the grads of `inputs`; it is dropped when no
    /// input needs a gradient.
    Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const;
    std::vector<double>& grad(std::size_t id);
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse-mode sweep from a scalar. Returns gradients for every
    /// requires_grad parameter bound to this graph; unreachable ones get zeros.
    GradMap backward(Var loss);

    /// Number of backward rules run by the last backward() call.
    std::size_t last_backward_visits() const noexcept { return last_visits_; }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        std::vector<double> grad;
        bool needs_grad = false;

        const Tensor& value() const { return external ? *external : owned; }
    };

    void check_owner(const Var& v) const;

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> param_index_;
    std::size_t last_visits_ = 0;
};

}  // namespace dclp
