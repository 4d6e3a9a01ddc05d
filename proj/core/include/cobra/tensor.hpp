#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cobra/errors.hpp"
#include "cobra/rng.hpp"

namespace cobra {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. Children hold shared_ptrs to their
// inputs, so the recorded tape is the DAG reachable from a loss node and is
// freed when the outputs go out of scope. Data is float32; reductions inside
// ops accumulate in double.
struct Node {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // sized lazily, same length as data
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    // Propagates this node's grad into parents' grads.
    std::function<void(Node&)> backward_fn;

    int64_t size() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

// Value-semantic handle over a graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, Rng& rng, float stddev,
                        bool requires_grad = false);
    static Tensor scalar(float value);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int64_t size() const { return node_->size(); }
    // 2D accessors; every tensor in this project is scalar (1x1) or 2D.
    int rows() const { return node_->shape.at(0); }
    int cols() const { return node_->shape.at(1); }

    std::vector<float>& data() { return node_->data; }
    const std::vector<float>& data() const { return node_->data; }
    const std::vector<float>& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->data.size(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    float item() const;
    float at(int r, int c) const { return node_->data[static_cast<size_t>(r) * cols() + c]; }

    void zero_grad() { node_->grad.clear(); }
    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Reverse pass from a scalar loss. Visits each reachable node exactly once in
// reverse topological order. Throws ContractError if loss is not scalar.
void backward(const Tensor& loss);

int64_t shape_size(const std::vector<int>& shape);

}  // namespace cobra
