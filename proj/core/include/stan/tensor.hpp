#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stan/errors.hpp"
#include "stan/rng.hpp"

namespace stan {

using Shape = std::vector<int>;

int numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the computation graph. Values are immutable after the op that
// produced them; grad is the only mutable field (accumulated during backward).
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // sized lazily, same length as values
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Propagates this node's grad into its parents' grads.
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double v);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int size() const { return static_cast<int>(node_->values.size()); }
    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& mutable_values() { return node_->values; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

    // Reverse-mode pass from a scalar root; fills grad on every
    // requires_grad node reachable through the graph.
    void backward() const;

    // Copy of the values with no graph attached.
    Tensor detach() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Suppresses graph recording for its lifetime; ops built under an active
// guard behave as if every input were detached. Used for inference passes.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- primitive operations (all differentiable unless noted) ----

// Elementwise; b may broadcast when its shape is a trailing suffix of a's.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Batched matrix product. b is either rank 2 (shared across the batch) or has
// leading dims equal to a's.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor concat_axis0(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x); // exact x * Phi(x)
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

Tensor sum(const Tensor& x);       // -> scalar
Tensor mean_axis0(const Tensor& x); // drop leading axis

// out[t] = x[t + offset], zero outside [0, T)
Tensor temporal_shift(const Tensor& x, int offset);

// cls [D] duplicated as token 0 of every frame of patches [T, L, D] -> [T, L+1, D]
Tensor prepend_cls(const Tensor& cls, const Tensor& patches);

// patches [T, L, D] + pos_t [T, D] (per frame) + pos_s [L, D] (per position)
Tensor add_positions(const Tensor& patches, const Tensor& pos_t, const Tensor& pos_s);

Tensor rows_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor row_normalize(const Tensor& x); // unit L2 rows; throws on zero-norm row
Tensor stack_rows(const std::vector<Tensor>& rows);

// Equal-shaped tensors stacked along a new leading axis.
Tensor stack0(const std::vector<Tensor>& xs);

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels);

// x @ w + bias
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

} // namespace stan
