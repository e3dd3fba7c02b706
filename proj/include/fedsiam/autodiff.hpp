#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedsiam::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct Node;

// Handle to a node of a define-by-run computation graph. Copies share the node;
// use clone() for an independent leaf holding the same values.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t dim(std::size_t i) const { return shape().at(i); }

    std::span<const double> data() const;
    // Writable only for leaves; mutating an interior node would desynchronize its graph.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool is_leaf() const;

    // Empty span until a backward pass has written a gradient.
    std::span<const double> grad() const;
    bool has_grad() const;
    void zero_grad();

    // Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls.
    void backward() const;

    // Fresh leaf with copied values and no history.
    Tensor clone(bool requires_grad) const;

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    static Tensor wrap(std::shared_ptr<Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents that require grad.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

enum class Mode { Train, Eval };

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;

    explicit BatchNormStats(std::size_t width = 0) : running_mean(width, 0.0), running_var(width, 1.0) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m×n] + bias[n] broadcast over rows
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Train mode normalizes with batch statistics and folds them into `stats`
// (running = 0.9 * running + 0.1 * batch, unbiased batch variance); eval mode uses `stats`.
Tensor batch_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, Mode mode, BatchNormStats& stats);
// Eval-only overload for callers holding const statistics.
Tensor batch_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats);

// Mean over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Per-row cosine similarity, shape [b].
Tensor rowwise_cosine(const Tensor& a, const Tensor& b);
// Mean over rows of the cosine similarity.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// sum((a - target)^2) with target a constant.
Tensor squared_distance(const Tensor& a, std::span<const double> target);

// Same values, no history: a constant for every gradient computation downstream.
Tensor detach(const Tensor& a);

struct SgdConfig {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-5;
};

struct SgdState {
    SgdConfig config;
    std::vector<std::vector<double>> velocity;  // zero-initialized on the first step

    explicit SgdState(SgdConfig cfg = {}) : config(cfg) {}
};

// g' = g + wd * w; v = momentum * v + g'; w = w - lr * v.
// Parameters without a gradient are treated as having a zero gradient.
// Throws NumericError, leaving every parameter untouched, if any gradient is non-finite.
void sgd_step(std::span<const Tensor> params, SgdState& state);

}  // namespace fedsiam::ad
