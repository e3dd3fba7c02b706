#include "fedsiam/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fedsiam/error.hpp"

namespace fedsiam::ad {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                             " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

// Interior node; it requires grad iff some input does.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs, const char* op) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    for (const Tensor& in : inputs) {
        if (in.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
        for (const Tensor& in : inputs) node->parents.push_back(in.node_ptr());
    }
    return Tensor::wrap(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return wrap(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) { return wrap(make_leaf({1}, {value}, false)); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
    if (!is_leaf()) throw Error(std::string("cannot write into the output of ") + node_->op);
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
    if (!is_leaf()) throw Error("requires_grad can only be set on leaves");
    node_->requires_grad = value;
}

bool Tensor::is_leaf() const { return node_->parents.empty() && !node_->backward_fn; }

std::span<const double> Tensor::grad() const { return node_->grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::clone(bool requires_grad) const { return wrap(make_leaf(shape(), node_->data, requires_grad)); }

void Tensor::backward() const {
    if (numel() != 1) throw DimensionError("backward() needs a scalar, got " + shape_string(shape()));
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order over nodes requiring grad.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (n.backward_fn && !n.grad.empty()) n.backward_fn(n);
    }
    // Interior gradients are scratch space; dropping them keeps a second backward() exact.
    for (Node* n : order) {
        if (n->backward_fn) n->grad.clear();
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " · " +
                             shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    Tensor result = make_result({m, n}, std::move(out), {a, b}, "matmul");
    if (result.requires_grad()) {
        result.node().backward_fn = [m, k, n](Node& self) {
            Node& na = *self.parents[0];
            Node& nb = *self.parents[1];
            const double* G = self.grad.data();
            if (na.requires_grad) {
                auto& ga = na.ensure_grad();
                const double* B = nb.data.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (nb.requires_grad) {
                auto& gb = nb.ensure_grad();
                const double* A = na.data.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = A[i * k + p];
                        if (av == 0.0) continue;
                        double* grow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) grow[j] += av * G[i * n + j];
                    }
                }
            }
        };
    }
    return result;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_matrix(a, "add_bias");
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (bias.numel() != n) {
        throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                             shape_string(a.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.at(j);
    Tensor result = make_result(a.shape(), std::move(out), {a, bias}, "add_bias");
    if (result.requires_grad()) {
        result.node().backward_fn = [m, n](Node& self) {
            Node& na = *self.parents[0];
            Node& nb = *self.parents[1];
            if (na.requires_grad) {
                auto& g = na.ensure_grad();
                for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
            }
            if (nb.requires_grad) {
                auto& g = nb.ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
            }
        };
    }
    return result;
}

namespace {

Tensor add_scaled(const Tensor& a, const Tensor& b, double sign, const char* op) {
    require_same_shape(a, b, op);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + sign * b.at(i);
    Tensor result = make_result(a.shape(), std::move(out), {a, b}, op);
    if (result.requires_grad()) {
        result.node().backward_fn = [sign](Node& self) {
            for (int side = 0; side < 2; ++side) {
                Node& in = *self.parents[side];
                if (!in.requires_grad) continue;
                auto& g = in.ensure_grad();
                const double s = side == 0 ? 1.0 : sign;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
            }
        };
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_scaled(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled(a, b, -1.0, "sub"); }

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.at(i);
    Tensor result = make_result(a.shape(), std::move(out), {a}, "scale");
    if (result.requires_grad()) {
        result.node().backward_fn = [factor](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
        };
    }
    return result;
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
    Tensor result = make_result(a.shape(), std::move(out), {a}, "relu");
    if (result.requires_grad()) {
        result.node().backward_fn = [](Node& self) {
            Node& in = *self.parents[0];
            auto& g = in.ensure_grad();
            // Subgradient 0 at the kink.
            for (std::size_t i = 0; i < g.size(); ++i)
                if (in.data[i] > 0.0) g[i] += self.grad[i];
        };
    }
    return result;
}

Tensor softplus(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.at(i);
        out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
    Tensor result = make_result(a.shape(), std::move(out), {a}, "softplus");
    if (result.requires_grad()) {
        result.node().backward_fn = [](Node& self) {
            Node& in = *self.parents[0];
            auto& g = in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = in.data[i];
                const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                g[i] += sig * self.grad[i];
            }
        };
    }
    return result;
}

namespace {

Tensor reduce_sum(const Tensor& a, double factor, const char* op) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor result = make_result({1}, {factor * acc}, {a}, op);
    if (result.requires_grad()) {
        result.node().backward_fn = [factor](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            const double up = factor * self.grad[0];
            for (double& v : g) v += up;
        };
    }
    return result;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_sum(a, 1.0, "sum"); }
Tensor mean(const Tensor& a) { return reduce_sum(a, 1.0 / static_cast<double>(a.numel()), "mean"); }

namespace {

void check_batch_norm_params(const Tensor& a, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats) {
    require_matrix(a, "batch_norm");
    const std::size_t d = a.dim(1);
    if (gamma.numel() != d || beta.numel() != d || stats.running_mean.size() != d || stats.running_var.size() != d) {
        throw DimensionError("batch_norm: parameters do not match input " + shape_string(a.shape()));
    }
}

// y = gamma * (x - mean) * inv_std + beta with fixed per-column mean/inv_std.
// In train mode the statistics are functions of the batch and the backward rule accounts for that.
Tensor normalize(const Tensor& a, const Tensor& gamma, const Tensor& beta, std::vector<double> mu,
                 std::vector<double> inv_std, bool batch_stats) {
    const std::size_t b = a.dim(0), d = a.dim(1);
    std::vector<double> xhat(b * d), out(b * d);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (a.at(i * d + j) - mu[j]) * inv_std[j];
            out[i * d + j] = gamma.at(j) * xhat[i * d + j] + beta.at(j);
        }
    }
    Tensor result = make_result(a.shape(), std::move(out), {a, gamma, beta}, "batch_norm");
    if (result.requires_grad()) {
        result.node().backward_fn = [b, d, xhat = std::move(xhat), inv_std = std::move(inv_std),
                                     batch_stats](Node& self) {
            Node& na = *self.parents[0];
            Node& ng = *self.parents[1];
            Node& nbeta = *self.parents[2];
            const auto& G = self.grad;
            std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    sum_g[j] += G[i * d + j];
                    sum_gx[j] += G[i * d + j] * xhat[i * d + j];
                }
            }
            if (ng.requires_grad) {
                auto& g = ng.ensure_grad();
                for (std::size_t j = 0; j < d; ++j) g[j] += sum_gx[j];
            }
            if (nbeta.requires_grad) {
                auto& g = nbeta.ensure_grad();
                for (std::size_t j = 0; j < d; ++j) g[j] += sum_g[j];
            }
            if (na.requires_grad) {
                auto& g = na.ensure_grad();
                const double inv_b = 1.0 / static_cast<double>(b);
                for (std::size_t i = 0; i < b; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const double scale_j = ng.data[j] * inv_std[j];
                        const double gij = G[i * d + j];
                        if (batch_stats) {
                            g[i * d + j] += scale_j * (gij - inv_b * sum_g[j] - xhat[i * d + j] * inv_b * sum_gx[j]);
                        } else {
                            g[i * d + j] += scale_j * gij;
                        }
                    }
                }
            }
        };
    }
    return result;
}

}  // namespace

Tensor batch_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, Mode mode, BatchNormStats& stats) {
    if (mode == Mode::Eval) return batch_norm(a, gamma, beta, static_cast<const BatchNormStats&>(stats));
    check_batch_norm_params(a, gamma, beta, stats);
    const std::size_t b = a.dim(0), d = a.dim(1);
    if (b < 2) {
        throw DegenerateError("batch_norm in train mode needs at least 2 rows, got " + std::to_string(b));
    }
    std::vector<double> mu(d, 0.0), var(d, 0.0), inv_std(d);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += a.at(i * d + j);
    for (double& m : mu) m /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = a.at(i * d + j) - mu[j];
            var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double biased = var[j] / static_cast<double>(b);
        inv_std[j] = 1.0 / std::sqrt(biased + kBatchNormEpsilon);
        const double unbiased = var[j] / static_cast<double>(b - 1);
        stats.running_mean[j] = kBatchNormMomentum * stats.running_mean[j] + (1.0 - kBatchNormMomentum) * mu[j];
        stats.running_var[j] = kBatchNormMomentum * stats.running_var[j] + (1.0 - kBatchNormMomentum) * unbiased;
    }
    return normalize(a, gamma, beta, std::move(mu), std::move(inv_std), true);
}

Tensor batch_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats) {
    check_batch_norm_params(a, gamma, beta, stats);
    const std::size_t d = a.dim(1);
    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + kBatchNormEpsilon);
    return normalize(a, gamma, beta, stats.running_mean, std::move(inv_std), false);
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_matrix(logits, "softmax_cross_entropy");
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    if (labels.size() != b) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                             shape_string(logits.shape()));
    }
    std::vector<double> probs(b * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw LabelError("label " + std::to_string(y) + " at index " + std::to_string(i) + " is outside [0, " +
                             std::to_string(c) + ")");
        }
        const double* row = logits.data().data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double log_z = std::log(z);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx - log_z);
        loss += log_z - (row[y] - mx);
    }
    loss /= static_cast<double>(b);
    Tensor result = make_result({1}, {loss}, {logits}, "softmax_cross_entropy");
    if (result.requires_grad()) {
        std::vector<int> ys(labels.begin(), labels.end());
        result.node().backward_fn = [b, c, probs = std::move(probs), ys = std::move(ys)](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            const double up = self.grad[0] / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    const double onehot = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
                    g[i * c + j] += up * (probs[i * c + j] - onehot);
                }
            }
        };
    }
    return result;
}

Tensor rowwise_cosine(const Tensor& a, const Tensor& b) {
    require_matrix(a, "cosine_similarity");
    require_same_shape(a, b, "cosine_similarity");
    const std::size_t rows = a.dim(0), d = a.dim(1);
    std::vector<double> out(rows), norm_a(rows), norm_b(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0, aa = 0.0, bb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double x = a.at(i * d + j), y = b.at(i * d + j);
            dot += x * y;
            aa += x * x;
            bb += y * y;
        }
        norm_a[i] = std::sqrt(aa);
        norm_b[i] = std::sqrt(bb);
        if (norm_a[i] <= 1e-12 || norm_b[i] <= 1e-12) {
            throw DegenerateError("cosine_similarity: row " + std::to_string(i) + " has zero norm");
        }
        out[i] = dot / (norm_a[i] * norm_b[i]);
    }
    Tensor result = make_result({rows}, out, {a, b}, "rowwise_cosine");
    if (result.requires_grad()) {
        result.node().backward_fn = [rows, d, cos = std::move(out), norm_a = std::move(norm_a),
                                     norm_b = std::move(norm_b)](Node& self) {
            Node& na = *self.parents[0];
            Node& nb = *self.parents[1];
            // d cos / d a = b / (|a||b|) - cos * a / |a|^2, and symmetrically for b.
            for (std::size_t i = 0; i < rows; ++i) {
                const double up = self.grad[i];
                const double inv_ab = 1.0 / (norm_a[i] * norm_b[i]);
                if (na.requires_grad) {
                    auto& g = na.ensure_grad();
                    const double inv_aa = 1.0 / (norm_a[i] * norm_a[i]);
                    for (std::size_t j = 0; j < d; ++j) {
                        const std::size_t k = i * d + j;
                        g[k] += up * (nb.data[k] * inv_ab - cos[i] * na.data[k] * inv_aa);
                    }
                }
                if (nb.requires_grad) {
                    auto& g = nb.ensure_grad();
                    const double inv_bb = 1.0 / (norm_b[i] * norm_b[i]);
                    for (std::size_t j = 0; j < d; ++j) {
                        const std::size_t k = i * d + j;
                        g[k] += up * (na.data[k] * inv_ab - cos[i] * nb.data[k] * inv_bb);
                    }
                }
            }
        };
    }
    return result;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) { return mean(rowwise_cosine(a, b)); }

Tensor squared_distance(const Tensor& a, std::span<const double> target) {
    if (target.size() != a.numel()) {
        throw DimensionError("squared_distance: target of " + std::to_string(target.size()) +
                             " values for tensor " + shape_string(a.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double diff = a.at(i) - target[i];
        acc += diff * diff;
    }
    Tensor result = make_result({1}, {acc}, {a}, "squared_distance");
    if (result.requires_grad()) {
        std::vector<double> t(target.begin(), target.end());
        result.node().backward_fn = [t = std::move(t)](Node& self) {
            Node& in = *self.parents[0];
            auto& g = in.ensure_grad();
            const double up = 2.0 * self.grad[0];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * (in.data[i] - t[i]);
        };
    }
    return result;
}

Tensor detach(const Tensor& a) { return a.clone(false); }

void sgd_step(std::span<const Tensor> params, SgdState& state) {
    for (const Tensor& p : params) {
        for (double g : p.grad()) {
            if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient, step aborted");
        }
    }
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const Tensor& p : params) state.velocity.emplace_back(p.numel(), 0.0);
    }
    if (state.velocity.size() != params.size()) {
        throw DimensionError("sgd_step: optimizer state holds " + std::to_string(state.velocity.size()) +
                             " buffers for " + std::to_string(params.size()) + " parameters");
    }
    const auto& cfg = state.config;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto w = p.mutable_data();
        auto g = p.grad();
        auto& v = state.velocity[i];
        if (v.size() != w.size()) throw DimensionError("sgd_step: velocity shape mismatch");
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = (g.empty() ? 0.0 : g[j]) + cfg.weight_decay * w[j];
            v[j] = cfg.momentum * v[j] + gj;
            w[j] -= cfg.lr * v[j];
        }
    }
}

}  // namespace fedsiam::ad
