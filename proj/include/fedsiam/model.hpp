#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsiam/autodiff.hpp"

namespace fedsiam {

struct EncoderConfig {
    std::size_t input_dim = 32;
    std::vector<std::size_t> backbone_hidden{128, 64};
    std::size_t projection_dim = 32;
    std::size_t num_classes = 10;

    // Throws ConfigError on a zero width or an empty backbone.
    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

struct Linear {
    ad::Tensor weight;  // [in × out]
    ad::Tensor bias;    // [out]
};

struct BatchNorm {
    ad::Tensor gamma;
    ad::Tensor beta;
    ad::BatchNormStats stats;
};

// Client network: backbone MLP -> projection MLP (z) -> prediction MLP (p), with a linear
// classifier on the backbone output. Every hidden layer is Linear + BatchNorm + ReLU;
// the projection and prediction outputs are plain affine maps.
//
// Copies share tensors. Use clone() for an independent model.
class Model {
public:
    Model() = default;

    // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases and beta 0, gamma 1.
    static Model init(const EncoderConfig& cfg, std::uint64_t seed);

    Model clone() const;

    const EncoderConfig& config() const { return cfg_; }

    // Trainable tensors in canonical order.
    std::vector<ad::Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const;

    std::vector<ad::BatchNormStats*> running_stats();
    std::vector<const ad::BatchNormStats*> running_stats() const;

    void zero_grad();
    // Frozen models contribute values but no graph edges.
    void set_trainable(bool trainable);

    std::vector<Linear> backbone;
    std::vector<BatchNorm> backbone_bn;
    Linear proj_hidden;
    BatchNorm proj_bn;
    Linear proj_out;
    Linear pred_hidden;
    BatchNorm pred_bn;
    Linear pred_out;
    Linear classifier;

private:
    EncoderConfig cfg_;
};

struct ForwardOutputs {
    ad::Tensor features;  // backbone output
    ad::Tensor z;         // representation
    ad::Tensor logits;
};

// One backbone pass feeding both the projection and the classifier. Train mode updates
// batch-norm running statistics; the const overload is eval only.
ForwardOutputs forward(Model& model, const ad::Tensor& x, ad::Mode mode);
ForwardOutputs forward(const Model& model, const ad::Tensor& x);

ad::Tensor forward_repr(Model& model, const ad::Tensor& x, ad::Mode mode);
ad::Tensor forward_logits(Model& model, const ad::Tensor& x, ad::Mode mode);
ad::Tensor forward_pred(Model& model, const ad::Tensor& z, ad::Mode mode);
ad::Tensor forward_pred(const Model& model, const ad::Tensor& z);

// Concatenation of all trainable tensors in canonical order; running statistics excluded.
std::vector<double> flatten(const Model& model);
// Writes `values` into the trainable tensors of `model`.
void unflatten(Model& model, std::span<const double> values);

// Throws AggregationError unless both models have the same architecture.
void require_same_architecture(const Model& a, const Model& b);

}  // namespace fedsiam
