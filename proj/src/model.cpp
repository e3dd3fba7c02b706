#include "fedsiam/model.hpp"

#include <cmath>

#include "fedsiam/error.hpp"
#include "fedsiam/rng.hpp"

namespace fedsiam {

using ad::Mode;
using ad::Tensor;

void EncoderConfig::validate() const {
    if (input_dim == 0 || projection_dim == 0 || num_classes == 0) {
        throw ConfigError("encoder widths must be positive");
    }
    if (backbone_hidden.empty()) throw ConfigError("backbone needs at least one hidden layer");
    for (std::size_t w : backbone_hidden) {
        if (w == 0) throw ConfigError("backbone widths must be positive");
    }
}

namespace {

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

BatchNorm make_batch_norm(std::size_t width) {
    return {Tensor::from({width}, std::vector<double>(width, 1.0), true), Tensor::zeros({width}, true),
            ad::BatchNormStats(width)};
}

Linear clone_linear(const Linear& l) { return {l.weight.clone(l.weight.requires_grad()), l.bias.clone(l.bias.requires_grad())}; }

BatchNorm clone_batch_norm(const BatchNorm& bn) {
    return {bn.gamma.clone(bn.gamma.requires_grad()), bn.beta.clone(bn.beta.requires_grad()), bn.stats};
}

Tensor affine(const Linear& l, const Tensor& x) { return ad::add_bias(ad::matmul(x, l.weight), l.bias); }

Tensor normalize(BatchNorm& bn, const Tensor& x, Mode mode) {
    return ad::batch_norm(x, bn.gamma, bn.beta, mode, bn.stats);
}

Tensor normalize(const BatchNorm& bn, const Tensor& x) { return ad::batch_norm(x, bn.gamma, bn.beta, bn.stats); }

void require_input_width(const Tensor& x, std::size_t width, const char* what) {
    if (x.rank() != 2 || x.dim(1) != width) {
        throw DimensionError(std::string(what) + " expects [b×" + std::to_string(width) + "], got " +
                             ad::shape_string(x.shape()));
    }
}

// Shared body of the mutable and const forward passes.
template <typename M, typename Norm>
ForwardOutputs forward_impl(M& model, const Tensor& x, Norm&& norm) {
    require_input_width(x, model.config().input_dim, "forward");
    Tensor h = x;
    for (std::size_t i = 0; i < model.backbone.size(); ++i) {
        h = ad::relu(norm(model.backbone_bn[i], affine(model.backbone[i], h)));
    }
    Tensor hidden = ad::relu(norm(model.proj_bn, affine(model.proj_hidden, h)));
    Tensor z = affine(model.proj_out, hidden);
    Tensor logits = affine(model.classifier, h);
    return {h, z, logits};
}

template <typename M, typename Norm>
Tensor pred_impl(M& model, const Tensor& z, Norm&& norm) {
    require_input_width(z, model.config().projection_dim, "forward_pred");
    Tensor hidden = ad::relu(norm(model.pred_bn, affine(model.pred_hidden, z)));
    return affine(model.pred_out, hidden);
}

}  // namespace

Model Model::init(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, SeedTag::ModelInit));
    Model m;
    m.cfg_ = cfg;
    std::size_t width = cfg.input_dim;
    for (std::size_t h : cfg.backbone_hidden) {
        m.backbone.push_back(make_linear(width, h, rng));
        m.backbone_bn.push_back(make_batch_norm(h));
        width = h;
    }
    const std::size_t p = cfg.projection_dim;
    m.proj_hidden = make_linear(width, p, rng);
    m.proj_bn = make_batch_norm(p);
    m.proj_out = make_linear(p, p, rng);
    m.pred_hidden = make_linear(p, p, rng);
    m.pred_bn = make_batch_norm(p);
    m.pred_out = make_linear(p, p, rng);
    m.classifier = make_linear(width, cfg.num_classes, rng);
    return m;
}

Model Model::clone() const {
    Model m;
    m.cfg_ = cfg_;
    for (const Linear& l : backbone) m.backbone.push_back(clone_linear(l));
    for (const BatchNorm& bn : backbone_bn) m.backbone_bn.push_back(clone_batch_norm(bn));
    m.proj_hidden = clone_linear(proj_hidden);
    m.proj_bn = clone_batch_norm(proj_bn);
    m.proj_out = clone_linear(proj_out);
    m.pred_hidden = clone_linear(pred_hidden);
    m.pred_bn = clone_batch_norm(pred_bn);
    m.pred_out = clone_linear(pred_out);
    m.classifier = clone_linear(classifier);
    return m;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < backbone.size(); ++i) {
        out.insert(out.end(), {backbone[i].weight, backbone[i].bias, backbone_bn[i].gamma, backbone_bn[i].beta});
    }
    out.insert(out.end(), {proj_hidden.weight, proj_hidden.bias, proj_bn.gamma, proj_bn.beta, proj_out.weight,
                           proj_out.bias});
    out.insert(out.end(), {pred_hidden.weight, pred_hidden.bias, pred_bn.gamma, pred_bn.beta, pred_out.weight,
                           pred_out.bias});
    out.insert(out.end(), {classifier.weight, classifier.bias});
    return out;
}

std::vector<std::string> Model::parameter_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < backbone.size(); ++i) {
        const std::string p = "backbone." + std::to_string(i) + ".";
        out.insert(out.end(), {p + "weight", p + "bias", p + "bn.gamma", p + "bn.beta"});
    }
    out.insert(out.end(), {"projection.hidden.weight", "projection.hidden.bias", "projection.bn.gamma",
                           "projection.bn.beta", "projection.out.weight", "projection.out.bias"});
    out.insert(out.end(), {"prediction.hidden.weight", "prediction.hidden.bias", "prediction.bn.gamma",
                           "prediction.bn.beta", "prediction.out.weight", "prediction.out.bias"});
    out.insert(out.end(), {"classifier.weight", "classifier.bias"});
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : parameters()) n += t.numel();
    return n;
}

std::vector<ad::BatchNormStats*> Model::running_stats() {
    std::vector<ad::BatchNormStats*> out;
    for (BatchNorm& bn : backbone_bn) out.push_back(&bn.stats);
    out.push_back(&proj_bn.stats);
    out.push_back(&pred_bn.stats);
    return out;
}

std::vector<const ad::BatchNormStats*> Model::running_stats() const {
    std::vector<const ad::BatchNormStats*> out;
    for (const BatchNorm& bn : backbone_bn) out.push_back(&bn.stats);
    out.push_back(&proj_bn.stats);
    out.push_back(&pred_bn.stats);
    return out;
}

void Model::zero_grad() {
    for (Tensor& t : parameters()) t.zero_grad();
}

void Model::set_trainable(bool trainable) {
    for (Tensor& t : parameters()) t.set_requires_grad(trainable);
}

ForwardOutputs forward(Model& model, const Tensor& x, Mode mode) {
    return forward_impl(model, x, [mode](BatchNorm& bn, const Tensor& t) { return normalize(bn, t, mode); });
}

ForwardOutputs forward(const Model& model, const Tensor& x) {
    return forward_impl(model, x, [](const BatchNorm& bn, const Tensor& t) { return normalize(bn, t); });
}

Tensor forward_repr(Model& model, const Tensor& x, Mode mode) { return forward(model, x, mode).z; }

Tensor forward_logits(Model& model, const Tensor& x, Mode mode) { return forward(model, x, mode).logits; }

Tensor forward_pred(Model& model, const Tensor& z, Mode mode) {
    return pred_impl(model, z, [mode](BatchNorm& bn, const Tensor& t) { return normalize(bn, t, mode); });
}

Tensor forward_pred(const Model& model, const Tensor& z) {
    return pred_impl(model, z, [](const BatchNorm& bn, const Tensor& t) { return normalize(bn, t); });
}

std::vector<double> flatten(const Model& model) {
    std::vector<double> out;
    out.reserve(model.parameter_count());
    for (const Tensor& t : model.parameters()) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

void unflatten(Model& model, std::span<const double> values) {
    const std::size_t expected = model.parameter_count();
    if (values.size() != expected) {
        throw DimensionError("unflatten: model has " + std::to_string(expected) + " parameters, got " +
                             std::to_string(values.size()));
    }
    std::size_t offset = 0;
    for (Tensor& t : model.parameters()) {
        auto dst = t.mutable_data();
        std::copy(values.begin() + offset, values.begin() + offset + dst.size(), dst.begin());
        offset += dst.size();
    }
}

void require_same_architecture(const Model& a, const Model& b) {
    if (!(a.config() == b.config())) throw AggregationError("models were built from different encoder configs");
}

}  // namespace fedsiam
