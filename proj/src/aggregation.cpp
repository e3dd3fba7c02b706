#include "fedsiam/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "fedsiam/error.hpp"

namespace fedsiam {

namespace {

void require_models(std::span<const Model> models) {
    if (models.empty()) throw AggregationError("nothing to aggregate");
    for (const Model& m : models.subspan(1)) require_same_architecture(models.front(), m);
}

}  // namespace

Model combine(std::span<const Model> models, std::span<const double> weights) {
    require_models(models);
    if (weights.size() != models.size()) {
        throw AggregationError(std::to_string(weights.size()) + " weights for " + std::to_string(models.size()) +
                               " models");
    }
    Model out = models.front().clone();
    auto dst = out.parameters();
    std::vector<std::vector<ad::Tensor>> src;
    src.reserve(models.size());
    for (const Model& m : models) src.push_back(m.parameters());
    for (std::size_t t = 0; t < dst.size(); ++t) {
        auto values = dst[t].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            // Anchored at the first model so identical inputs reproduce it bit for bit; the clamp
            // removes rounding that would step outside the inputs' coordinate range.
            const double anchor = src[0][t].at(i);
            double acc = 0.0, lo = anchor, hi = anchor;
            for (std::size_t k = 1; k < models.size(); ++k) {
                const double v = src[k][t].at(i);
                acc += weights[k] * (v - anchor);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            values[i] = std::clamp(anchor + acc, lo, hi);
        }
    }

    const double inv_k = 1.0 / static_cast<double>(models.size());
    auto stats = out.running_stats();
    for (std::size_t s = 0; s < stats.size(); ++s) {
        auto& mean = stats[s]->running_mean;
        auto& var = stats[s]->running_var;
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (const Model& m : models) {
            const auto* other = m.running_stats()[s];
            for (std::size_t j = 0; j < mean.size(); ++j) {
                mean[j] += other->running_mean[j];
                var[j] += other->running_var[j];
            }
        }
        for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] *= inv_k;
            var[j] *= inv_k;
        }
    }
    return out;
}

Model aggregate_uniform(std::span<const Model> models) {
    require_models(models);
    return combine(models, std::vector<double>(models.size(), 1.0 / static_cast<double>(models.size())));
}

Model aggregate_weighted(std::span<const Model> models, std::span<const double> counts) {
    require_models(models);
    if (counts.size() != models.size()) throw ConfigError("aggregate_weighted: one count per model required");
    double total = 0.0;
    for (double c : counts) {
        if (!(c >= 0.0)) throw ConfigError("aggregate_weighted: counts must be non-negative");
        total += c;
    }
    if (!(total > 0.0)) throw ConfigError("aggregate_weighted: total sample count is zero");
    std::vector<double> weights(counts.begin(), counts.end());
    for (double& w : weights) w /= total;
    return combine(models, weights);
}

double flat_cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("flat_cosine: length mismatch");
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa <= 0.0 || bb <= 0.0) throw DegenerateError("cosine of a zero-norm model");
    return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

namespace {

std::vector<double> raw_similarities(std::span<const Model> models, const Model& first_global) {
    require_models(models);
    require_same_architecture(models.front(), first_global);
    const auto reference = flatten(first_global);
    std::vector<double> sims;
    sims.reserve(models.size());
    for (const Model& m : models) sims.push_back(flat_cosine(flatten(m), reference));
    return sims;
}

std::vector<double> normalize_similarities(std::span<const double> sims) {
    std::vector<double> weights(sims.begin(), sims.end());
    for (double& w : weights) w = std::max(w, kSimilarityFloor);
    if (std::adjacent_find(weights.begin(), weights.end(), std::not_equal_to<>()) == weights.end()) {
        std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(weights.size()));
        return weights;
    }
    double total = 0.0;
    for (double w : weights) total += w;
    for (double& w : weights) w /= total;
    return weights;
}

}  // namespace

std::vector<double> similarity_weights(std::span<const Model> models, const Model& first_global) {
    return normalize_similarities(raw_similarities(models, first_global));
}

AggregationReport dual_aggregate(std::span<const Model> models) {
    AggregationReport report;
    report.first_global = aggregate_uniform(models);
    report.similarities = raw_similarities(models, report.first_global);
    report.weights = normalize_similarities(report.similarities);
    for (double s : report.similarities) report.clamped.push_back(s < kSimilarityFloor);
    report.final_global = combine(models, report.weights);
    return report;
}

}  // namespace fedsiam
