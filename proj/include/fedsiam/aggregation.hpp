#pragma once

#include <span>
#include <vector>

#include "fedsiam/model.hpp"

namespace fedsiam {

// Similarities at or below this are raised to it before normalization.
inline constexpr double kSimilarityFloor = 1e-6;

struct AggregationReport {
    Model first_global;                 // uniform mean of the locals
    std::vector<double> similarities;   // cos(local_k, first_global), before clamping
    std::vector<double> weights;        // dynamic weights, sum to 1
    std::vector<bool> clamped;          // similarity was raised to the floor
    Model final_global;
};

// Elementwise (1/K) Σ w_k over trainable tensors and running statistics.
Model aggregate_uniform(std::span<const Model> models);

// Σ (n_k / Σn) w_k over trainable tensors; running statistics are averaged uniformly.
Model aggregate_weighted(std::span<const Model> models, std::span<const double> counts);

// s_k = max(cos(flatten(w_k), flatten(first_global)), floor); ξ_k = s_k / Σ s.
std::vector<double> similarity_weights(std::span<const Model> models, const Model& first_global);

// Uniform first aggregation, cosine-similarity weights, then the re-weighted second aggregation.
AggregationReport dual_aggregate(std::span<const Model> models);

// Σ weights_k · w_k for trainable tensors, uniform mean for running statistics.
Model combine(std::span<const Model> models, std::span<const double> weights);

// Cosine of two flat vectors; DegenerateError on a zero norm.
double flat_cosine(std::span<const double> a, std::span<const double> b);

}  // namespace fedsiam
