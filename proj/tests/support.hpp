#pragma once

// Test-only oracles. Nothing here goes through the reverse-mode sweep it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fedsiam/autodiff.hpp"
#include "fedsiam/model.hpp"
#include "fedsiam/rng.hpp"

namespace fedsiam::testing {

inline constexpr double kFiniteDifferenceStep = 1e-6;

// Central differences of `loss` w.r.t. every element of `leaves`, perturbing leaf data in place.
inline std::vector<double> numeric_gradient(const std::function<double()>& loss, std::vector<ad::Tensor> leaves,
                                            double h = kFiniteDifferenceStep) {
    std::vector<double> out;
    for (ad::Tensor& t : leaves) {
        auto data = t.mutable_data();
        for (double& v : data) {
            const double saved = v;
            v = saved + h;
            const double up = loss();
            v = saved - h;
            const double down = loss();
            v = saved;
            out.push_back((up - down) / (2.0 * h));
        }
    }
    return out;
}

inline std::vector<double> analytic_gradient(const std::vector<ad::Tensor>& leaves) {
    std::vector<double> out;
    for (const ad::Tensor& t : leaves) {
        if (t.has_grad()) {
            out.insert(out.end(), t.grad().begin(), t.grad().end());
        } else {
            out.insert(out.end(), t.numel(), 0.0);
        }
    }
    return out;
}

// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Builds the loss graph with `build`, runs backward, and compares against central differences.
inline double gradient_check(const std::function<ad::Tensor()>& build, const std::vector<ad::Tensor>& leaves) {
    for (ad::Tensor t : leaves) t.zero_grad();
    build().backward();
    const auto analytic = analytic_gradient(leaves);
    const auto numeric = numeric_gradient([&] { return build().item(); }, leaves);
    return relative_error(analytic, numeric);
}

inline ad::Tensor random_tensor(ad::Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                                double hi = 1.0) {
    std::vector<double> v(ad::shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return ad::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Entries bounded away from zero by `gap`, so relu/softplus kinks stay outside the stencil.
inline ad::Tensor random_tensor_off_zero(ad::Shape shape, Rng& rng, double gap = 0.05) {
    std::vector<double> v(ad::shape_numel(shape));
    for (double& x : v) {
        const double mag = rng.uniform(gap, 1.0);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return ad::Tensor::from(std::move(shape), std::move(v), true);
}

inline EncoderConfig small_encoder() { return {6, {12}, 16, 3}; }

// Randomizes every trainable tensor (including gamma/beta) so that no layer is at its init symmetry.
inline void randomize(Model& m, Rng& rng, double lo = -0.8, double hi = 0.8) {
    for (ad::Tensor t : m.parameters()) {
        for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
    }
    for (ad::BatchNormStats* s : m.running_stats()) {
        for (double& v : s->running_mean) v = rng.uniform(-0.2, 0.2);
        for (double& v : s->running_var) v = rng.uniform(0.5, 1.5);
    }
}

}  // namespace fedsiam::testing
