#pragma once

#include "gptree/math_core.hpp"

#include <string_view>

namespace gptree {

/// How a node turns Gaussian latent moments into P(go left).
enum class PredictMode {
    Quadrature,  // E[sigmoid(f*)] by Gauss-Hermite quadrature
    MeanPoint,   // sigmoid(mu*), a single evaluation at the expected value
};

std::string_view to_string(PredictMode mode);
PredictMode predict_mode_from_string(std::string_view name);

struct PredictOptions {
    PredictMode mode = PredictMode::Quadrature;
    int quadrature_order = kDefaultQuadratureOrder;
};

struct GaussianMoments {
    double mean = 0.0;
    double var = 0.0;
};

/// Per-query latent moments; `clamped` counts variances raised to 0.
struct PredictiveMoments {
    VectorXd mean;
    VectorXd var;
    std::size_t clamped = 0;
};

VectorXd probabilities_from_moments(const PredictiveMoments& moments, PredictMode mode,
                                    int quadrature_order);

}  // namespace gptree
