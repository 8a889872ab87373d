#include "gptree/predictive.hpp"

#include "gptree/errors.hpp"

#include <string>

namespace gptree {

std::string_view to_string(PredictMode mode) {
    return mode == PredictMode::Quadrature ? "quadrature" : "mean-point";
}

PredictMode predict_mode_from_string(std::string_view name) {
    if (name == "quadrature") return PredictMode::Quadrature;
    if (name == "mean-point" || name == "meanpoint") return PredictMode::MeanPoint;
    throw ConfigError("unknown predict mode '" + std::string(name) + "'");
}

VectorXd probabilities_from_moments(const PredictiveMoments& moments, PredictMode mode,
                                    int quadrature_order) {
    VectorXd p(moments.mean.size());
    if (mode == PredictMode::MeanPoint) {
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(moments.mean[i]);
        return p;
    }
    const QuadratureRule& rule = cached_gauss_hermite(quadrature_order);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = expected_sigmoid(moments.mean[i], moments.var[i], rule);
    return p;
}

}  // namespace gptree
