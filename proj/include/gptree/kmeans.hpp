#pragma once

#include "gptree/rng.hpp"

#include <Eigen/Core>

#include <vector>

namespace gptree {

struct KMeansResult {
    Eigen::MatrixXd centers;       // k x d
    std::vector<int> assignment;   // cluster index per input row
    int iterations = 0;
};

struct KMeansOptions {
    int max_iterations = 1000;
    double tolerance = 1e-8;  // stop once no center moves more than this
};

/// k-means++ seeding followed by Lloyd iterations. Requires 1 <= k <= rows.
/// A cluster that becomes empty keeps its previous center.
KMeansResult kmeans_pp(const Eigen::MatrixXd& points, int k, RngStream& rng,
                       const KMeansOptions& options = {});

}  // namespace gptree
