#pragma once

#include "gptree/math_core.hpp"
#include "gptree/rng.hpp"

#include <vector>

namespace gptree::testing {

struct LabelledData {
    MatrixXd X;
    std::vector<int> y;
};

/// `classes` isotropic 2-D Gaussian blobs with centers evenly spaced on a
/// circle of the given radius; samples are grouped by class.
LabelledData circle_blobs(int classes, int per_class, double radius, double stddev, RngStream& rng);

/// `clusters` groups of `per_cluster` classes in `dim` dimensions. Cluster
/// centers are random unit vectors; class centers sit `spread` away from
/// their cluster center. Class c belongs to cluster c / per_cluster.
struct ClusteredClasses {
    MatrixXd class_centers;
    int per_cluster;
};
ClusteredClasses clustered_class_centers(int clusters, int per_cluster, int dim, double spread, RngStream& rng);
LabelledData sample_around(const MatrixXd& centers, int per_class, double stddev, RngStream& rng);

}  // namespace gptree::testing
