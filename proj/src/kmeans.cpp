#include "gptree/kmeans.hpp"

#include <limits>
#include <stdexcept>

namespace gptree {

namespace {

int nearest(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x, double* dist2 = nullptr) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double d = (centers.row(c).transpose() - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist2) *dist2 = best_d;
    return best;
}

}  // namespace

KMeansResult kmeans_pp(const Eigen::MatrixXd& points, int k, RngStream& rng, const KMeansOptions& options) {
    const Eigen::Index n = points.rows();
    if (k < 1 || k > n) throw std::invalid_argument("kmeans_pp: need 1 <= k <= number of points");

    KMeansResult res;
    res.centers.resize(k, points.cols());
    res.centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));

    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - res.centers.row(0)).squaredNorm();

    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all remaining points coincide with chosen centers
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
        }
        res.centers.row(c) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], (points.row(i) - res.centers.row(c)).squaredNorm());
    }

    res.assignment.assign(static_cast<std::size_t>(n), 0);
    for (int it = 0; it < options.max_iterations; ++it) {
        res.iterations = it + 1;
        for (Eigen::Index i = 0; i < n; ++i)
            res.assignment[static_cast<std::size_t>(i)] = nearest(res.centers, points.row(i).transpose());

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = res.assignment[static_cast<std::size_t>(i)];
            sums.row(a) += points.row(i);
            ++counts[static_cast<std::size_t>(a)];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) continue;
            const Eigen::RowVectorXd next = sums.row(c) / counts[static_cast<std::size_t>(c)];
            shift = std::max(shift, (next - res.centers.row(c)).norm());
            res.centers.row(c) = next;
        }
        if (shift < options.tolerance) break;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        res.assignment[static_cast<std::size_t>(i)] = nearest(res.centers, points.row(i).transpose());
    return res;
}

}  // namespace gptree
