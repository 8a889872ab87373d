#include "gptree/artifact.hpp"
#include "gptree/data_io.hpp"
#include "gptree/errors.hpp"
#include "gptree/incremental.hpp"
#include "gptree/kernels.hpp"
#include "gptree/math_core.hpp"
#include "gptree/node_gibbs.hpp"
#include "gptree/node_vi.hpp"
#include "gptree/pg_sampler.hpp"
#include "gptree/tree.hpp"
#include "gptree/version.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace gptree;

namespace {

Eigen::VectorXd sample_pg(double c, std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    Eigen::VectorXd out(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = sample_pg1(c, rng).omega;
    return out;
}

LabelTree fit_gibbs_tree(const MatrixXd& X, const std::vector<int>& y, const std::string& method,
                         const KernelSpec& kernel, int n_chains, int n_steps, std::uint64_t seed, int workers) {
    RngStream rng(seed);
    RngStream tree_rng = rng.derive(1);
    LabelTree structure = build_tree(class_prototypes(X, y), tree_build_method_from_string(method), {}, tree_rng);
    GibbsConfig cfg;
    cfg.n_chains = n_chains;
    cfg.n_steps = n_steps;
    py::gil_scoped_release release;
    return fit_tree_gibbs(std::move(structure), X, y, kernel, cfg, rng.derive(2), workers);
}

LabelTree fit_vi_tree(const MatrixXd& X, const std::vector<int>& y, const std::string& method, const KernelSpec& kernel,
                      int inducing_per_class, int epochs, int batch_size, double learning_rate, std::uint64_t seed) {
    RngStream rng(seed);
    RngStream tree_rng = rng.derive(1);
    LabelTree structure = build_tree(class_prototypes(X, y), tree_build_method_from_string(method), {}, tree_rng);
    RngStream ind_rng = rng.derive(3);
    const InducingStore inducing = init_inducing(X, y, inducing_per_class, ind_rng);
    VIConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    RngStream fit_rng = rng.derive(4);
    py::gil_scoped_release release;
    return fit_tree_vi(std::move(structure), X, y, inducing, kernel, cfg, fit_rng);
}

PredictOptions options(const std::string& mode, int order) { return {predict_mode_from_string(mode), order}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hierarchical Gaussian-process classification with Polya-Gamma augmentation";
    m.attr("__version__") = std::string(kVersion);

    py::register_exception<Error>(m, "GPTreeError", PyExc_RuntimeError);

    py::class_<KernelSpec>(m, "KernelSpec")
        .def(py::init([](const std::string& family, double lengthscale, double outputscale, bool normalize) {
                 KernelSpec s{kernel_family_from_string(family), lengthscale, outputscale, normalize};
                 s.validate();
                 return s;
             }),
             py::arg("family") = "linear", py::arg("lengthscale") = 1.0, py::arg("outputscale") = 1.0,
             py::arg("normalize_inputs") = true)
        .def_property_readonly("family", [](const KernelSpec& s) { return std::string(to_string(s.family)); })
        .def_readonly("lengthscale", &KernelSpec::lengthscale)
        .def_readonly("outputscale", &KernelSpec::outputscale)
        .def_readonly("normalize_inputs", &KernelSpec::normalize_inputs)
        .def("__repr__", [](const KernelSpec& s) { return "KernelSpec(" + kernel_to_json(s).dump() + ")"; });

    m.def("gram", py::overload_cast<const KernelSpec&, const Eigen::MatrixXd&, const Eigen::MatrixXd&>(&gram),
          py::arg("kernel"), py::arg("A"), py::arg("B"));
    m.def("gram", py::overload_cast<const KernelSpec&, const Eigen::MatrixXd&>(&gram), py::arg("kernel"), py::arg("A"));

    m.def("pg_mean", &pg_mean, py::arg("b"), py::arg("c"));
    m.def("sample_pg", &sample_pg, py::arg("c"), py::arg("n"), py::arg("seed"),
          "n independent PG(1, c) draws from a seeded stream");
    m.def("expected_sigmoid",
          [](double mu, double var, int order) { return expected_sigmoid(mu, var, cached_gauss_hermite(order)); },
          py::arg("mu"), py::arg("var"), py::arg("order") = kDefaultQuadratureOrder);
    m.def("gauss_hermite", [](int order) {
        const QuadratureRule r = gauss_hermite(order);
        return py::make_tuple(r.nodes, r.weights);
    });

    py::class_<NodeGibbsModel>(m, "NodeGibbsModel")
        .def_static(
            "fit",
            [](const MatrixXd& X, const std::vector<int>& y, const KernelSpec& k, int n_chains, int n_steps,
               std::uint64_t seed) {
                GibbsConfig cfg;
                cfg.n_chains = n_chains;
                cfg.n_steps = n_steps;
                return NodeGibbsModel::fit(X, y, k, cfg, RngStream(seed));
            },
            py::arg("X"), py::arg("y"), py::arg("kernel"), py::arg("n_chains") = 1, py::arg("n_steps") = 1,
            py::arg("seed") = 0)
        .def("predict_prob",
             [](const NodeGibbsModel& g, const MatrixXd& Q, const std::string& mode, int order) {
                 return g.predict_prob(Q, predict_mode_from_string(mode), order);
             },
             py::arg("X"), py::arg("mode") = "quadrature", py::arg("order") = kDefaultQuadratureOrder)
        .def("augmented_marginal_loglik",
             py::overload_cast<std::size_t>(&NodeGibbsModel::augmented_marginal_loglik, py::const_),
             py::arg("chain") = 0)
        .def_property_readonly("size", &NodeGibbsModel::size);

    py::class_<LabelTree>(m, "LabelTree")
        .def_property_readonly("classes", &LabelTree::classes)
        .def_property_readonly("depth", &LabelTree::depth)
        .def("__len__", &LabelTree::size)
        .def("path",
             [](const LabelTree& t, int cls) {
                 std::vector<std::pair<int, bool>> out;
                 for (const PathStep& s : t.path(cls)) out.emplace_back(s.node, s.go_left);
                 return out;
             })
        .def("nodes", [](const LabelTree& t) {
            py::list out;
            for (const TreeNode& n : t.nodes()) {
                py::dict d;
                d["classes"] = n.classes;
                d["parent"] = n.parent;
                d["left"] = n.left;
                d["right"] = n.right;
                d["classifier"] = std::holds_alternative<NodeGibbsModel>(n.classifier) ? "gibbs"
                                  : std::holds_alternative<NodeVIModel>(n.classifier) ? "vi"
                                                                                       : "none";
                out.append(d);
            }
            return out;
        });

    m.def("fit_gibbs_tree", &fit_gibbs_tree, py::arg("X"), py::arg("y"), py::arg("method") = "kmeans",
          py::arg("kernel") = KernelSpec::linear(1.0), py::arg("n_chains") = 1, py::arg("n_steps") = 1,
          py::arg("seed") = 0, py::arg("workers") = 1);
    m.def("fit_vi_tree", &fit_vi_tree, py::arg("X"), py::arg("y"), py::arg("method") = "kmeans",
          py::arg("kernel") = KernelSpec::linear(1.0), py::arg("inducing_per_class") = 5, py::arg("epochs") = 50,
          py::arg("batch_size") = 0, py::arg("learning_rate") = 0.05, py::arg("seed") = 0);
    m.def(
        "predict_proba",
        [](const LabelTree& t, const MatrixXd& X, const std::string& mode, int order) {
            py::gil_scoped_release release;
            return predict_proba(t, X, options(mode, order));
        },
        py::arg("tree"), py::arg("X"), py::arg("mode") = "quadrature", py::arg("order") = kDefaultQuadratureOrder);
    m.def(
        "predict",
        [](const LabelTree& t, const MatrixXd& X, const std::string& mode, int order) {
            py::gil_scoped_release release;
            return predict_labels(t, X, options(mode, order));
        },
        py::arg("tree"), py::arg("X"), py::arg("mode") = "quadrature", py::arg("order") = kDefaultQuadratureOrder);
    m.def("class_log_probs",
          [](const LabelTree& t, const std::vector<double>& p) { return class_log_probs(t, p); });

    m.def("save_model",
          [](const LabelTree& t, const std::filesystem::path& path) {
              ModelArtifact a;
              a.tree = t;
              save_artifact(a, path);
          },
          py::arg("tree"), py::arg("path"));
    m.def("load_model", [](const std::filesystem::path& path) { return load_artifact(path).tree; }, py::arg("path"));

    m.def("load_dataset",
          [](const std::filesystem::path& features, const std::string& labels) {
              const Dataset d = load_dataset(features, std::filesystem::path(labels));
              return py::make_tuple(d.features, d.labels, d.num_classes);
          },
          py::arg("features"), py::arg("labels") = std::string{});
    m.def("average_forgetting",
          [](const std::vector<std::vector<double>>& acc, std::size_t k) { return average_forgetting(acc, k); },
          py::arg("acc"), py::arg("k"), "acc[j][k] accuracy on session-j classes after session k (0-based)");
}
