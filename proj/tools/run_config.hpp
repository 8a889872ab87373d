#pragma once

#include "gptree/data_io.hpp"
#include "gptree/incremental.hpp"
#include "gptree/kernels.hpp"
#include "gptree/node_gibbs.hpp"
#include "gptree/node_vi.hpp"
#include "gptree/tree.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gptree::cli {

enum class Inference { Gibbs, VI };

struct DataConfig {
    std::string features;
    std::string labels;
    std::string splits;  // optional file of train/val/test tags
    double val_fraction = 0.15;
    double test_fraction = 0.25;
};

struct SessionConfig {
    int n_base = 0;
    int way = 5;
    int shot = 5;
    int n_sessions = 1;
    ExpansionMode mode = ExpansionMode::Accumulated;
};

struct SweepConfig {
    std::vector<int> class_counts;
    std::vector<int> chain_counts;
    std::vector<std::string> methods{"gp-tree", "gp-tree-rnd", "stick-break"};
    int repeats = 1;
};

/// Fully resolved settings of one CLI run.
struct RunConfig {
    std::string command;
    DataConfig data;
    KernelSpec kernel = KernelSpec::linear(1.0);
    std::vector<double> outputscale_grid;  // nonempty: pick kernel.outputscale by validation accuracy
    Inference inference = Inference::VI;
    TreeBuildMethod tree_method = TreeBuildMethod::KMeansBisect;
    GibbsConfig gibbs;
    VIConfig vi;
    int inducing_per_class = 5;
    SessionConfig sessions;
    SweepConfig sweep;
    std::optional<std::uint64_t> seed;
    std::string artifact;  // input model for eval and inspect-artifact
    std::string eval_split = "test";
    std::string output_dir;
    int workers = 1;

    /// Throws ConfigError.
    void validate() const;
};

/// Overlays the fields present in `j` onto `config`. Unknown keys throw ConfigError.
void apply_json(RunConfig& config, const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

std::string_view to_string(Inference inference);
Inference inference_from_string(std::string_view name);

}  // namespace gptree::cli
