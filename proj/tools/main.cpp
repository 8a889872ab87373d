#include "commands.hpp"

#include "gptree/parallel.hpp"
#include "gptree/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using nlohmann::json;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out, features, labels, splits, artifact, split;
    std::optional<std::string> inference, tree_method, kernel, mode, predict_mode;
    std::optional<double> lengthscale, outputscale, lr;
    std::optional<int> epochs, batch_size, inducing, chains, steps, repeats, workers;
    std::optional<int> n_base, way, shot, sessions;
    std::vector<int> class_counts, chain_counts;
    std::vector<double> outputscale_grid;
    std::vector<std::string> methods;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("-c,--config", f.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Random seed (required here or in the config)");
    sub->add_option("-o,--out", f.out, "Output directory");
    sub->add_option("--features", f.features, "Feature file (.f32 with .json header, or .csv)");
    sub->add_option("--labels", f.labels, "Labels file, one integer per line");
    sub->add_option("--splits", f.splits, "Split tags file (train/val/test per line)");
    sub->add_option("--artifact", f.artifact, "Model artifact to read");
    sub->add_option("--split", f.split, "Split to evaluate (train, val, test)");
    sub->add_option("--inference", f.inference, "gibbs or vi");
    sub->add_option("--tree-method", f.tree_method, "kmeans, random or stick-break");
    sub->add_option("--kernel", f.kernel, "linear, rbf or matern52");
    sub->add_option("--lengthscale", f.lengthscale);
    sub->add_option("--outputscale", f.outputscale);
    sub->add_option("--outputscale-grid", f.outputscale_grid, "Outputscales to choose from by validation accuracy")
        ->delimiter(',');
    sub->add_option("--epochs", f.epochs, "VI epochs");
    sub->add_option("--batch-size", f.batch_size, "VI minibatch size, 0 for full batch");
    sub->add_option("--lr", f.lr, "Natural-gradient learning rate");
    sub->add_option("--inducing", f.inducing, "Inducing points per class");
    sub->add_option("--predict-mode", f.predict_mode, "quadrature or mean-point");
    sub->add_option("--chains", f.chains, "Gibbs chains per node");
    sub->add_option("--steps", f.steps, "Gibbs steps per chain");
    sub->add_option("--repeats", f.repeats, "Repeats per sweep point");
    sub->add_option("--class-counts", f.class_counts, "Class counts for class-sweep")->delimiter(',');
    sub->add_option("--chain-counts", f.chain_counts, "Chain counts for chain-sweep")->delimiter(',');
    sub->add_option("--methods", f.methods, "Tree methods for class-sweep")->delimiter(',');
    sub->add_option("--n-base", f.n_base, "Base classes");
    sub->add_option("--way", f.way, "Classes per novel session");
    sub->add_option("--shot", f.shot, "Train samples per novel class");
    sub->add_option("--sessions", f.sessions, "Number of novel sessions");
    sub->add_option("--mode", f.mode, "accumulated, session-tree or rebuild");
    sub->add_option("--workers", f.workers, "Parallel workers (default: $GPTREE_WORKERS or 1)");
}

json overrides(const Flags& f) {
    json j = json::object();
    auto set = [](json& at, const char* key, const auto& opt) {
        if (opt) at[key] = *opt;
    };
    set(j, "seed", f.seed);
    set(j, "output_dir", f.out);
    set(j, "artifact", f.artifact);
    set(j, "eval_split", f.split);
    set(j, "inference", f.inference);
    set(j, "tree_method", f.tree_method);
    set(j, "workers", f.workers);
    json data = json::object(), kernel = json::object(), vi = json::object(), gibbs = json::object(),
         sessions = json::object(), sweep = json::object();
    set(data, "features", f.features);
    set(data, "labels", f.labels);
    set(data, "splits", f.splits);
    set(kernel, "family", f.kernel);
    set(kernel, "lengthscale", f.lengthscale);
    set(kernel, "outputscale", f.outputscale);
    set(vi, "epochs", f.epochs);
    set(vi, "batch_size", f.batch_size);
    set(vi, "learning_rate", f.lr);
    set(vi, "inducing_per_class", f.inducing);
    set(vi, "predict_mode", f.predict_mode);
    set(gibbs, "predict_mode", f.predict_mode);
    set(gibbs, "n_chains", f.chains);
    set(gibbs, "n_steps", f.steps);
    set(sessions, "n_base", f.n_base);
    set(sessions, "way", f.way);
    set(sessions, "shot", f.shot);
    set(sessions, "n_sessions", f.sessions);
    set(sessions, "mode", f.mode);
    set(sweep, "repeats", f.repeats);
    if (!f.outputscale_grid.empty()) j["outputscale_grid"] = f.outputscale_grid;
    if (!f.class_counts.empty()) sweep["class_counts"] = f.class_counts;
    if (!f.chain_counts.empty()) sweep["chain_counts"] = f.chain_counts;
    if (!f.methods.empty()) sweep["methods"] = f.methods;
    for (auto [key, obj] : {std::pair{"data", &data}, {"kernel", &kernel}, {"vi", &vi}, {"gibbs", &gibbs},
                            {"sessions", &sessions}, {"sweep", &sweep}})
        if (!obj->empty()) j[key] = *obj;
    return j;
}

gptree::cli::RunConfig resolve(const std::string& command, const Flags& f) {
    gptree::cli::RunConfig config;
    config.workers = gptree::default_worker_count();
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw gptree::ConfigError("cannot parse " + f.config_path + ": " + e.what());
        }
        gptree::cli::apply_json(config, file);
    }
    gptree::cli::apply_json(config, overrides(f));
    config.command = command;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical Gaussian-process classification on precomputed features"};
    app.set_version_flag("--version", std::string(gptree::kVersion));
    app.require_subcommand(1);

    Flags flags;
    const char* commands[][2] = {
        {"train-base", "Fit a tree (VI or Gibbs) on the train split and save the model"},
        {"class-sweep", "Accuracy of tree methods as the number of classes grows"},
        {"incremental", "Base training followed by few-shot novel sessions"},
        {"chain-sweep", "Accuracy as a function of the number of Gibbs chains"},
        {"eval", "Accuracy of a saved model on one split"},
        {"inspect-artifact", "Summarize a saved model"},
    };
    for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gptree::cli::kExitConfig;
    }

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        gptree::cli::run(resolve(command, flags));
    } catch (const gptree::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gptree::cli::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return gptree::cli::kExitInternal;
    }
    return gptree::cli::kExitOk;
}
