#include "run_config.hpp"

#include "gptree/artifact.hpp"
#include "gptree/errors.hpp"

#include <cmath>
#include <set>

namespace gptree::cli {

using nlohmann::json;

std::string_view to_string(Inference inference) { return inference == Inference::Gibbs ? "gibbs" : "vi"; }

Inference inference_from_string(std::string_view name) {
    if (name == "gibbs") return Inference::Gibbs;
    if (name == "vi") return Inference::VI;
    throw ConfigError("inference must be 'gibbs' or 'vi', got '" + std::string(name) + "'");
}

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void apply_json(RunConfig& c, const json& j) {
    try {
        check_keys(j,
                   {"command", "data", "kernel", "outputscale_grid", "inference", "tree_method", "gibbs", "vi", "sessions", "sweep", "seed",
                    "artifact", "eval_split", "output_dir", "workers"},
                   "config");
        read(j, "command", c.command);
        if (j.contains("data")) {
            const json& d = j.at("data");
            check_keys(d, {"features", "labels", "splits", "val_fraction", "test_fraction"}, "data");
            read(d, "features", c.data.features);
            read(d, "labels", c.data.labels);
            read(d, "splits", c.data.splits);
            read(d, "val_fraction", c.data.val_fraction);
            read(d, "test_fraction", c.data.test_fraction);
        }
        if (j.contains("kernel")) {
            json merged = kernel_to_json(c.kernel);
            for (const auto& [k, v] : j.at("kernel").items()) merged[k] = v;
            c.kernel = kernel_from_json(merged);
        }
        read(j, "outputscale_grid", c.outputscale_grid);
        if (j.contains("inference")) c.inference = inference_from_string(j.at("inference").get<std::string>());
        if (j.contains("tree_method"))
            c.tree_method = tree_build_method_from_string(j.at("tree_method").get<std::string>());
        if (j.contains("gibbs")) {
            const json& g = j.at("gibbs");
            check_keys(g, {"n_chains", "n_steps", "predict_mode", "quadrature_order"}, "gibbs");
            read(g, "n_chains", c.gibbs.n_chains);
            read(g, "n_steps", c.gibbs.n_steps);
            if (g.contains("predict_mode"))
                c.gibbs.predict_mode = predict_mode_from_string(g.at("predict_mode").get<std::string>());
            read(g, "quadrature_order", c.gibbs.quadrature_order);
        }
        if (j.contains("vi")) {
            const json& v = j.at("vi");
            check_keys(v, {"epochs", "batch_size", "learning_rate", "inducing_per_class", "predict_mode", "quadrature_order"},
                       "vi");
            read(v, "epochs", c.vi.epochs);
            read(v, "batch_size", c.vi.batch_size);
            read(v, "learning_rate", c.vi.learning_rate);
            read(v, "inducing_per_class", c.inducing_per_class);
            if (v.contains("predict_mode"))
                c.vi.predict_mode = predict_mode_from_string(v.at("predict_mode").get<std::string>());
            read(v, "quadrature_order", c.vi.quadrature_order);
        }
        if (j.contains("sessions")) {
            const json& s = j.at("sessions");
            check_keys(s, {"n_base", "way", "shot", "n_sessions", "mode"}, "sessions");
            read(s, "n_base", c.sessions.n_base);
            read(s, "way", c.sessions.way);
            read(s, "shot", c.sessions.shot);
            read(s, "n_sessions", c.sessions.n_sessions);
            if (s.contains("mode")) c.sessions.mode = expansion_mode_from_string(s.at("mode").get<std::string>());
        }
        if (j.contains("sweep")) {
            const json& s = j.at("sweep");
            check_keys(s, {"class_counts", "chain_counts", "methods", "repeats"}, "sweep");
            read(s, "class_counts", c.sweep.class_counts);
            read(s, "chain_counts", c.sweep.chain_counts);
            read(s, "methods", c.sweep.methods);
            read(s, "repeats", c.sweep.repeats);
        }
        if (j.contains("seed")) {
            if (j.at("seed").is_null()) c.seed.reset();
            else c.seed = j.at("seed").get<std::uint64_t>();
        }
        read(j, "artifact", c.artifact);
        read(j, "eval_split", c.eval_split);
        read(j, "output_dir", c.output_dir);
        read(j, "workers", c.workers);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

json to_json(const RunConfig& c) {
    return {
        {"command", c.command},
        {"data",
         {{"features", c.data.features},
          {"labels", c.data.labels},
          {"splits", c.data.splits},
          {"val_fraction", c.data.val_fraction},
          {"test_fraction", c.data.test_fraction}}},
        {"kernel", kernel_to_json(c.kernel)},
        {"outputscale_grid", c.outputscale_grid},
        {"inference", to_string(c.inference)},
        {"tree_method", to_string(c.tree_method)},
        {"gibbs",
         {{"n_chains", c.gibbs.n_chains},
          {"n_steps", c.gibbs.n_steps},
          {"predict_mode", to_string(c.gibbs.predict_mode)},
          {"quadrature_order", c.gibbs.quadrature_order}}},
        {"vi",
         {{"epochs", c.vi.epochs},
          {"batch_size", c.vi.batch_size},
          {"learning_rate", c.vi.learning_rate},
          {"inducing_per_class", c.inducing_per_class},
          {"predict_mode", to_string(c.vi.predict_mode)},
          {"quadrature_order", c.vi.quadrature_order}}},
        {"sessions",
         {{"n_base", c.sessions.n_base},
          {"way", c.sessions.way},
          {"shot", c.sessions.shot},
          {"n_sessions", c.sessions.n_sessions},
          {"mode", to_string(c.sessions.mode)}}},
        {"sweep",
         {{"class_counts", c.sweep.class_counts},
          {"chain_counts", c.sweep.chain_counts},
          {"methods", c.sweep.methods},
          {"repeats", c.sweep.repeats}}},
        {"seed", c.seed ? json(*c.seed) : json(nullptr)},
        {"artifact", c.artifact},
        {"eval_split", c.eval_split},
        {"output_dir", c.output_dir},
        // worker count is left out on purpose: results do not depend on it
    };
}

void RunConfig::validate() const {
    static const std::set<std::string> commands{"train-base", "class-sweep", "incremental",
                                                "chain-sweep", "eval",       "inspect-artifact"};
    if (!commands.count(command)) throw ConfigError("unknown command '" + command + "'");
    if (!seed) throw ConfigError("a seed is required (--seed or \"seed\" in the config)");
    if (output_dir.empty()) throw ConfigError("an output directory is required (--out)");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    kernel.validate();
    for (double s : outputscale_grid)
        if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("outputscale_grid values must be positive");
    if (!outputscale_grid.empty() && command != "train-base" && command != "class-sweep" && command != "chain-sweep")
        throw ConfigError("outputscale_grid applies to train-base, class-sweep and chain-sweep only");
    gibbs.validate();
    vi.validate();

    const bool needs_data = command != "inspect-artifact";
    if (needs_data && data.features.empty()) throw ConfigError("data.features is required");
    if (needs_data && data.splits.empty() &&
        !(data.val_fraction >= 0.0 && data.test_fraction >= 0.0 && data.val_fraction + data.test_fraction < 1.0))
        throw ConfigError("split fractions must be nonnegative and sum to less than 1");
    if ((command == "eval" || command == "inspect-artifact") && artifact.empty())
        throw ConfigError("command '" + command + "' needs an artifact path");
    split_from_string(eval_split);
    if (inducing_per_class < 1) throw ConfigError("vi.inducing_per_class must be >= 1");

    if (command == "class-sweep") {
        if (sweep.class_counts.empty()) throw ConfigError("sweep.class_counts is required");
        for (int k : sweep.class_counts)
            if (k < 2) throw ConfigError("class counts must be >= 2");
        if (sweep.methods.empty()) throw ConfigError("sweep.methods is empty");
        for (const std::string& m : sweep.methods) tree_build_method_from_string(m);
    }
    if (command == "chain-sweep") {
        if (sweep.chain_counts.empty()) throw ConfigError("sweep.chain_counts is required");
        for (int k : sweep.chain_counts)
            if (k < 1) throw ConfigError("chain counts must be >= 1");
    }
    if (sweep.repeats < 1) throw ConfigError("sweep.repeats must be >= 1");
    if (command == "incremental") {
        if (sessions.n_base < 2) throw ConfigError("sessions.n_base must be >= 2");
        if (sessions.way < 1 || sessions.shot < 1 || sessions.n_sessions < 0)
            throw ConfigError("sessions need way >= 1, shot >= 1, n_sessions >= 0");
    }
}

}  // namespace gptree::cli
