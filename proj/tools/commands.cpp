#include "commands.hpp"

#include "gptree/artifact.hpp"
#include "gptree/version.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace gptree::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return kExitConfig;
        case ErrorKind::Data: return kExitData;
        case ErrorKind::Numerical: return kExitNumerical;
    }
    return kExitInternal;
}

namespace {

// Fixed stream ids below a run seed.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kTreeStream = 2;
constexpr std::uint64_t kInducingStream = 3;
constexpr std::uint64_t kFitStream = 4;
constexpr std::uint64_t kPlanStream = 5;
constexpr std::uint64_t kSessionStream = 6;

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

fs::path prepare_output(const RunConfig& c) {
    const fs::path dir(c.output_dir);
    fs::create_directories(dir);
    const json doc = {{"library_version", std::string(kVersion)}, {"config", to_json(c)}};
    write_file(dir / "config.json", doc.dump(2) + "\n");
    return dir;
}

std::string report_header(const RunConfig& c, const std::string& title) {
    std::ostringstream out;
    out << "# " << title << "\n\n";
    out << "- command: `" << c.command << "`\n";
    out << "- library version: " << kVersion << "\n";
    out << "- seed: " << *c.seed << "\n";
    if (!c.data.features.empty()) out << "- features: `" << c.data.features << "`\n";
    out << "\nThe resolved configuration is in `config.json`.\n\n";
    return out.str();
}

Dataset load_data(const RunConfig& c) {
    Dataset d = load_dataset(c.data.features, c.data.labels);
    if (!c.data.splits.empty()) {
        d.splits = load_splits(c.data.splits);
    } else {
        d.splits = stratified_splits(d.labels, c.data.val_fraction, c.data.test_fraction,
                                     RngStream(*c.seed).derive(kSplitStream));
    }
    d.validate();
    return d;
}

PredictOptions predict_options(const RunConfig& c) {
    if (c.inference == Inference::Gibbs) return {c.gibbs.predict_mode, c.gibbs.quadrature_order};
    return {c.vi.predict_mode, c.vi.quadrature_order};
}

double eval_accuracy(const LabelTree& tree, const DataView& v, const PredictOptions& opts) {
    if (v.labels.empty()) return std::nan("");
    return accuracy(predict_labels(tree, v.features, opts), v.labels);
}

struct FittedBase {
    LabelTree tree;
    std::optional<BaseArtifact> vi_base;
    std::vector<double> elbo_trace;
};

const LabelTree& tree_of(const LabelTree& t) { return t; }
const LabelTree& tree_of(const FittedBase& b) { return b.tree; }

FittedBase fit_base(const RunConfig& c, const KernelSpec& kernel, const DataView& train, Inference inference,
                    const RngStream& rng) {
    const ClassPrototypes protos = class_prototypes(train.features, train.labels);
    RngStream tree_rng = rng.derive(kTreeStream);
    LabelTree structure = build_tree(protos, c.tree_method, {}, tree_rng);
    FittedBase out;
    if (inference == Inference::Gibbs) {
        out.tree = fit_tree_gibbs(std::move(structure), train.features, train.labels, kernel, c.gibbs,
                                  rng.derive(kFitStream), c.workers);
        return out;
    }
    RngStream ind_rng = rng.derive(kInducingStream);
    InducingStore inducing = init_inducing(train.features, train.labels, c.inducing_per_class, ind_rng);
    RngStream fit_rng = rng.derive(kFitStream);
    VITrainTrace trace;
    LabelTree fitted =
        fit_tree_vi(std::move(structure), train.features, train.labels, inducing, kernel, c.vi, fit_rng, &trace);
    out.tree = fitted;
    out.vi_base = finalize_base(std::move(fitted), std::move(inducing), kernel);
    out.elbo_trace = std::move(trace.weighted_elbo);
    return out;
}

struct Selection {
    std::vector<int> order;  // chosen classes in draw order
    DataView train;
    DataView val;
    DataView test;
};

// The same (seed, K, repeat) always selects the same classes in every sweep command.
Selection select_classes(const Dataset& d, std::size_t k, const RngStream& run_rng) {
    std::vector<int> classes = d.classes_in(Split::Train);
    if (k > classes.size())
        throw InsufficientClasses("sweep asks for " + std::to_string(k) + " classes but the train split has " +
                                  std::to_string(classes.size()));
    RngStream r = run_rng.derive(0);
    r.shuffle(classes);
    Selection s;
    s.order.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<int> sorted = s.order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> tr, va, te;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!std::binary_search(sorted.begin(), sorted.end(), d.labels[i])) continue;
        if (d.split_of(i) == Split::Train) tr.push_back(i);
        else if (d.split_of(i) == Split::Val) va.push_back(i);
        else te.push_back(i);
    }
    if (te.empty()) throw EmptyClass("the chosen classes have no test samples");
    s.train = take_rows(d, tr);
    s.val = take_rows(d, va);
    s.test = take_rows(d, te);
    return s;
}

// Fits once per candidate outputscale (or once with the configured kernel) and keeps the candidate with the
// best validation accuracy; ties go to the earlier candidate.
template <class Fit>
auto fit_with_grid(const RunConfig& c, const DataView& val, const PredictOptions& opts, Fit&& fit) {
    if (c.outputscale_grid.empty()) return std::pair{fit(c.kernel), c.kernel.outputscale};
    if (val.labels.empty()) throw EmptyClass("outputscale grid search needs validation samples");
    std::optional<decltype(fit(c.kernel))> best;
    double best_acc = -1.0, best_scale = 0.0;
    for (double scale : c.outputscale_grid) {
        KernelSpec k = c.kernel;
        k.outputscale = scale;
        auto candidate = fit(k);
        const double acc = eval_accuracy(tree_of(candidate), val, opts);
        if (acc > best_acc) {
            best_acc = acc;
            best_scale = scale;
            best = std::move(candidate);
        }
    }
    return std::pair{std::move(*best), best_scale};
}

double sweep_accuracy(const RunConfig& c, const Selection& s, TreeBuildMethod method, const GibbsConfig& gibbs,
                      const RngStream& run_rng) {
    PredictOptions opts = predict_options(c);
    if (c.inference == Inference::Gibbs) opts = {gibbs.predict_mode, gibbs.quadrature_order};
    const auto fit = [&](const KernelSpec& kernel) {
        const ClassPrototypes protos = class_prototypes(s.train.features, s.train.labels);
        RngStream tree_rng = run_rng.derive(100 + static_cast<std::uint64_t>(method));
        LabelTree structure = build_tree(protos, method, s.order, tree_rng);
        if (c.inference == Inference::Gibbs)
            return fit_tree_gibbs(std::move(structure), s.train.features, s.train.labels, kernel, gibbs,
                                  run_rng.derive(kFitStream), c.workers);
        RngStream ind_rng = run_rng.derive(kInducingStream);
        const InducingStore inducing = init_inducing(s.train.features, s.train.labels, c.inducing_per_class, ind_rng);
        RngStream fit_rng = run_rng.derive(kFitStream);
        return fit_tree_vi(std::move(structure), s.train.features, s.train.labels, inducing, kernel, c.vi, fit_rng);
    };
    return eval_accuracy(fit_with_grid(c, s.val, opts, fit).first, s.test, opts);
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    double var = 0.0;
};

MeanSe summarize(const std::vector<double>& xs) {
    MeanSe m;
    if (xs.empty()) return m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
        m.var /= static_cast<double>(xs.size() - 1);
        m.se = std::sqrt(m.var / static_cast<double>(xs.size()));
    }
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_train_base(const RunConfig& c) {
    const Dataset d = load_data(c);
    const DataView train = take_rows(d, d.rows(Split::Train));
    const DataView val = take_rows(d, d.rows(Split::Val));
    const DataView test = take_rows(d, d.rows(Split::Test));
    const fs::path dir = prepare_output(c);

    const PredictOptions opts = predict_options(c);
    const auto [base, outputscale] = fit_with_grid(c, val, opts, [&](const KernelSpec& kernel) {
        return fit_base(c, kernel, train, c.inference, RngStream(*c.seed));
    });
    ModelArtifact art;
    if (base.vi_base) {
        art = make_artifact(*base.vi_base);
    } else {
        art.tree = base.tree;
        art.base_kernel = c.kernel;
        art.base_kernel.outputscale = outputscale;
    }
    art.metadata = {{"command", c.command}, {"inference", to_string(c.inference)}};
    save_artifact(art, dir / "model.gpt");

    const double train_acc = eval_accuracy(base.tree, train, opts);
    const double val_acc = eval_accuracy(base.tree, val, opts);
    const double test_acc = eval_accuracy(base.tree, test, opts);

    std::ostringstream csv;
    csv << "metric,value\n";
    csv << "num_classes," << base.tree.num_classes() << "\n";
    csv << "tree_depth," << base.tree.depth() << "\n";
    csv << "train_accuracy," << num(train_acc) << "\n";
    csv << "val_accuracy," << num(val_acc) << "\n";
    csv << "test_accuracy," << num(test_acc) << "\n";
    if (!c.outputscale_grid.empty()) csv << "selected_outputscale," << num(outputscale) << "\n";
    if (!base.elbo_trace.empty()) csv << "final_weighted_elbo," << num(base.elbo_trace.back()) << "\n";
    write_file(dir / "metrics.csv", csv.str());

    if (!base.elbo_trace.empty()) {
        std::ostringstream elbo;
        elbo << "epoch,weighted_elbo\n";
        for (std::size_t e = 0; e < base.elbo_trace.size(); ++e) elbo << e + 1 << "," << num(base.elbo_trace[e]) << "\n";
        write_file(dir / "elbo.csv", elbo.str());
    }

    std::ostringstream md;
    md << report_header(c, "Base model training");
    md << "| split | samples | accuracy |\n|---|---|---|\n";
    md << "| train | " << train.labels.size() << " | " << num(train_acc) << " |\n";
    md << "| val | " << val.labels.size() << " | " << num(val_acc) << " |\n";
    md << "| test | " << test.labels.size() << " | " << num(test_acc) << " |\n\n";
    md << "Inference: " << to_string(c.inference) << ", tree method: " << to_string(c.tree_method)
       << ", depth " << base.tree.depth() << ".\n";
    if (!c.outputscale_grid.empty()) md << "Outputscale " << num(outputscale) << " chosen by validation accuracy.\n";
    if (!base.elbo_trace.empty()) md << "Final weighted ELBO: " << num(base.elbo_trace.back()) << ".\n";
    md << "Model written to `model.gpt`.\n";
    write_file(dir / "report.md", md.str());
}

void cmd_eval(const RunConfig& c) {
    const ModelArtifact art = load_artifact(c.artifact);
    const Dataset d = load_data(c);
    const Split split = split_from_string(c.eval_split);
    std::vector<std::size_t> rows;
    std::size_t skipped = 0;
    for (std::size_t r : d.rows(split)) {
        if (art.tree.contains(d.labels[r])) rows.push_back(r);
        else ++skipped;
    }
    const DataView v = take_rows(d, rows);
    const fs::path dir = prepare_output(c);
    const double acc = eval_accuracy(art.tree, v, predict_options(c));

    std::ostringstream csv;
    csv << "split,samples,skipped_unknown_class,accuracy\n";
    csv << c.eval_split << "," << v.labels.size() << "," << skipped << "," << num(acc) << "\n";
    write_file(dir / "metrics.csv", csv.str());

    std::ostringstream md;
    md << report_header(c, "Evaluation");
    md << "Artifact `" << c.artifact << "` on the " << c.eval_split << " split: accuracy " << num(acc) << " over "
       << v.labels.size() << " samples";
    if (skipped) md << " (" << skipped << " samples of classes unknown to the model skipped)";
    md << ".\n";
    write_file(dir / "report.md", md.str());
}

void cmd_inspect_artifact(const RunConfig& c) {
    const json manifest = read_manifest(c.artifact);
    const ModelArtifact art = load_artifact(c.artifact);
    const fs::path dir = prepare_output(c);

    std::ostringstream csv;
    csv << "node,parent,left,right,num_classes,classifier,fingerprint\n";
    for (std::size_t id = 0; id < art.tree.size(); ++id) {
        const TreeNode& n = art.tree.nodes()[id];
        const char* type = std::holds_alternative<NodeGibbsModel>(n.classifier) ? "gibbs"
                           : std::holds_alternative<NodeVIModel>(n.classifier) ? "vi"
                                                                                : "leaf";
        csv << id << "," << n.parent << "," << n.left << "," << n.right << "," << n.classes.size() << "," << type
            << "," << (n.has_classifier() ? hex(classifier_fingerprint(n.classifier)) : "") << "\n";
    }
    write_file(dir / "metrics.csv", csv.str());

    std::ostringstream md;
    md << "# Artifact summary\n\n";
    md << "- file: `" << c.artifact << "`\n";
    md << "- format version: " << manifest.at("format_version").get<int>() << "\n";
    md << "- written by library version: " << manifest.at("library_version").get<std::string>() << "\n";
    md << "- nodes: " << art.tree.size() << ", classes: " << art.tree.num_classes() << ", depth: " << art.tree.depth()
       << "\n";
    md << "- inducing points: " << art.inducing.size() << "\n";
    md << "- novel sessions: " << art.sessions << " (" << to_string(art.mode) << "), stored embeddings: "
       << art.novel.size() << "\n";
    md << "- base kernel: `" << kernel_to_json(art.base_kernel).dump() << "`\n";
    md << "- novel kernel: `" << kernel_to_json(art.novel_kernel).dump() << "`\n";
    write_file(dir / "report.md", md.str());
    std::cout << md.str();
}

void cmd_class_sweep(const RunConfig& c) {
    const Dataset d = load_data(c);
    const fs::path dir = prepare_output(c);
    std::vector<TreeBuildMethod> methods;
    for (const std::string& m : c.sweep.methods) methods.push_back(tree_build_method_from_string(m));

    std::ostringstream runs;
    runs << "method,classes,repeat,accuracy\n";
    std::map<std::pair<std::size_t, int>, std::vector<double>> acc;  // (method index, K)
    for (int k : c.sweep.class_counts) {
        for (int r = 0; r < c.sweep.repeats; ++r) {
            const RngStream run_rng = RngStream(*c.seed).derive(static_cast<std::uint64_t>(k)).derive(static_cast<std::uint64_t>(r));
            const Selection s = select_classes(d, static_cast<std::size_t>(k), run_rng);
            for (std::size_t mi = 0; mi < methods.size(); ++mi) {
                const double a = sweep_accuracy(c, s, methods[mi], c.gibbs, run_rng);
                acc[{mi, k}].push_back(a);
                runs << c.sweep.methods[mi] << "," << k << "," << r << "," << num(a) << "\n";
            }
        }
    }
    write_file(dir / "runs.csv", runs.str());

    std::ostringstream csv, md;
    csv << "method,classes,mean_accuracy,standard_error,runs\n";
    md << report_header(c, "Accuracy by number of classes");
    md << "Mean test accuracy (%) with standard error over " << c.sweep.repeats << " repeat(s).\n\n| method |";
    for (int k : c.sweep.class_counts) md << " " << k << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < c.sweep.class_counts.size(); ++i) md << "---|";
    md << "\n";
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        md << "| " << c.sweep.methods[mi] << " |";
        for (int k : c.sweep.class_counts) {
            const MeanSe s = summarize(acc[{mi, k}]);
            csv << c.sweep.methods[mi] << "," << k << "," << num(s.mean) << "," << num(s.se) << ","
                << acc[{mi, k}].size() << "\n";
            char cell[64];
            std::snprintf(cell, sizeof cell, " %.2f ± %.2f |", 100.0 * s.mean, 100.0 * s.se);
            md << cell;
        }
        md << "\n";
    }
    write_file(dir / "metrics.csv", csv.str());
    write_file(dir / "report.md", md.str());
}

void cmd_chain_sweep(const RunConfig& c) {
    const Dataset d = load_data(c);
    const fs::path dir = prepare_output(c);
    const std::size_t k = c.sweep.class_counts.empty() ? d.classes_in(Split::Train).size()
                                                       : static_cast<std::size_t>(c.sweep.class_counts.front());
    RunConfig gibbs_run = c;
    gibbs_run.inference = Inference::Gibbs;

    std::ostringstream csv, md;
    csv << "chains,repeat,accuracy\n";
    md << report_header(c, "Accuracy by number of Gibbs chains");
    md << "Gibbs inference over " << k << " classes, tree method " << to_string(c.tree_method) << ".\n\n";
    md << "| chains | mean accuracy | variance | runs |\n|---|---|---|---|\n";
    for (int chains : c.sweep.chain_counts) {
        GibbsConfig g = c.gibbs;
        g.n_chains = chains;
        std::vector<double> accs;
        for (int r = 0; r < c.sweep.repeats; ++r) {
            const RngStream run_rng = RngStream(*c.seed).derive(k).derive(static_cast<std::uint64_t>(r));
            const Selection s = select_classes(d, k, run_rng);
            const double a = sweep_accuracy(gibbs_run, s, c.tree_method, g, run_rng);
            accs.push_back(a);
            csv << chains << "," << r << "," << num(a) << "\n";
        }
        const MeanSe s = summarize(accs);
        md << "| " << chains << " | " << num(s.mean) << " | " << num(s.var) << " | " << accs.size() << " |\n";
    }
    write_file(dir / "metrics.csv", csv.str());
    write_file(dir / "report.md", md.str());
}

void cmd_incremental(const RunConfig& c) {
    const Dataset d = load_data(c);
    const RngStream root(*c.seed);
    const PlannedSessions planned = make_session_plan(d, c.sessions.n_base, c.sessions.way, c.sessions.shot,
                                                      c.sessions.n_sessions, root.derive(kPlanStream));
    const fs::path dir = prepare_output(c);

    const FittedBase fitted = fit_base(c, c.kernel, take_rows(d, planned.sessions[0].train), Inference::VI, root);
    const BaseArtifact& base = *fitted.vi_base;

    IncrementalConfig inc;
    inc.mode = c.sessions.mode;
    inc.gibbs = c.gibbs;
    inc.workers = c.workers;

    std::vector<ExpandedModel> models{base_model(base)};
    NovelStore store;
    for (std::size_t s = 1; s < planned.sessions.size(); ++s) {
        const DataView shots = take_rows(d, planned.sessions[s].train);
        models.push_back(add_novel_session(base, store, shots.features, shots.labels, models.back(), inc,
                                           root.derive(kSessionStream).derive(s)));
    }

    std::vector<SessionTestSet> tests;
    for (const SessionRows& rows : planned.sessions) {
        DataView v = take_rows(d, rows.test);
        tests.push_back({std::move(v.features), std::move(v.labels)});
    }
    const PredictOptions opts{c.vi.predict_mode, c.vi.quadrature_order};
    const SessionReport report = evaluate_sessions(models, tests, opts);

    ModelArtifact art = make_artifact(base, store, models.back());
    art.metadata = {{"command", c.command}, {"sessions", planned.sessions.size()}};
    save_artifact(art, dir / "model.gpt");

    std::ostringstream csv, fg, mat, md;
    csv << "session,num_classes,joint_accuracy\n";
    fg << "session,average_forgetting\n";
    mat << "origin_session,eval_session,accuracy\n";
    md << report_header(c, "Class-incremental sessions");
    md << "Expansion mode " << to_string(c.sessions.mode) << "; " << c.sessions.n_base << " base classes, "
       << c.sessions.way << "-way " << c.sessions.shot << "-shot novel sessions.\n\n";
    md << "| session | classes | joint accuracy | average forgetting |\n|---|---|---|---|\n";
    for (std::size_t k = 0; k < report.sessions(); ++k) {
        const std::size_t n_classes = models[k].tree.num_classes();
        csv << k << "," << n_classes << "," << num(report.joint[k]) << "\n";
        const double f = k >= 1 ? average_forgetting(report, k) : std::nan("");
        if (k >= 1) fg << k << "," << num(f) << "\n";
        for (std::size_t j = 0; j <= k; ++j) mat << j << "," << k << "," << num(report.acc[j][k]) << "\n";
        md << "| " << k << " | " << n_classes << " | " << num(report.joint[k]) << " | " << (k >= 1 ? num(f) : "-")
           << " |\n";
    }
    write_file(dir / "metrics.csv", csv.str());
    write_file(dir / "forgetting.csv", fg.str());
    write_file(dir / "accuracy_matrix.csv", mat.str());
    write_file(dir / "report.md", md.str());
}

void run(const RunConfig& c) {
    c.validate();
    if (c.command == "train-base") cmd_train_base(c);
    else if (c.command == "eval") cmd_eval(c);
    else if (c.command == "inspect-artifact") cmd_inspect_artifact(c);
    else if (c.command == "class-sweep") cmd_class_sweep(c);
    else if (c.command == "chain-sweep") cmd_chain_sweep(c);
    else if (c.command == "incremental") cmd_incremental(c);
}

}  // namespace gptree::cli
