#include "gptree/artifact.hpp"

#include "gptree/errors.hpp"
#include "gptree/version.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace gptree {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "artifact tensors are little-endian");

namespace {

constexpr std::array<char, 8> kMagic{'G', 'P', 'T', 'R', 'E', 'E', '\0', '\0'};

class TensorWriter {
public:
    json put(const MatrixXd& m) {
        json ref = {{"offset", blob_.size()}, {"rows", m.rows()}, {"cols", m.cols()}};
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) blob_.push_back(m(i, j));
        return ref;
    }
    json put(const VectorXd& v) {
        json ref = {{"offset", blob_.size()}, {"rows", v.size()}};
        blob_.insert(blob_.end(), v.data(), v.data() + v.size());
        return ref;
    }
    const std::vector<double>& blob() const { return blob_; }

private:
    std::vector<double> blob_;
};

class TensorReader {
public:
    explicit TensorReader(const std::vector<double>& blob) : blob_(blob) {}

    MatrixXd matrix(const json& ref) const {
        const auto [offset, rows, cols] = extent(ref, ref.at("cols").get<std::int64_t>());
        MatrixXd m(rows, cols);
        for (std::int64_t i = 0; i < rows; ++i)
            for (std::int64_t j = 0; j < cols; ++j) m(i, j) = blob_[offset + static_cast<std::size_t>(i * cols + j)];
        return m;
    }
    VectorXd vector(const json& ref) const {
        if (ref.contains("cols")) throw FormatError("expected a vector tensor");
        const auto [offset, rows, cols] = extent(ref, 1);
        VectorXd v(rows);
        for (std::int64_t i = 0; i < rows; ++i) v[i] = blob_[offset + static_cast<std::size_t>(i)];
        return v;
    }

private:
    struct Extent {
        std::size_t offset;
        std::int64_t rows;
        std::int64_t cols;
    };
    Extent extent(const json& ref, std::int64_t cols) const {
        const auto offset = ref.at("offset").get<std::uint64_t>();
        const auto rows = ref.at("rows").get<std::int64_t>();
        if (rows < 0 || cols < 0) throw FormatError("negative tensor shape");
        const auto count = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
        if (offset > blob_.size() || count > blob_.size() - offset) throw FormatError("tensor extends past the payload");
        return {static_cast<std::size_t>(offset), rows, cols};
    }
    const std::vector<double>& blob_;
};

json gibbs_config_to_json(const GibbsConfig& c) {
    return {{"n_chains", c.n_chains},
            {"n_steps", c.n_steps},
            {"predict_mode", to_string(c.predict_mode)},
            {"quadrature_order", c.quadrature_order}};
}

GibbsConfig gibbs_config_from_json(const json& j) {
    GibbsConfig c;
    c.n_chains = j.at("n_chains").get<int>();
    c.n_steps = j.at("n_steps").get<int>();
    c.predict_mode = predict_mode_from_string(j.at("predict_mode").get<std::string>());
    c.quadrature_order = j.at("quadrature_order").get<int>();
    return c;
}

json classifier_to_json(const NodeClassifier& clf, TensorWriter& w) {
    if (const auto* g = std::get_if<NodeGibbsModel>(&clf)) {
        json chains = json::array();
        for (const ChainState& ch : g->chains())
            chains.push_back({{"omega", w.put(ch.omega)},
                              {"f", w.put(ch.f)},
                              {"steps_taken", ch.steps_taken},
                              {"rng_seed", ch.rng.seed()},
                              {"rng_stream", ch.rng.stream_id()},
                              {"rng_state", ch.rng.state()}});
        return {{"type", "gibbs"},
                {"kernel", kernel_to_json(g->kernel())},
                {"config", gibbs_config_to_json(g->config())},
                {"features", w.put(g->features())},
                {"labels", g->labels()},
                {"chains", std::move(chains)}};
    }
    if (const auto* v = std::get_if<NodeVIModel>(&clf)) {
        return {{"type", "vi"},
                {"kernel", kernel_to_json(v->kernel())},
                {"inducing_rows", v->inducing_rows()},
                {"locations", w.put(v->inducing_locations())},
                {"eta", w.put(v->eta())},
                {"H", w.put(v->H())},
                {"mean", w.put(v->mean())},
                {"cov", w.put(v->cov())}};
    }
    return nullptr;
}

NodeClassifier classifier_from_json(const json& j, const TensorReader& r) {
    if (j.is_null()) return std::monostate{};
    const std::string type = j.at("type").get<std::string>();
    const KernelSpec kernel = kernel_from_json(j.at("kernel"));
    if (type == "gibbs") {
        std::vector<ChainState> chains;
        for (const json& cj : j.at("chains")) {
            ChainState ch;
            ch.omega = r.vector(cj.at("omega"));
            ch.f = r.vector(cj.at("f"));
            ch.steps_taken = cj.at("steps_taken").get<int>();
            ch.rng = RngStream::restore(cj.at("rng_seed").get<std::uint64_t>(), cj.at("rng_stream").get<std::uint64_t>(),
                                        cj.at("rng_state").get<std::string>());
            chains.push_back(std::move(ch));
        }
        return NodeGibbsModel::restore(r.matrix(j.at("features")), j.at("labels").get<std::vector<int>>(), kernel,
                                       gibbs_config_from_json(j.at("config")), std::move(chains));
    }
    if (type == "vi") {
        return NodeVIModel::restore(r.matrix(j.at("locations")), j.at("inducing_rows").get<std::vector<int>>(), kernel,
                                    r.vector(j.at("eta")), r.matrix(j.at("H")), r.vector(j.at("mean")),
                                    r.matrix(j.at("cov")));
    }
    throw FormatError("unknown classifier type '" + type + "'");
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw FormatError(std::string("truncated artifact while reading ") + what);
    return v;
}

struct RawArtifact {
    json manifest;
    std::vector<double> blob;
};

RawArtifact read_raw(const fs::path& path, bool with_tensors) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open artifact " + path.string());
    const std::uintmax_t file_size = fs::file_size(path);

    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 8 || magic != kMagic) throw FormatError(path.string() + " is not a model artifact (bad magic)");
    const auto version = read_pod<std::uint32_t>(in, "version");
    if (version != kArtifactFormatVersion)
        throw VersionMismatch("artifact format version " + std::to_string(version) + ", this build reads version " +
                              std::to_string(kArtifactFormatVersion));
    const auto manifest_len = read_pod<std::uint64_t>(in, "manifest length");
    if (manifest_len > file_size) throw FormatError("manifest length exceeds the file size");
    std::string text(manifest_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(manifest_len));
    if (static_cast<std::uint64_t>(in.gcount()) != manifest_len) throw FormatError("truncated manifest");

    RawArtifact raw;
    try {
        raw.manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("unparsable manifest: ") + e.what());
    }
    const auto blob_bytes = read_pod<std::uint64_t>(in, "payload length");
    const std::uintmax_t header = 8 + 4 + 8 + manifest_len + 8;
    if (blob_bytes % sizeof(double) != 0 || header + blob_bytes != file_size)
        throw FormatError("payload length " + std::to_string(blob_bytes) + " does not match the file size");
    if (with_tensors) {
        raw.blob.resize(blob_bytes / sizeof(double));
        in.read(reinterpret_cast<char*>(raw.blob.data()), static_cast<std::streamsize>(blob_bytes));
        if (static_cast<std::uint64_t>(in.gcount()) != blob_bytes) throw FormatError("truncated payload");
    }
    return raw;
}

}  // namespace

// ---------------------------------------------------------------------------

json kernel_to_json(const KernelSpec& spec) {
    return {{"family", to_string(spec.family)},
            {"lengthscale", spec.lengthscale},
            {"outputscale", spec.outputscale},
            {"normalize_inputs", spec.normalize_inputs}};
}

KernelSpec kernel_from_json(const json& j) {
    static const std::set<std::string> known{"family", "lengthscale", "outputscale", "normalize_inputs"};
    if (!j.is_object()) throw ConfigError("kernel must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown kernel field '" + key + "'");
    KernelSpec s;
    try {
        if (j.contains("family")) s.family = kernel_family_from_string(j.at("family").get<std::string>());
        if (j.contains("lengthscale")) s.lengthscale = j.at("lengthscale").get<double>();
        if (j.contains("outputscale")) s.outputscale = j.at("outputscale").get<double>();
        if (j.contains("normalize_inputs")) s.normalize_inputs = j.at("normalize_inputs").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad kernel field: ") + e.what());
    }
    s.validate();
    return s;
}

std::uint64_t classifier_fingerprint(const NodeClassifier& classifier) {
    TensorWriter w;
    const std::string text = classifier_to_json(classifier, w).dump();
    std::uint64_t h = mix64(text.size());
    for (unsigned char c : text) h = mix64(h ^ c);
    for (double v : w.blob()) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
    return h;
}

ModelArtifact make_artifact(const BaseArtifact& base) {
    ModelArtifact a;
    a.tree = base.tree();
    a.base_kernel = base.base_kernel();
    a.novel_kernel = base.novel_kernel();
    a.inducing = base.inducing();
    return a;
}

ModelArtifact make_artifact(const BaseArtifact& base, const NovelStore& store, const ExpandedModel& model) {
    ModelArtifact a = make_artifact(base);
    a.tree = model.tree;
    a.novel = store;
    a.mode = model.mode;
    a.base_root = model.base_root;
    a.sessions = model.sessions;
    return a;
}

BaseArtifact base_of(const ModelArtifact& artifact) {
    if (artifact.inducing.size() == 0) throw std::invalid_argument("artifact has no inducing store");
    if (artifact.base_root < 0) throw std::invalid_argument("artifact no longer holds the base tree");
    // The base subtree is the node range rooted at base_root; rebuild it as a tree.
    const LabelTree& t = artifact.tree;
    std::vector<TreeNode> nodes;
    std::vector<int> remap(t.size(), -1);
    std::vector<int> stack{artifact.base_root};
    std::vector<int> order;
    // pre-order keeps ids increasing from parents to children
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        order.push_back(id);
        const TreeNode& n = t.node(id);
        if (!n.is_leaf()) {
            stack.push_back(n.right);
            stack.push_back(n.left);
        }
    }
    for (std::size_t i = 0; i < order.size(); ++i) remap[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    for (int id : order) {
        TreeNode n = t.node(id);
        n.parent = id == artifact.base_root ? -1 : remap[static_cast<std::size_t>(n.parent)];
        if (!n.is_leaf()) {
            n.left = remap[static_cast<std::size_t>(n.left)];
            n.right = remap[static_cast<std::size_t>(n.right)];
        }
        nodes.push_back(std::move(n));
    }
    return finalize_base(LabelTree::from_nodes(std::move(nodes)), artifact.inducing, artifact.base_kernel,
                         artifact.novel_kernel);
}

ExpandedModel expanded_of(const ModelArtifact& artifact) {
    ExpandedModel m;
    m.tree = artifact.tree;
    m.mode = artifact.mode;
    m.base_root = artifact.base_root;
    m.sessions = artifact.sessions;
    return m;
}

void save_artifact(const ModelArtifact& artifact, const fs::path& path) {
    TensorWriter w;
    json nodes = json::array();
    for (const TreeNode& n : artifact.tree.nodes())
        nodes.push_back({{"classes", n.classes},
                         {"parent", n.parent},
                         {"left", n.left},
                         {"right", n.right},
                         {"classifier", classifier_to_json(n.classifier, w)}});

    json novel_sessions = json::array();
    const NovelStore& ns = artifact.novel;
    for (std::size_t s = 0; s < ns.session_classes().size(); ++s) {
        const auto rows = ns.rows_of_sessions(s, s);
        std::vector<int> labels;
        for (std::size_t r : rows) labels.push_back(ns.labels()[r]);
        novel_sessions.push_back({{"features", w.put(select_rows(ns.features(), rows))}, {"labels", labels}});
    }

    const json manifest = {
        {"format", "gptree-model"},
        {"format_version", kArtifactFormatVersion},
        {"library_version", std::string(kVersion)},
        {"base_kernel", kernel_to_json(artifact.base_kernel)},
        {"novel_kernel", kernel_to_json(artifact.novel_kernel)},
        {"expansion", {{"mode", to_string(artifact.mode)}, {"base_root", artifact.base_root}, {"sessions", artifact.sessions}}},
        {"tree", {{"classes", artifact.tree.classes()}, {"nodes", std::move(nodes)}}},
        {"inducing",
         {{"locations", w.put(artifact.inducing.locations)},
          {"labels", artifact.inducing.labels},
          {"per_class", artifact.inducing.per_class}}},
        {"novel_sessions", std::move(novel_sessions)},
        {"metadata", artifact.metadata},
    };

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write artifact " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, kArtifactFormatVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto& blob = w.blob();
    write_pod(out, static_cast<std::uint64_t>(blob.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(double)));
    if (!out) throw FormatError("failed writing artifact " + path.string());
}

json read_manifest(const fs::path& path) { return read_raw(path, false).manifest; }

ModelArtifact load_artifact(const fs::path& path) {
    const RawArtifact raw = read_raw(path, true);
    const json& m = raw.manifest;
    const TensorReader r(raw.blob);
    ModelArtifact a;
    try {
        if (m.at("format").get<std::string>() != "gptree-model") throw FormatError("manifest has the wrong format tag");
        if (m.at("format_version").get<std::uint32_t>() != kArtifactFormatVersion)
            throw VersionMismatch("manifest format_version differs from the container version");
        a.base_kernel = kernel_from_json(m.at("base_kernel"));
        a.novel_kernel = kernel_from_json(m.at("novel_kernel"));
        const json& ex = m.at("expansion");
        a.mode = expansion_mode_from_string(ex.at("mode").get<std::string>());
        a.base_root = ex.at("base_root").get<int>();
        a.sessions = ex.at("sessions").get<std::size_t>();

        std::vector<TreeNode> nodes;
        for (const json& nj : m.at("tree").at("nodes")) {
            TreeNode n;
            n.classes = nj.at("classes").get<std::vector<int>>();
            n.parent = nj.at("parent").get<int>();
            n.left = nj.at("left").get<int>();
            n.right = nj.at("right").get<int>();
            n.classifier = classifier_from_json(nj.at("classifier"), r);
            nodes.push_back(std::move(n));
        }
        a.tree = LabelTree::from_nodes(std::move(nodes));

        const json& ind = m.at("inducing");
        a.inducing.locations = r.matrix(ind.at("locations"));
        a.inducing.labels = ind.at("labels").get<std::vector<int>>();
        a.inducing.per_class = ind.at("per_class").get<int>();
        if (static_cast<std::size_t>(a.inducing.locations.rows()) != a.inducing.labels.size())
            throw FormatError("inducing locations and labels differ in length");

        for (const json& sj : m.at("novel_sessions"))
            a.novel.add_session(r.matrix(sj.at("features")), sj.at("labels").get<std::vector<int>>());
        a.metadata = m.at("metadata");
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("manifest holds an invalid setting: ") + e.what());
    }
    return a;
}

}  // namespace gptree
