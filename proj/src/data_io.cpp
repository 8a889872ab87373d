#include "gptree/data_io.hpp"

#include "gptree/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gptree {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature files are little-endian");

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "unknown";
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw FormatError("unknown split tag '" + std::string(name) + "'");
}

std::vector<std::size_t> Dataset::rows(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
        if (split_of(i) == split) out.push_back(i);
    return out;
}

std::vector<int> Dataset::classes_in(Split split) const {
    std::set<int> s;
    for (std::size_t i = 0; i < size(); ++i)
        if (split_of(i) == split) s.insert(labels[i]);
    return {s.begin(), s.end()};
}

void Dataset::validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw DimensionMismatch("feature rows (" + std::to_string(features.rows()) + ") differ from label count (" +
                                std::to_string(labels.size()) + ")");
    if (!splits.empty() && splits.size() != labels.size())
        throw DimensionMismatch("split tags differ in length from labels");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw LabelRangeError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(num_classes))
        throw DimensionMismatch("class name count differs from the class count");
}

DataView take_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
    DataView v;
    v.features = select_rows(data.features, rows);
    v.labels.reserve(rows.size());
    for (std::size_t r : rows) v.labels.push_back(data.labels.at(r));
    return v;
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<std::string_view> content_lines(const std::string& text) {
    std::vector<std::string_view> lines;
    std::string_view rest(text);
    while (!rest.empty()) {
        const std::size_t nl = rest.find('\n');
        std::string_view line = trim(rest.substr(0, nl));
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (line.empty() || line.front() == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

struct CsvTable {
    MatrixXd values;
    std::vector<int> last_column;
};

CsvTable read_csv(const fs::path& path, bool label_column) {
    const std::string text = read_text(path);
    const auto lines = content_lines(text);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const auto fields = split_fields(lines[li]);
        std::vector<double> row;
        bool ok = true;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            double v = 0.0;
            if (!parse_number(fields[f], v)) {
                ok = false;
                break;
            }
            row.push_back(v);
        }
        if (!ok) {
            if (li == 0 && rows.empty()) continue;  // header line
            throw FormatError(path.string() + ": unparsable value on data line " + std::to_string(li + 1));
        }
        if (label_column) {
            if (row.size() < 2) throw FormatError(path.string() + ": need at least one feature and a label column");
            const double y = row.back();
            if (y != std::floor(y)) throw FormatError(path.string() + ": non-integer label " + std::to_string(y));
            labels.push_back(static_cast<int>(y));
            row.pop_back();
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(path.string() + ": ragged row on data line " + std::to_string(li + 1));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": no data rows");
    CsvTable t;
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    t.last_column = std::move(labels);
    return t;
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

bool is_csv(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

}  // namespace

Dataset load_dataset(const fs::path& features_path, const fs::path& labels_path) {
    Dataset data;
    if (!fs::exists(features_path)) throw FormatError("feature file " + features_path.string() + " does not exist");
    int header_classes = -1;

    if (is_csv(features_path)) {
        CsvTable t = read_csv(features_path, labels_path.empty());
        data.features = std::move(t.values);
        if (labels_path.empty()) data.labels = std::move(t.last_column);
    } else {
        json header;
        try {
            header = json::parse(read_text(sidecar_path(features_path)));
        } catch (const json::exception& e) {
            throw FormatError("bad feature header " + sidecar_path(features_path).string() + ": " + e.what());
        }
        try {
            if (header.at("format").get<std::string>() != "gptree-features")
                throw FormatError("feature header has the wrong format tag");
            if (header.at("version").get<int>() != 1) throw FormatError("unsupported feature header version");
            if (header.at("dtype").get<std::string>() != "f32") throw FormatError("feature dtype must be f32");
            if (header.at("endianness").get<std::string>() != "little")
                throw FormatError("feature payload must be little-endian");
            const auto n = header.at("n").get<std::int64_t>();
            const auto d = header.at("d").get<std::int64_t>();
            if (n < 0 || d < 1) throw FormatError("feature header has an invalid shape");
            if (header.contains("C")) header_classes = header.at("C").get<int>();
            if (header.contains("class_names")) data.class_names = header.at("class_names").get<std::vector<std::string>>();

            const std::uintmax_t expected = static_cast<std::uintmax_t>(n) * static_cast<std::uintmax_t>(d) * 4u;
            const std::uintmax_t actual = fs::file_size(features_path);
            if (actual != expected)
                throw FormatError("feature payload holds " + std::to_string(actual) + " bytes but the header promises " +
                                  std::to_string(expected));
            std::vector<float> raw(static_cast<std::size_t>(n * d));
            std::ifstream in(features_path, std::ios::binary);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
            if (!in) throw FormatError("short read from " + features_path.string());
            data.features.resize(n, d);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < d; ++j)
                    data.features(i, j) = static_cast<double>(raw[static_cast<std::size_t>(i * d + j)]);
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad feature header field: ") + e.what());
        }
        if (labels_path.empty()) throw FormatError("binary features need a labels file");
    }

    if (!labels_path.empty()) data.labels = load_labels(labels_path);
    if (static_cast<std::size_t>(data.features.rows()) != data.labels.size())
        throw FormatError("feature rows (" + std::to_string(data.features.rows()) + ") differ from label count (" +
                          std::to_string(data.labels.size()) + ")");
    for (int y : data.labels)
        if (y < 0) throw LabelRangeError("negative label " + std::to_string(y));
    if (header_classes >= 0) {
        data.num_classes = header_classes;
    } else {
        data.num_classes = data.labels.empty() ? 0 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
    }
    if (!data.features.allFinite()) throw FormatError("features contain non-finite values");
    data.validate();
    return data;
}

void save_features_f32(const fs::path& path, const MatrixXd& features, int num_classes) {
    std::vector<float> raw(static_cast<std::size_t>(features.size()));
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        for (Eigen::Index j = 0; j < features.cols(); ++j)
            raw[static_cast<std::size_t>(i * features.cols() + j)] = static_cast<float>(features(i, j));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    const json header = {{"format", "gptree-features"}, {"version", 1},        {"n", features.rows()},
                         {"d", features.cols()},        {"dtype", "f32"},     {"endianness", "little"},
                         {"C", num_classes}};
    std::ofstream side(sidecar_path(path), std::ios::trunc);
    if (!side) throw FormatError("cannot write " + sidecar_path(path).string());
    side << header.dump(2) << '\n';
}

void save_features_csv(const fs::path& path, const MatrixXd& features, const std::vector<int>& labels) {
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(features.rows()))
        throw DimensionMismatch("features and labels differ in length");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.precision(17);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) out << (j ? "," : "") << features(i, j);
        if (!labels.empty()) out << ',' << labels[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

std::vector<int> load_labels(const fs::path& path) {
    if (!fs::exists(path)) throw FormatError("labels file " + path.string() + " does not exist");
    const std::string text = read_text(path);
    std::vector<int> labels;
    std::size_t line_no = 0;
    for (std::string_view line : content_lines(text)) {
        ++line_no;
        int y = 0;
        if (!parse_number(line, y)) throw FormatError(path.string() + ": bad label on line " + std::to_string(line_no));
        labels.push_back(y);
    }
    return labels;
}

void save_labels(const fs::path& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    for (int y : labels) out << y << '\n';
}

std::vector<Split> load_splits(const fs::path& path) {
    if (!fs::exists(path)) throw FormatError("splits file " + path.string() + " does not exist");
    std::vector<Split> out;
    for (std::string_view line : content_lines(read_text(path))) out.push_back(split_from_string(line));
    return out;
}

std::vector<Split> stratified_splits(const std::vector<int>& labels, double val_fraction, double test_fraction,
                                     const RngStream& rng) {
    if (!(val_fraction >= 0.0) || !(test_fraction >= 0.0) || val_fraction + test_fraction >= 1.0)
        throw ConfigError("split fractions must be nonnegative and sum to less than 1");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<Split> out(labels.size(), Split::Train);
    for (auto& [cls, rows] : by_class) {
        RngStream r = rng.derive(static_cast<std::uint64_t>(cls));
        r.shuffle(rows);
        const auto n = static_cast<double>(rows.size());
        auto n_val = static_cast<std::size_t>(std::lround(val_fraction * n));
        auto n_test = static_cast<std::size_t>(std::lround(test_fraction * n));
        while (n_val + n_test >= rows.size() && (n_val > 0 || n_test > 0)) (n_val >= n_test ? n_val : n_test)--;
        for (std::size_t k = 0; k < n_test; ++k) out[rows[k]] = Split::Test;
        for (std::size_t k = n_test; k < n_test + n_val; ++k) out[rows[k]] = Split::Val;
    }
    return out;
}

const std::vector<int>& SessionPlan::session_classes(std::size_t s) const {
    if (s == 0) return base_classes;
    return novel_sessions.at(s - 1).classes;
}

PlannedSessions make_session_plan(const Dataset& data, int n_base, int way, int shot, int n_sessions,
                                  const RngStream& rng) {
    if (n_base < 1 || way < 1 || shot < 1 || n_sessions < 0)
        throw ConfigError("session plan needs n_base, way, shot >= 1 and n_sessions >= 0");
    const std::vector<int> classes = data.classes_in(Split::Train);
    const std::size_t needed = static_cast<std::size_t>(n_base) + static_cast<std::size_t>(way) * n_sessions;
    if (needed > classes.size())
        throw InsufficientClasses("plan needs " + std::to_string(needed) + " classes but the train split has " +
                                  std::to_string(classes.size()));

    std::map<int, std::vector<std::size_t>> train_rows, test_rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Split s = data.split_of(i);
        if (s == Split::Train) train_rows[data.labels[i]].push_back(i);
        else if (s == Split::Test) test_rows[data.labels[i]].push_back(i);
    }

    PlannedSessions out;
    out.plan.seed = rng.seed();
    out.plan.base_classes.assign(classes.begin(), classes.begin() + n_base);
    for (int s = 0; s < n_sessions; ++s) {
        const auto first = classes.begin() + n_base + static_cast<std::ptrdiff_t>(s) * way;
        out.plan.novel_sessions.push_back(NovelSession{{first, first + way}, shot});
    }

    auto add_test = [&](SessionRows& rows, int cls) {
        const auto it = test_rows.find(cls);
        if (it != test_rows.end()) rows.test.insert(rows.test.end(), it->second.begin(), it->second.end());
    };

    SessionRows base;
    for (int c : out.plan.base_classes) {
        base.train.insert(base.train.end(), train_rows[c].begin(), train_rows[c].end());
        add_test(base, c);
    }
    std::sort(base.train.begin(), base.train.end());
    std::sort(base.test.begin(), base.test.end());
    out.sessions.push_back(std::move(base));

    for (const NovelSession& ns : out.plan.novel_sessions) {
        SessionRows rows;
        for (int c : ns.classes) {
            std::vector<std::size_t> pool = train_rows[c];
            if (pool.size() < static_cast<std::size_t>(shot))
                throw InsufficientShots("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                                        " train samples, need " + std::to_string(shot));
            RngStream r = rng.derive(static_cast<std::uint64_t>(c));
            r.shuffle(pool);
            std::sort(pool.begin(), pool.begin() + shot);
            rows.train.insert(rows.train.end(), pool.begin(), pool.begin() + shot);
            add_test(rows, c);
        }
        std::sort(rows.test.begin(), rows.test.end());
        out.sessions.push_back(std::move(rows));
    }
    return out;
}

}  // namespace gptree
