#pragma once

#include "gptree/math_core.hpp"
#include "gptree/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gptree {

enum class Split : std::uint8_t { Train, Val, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Dataset {
    MatrixXd features;                     // n x d
    std::vector<int> labels;               // in [0, num_classes)
    int num_classes = 0;
    std::vector<std::string> class_names;  // optional
    std::vector<Split> splits;             // empty means every row is Train

    std::size_t size() const { return labels.size(); }
    Eigen::Index dim() const { return features.cols(); }
    Split split_of(std::size_t row) const { return splits.empty() ? Split::Train : splits[row]; }
    std::vector<std::size_t> rows(Split split) const;
    /// Sorted distinct labels of the given split.
    std::vector<int> classes_in(Split split) const;
    /// Throws LabelRangeError, DimensionMismatch.
    void validate() const;
};

/// Rows and labels picked out of a dataset.
struct DataView {
    MatrixXd features;
    std::vector<int> labels;
};

DataView take_rows(const Dataset& data, const std::vector<std::size_t>& rows);

/// Binary features: `<path>` holds n*d little-endian float32 values row-major,
/// `<path>.json` the header {"format","version","n","d","dtype","endianness","C"}.
/// Files ending in .csv are read as comma-separated text; without a labels
/// path the last CSV column is the label. Labels files hold one integer per
/// line. Throws FormatError, LabelRangeError.
Dataset load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& labels_path = {});

void save_features_f32(const std::filesystem::path& path, const MatrixXd& features, int num_classes);
void save_features_csv(const std::filesystem::path& path, const MatrixXd& features, const std::vector<int>& labels);
std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<int>& labels);
/// One of train/val/test per line.
std::vector<Split> load_splits(const std::filesystem::path& path);

/// Per-class seeded split: round(val_fraction * n_c) rows to Val,
/// round(test_fraction * n_c) to Test, the rest to Train (at least one).
std::vector<Split> stratified_splits(const std::vector<int>& labels, double val_fraction, double test_fraction,
                                     const RngStream& rng);

struct NovelSession {
    std::vector<int> classes;
    int shots = 0;
};

struct SessionPlan {
    std::vector<int> base_classes;
    std::vector<NovelSession> novel_sessions;
    std::uint64_t seed = 0;

    std::size_t total_sessions() const { return 1 + novel_sessions.size(); }
    /// Classes introduced in session s (0 = base).
    const std::vector<int>& session_classes(std::size_t s) const;
};

/// Train rows used to fit a session and test rows of its classes.
struct SessionRows {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct PlannedSessions {
    SessionPlan plan;
    std::vector<SessionRows> sessions;  // index 0 is the base session
};

/// Base session: the first `n_base` train classes (ascending ids) with all
/// their train rows. Novel session s: the next `way` classes, `shot` train
/// rows per class drawn from rng.derive(class). Test rows are the Test-split
/// rows of each session's classes. Throws InsufficientClasses, InsufficientShots.
PlannedSessions make_session_plan(const Dataset& data, int n_base, int way, int shot, int n_sessions,
                                  const RngStream& rng);

}  // namespace gptree
