#pragma once

#include "gptree/incremental.hpp"
#include "gptree/kernels.hpp"
#include "gptree/node_gibbs.hpp"
#include "gptree/node_vi.hpp"
#include "gptree/tree.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace gptree {

inline constexpr std::uint32_t kArtifactFormatVersion = 1;

/// Everything needed to predict with, or keep extending, a fitted model.
struct ModelArtifact {
    LabelTree tree;
    KernelSpec base_kernel;
    KernelSpec novel_kernel = default_novel_kernel();
    InducingStore inducing;  // empty for models without a VI base
    NovelStore novel;
    ExpansionMode mode = ExpansionMode::Accumulated;
    int base_root = 0;
    std::size_t sessions = 0;
    nlohmann::json metadata = nlohmann::json::object();
};

ModelArtifact make_artifact(const BaseArtifact& base);
ModelArtifact make_artifact(const BaseArtifact& base, const NovelStore& store, const ExpandedModel& model);
/// Throws std::invalid_argument when the artifact has no VI base.
BaseArtifact base_of(const ModelArtifact& artifact);
ExpandedModel expanded_of(const ModelArtifact& artifact);

/// Container: 8-byte magic "GPTREE\0\0", u32 format version, u64 manifest
/// length, JSON manifest, u64 tensor byte count, little-endian f64 tensors.
void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path);
/// Throws FormatError on structural damage, VersionMismatch on other versions.
ModelArtifact load_artifact(const std::filesystem::path& path);
/// Parsed manifest only (tensors are not read).
nlohmann::json read_manifest(const std::filesystem::path& path);

nlohmann::json kernel_to_json(const KernelSpec& spec);
/// Throws ConfigError on unknown fields or invalid values.
KernelSpec kernel_from_json(const nlohmann::json& j);

/// Hash of a classifier's full serialized payload (structure and values).
std::uint64_t classifier_fingerprint(const NodeClassifier& classifier);

}  // namespace gptree
