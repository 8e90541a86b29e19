#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace usm {

enum class Split { Train, Val, Test };

const char* split_name(Split split);
/// Throws ParseError for anything but train/val/test.
Split parse_split(std::string_view name);

struct ManifestRecord {
    std::string id;
    std::string image_path;
    std::string feature_path;
    std::string maskset_path;
    std::optional<std::string> label_path;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// One split's tile list. Paths are stored as written and resolved against base_dir.
struct SplitManifest {
    Split split = Split::Train;
    std::vector<ManifestRecord> records;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& p) const;
};

/// Tab-separated records, one per line; duplicate ids and short lines are ParseErrors.
SplitManifest parse_manifest(std::string_view text, Split split);
std::string serialize_manifest(const SplitManifest& manifest);

/// Split is inferred from the file stem (train/val/test); other names default to train.
/// With verify_files, a DataError lists every referenced file that does not exist.
SplitManifest load_manifest(const std::filesystem::path& path, bool verify_files = true);
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path);

/// Missing files per record as "id: path" strings.
std::vector<std::string> missing_files(const SplitManifest& manifest);

}  // namespace usm
