#pragma once

// Deterministic synthetic scenes: ground truth, degraded grayscale tile,
// oracle mask proposals and class-conditional patch features.

#include <cstdint>
#include <filesystem>

#include "usm/manifest.hpp"
#include "usm/types.hpp"

namespace usm {

struct SceneConfig {
    int size = 128;
    int K = 5;
    int patch = 8;
    int shapes_per_tile = 10;
    int roads_per_tile = 2;
    int mask_noise = 2;
    double label_noise = 0.2;
    int feature_dim = 16;
    double feature_sigma = 0.35;
    /// Scale of the feature block that follows the true (unflipped) class.
    double appearance_scale = 0.5;
    /// Probability that a segment's mask also swallows one neighbouring segment.
    double merge_rate = 0.15;
    double intensity_noise = 6.0;
    double banding = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Scene {
    ImageTile image;
    LabelMap gt;
    MaskSet masks;
    FeatureMap features;
};

Scene generate_scene(const SceneConfig& cfg);

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};
/// val = max(1, floor(0.15 n)), test = max(1, floor(0.25 n)), train takes the rest.
SplitCounts split_counts(int n_tiles);

struct GeneratedSplit {
    SplitManifest train;
    SplitManifest val;
    SplitManifest test;
};

/// Tile i uses seed + i. Writes tiles/<id>.{image,features,masks,gt}.wkt and
/// train.tsv, val.tsv, test.tsv under out_dir.
GeneratedSplit generate_split(const SceneConfig& cfg, int n_tiles, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

}  // namespace usm
