#pragma once

// Plain-text pipeline configuration: one `key = value` per line, `#` starts a
// comment. Keys are namespaced (proposal., kmeans., align., loss., train.,
// crf., synth.) plus the globals seed, num_classes and patch.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "usm/alignment.hpp"
#include "usm/clustering.hpp"
#include "usm/crf.hpp"
#include "usm/proposals.hpp"
#include "usm/synth.hpp"
#include "usm/trainer.hpp"

namespace usm {

enum class CrfTarget { Predictions, PseudoLabels };

struct PipelineConfig {
    std::uint64_t seed = 1;
    int num_classes = 5;
    int patch = 8;
    int tiles = 100;

    ProposalConfig proposal;
    KMeansConfig kmeans;
    AlignConfig align;
    LossConfig loss;
    CrfConfig crf;
    bool crf_enabled = true;
    CrfTarget crf_target = CrfTarget::Predictions;
    SceneConfig synth;

    /// Copies num_classes and patch into module configs and checks every value.
    void finalize();

    /// Canonical text listing every key in schema order.
    std::string serialize() const;
    /// Hash of the serialized entries whose key starts with one of the prefixes.
    std::string section_hash(const std::vector<std::string>& prefixes) const;
};

/// Applies `key = value` lines on top of the defaults. Unknown keys and bad
/// values raise ConfigError naming the key and line.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Sets one key; throws ConfigError for unknown keys or unparsable values.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// All keys in schema order.
std::vector<std::string> config_keys();

/// Zero-noise variant of a config: no label, mask or merge noise and a tiny feature spread.
PipelineConfig noiseless(PipelineConfig cfg);

}  // namespace usm
