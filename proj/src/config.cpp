#include "usm/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "usm/container.hpp"
#include "usm/errors.hpp"
#include "usm/hash.hpp"

namespace usm {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

long long to_int(const std::string& key, const std::string& s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Entry {
    std::string key;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename Member>
Entry int_entry(std::string key, Member member) {
    return {key, [member](const PipelineConfig& c) { PipelineConfig copy = c; return std::to_string(member(copy)); },
            [member, key](PipelineConfig& c, const std::string& v) { member(c) = static_cast<int>(to_int(key, v)); }};
}

template <typename Member>
Entry double_entry(std::string key, Member member) {
    return {key, [member](const PipelineConfig& c) { PipelineConfig copy = c; return fmt_double(member(copy)); },
            [member, key](PipelineConfig& c, const std::string& v) { member(c) = to_double(key, v); }};
}

template <typename Member>
Entry bool_entry(std::string key, Member member) {
    return {key, [member](const PipelineConfig& c) { PipelineConfig copy = c; return std::string(member(copy) ? "true" : "false"); },
            [member, key](PipelineConfig& c, const std::string& v) { member(c) = to_bool(key, v); }};
}

const std::vector<Entry>& schema() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        e.push_back({"seed", [](const PipelineConfig& c) { return std::to_string(c.seed); },
                     [](PipelineConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }});
        e.push_back(int_entry("num_classes", [](PipelineConfig& c) -> int& { return c.num_classes; }));
        e.push_back(int_entry("patch", [](PipelineConfig& c) -> int& { return c.patch; }));
        e.push_back(int_entry("synth.tiles", [](PipelineConfig& c) -> int& { return c.tiles; }));
        e.push_back(int_entry("synth.size", [](PipelineConfig& c) -> int& { return c.synth.size; }));
        e.push_back(int_entry("synth.shapes_per_tile", [](PipelineConfig& c) -> int& { return c.synth.shapes_per_tile; }));
        e.push_back(int_entry("synth.roads_per_tile", [](PipelineConfig& c) -> int& { return c.synth.roads_per_tile; }));
        e.push_back(int_entry("synth.mask_noise", [](PipelineConfig& c) -> int& { return c.synth.mask_noise; }));
        e.push_back(double_entry("synth.label_noise", [](PipelineConfig& c) -> double& { return c.synth.label_noise; }));
        e.push_back(int_entry("synth.feature_dim", [](PipelineConfig& c) -> int& { return c.synth.feature_dim; }));
        e.push_back(double_entry("synth.feature_sigma", [](PipelineConfig& c) -> double& { return c.synth.feature_sigma; }));
        e.push_back(double_entry("synth.appearance_scale", [](PipelineConfig& c) -> double& { return c.synth.appearance_scale; }));
        e.push_back(double_entry("synth.merge_rate", [](PipelineConfig& c) -> double& { return c.synth.merge_rate; }));
        e.push_back(double_entry("synth.intensity_noise", [](PipelineConfig& c) -> double& { return c.synth.intensity_noise; }));
        e.push_back(double_entry("synth.banding", [](PipelineConfig& c) -> double& { return c.synth.banding; }));
        e.push_back(int_entry("proposal.min_area", [](PipelineConfig& c) -> int& { return c.proposal.min_area; }));
        e.push_back({"proposal.min_saliency", [](const PipelineConfig& c) { return fmt_double(c.proposal.min_saliency); },
                     [](PipelineConfig& c, const std::string& v) {
                         c.proposal.min_saliency = static_cast<float>(to_double("proposal.min_saliency", v));
                     }});
        e.push_back(double_entry("proposal.iou_threshold", [](PipelineConfig& c) -> double& { return c.proposal.iou_threshold; }));
        e.push_back(int_entry("proposal.closing_radius", [](PipelineConfig& c) -> int& { return c.proposal.closing_radius; }));
        e.push_back(double_entry("proposal.elongation_threshold",
                                 [](PipelineConfig& c) -> double& { return c.proposal.elongation_threshold; }));
        e.push_back(double_entry("proposal.split_ratio", [](PipelineConfig& c) -> double& { return c.proposal.split_ratio; }));
        e.push_back(int_entry("proposal.prompt_spacing", [](PipelineConfig& c) -> int& { return c.proposal.prompt_spacing; }));
        e.push_back(double_entry("proposal.prompt_jitter", [](PipelineConfig& c) -> double& { return c.proposal.prompt_jitter; }));
        e.push_back(int_entry("kmeans.restarts", [](PipelineConfig& c) -> int& { return c.kmeans.restarts; }));
        e.push_back(int_entry("kmeans.max_iter", [](PipelineConfig& c) -> int& { return c.kmeans.max_iter; }));
        e.push_back(double_entry("kmeans.tol", [](PipelineConfig& c) -> double& { return c.kmeans.tol; }));
        e.push_back(double_entry("align.B", [](PipelineConfig& c) -> double& { return c.align.B; }));
        e.push_back(bool_entry("align.erosion_band", [](PipelineConfig& c) -> bool& { return c.align.erosion_band; }));
        e.push_back(int_entry("align.erosion_width", [](PipelineConfig& c) -> int& { return c.align.erosion_width; }));
        e.push_back(bool_entry("align.tau_gate", [](PipelineConfig& c) -> bool& { return c.align.tau_gate; }));
        e.push_back(double_entry("loss.alpha", [](PipelineConfig& c) -> double& { return c.loss.alpha; }));
        e.push_back(double_entry("loss.gamma", [](PipelineConfig& c) -> double& { return c.loss.gamma; }));
        e.push_back(double_entry("loss.beta", [](PipelineConfig& c) -> double& { return c.loss.beta; }));
        e.push_back(bool_entry("loss.confidence_weight", [](PipelineConfig& c) -> bool& { return c.loss.confidence_weight; }));
        e.push_back(double_entry("train.learning_rate", [](PipelineConfig& c) -> double& { return c.loss.learning_rate; }));
        e.push_back(int_entry("train.epochs", [](PipelineConfig& c) -> int& { return c.loss.epochs; }));
        e.push_back(int_entry("train.batch", [](PipelineConfig& c) -> int& { return c.loss.batch; }));
        e.push_back(bool_entry("crf.enabled", [](PipelineConfig& c) -> bool& { return c.crf_enabled; }));
        e.push_back({"crf.target",
                     [](const PipelineConfig& c) {
                         return std::string(c.crf_target == CrfTarget::Predictions ? "predictions" : "pseudo_labels");
                     },
                     [](PipelineConfig& c, const std::string& v) {
                         if (v == "predictions")
                             c.crf_target = CrfTarget::Predictions;
                         else if (v == "pseudo_labels")
                             c.crf_target = CrfTarget::PseudoLabels;
                         else
                             throw ConfigError("crf.target: expected predictions or pseudo_labels, got '" + v + "'");
                     }});
        e.push_back(int_entry("crf.iterations", [](PipelineConfig& c) -> int& { return c.crf.iterations; }));
        e.push_back(double_entry("crf.spatial_sigma", [](PipelineConfig& c) -> double& { return c.crf.spatial_sigma; }));
        e.push_back(double_entry("crf.intensity_sigma", [](PipelineConfig& c) -> double& { return c.crf.intensity_sigma; }));
        e.push_back(double_entry("crf.pairwise_weight", [](PipelineConfig& c) -> double& { return c.crf.pairwise_weight; }));
        e.push_back(double_entry("crf.unary_confidence", [](PipelineConfig& c) -> double& { return c.crf.unary_confidence; }));
        return e;
    }();
    return entries;
}

const Entry* find_entry(const std::string& key) {
    for (const Entry& e : schema())
        if (e.key == key) return &e;
    return nullptr;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void PipelineConfig::finalize() {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (patch < 1) throw ConfigError("patch must be >= 1");
    if (tiles < 3) throw ConfigError("synth.tiles must be >= 3");
    kmeans.k = num_classes;
    align.K = num_classes;
    align.patch = patch;
    synth.K = num_classes;
    synth.patch = patch;
    try {
        proposal.validate();
        kmeans.validate();
        align.validate();
        loss.validate();
        crf.validate();
        synth.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::string PipelineConfig::serialize() const {
    std::string out;
    for (const Entry& e : schema()) out += e.key + " = " + e.get(*this) + "\n";
    return out;
}

std::string PipelineConfig::section_hash(const std::vector<std::string>& prefixes) const {
    std::string text;
    for (const Entry& e : schema()) {
        bool take = false;
        for (const auto& p : prefixes) take = take || e.key.rfind(p, 0) == 0;
        if (take) text += e.key + "=" + e.get(*this) + "\n";
    }
    return hash_string(text);
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const Entry* e = find_entry(key);
    if (!e) throw ConfigError("unknown config key '" + key + "'");
    e->set(cfg, value);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const Entry& e : schema()) keys.push_back(e.key);
    return keys;
}

PipelineConfig parse_config(std::string_view text) {
    PipelineConfig cfg;
    std::istringstream is{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
        ++number;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& err) {
            throw ConfigError("line " + std::to_string(number) + ": " + err.what());
        }
    }
    cfg.finalize();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

PipelineConfig noiseless(PipelineConfig cfg) {
    cfg.synth.label_noise = 0.0;
    cfg.synth.mask_noise = 0;
    cfg.synth.merge_rate = 0.0;
    cfg.synth.feature_sigma = 1e-3;
    cfg.finalize();
    return cfg;
}

}  // namespace usm
