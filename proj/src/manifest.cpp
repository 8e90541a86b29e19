#include "usm/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "usm/errors.hpp"

namespace usm {

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ParseError("unknown split '" + std::string(name) + "'");
}

std::filesystem::path SplitManifest::resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        fields.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return fields;
}

}  // namespace

SplitManifest parse_manifest(std::string_view text, Split split) {
    SplitManifest m;
    m.split = split;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() < 4 || fields.size() > 5)
            throw ParseError("manifest line " + std::to_string(line_no) + ": expected 4 or 5 tab-separated fields, got " +
                             std::to_string(fields.size()));
        for (std::size_t i = 0; i < 4; ++i)
            if (fields[i].empty())
                throw ParseError("manifest line " + std::to_string(line_no) + ": empty mandatory field " +
                                 std::to_string(i + 1));
        if (!seen.insert(fields[0]).second)
            throw ParseError("manifest line " + std::to_string(line_no) + ": duplicate id '" + fields[0] + "'");
        ManifestRecord r{fields[0], fields[1], fields[2], fields[3], std::nullopt};
        if (fields.size() == 5 && !fields[4].empty()) r.label_path = fields[4];
        m.records.push_back(std::move(r));
    }
    return m;
}

std::string serialize_manifest(const SplitManifest& manifest) {
    std::string out;
    for (const auto& r : manifest.records) {
        out += r.id + '\t' + r.image_path + '\t' + r.feature_path + '\t' + r.maskset_path;
        if (r.label_path) out += '\t' + *r.label_path;
        out += '\n';
    }
    return out;
}

std::vector<std::string> missing_files(const SplitManifest& manifest) {
    std::vector<std::string> missing;
    for (const auto& r : manifest.records) {
        std::vector<const std::string*> paths{&r.image_path, &r.feature_path, &r.maskset_path};
        if (r.label_path) paths.push_back(&*r.label_path);
        for (const auto* p : paths)
            if (!std::filesystem::exists(manifest.resolve(*p))) missing.push_back(r.id + ": " + *p);
    }
    return missing;
}

SplitManifest load_manifest(const std::filesystem::path& path, bool verify_files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Split split = Split::Train;
    try {
        split = parse_split(path.stem().string());
    } catch (const ParseError&) {
    }
    SplitManifest m = parse_manifest(buf.str(), split);
    m.base_dir = path.parent_path();
    if (verify_files) {
        const auto missing = missing_files(m);
        if (!missing.empty()) {
            std::string msg = "manifest " + path.string() + " references missing files:";
            for (const auto& s : missing) msg += "\n  " + s;
            throw DataError(msg);
        }
    }
    return m;
}

void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << serialize_manifest(manifest);
    if (!out) throw IoError("failed writing manifest " + path.string());
}

}  // namespace usm
