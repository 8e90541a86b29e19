#include "usm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "usm/container.hpp"
#include "usm/morphology.hpp"
#include "usm/rng.hpp"

namespace usm {

void SceneConfig::validate() const {
    if (size < 8) throw std::invalid_argument("synth.size must be >= 8");
    if (K < 2) throw std::invalid_argument("synth.K must be >= 2");
    if (patch < 1 || size % patch) throw std::invalid_argument("synth.patch must divide synth.size");
    if (shapes_per_tile < 0 || roads_per_tile < 0) throw std::invalid_argument("synth shape counts must be >= 0");
    if (mask_noise < 0) throw std::invalid_argument("synth.mask_noise must be >= 0");
    if (!(label_noise >= 0.0 && label_noise <= 0.5)) throw std::invalid_argument("synth.label_noise must be in [0, 0.5]");
    if (!(feature_sigma > 0.0)) throw std::invalid_argument("synth.feature_sigma must be > 0");
    if (!(appearance_scale >= 0.0)) throw std::invalid_argument("synth.appearance_scale must be >= 0");
    if (feature_dim < (appearance_scale > 0.0 ? 2 * K : K))
        throw std::invalid_argument("synth.feature_dim too small for the class blocks");
    if (!(merge_rate >= 0.0 && merge_rate <= 1.0)) throw std::invalid_argument("synth.merge_rate must be in [0, 1]");
    if (!(intensity_noise >= 0.0)) throw std::invalid_argument("synth.intensity_noise must be >= 0");
    if (!(banding >= 0.0 && banding < 1.0)) throw std::invalid_argument("synth.banding must be in [0, 1)");
}

namespace {

enum Stream : std::uint64_t { Layout = 1, Masks = 2, Flips = 3, FeatureNoise = 4, Pixels = 5 };

Grid<std::uint16_t> paint_layout(const SceneConfig& cfg, Rng& rng) {
    const int cells = cfg.size / cfg.patch;
    Grid<std::uint16_t> gt(cfg.size, cfg.size, static_cast<std::uint16_t>(rng.below(cfg.K)));
    auto fill_cells = [&](int r0, int c0, int rows, int cols, int cls) {
        for (int r = r0 * cfg.patch; r < std::min(cells, r0 + rows) * cfg.patch; ++r)
            for (int c = c0 * cfg.patch; c < std::min(cells, c0 + cols) * cfg.patch; ++c)
                gt(r, c) = static_cast<std::uint16_t>(cls);
    };
    const int max_side = std::max(2, std::min(6, cells));
    for (int s = 0; s < cfg.shapes_per_tile; ++s) {
        const int rows = 2 + rng.below(max_side - 1);
        const int cols = 2 + rng.below(max_side - 1);
        const int r0 = rng.below(std::max(1, cells - rows + 1));
        const int c0 = rng.below(std::max(1, cells - cols + 1));
        fill_cells(r0, c0, rows, cols, rng.below(cfg.K));
    }
    for (int s = 0; s < cfg.roads_per_tile; ++s) {
        const bool horizontal = rng.below(2) == 0;
        const int at = rng.below(cells);
        const int cls = rng.below(cfg.K);
        if (horizontal)
            fill_cells(at, 0, 1, cells, cls);
        else
            fill_cells(0, at, cells, 1, cls);
    }
    return gt;
}

// Connected same-class segments of the ground truth (4-connectivity).
Components segments_of(const Grid<std::uint16_t>& gt) {
    Components out{Grid<int>(gt.rows(), gt.cols(), 0), 0};
    std::vector<std::pair<int, int>> stack;
    for (int r0 = 0; r0 < gt.rows(); ++r0)
        for (int c0 = 0; c0 < gt.cols(); ++c0) {
            if (out.labels(r0, c0)) continue;
            const int id = ++out.count;
            const auto cls = gt(r0, c0);
            out.labels(r0, c0) = id;
            stack.emplace_back(r0, c0);
            while (!stack.empty()) {
                const auto [r, c] = stack.back();
                stack.pop_back();
                constexpr int dr[4] = {-1, 1, 0, 0};
                constexpr int dc[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int rr = r + dr[k];
                    const int cc = c + dc[k];
                    if (!gt.in_bounds(rr, cc) || out.labels(rr, cc) || gt(rr, cc) != cls) continue;
                    out.labels(rr, cc) = id;
                    stack.emplace_back(rr, cc);
                }
            }
        }
    return out;
}

MaskSet make_masks(const SceneConfig& cfg, const Grid<std::uint16_t>& gt, Rng& rng) {
    const Components seg = segments_of(gt);
    // Adjacent segment pairs, listed per segment in ascending order.
    std::vector<std::vector<int>> adjacent(static_cast<std::size_t>(seg.count) + 1);
    for (int r = 0; r < gt.rows(); ++r)
        for (int c = 0; c < gt.cols(); ++c) {
            const int a = seg.labels(r, c);
            const int right = c + 1 < gt.cols() ? seg.labels(r, c + 1) : a;
            const int down = r + 1 < gt.rows() ? seg.labels(r + 1, c) : a;
            for (int b : {right, down}) {
                if (b == a) continue;
                adjacent[a].push_back(b);
                adjacent[b].push_back(a);
            }
        }
    for (auto& v : adjacent) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    MaskSet set{cfg.size, cfg.size, {}};
    for (int s = 1; s <= seg.count; ++s) {
        // Fixed draw count per segment keeps the stream aligned across noise settings.
        const double u_radius = rng.uniform();
        const double u_sal = rng.uniform();
        const double u_merge = rng.uniform();
        const double u_pick = rng.uniform();

        BinaryGrid bits(cfg.size, cfg.size, 0);
        for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = seg.labels[i] == s ? 1 : 0;
        if (u_merge < cfg.merge_rate && !adjacent[s].empty()) {
            const int other = adjacent[s][static_cast<std::size_t>(u_pick * adjacent[s].size())];
            for (std::size_t i = 0; i < bits.size(); ++i)
                if (seg.labels[i] == other) bits[i] = 1;
        }
        const int t = static_cast<int>(std::floor(u_radius * (2 * cfg.mask_noise + 1))) - cfg.mask_noise;
        if (t > 0) bits = dilate_square(bits, t);
        if (t < 0) bits = erode_square(bits, -t);
        Mask m{std::move(bits), static_cast<float>(0.6 + 0.4 * u_sal)};
        if (m.area() == 0) continue;
        set.masks.push_back(std::move(m));
    }
    return set;
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg) {
    cfg.validate();
    Scene scene;
    Rng layout(derive_seed(cfg.seed, Layout));
    Grid<std::uint16_t> gt = paint_layout(cfg, layout);

    Rng mask_rng(derive_seed(cfg.seed, Masks));
    scene.masks = make_masks(cfg, gt, mask_rng);

    const int cells = cfg.size / cfg.patch;
    FeatureMap features(cells, cells, cfg.feature_dim);
    Rng flips(derive_seed(cfg.seed, Flips));
    Rng noise(derive_seed(cfg.seed, FeatureNoise));
    std::vector<int> counts(cfg.K);
    for (int r = 0; r < cells; ++r)
        for (int c = 0; c < cells; ++c) {
            std::fill(counts.begin(), counts.end(), 0);
            for (int y = r * cfg.patch; y < (r + 1) * cfg.patch; ++y)
                for (int x = c * cfg.patch; x < (c + 1) * cfg.patch; ++x) ++counts[gt(y, x)];
            const int truth = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            const double u_flip = flips.uniform();
            const int shift = 1 + flips.below(cfg.K - 1);
            const int observed = u_flip < cfg.label_noise ? (truth + shift) % cfg.K : truth;
            auto v = features.at(r, c);
            for (int d = 0; d < cfg.feature_dim; ++d) v[d] = static_cast<float>(noise.normal(0.0, cfg.feature_sigma));
            v[observed] += 1.0f;
            if (cfg.appearance_scale > 0.0) v[cfg.K + truth] += static_cast<float>(cfg.appearance_scale);
        }
    scene.features = std::move(features);

    Rng pixels(derive_seed(cfg.seed, Pixels));
    scene.image.pixels = Grid<std::uint8_t>(cfg.size, cfg.size, 0);
    for (int r = 0; r < cfg.size; ++r) {
        const double band = 1.0 + cfg.banding * std::sin(2.0 * std::numbers::pi * r / 32.0);
        for (int c = 0; c < cfg.size; ++c) {
            const double base = 40.0 + 180.0 * gt(r, c) / (cfg.K - 1);
            const double v = base * band + pixels.normal(0.0, cfg.intensity_noise);
            scene.image.pixels(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    scene.gt = LabelMap(std::move(gt), cfg.K);
    return scene;
}

SplitCounts split_counts(int n_tiles) {
    if (n_tiles < 3) throw std::invalid_argument("split_counts: need at least 3 tiles");
    SplitCounts s;
    s.val = std::max(1, static_cast<int>(n_tiles * 15 / 100));
    s.test = std::max(1, static_cast<int>(n_tiles * 25 / 100));
    s.train = n_tiles - s.val - s.test;
    return s;
}

GeneratedSplit generate_split(const SceneConfig& cfg, int n_tiles, std::uint64_t seed,
                              const std::filesystem::path& out_dir) {
    const SplitCounts counts = split_counts(n_tiles);
    std::filesystem::create_directories(out_dir / "tiles");
    GeneratedSplit out;
    out.train.split = Split::Train;
    out.val.split = Split::Val;
    out.test.split = Split::Test;
    for (SplitManifest* m : {&out.train, &out.val, &out.test}) m->base_dir = out_dir;
    for (int i = 0; i < n_tiles; ++i) {
        SceneConfig tile_cfg = cfg;
        tile_cfg.seed = seed + static_cast<std::uint64_t>(i);
        const Scene scene = generate_scene(tile_cfg);
        char id[32];
        std::snprintf(id, sizeof id, "tile_%04d", i);
        ManifestRecord rec;
        rec.id = id;
        rec.image_path = std::string("tiles/") + id + ".image.wkt";
        rec.feature_path = std::string("tiles/") + id + ".features.wkt";
        rec.maskset_path = std::string("tiles/") + id + ".masks.wkt";
        rec.label_path = std::string("tiles/") + id + ".gt.wkt";
        write_container(to_tensor(scene.image), out_dir / rec.image_path);
        write_container(to_tensor(scene.features), out_dir / rec.feature_path);
        write_maskset(scene.masks, out_dir / rec.maskset_path);
        write_container(to_tensor(scene.gt), out_dir / *rec.label_path);
        SplitManifest& dst = i < counts.train ? out.train : i < counts.train + counts.val ? out.val : out.test;
        dst.records.push_back(std::move(rec));
    }
    write_manifest(out.train, out_dir / "train.tsv");
    write_manifest(out.val, out_dir / "val.tsv");
    write_manifest(out.test, out_dir / "test.tsv");
    return out;
}

}  // namespace usm
