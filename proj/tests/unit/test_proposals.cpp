#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "usm/morphology.hpp"
#include "usm/proposals.hpp"
#include "usm/rng.hpp"

using namespace usm;
using testutil::rect_mask;
using testutil::region_map;

namespace {

// Straightforward compositor used as a reference: sort, then paint with a
// foreground set.
RegionMap reference_composite(const MaskSet& ms, double thr) {
    struct Item {
        float sal;
        std::size_t area;
        std::size_t idx;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < ms.masks.size(); ++i) {
        std::size_t a = 0;
        for (auto b : ms.masks[i].bits) a += b ? 1 : 0;
        items.push_back({ms.masks[i].saliency, a, i});
    }
    std::sort(items.begin(), items.end(), [](const Item& x, const Item& y) {
        if (x.sal != y.sal) return x.sal > y.sal;
        if (x.area != y.area) return x.area > y.area;
        return x.idx < y.idx;
    });
    RegionMap out(ms.height, ms.width);
    std::set<std::size_t> fg;
    std::uint32_t id = 0;
    for (const Item& it : items) {
        std::set<std::size_t> m;
        for (std::size_t i = 0; i < ms.masks[it.idx].bits.size(); ++i)
            if (ms.masks[it.idx].bits[i]) m.insert(i);
        std::size_t inter = 0;
        for (auto i : m) inter += fg.count(i);
        const double uni = static_cast<double>(m.size() + fg.size() - inter);
        if (uni > 0 && inter / uni >= thr) continue;
        if (inter == m.size()) continue;
        ++id;
        for (auto i : m)
            if (!fg.count(i)) {
                fg.insert(i);
                out.ids[i] = id;
            }
    }
    return out;
}

// Per-region BFS distances through uncovered pixels; each pixel takes the
// closest region, ties to the smaller id.
RegionMap reference_fill(const RegionMap& in) {
    const int h = in.height(), w = in.width();
    const std::uint32_t n = in.max_id();
    RegionMap out = in;
    if (n == 0) return out;
    std::vector<Grid<int>> dist;
    for (std::uint32_t r = 1; r <= n; ++r) {
        Grid<int> d(h, w, std::numeric_limits<int>::max());
        std::deque<std::pair<int, int>> q;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (in.ids(y, x) == r) {
                    d(y, x) = 0;
                    q.emplace_back(y, x);
                }
        while (!q.empty()) {
            auto [y, x] = q.front();
            q.pop_front();
            const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int yy = y + dy[k], xx = x + dx[k];
                if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                if (in.ids(yy, xx) != 0 || d(yy, xx) != std::numeric_limits<int>::max()) continue;
                d(yy, xx) = d(y, x) + 1;
                q.emplace_back(yy, xx);
            }
        }
        dist.push_back(std::move(d));
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (in.ids(y, x)) continue;
            int best = std::numeric_limits<int>::max();
            std::uint32_t who = 0;
            for (std::uint32_t r = 1; r <= n; ++r)
                if (dist[r - 1](y, x) < best) {
                    best = dist[r - 1](y, x);
                    who = r;
                }
            out.ids(y, x) = who;
        }
    return out;
}

// Direct square closing of one binary layer: dilation treats the outside as
// background, erosion ignores positions outside the grid.
Grid<std::uint8_t> reference_close(const Grid<std::uint8_t>& m, int r) {
    const int h = m.rows(), w = m.cols();
    Grid<std::uint8_t> d(h, w, 0), e(h, w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if (m.in_bounds(y + dy, x + dx) && m(y + dy, x + dx)) d(y, x) = 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool all = true;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if (d.in_bounds(y + dy, x + dx) && !d(y + dy, x + dx)) all = false;
            e(y, x) = all ? 1 : 0;
        }
    return e;
}

MaskSet random_masks(Rng& rng, int h, int w, int n) {
    MaskSet ms{h, w, {}};
    for (int i = 0; i < n; ++i) {
        const int r0 = rng.below(h), c0 = rng.below(w);
        const int r1 = std::min(h, r0 + 1 + rng.below(h / 2)), c1 = std::min(w, c0 + 1 + rng.below(w / 2));
        const float sal = static_cast<float>(rng.below(4)) * 0.25f;
        ms.masks.push_back(rect_mask(h, w, r0, c0, r1, c1, sal));
    }
    return ms;
}

Grid<std::uint8_t> region_bits(const RegionMap& m, std::uint32_t id) {
    Grid<std::uint8_t> b(m.height(), m.width(), 0);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = m.ids[i] == id;
    return b;
}

RegionMap dumbbell() {
    RegionMap r(12, 42);
    for (int y = 1; y < 11; ++y)
        for (int x = 1; x < 11; ++x) {
            r.ids(y, x) = 1;
            r.ids(y, x + 30) = 1;
        }
    for (int y = 5; y < 7; ++y)
        for (int x = 11; x < 31; ++x) r.ids(y, x) = 1;
    for (auto& v : r.ids)
        if (!v) v = 2;
    return r;
}

}  // namespace

TEST_SUITE("prompts") {

TEST_CASE("zero jitter puts one point at each cell center") {
    const PromptSet p = sample_prompts(64, 64, 16, 0.0, PromptMode::JitteredGrid, 5);
    REQUIRE(p.points.size() == 16);
    for (const Point& q : p.points) {
        CHECK(q.row % 16 == 8);
        CHECK(q.col % 16 == 8);
    }
    CHECK_FALSE(p.spacing_too_large);
}

TEST_CASE("jittered points stay inside their cells") {
    const PromptSet p = sample_prompts(70, 50, 10, 0.99, PromptMode::JitteredGrid, 9);
    REQUIRE(p.points.size() == 35);
    for (std::size_t i = 0; i < p.points.size(); ++i) {
        const int ci = static_cast<int>(i) / 5, cj = static_cast<int>(i) % 5;
        CHECK(p.points[i].row / 10 == ci);
        CHECK(p.points[i].col / 10 == cj);
    }
}

TEST_CASE("poisson disk points keep the minimum distance") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PromptSet p = sample_prompts(64, 80, 12, 0.0, PromptMode::PoissonDisk, seed);
        CHECK(p.points.size() > 5);
        for (std::size_t i = 0; i < p.points.size(); ++i) {
            CHECK(p.points[i].row >= 0);
            CHECK(p.points[i].row < 64);
            CHECK(p.points[i].col < 80);
            for (std::size_t j = i + 1; j < p.points.size(); ++j) {
                const double dr = p.points[i].row - p.points[j].row, dc = p.points[i].col - p.points[j].col;
                CHECK(std::sqrt(dr * dr + dc * dc) >= 12.0);
            }
        }
    }
}

TEST_CASE("prompts are deterministic per seed") {
    for (auto mode : {PromptMode::JitteredGrid, PromptMode::PoissonDisk}) {
        CHECK(sample_prompts(64, 64, 8, 0.5, mode, 3).points == sample_prompts(64, 64, 8, 0.5, mode, 3).points);
        CHECK(sample_prompts(64, 64, 8, 0.5, mode, 3).points != sample_prompts(64, 64, 8, 0.5, mode, 4).points);
    }
}

TEST_CASE("spacing larger than the tile gives an empty flagged set") {
    const PromptSet p = sample_prompts(20, 40, 25, 0.5, PromptMode::JitteredGrid, 1);
    CHECK(p.points.empty());
    CHECK(p.spacing_too_large);
    CHECK_THROWS(sample_prompts(20, 20, 0, 0.5, PromptMode::PoissonDisk, 1));
}

}  // TEST_SUITE

TEST_SUITE("filter and composite") {

TEST_CASE("filter by area and saliency keeps order") {
    ProposalConfig cfg;
    cfg.min_area = 32;
    cfg.min_saliency = 0.0f;
    MaskSet ms{20, 20, {}};
    for (int a : {10, 40, 40, 100, 31}) {
        Mask m = rect_mask(20, 20, 0, 0, 1, 1, 0.7f);
        m.bits.fill(0);
        for (int i = 0; i < a; ++i) m.bits[static_cast<std::size_t>(i)] = 1;
        ms.masks.push_back(m);
    }
    ms.masks[3].saliency = 0.1f;
    const MaskSet out = filter_masks(ms, cfg);
    REQUIRE(out.masks.size() == 3);
    CHECK(out.masks[0].area() == 40);
    CHECK(out.masks[2].area() == 100);

    cfg.min_saliency = 0.5f;
    CHECK(filter_masks(ms, cfg).masks.size() == 2);
    CHECK(filter_masks(MaskSet{}, cfg).masks.empty());

    MaskSet tiny{8, 8, {rect_mask(8, 8, 0, 0, 1, 3, 1.0f)}};
    CHECK(filter_masks(tiny, cfg).masks.empty());
}

TEST_CASE("two disjoint masks give ids 1 and 2") {
    ProposalConfig cfg;
    MaskSet ms{6, 6, {rect_mask(6, 6, 0, 0, 2, 2, 0.9f), rect_mask(6, 6, 4, 4, 6, 6, 0.8f)}};
    const RegionMap r = composite_masks(ms, cfg);
    CHECK(r.ids(0, 0) == 1);
    CHECK(r.ids(5, 5) == 2);
    CHECK(r.ids(3, 3) == 0);
    CHECK(r.max_id() == 2);
}

TEST_CASE("identical masks collapse to one region") {
    ProposalConfig cfg;
    MaskSet ms{6, 6, {rect_mask(6, 6, 1, 1, 4, 4, 0.9f), rect_mask(6, 6, 1, 1, 4, 4, 0.9f)}};
    CHECK(composite_masks(ms, cfg).max_id() == 1);
}

TEST_CASE("8x8 overlapping rows trace") {
    ProposalConfig cfg;
    cfg.iou_threshold = 0.5;
    MaskSet ms{8, 8, {rect_mask(8, 8, 2, 0, 6, 8, 0.8f), rect_mask(8, 8, 0, 0, 4, 8, 0.9f)}};
    const RegionMap r = composite_masks(ms, cfg);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const std::uint32_t want = y < 4 ? 1 : (y < 6 ? 2 : 0);
            CHECK(r.ids(y, x) == want);
        }
    CHECK(reference_composite(ms, 0.5) == r);
}

TEST_CASE("saliency ties go to the larger mask") {
    ProposalConfig cfg;
    MaskSet ms{4, 4, {rect_mask(4, 4, 0, 0, 1, 1, 0.7f), rect_mask(4, 4, 0, 0, 2, 2, 0.7f)}};
    const RegionMap r = composite_masks(ms, cfg);
    CHECK(r.ids(0, 0) == 1);
    CHECK(r.ids(1, 1) == 1);
    CHECK(r.max_id() == 1);
}

TEST_CASE("composite matches the reference on random mask sets and ids are dense") {
    Rng rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        ProposalConfig cfg;
        cfg.iou_threshold = 0.2 + 0.1 * rng.below(8);
        const MaskSet ms = random_masks(rng, 12, 14, 1 + rng.below(8));
        const RegionMap r = composite_masks(ms, cfg);
        CHECK(r == reference_composite(ms, cfg.iou_threshold));
        CHECK(r.is_dense());
    }
}

}  // TEST_SUITE

TEST_SUITE("closing") {

TEST_CASE("radius 1 fills a one-pixel hole") {
    RegionMap r = region_map({"111", "1.1", "111"});
    CHECK(close_regions(r, 1) == region_map({"111", "111", "111"}));
}

TEST_CASE("radius 0 is the identity") {
    RegionMap r = region_map({"1..", ".2.", "..."});
    CHECK(close_regions(r, 0) == r);
}

TEST_CASE("10x10 fragments one pixel apart merge into a band") {
    RegionMap r(10, 10);
    for (int y = 3; y < 7; ++y) {
        for (int x = 1; x < 4; ++x) r.ids(y, x) = 1;
        for (int x = 5; x < 9; ++x) r.ids(y, x) = 1;
    }
    const RegionMap out = close_regions(r, 1);
    for (int y = 3; y < 7; ++y) CHECK(out.ids(y, 4) == 1);
    CHECK(out.ids(2, 4) == 0);
    CHECK(out.ids(7, 4) == 0);
    CHECK(region_bits(out, 1) == reference_close(region_bits(r, 1), 1));
    CHECK(label_components(region_bits(out, 1), Connectivity::Four).count == 1);
}

TEST_CASE("single-region closing equals direct dilate then erode on uncovered pixels") {
    Rng rng(21);
    for (int rep = 0; rep < 100; ++rep) {
        RegionMap r(12, 12);
        for (auto& v : r.ids) v = rng.uniform() < 0.35 ? 1u : 0u;
        const int rad = 1 + rng.below(2);
        const RegionMap out = close_regions(r, rad);
        const auto ref = reference_close(region_bits(r, 1), rad);
        for (std::size_t i = 0; i < r.ids.size(); ++i) {
            const std::uint32_t want = r.ids[i] ? 1u : (ref[i] ? 1u : 0u);
            CHECK(out.ids[i] == want);
        }
    }
}

TEST_CASE("contested pixels go to the region with more neighbours, ties to the lower id") {
    Rng rng(31);
    for (int rep = 0; rep < 200; ++rep) {
        RegionMap r(10, 10);
        for (auto& v : r.ids) v = rng.uniform() < 0.45 ? static_cast<std::uint32_t>(1 + rng.below(3)) : 0u;
        r = densify(r);
        const int rad = 1 + rng.below(2);
        std::vector<Grid<std::uint8_t>> closed;
        for (std::uint32_t id = 1; id <= r.max_id(); ++id) closed.push_back(reference_close(region_bits(r, id), rad));
        const RegionMap out = close_regions(r, rad);
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x) {
                if (r.ids(y, x)) continue;
                std::uint32_t want = 0;
                int best = -1;
                for (std::uint32_t id = 1; id <= r.max_id(); ++id) {
                    if (!closed[id - 1](y, x)) continue;
                    int n = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                            if ((dy || dx) && r.ids.in_bounds(y + dy, x + dx) && r.ids(y + dy, x + dx) == id) ++n;
                    if (n > best) {
                        best = n;
                        want = id;
                    }
                }
                CHECK(out.ids(y, x) == want);
            }
    }
}

TEST_CASE("closing never overwrites painted pixels") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        RegionMap r(10, 10);
        for (auto& v : r.ids) v = rng.uniform() < 0.5 ? static_cast<std::uint32_t>(1 + rng.below(3)) : 0u;
        const RegionMap out = close_regions(r, 1 + rng.below(2));
        for (std::size_t i = 0; i < r.ids.size(); ++i)
            if (r.ids[i]) CHECK(out.ids[i] == r.ids[i]);
    }
}

}  // TEST_SUITE

TEST_SUITE("fill coverage") {

TEST_CASE("left half painted fills the whole map") {
    RegionMap r = region_map({"11..", "11..", "11.."});
    const FillResult f = fill_coverage(r);
    CHECK_FALSE(f.no_coverage);
    CHECK(f.regions == region_map({"1111", "1111", "1111"}));
}

TEST_CASE("equidistant pixels go to the lower id") {
    CHECK(fill_coverage(region_map({"2.1"})).regions == region_map({"211"}));
    CHECK(fill_coverage(region_map({"1.2"})).regions == region_map({"112"}));
}

TEST_CASE("full coverage is unchanged and empty maps are flagged") {
    RegionMap r = region_map({"12", "21"});
    CHECK(fill_coverage(r).regions == r);
    const FillResult e = fill_coverage(RegionMap(3, 3));
    CHECK(e.no_coverage);
    CHECK(e.regions.uncovered_count() == 9);
}

TEST_CASE("fill matches per-region geodesic distances on random maps") {
    Rng rng(8);
    for (int rep = 0; rep < 200; ++rep) {
        RegionMap r(11, 13);
        for (auto& v : r.ids) v = rng.uniform() < 0.08 ? static_cast<std::uint32_t>(1 + rng.below(4)) : 0u;
        if (r.max_id() == 0) r.ids(0, 0) = 1;
        const FillResult f = fill_coverage(r);
        CHECK(f.regions.uncovered_count() == 0);
        CHECK(f.regions == reference_fill(r));
    }
}

}  // TEST_SUITE

TEST_SUITE("morphology") {

TEST_CASE("distance transform matches brute force") {
    Rng rng(4);
    for (int rep = 0; rep < 30; ++rep) {
        Grid<std::uint8_t> m(9, 11, 0);
        for (auto& v : m) v = rng.uniform() < 0.7 ? 1 : 0;
        const Grid<double> d = distance_transform(m);
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 11; ++x) {
                double best = m(y, x) ? std::numeric_limits<double>::max() : 0.0;
                if (m(y, x)) {
                    for (int yy = -1; yy <= 9; ++yy)
                        for (int xx = -1; xx <= 11; ++xx) {
                            const bool bg = !m.in_bounds(yy, xx) || !m(yy, xx);
                            if (bg) best = std::min(best, std::hypot(yy - y, xx - x));
                        }
                }
                CHECK(d(y, x) == doctest::Approx(best).epsilon(1e-12));
            }
    }
}

TEST_CASE("thinning a one-pixel line is a fixed point") {
    Grid<std::uint8_t> line(3, 20, 0);
    for (int x = 1; x < 19; ++x) line(1, x) = 1;
    CHECK(zhang_suen_thin(line) == line);
    RegionMap r(1, 25);
    for (auto& v : r.ids) v = 1;
    CHECK(skeleton_info(r, 1).skeleton_length == 25);
}

TEST_CASE("thinning preserves the 8-connected component count on random shapes") {
    Rng rng(99);
    for (int rep = 0; rep < 100; ++rep) {
        Grid<std::uint8_t> m(24, 24, 0);
        const int blobs = 1 + rng.below(4);
        for (int b = 0; b < blobs; ++b) {
            const int r0 = rng.below(20), c0 = rng.below(20);
            const int r1 = std::min(24, r0 + 2 + rng.below(12)), c1 = std::min(24, c0 + 2 + rng.below(12));
            for (int y = r0; y < r1; ++y)
                for (int x = c0; x < c1; ++x) m(y, x) = 1;
        }
        for (auto& v : m)
            if (rng.uniform() < 0.05) v = 0;
        const auto sk = zhang_suen_thin(m);
        for (std::size_t i = 0; i < m.size(); ++i)
            if (sk[i]) CHECK(m[i]);
        CHECK(label_components(sk, Connectivity::Eight).count == label_components(m, Connectivity::Eight).count);
    }
}

TEST_CASE("a 2x2 block keeps a skeleton pixel") {
    Grid<std::uint8_t> m(4, 4, 0);
    m(1, 1) = m(1, 2) = m(2, 1) = m(2, 2) = 1;
    const auto sk = zhang_suen_thin(m);
    CHECK(label_components(sk, Connectivity::Eight).count == 1);
}

}  // TEST_SUITE

TEST_SUITE("width division") {

TEST_CASE("a compact square is untouched") {
    RegionMap r(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) r.ids(y, x) = (y >= 2 && y < 22 && x >= 2 && x < 22) ? 1 : 2;
    ProposalConfig cfg;
    CHECK(skeleton_info(r, 1).elongation < cfg.elongation_threshold);
    CHECK(divide_elongated(r, cfg) == r);
}

TEST_CASE("dumbbell splits at the bridge") {
    const RegionMap r = dumbbell();
    ProposalConfig cfg;
    const SkeletonInfo info = skeleton_info(r, 1);
    CHECK(info.elongation > cfg.elongation_threshold);
    const RegionMap out = divide_elongated(r, cfg);
    CHECK(out.max_id() >= 3);
    CHECK(out.is_dense());
    CHECK(out.uncovered_count() == 0);
    CHECK(out.ids(5, 5) != out.ids(5, 35));
    CHECK(out.ids(5, 5) != out.ids(0, 0));
    CHECK(out.ids(5, 35) != out.ids(0, 0));
}

TEST_CASE("division refines without merging or uncovering") {
    Rng rng(17);
    ProposalConfig cfg;
    for (int rep = 0; rep < 30; ++rep) {
        RegionMap r(32, 32);
        for (auto& v : r.ids) v = 1;
        const int roads = 1 + rng.below(3);
        for (int k = 0; k < roads; ++k) {
            const int pos = rng.below(28), width = 1 + rng.below(3);
            for (int t = 0; t < 32; ++t)
                for (int w = 0; w < width; ++w) {
                    if (k % 2) r.ids(t, pos + w) = static_cast<std::uint32_t>(2 + k);
                    else r.ids(pos + w, t) = static_cast<std::uint32_t>(2 + k);
                }
        }
        r = densify(r);
        const RegionMap out = divide_elongated(r, cfg);
        CHECK(out.uncovered_count() == 0);
        CHECK(out.is_dense());
        std::map<std::uint32_t, std::uint32_t> parent;
        for (std::size_t i = 0; i < r.ids.size(); ++i) {
            auto [it, fresh] = parent.emplace(out.ids[i], r.ids[i]);
            CHECK(it->second == r.ids[i]);
        }
        CHECK(divide_elongated(r, cfg) == out);
    }
}

TEST_CASE("build_region_map covers every pixel of a tile with masks") {
    ProposalConfig cfg;
    MaskSet ms{32, 32, {rect_mask(32, 32, 0, 0, 16, 32, 0.9f), rect_mask(32, 32, 18, 0, 32, 32, 0.8f)}};
    const RegionMap r = build_region_map(ms, cfg);
    CHECK(r.uncovered_count() == 0);
    CHECK(r.max_id() == 2);
    CHECK(r.ids(16, 5) == 1);
    CHECK(r.ids(17, 5) == 2);
}

}  // TEST_SUITE
