#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "usm/alignment.hpp"
#include "usm/rng.hpp"

using namespace usm;

namespace {

RegionStats make_stats(std::uint32_t id, std::vector<double> p, std::size_t area) {
    RegionStats s;
    s.region_id = id;
    s.p = std::move(p);
    s.area = area;
    s.dominant = static_cast<int>(std::max_element(s.p.begin(), s.p.end()) - s.p.begin());
    s.confidence = s.p[s.dominant];
    return s;
}

// Pixel-enumeration pooling without the boundary band: every pixel carries
// its region's regime; hard patches vote, soft patches average.
TargetMap reference_targets(const std::vector<RegionStats>& stats, const RegionMap& regions, const AlignConfig& cfg) {
    const double tau = tau_high(cfg.B, cfg.K);
    TargetMap out;
    out.grid_h = ceil_div(regions.height(), cfg.patch);
    out.grid_w = ceil_div(regions.width(), cfg.patch);
    out.K = cfg.K;
    out.y.assign(out.element_count() * cfg.K, 0.0);
    out.confidence.assign(out.element_count(), 0.0);
    out.hard.assign(out.element_count(), 0);
    for (int gr = 0; gr < out.grid_h; ++gr)
        for (int gc = 0; gc < out.grid_w; ++gc) {
            std::vector<const RegionStats*> hard, soft;
            for (int r = gr * cfg.patch; r < std::min(regions.height(), (gr + 1) * cfg.patch); ++r)
                for (int c = gc * cfg.patch; c < std::min(regions.width(), (gc + 1) * cfg.patch); ++c) {
                    const RegionStats* s = &stats[regions.ids(r, c) - 1];
                    (cfg.tau_gate && s->confidence >= tau ? hard : soft).push_back(s);
                }
            const std::size_t u = static_cast<std::size_t>(gr) * out.grid_w + gc;
            if (hard.size() > soft.size()) {
                std::vector<int> votes(cfg.K, 0);
                for (auto* s : hard) ++votes[s->dominant];
                const int label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
                double sum = 0;
                int n = 0;
                for (auto* s : hard)
                    if (s->dominant == label) {
                        sum += s->confidence;
                        ++n;
                    }
                out.y[u * cfg.K + label] = 1.0;
                out.confidence[u] = sum / n;
                out.hard[u] = 1;
            } else {
                for (auto* s : soft) {
                    for (int c = 0; c < cfg.K; ++c) out.y[u * cfg.K + c] += s->p[c] / static_cast<double>(soft.size());
                    out.confidence[u] += s->confidence / static_cast<double>(soft.size());
                }
            }
        }
    return out;
}

void check_close(const TargetMap& a, const TargetMap& b) {
    REQUIRE(a.grid_h == b.grid_h);
    REQUIRE(a.grid_w == b.grid_w);
    CHECK(a.hard == b.hard);
    for (std::size_t i = 0; i < a.y.size(); ++i) CHECK(a.y[i] == doctest::Approx(b.y[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < a.confidence.size(); ++i)
        CHECK(a.confidence[i] == doctest::Approx(b.confidence[i]).epsilon(1e-12));
}

struct RandomScene {
    RegionMap regions;
    LabelMap labels;
};

RandomScene random_scene(Rng& rng, int h, int w, int K) {
    RandomScene s{RegionMap(h, w), LabelMap(h, w, K)};
    const int n = 1 + rng.below(6);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) s.regions.ids(r, c) = 1 + static_cast<std::uint32_t>(((r / 5) * 7 + (c / 6) * 3) % n);
    for (int k = 0; k < 4; ++k) {
        const int r0 = rng.below(h), c0 = rng.below(w);
        const auto id = static_cast<std::uint32_t>(1 + rng.below(n));
        for (int r = r0; r < std::min(h, r0 + 4); ++r)
            for (int c = c0; c < std::min(w, c0 + 7); ++c) s.regions.ids(r, c) = id;
    }
    s.regions = densify(s.regions);
    for (auto& v : s.labels.labels) v = static_cast<std::uint16_t>(rng.below(K));
    for (std::size_t i = 0; i < s.labels.labels.size(); ++i)
        if (rng.uniform() < 0.6) s.labels.labels[i] = static_cast<std::uint16_t>(s.regions.ids[i] % K);
    return s;
}

}  // namespace

TEST_SUITE("region stats") {

TEST_CASE("proportions of a four-pixel region") {
    const RegionMap r = testutil::region_map({"1111"});
    const auto s = region_stats(testutil::label_map({"1121"}, 3), r, 3);
    REQUIRE(s.size() == 1);
    CHECK(s[0].p == std::vector<double>{0.0, 0.75, 0.25});
    CHECK(s[0].dominant == 1);
    CHECK(s[0].confidence == 0.75);
    CHECK(s[0].area == 4);
}

TEST_CASE("uniform region has confidence one and ties go to the smaller class") {
    const RegionMap r = testutil::region_map({"1111"});
    CHECK(region_stats(testutil::label_map({"2222"}, 3), r, 3)[0].confidence == 1.0);
    const auto t = region_stats(testutil::label_map({"0011"}, 2), r, 2);
    CHECK(t[0].p == std::vector<double>{0.5, 0.5});
    CHECK(t[0].dominant == 0);
}

TEST_CASE("uncovered pixels and bad labels are rejected") {
    CHECK_THROWS(region_stats(testutil::label_map({"00"}, 2), testutil::region_map({"1."}), 2));
    CHECK_THROWS(region_stats(testutil::label_map({"02"}, 3), testutil::region_map({"11"}), 2));
}

TEST_CASE("stats invariants hold on random scenes") {
    Rng rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const RandomScene s = random_scene(rng, 20, 24, 4);
        for (const RegionStats& st : region_stats(s.labels, s.regions, 4)) {
            double sum = 0;
            for (double v : st.p) sum += v;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(st.confidence == *std::max_element(st.p.begin(), st.p.end()));
            CHECK(st.confidence >= 0.25);
        }
    }
}

TEST_CASE("complete_regions splits uncovered pixels by label component") {
    const RegionMap r = testutil::region_map({"11..", "11..", "...."});
    const LabelMap l = testutil::label_map({"0011", "0022", "1122"}, 3);
    const RegionMap out = complete_regions(r, l);
    CHECK(out.uncovered_count() == 0);
    CHECK(out.ids(0, 0) == 1);
    CHECK(out.ids(0, 2) == out.ids(0, 3));
    CHECK(out.ids(1, 2) == out.ids(2, 3));
    CHECK(out.ids(0, 2) != out.ids(1, 2));
    CHECK(out.ids(2, 0) != out.ids(0, 2));
    CHECK(out.is_dense());
    CHECK(complete_regions(out, l) == out);
}

TEST_CASE("scale_check compares tuples") {
    const RegionMap r = testutil::region_map({"1122"});
    const LabelMap l = testutil::label_map({"0110"}, 2);
    const auto a = region_stats(l, r, 2);
    const auto b = region_stats(LabelMap(upsample_nearest(l.labels, 2), 2), RegionMap(upsample_nearest(r.ids, 2)), 2);
    CHECK(scale_check(a, b));
    LabelMap flipped = l;
    flipped.labels(0, 0) = 1;
    CHECK_FALSE(scale_check(a, region_stats(flipped, r, 2)));
    CHECK(scale_check({}, {}));
}

TEST_CASE("formatted stats use full precision") {
    const auto s = region_stats(testutil::label_map({"001"}, 2), testutil::region_map({"111"}), 2);
    const std::string text = format_region_stats(s);
    CHECK(text.rfind("region\tarea\tdominant\tconfidence\tp\n", 0) == 0);
    CHECK(text.find("0.66666666666666663") != std::string::npos);
}

}  // TEST_SUITE

TEST_SUITE("threshold") {

TEST_CASE("stated threshold values") {
    CHECK(tau_high(1, 5) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(tau_high(4, 5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(tau_high(3, 2) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS(tau_high(0, 5));
    CHECK_THROWS(tau_high(-1, 5));
    CHECK_THROWS(tau_high(1, 1));
}

TEST_CASE("monotone in B and K") {
    for (int K = 2; K <= 10; ++K)
        for (double B = 0.5; B < 5; B += 0.5) {
            CHECK(tau_high(B + 0.5, K) > tau_high(B, K));
            CHECK(tau_high(B, K + 1) < tau_high(B, K));
        }
}

}  // TEST_SUITE

TEST_SUITE("targets") {

TEST_CASE("single confident region gives hard patches") {
    RegionMap r(8, 8);
    for (auto& v : r.ids) v = 1;
    AlignConfig cfg;
    cfg.B = 4;
    cfg.K = 5;
    cfg.patch = 4;
    const auto t = build_targets({make_stats(1, {0.9, 0.025, 0.025, 0.025, 0.025}, 64)}, r, cfg);
    REQUIRE(t.element_count() == 4);
    for (std::size_t u = 0; u < 4; ++u) {
        CHECK(t.hard[u] == 1);
        CHECK(t.target(u)[0] == 1.0);
        CHECK(t.confidence[u] == doctest::Approx(0.9));
    }
}

TEST_CASE("single unconfident region gives its distribution") {
    RegionMap r(8, 8);
    for (auto& v : r.ids) v = 1;
    AlignConfig cfg;
    cfg.B = 4;
    cfg.K = 5;
    cfg.patch = 4;
    const std::vector<double> p{0.4, 0.3, 0.1, 0.1, 0.1};
    const auto t = build_targets({make_stats(1, p, 64)}, r, cfg);
    for (std::size_t u = 0; u < 4; ++u) {
        CHECK(t.hard[u] == 0);
        for (int c = 0; c < 5; ++c) CHECK(t.target(u)[c] == doctest::Approx(p[c]));
        CHECK(t.confidence[u] == doctest::Approx(0.4));
    }
}

TEST_CASE("patch straddling two hard regions") {
    AlignConfig cfg;
    cfg.B = 3;
    cfg.K = 3;
    cfg.patch = 4;
    cfg.erosion_band = false;
    const RegionMap r = testutil::region_map({"1111", "1111", "1111", "2222"});
    const std::vector<RegionStats> stats{make_stats(1, {0.1, 0.1, 0.8}, 12), make_stats(2, {1.0, 0.0, 0.0}, 4)};
    const auto t = build_targets(stats, r, cfg);
    CHECK(t.hard[0] == 1);
    CHECK(t.target(0)[2] == 1.0);
    CHECK(t.confidence[0] == doctest::Approx(0.8));
    check_close(t, reference_targets(stats, r, cfg));
}

TEST_CASE("mixed patch with equal hard and soft pixels is soft") {
    AlignConfig cfg;
    cfg.B = 3;
    cfg.K = 3;
    cfg.patch = 2;
    cfg.erosion_band = false;
    const RegionMap r = testutil::region_map({"11", "22"});
    const std::vector<RegionStats> stats{make_stats(1, {0.9, 0.05, 0.05}, 2), make_stats(2, {0.5, 0.3, 0.2}, 2)};
    const auto t = build_targets(stats, r, cfg);
    CHECK(t.hard[0] == 0);
    CHECK(t.target(0)[1] == doctest::Approx(0.3));
    CHECK(t.confidence[0] == doctest::Approx(0.5));
}

TEST_CASE("build_targets matches pixel enumeration without the band") {
    Rng rng(10);
    for (int rep = 0; rep < 100; ++rep) {
        const RandomScene s = random_scene(rng, 19, 23, 4);
        AlignConfig cfg;
        cfg.K = 4;
        cfg.B = 0.5 + rng.below(9) * 0.5;
        cfg.patch = 2 + rng.below(5);
        cfg.erosion_band = false;
        cfg.tau_gate = rng.below(4) != 0;
        const auto stats = region_stats(s.labels, s.regions, 4);
        check_close(build_targets(stats, s.regions, cfg), reference_targets(stats, s.regions, cfg));
    }
}

TEST_CASE("boundary band excludes ring pixels and falls back to the nearest region") {
    AlignConfig cfg;
    cfg.K = 2;
    cfg.patch = 2;
    const RegionMap r = testutil::region_map({"111111", "111111", "111111", "222222"});
    const std::vector<RegionStats> stats{make_stats(1, {1.0, 0.0}, 18), make_stats(2, {0.0, 1.0}, 6)};
    const auto t = build_targets(stats, r, cfg);
    // Row 2 touches region 2 and row 3 is entirely ring, so the bottom patches
    // see only ring pixels and take the nearest interior region.
    for (int gc = 0; gc < 3; ++gc) {
        CHECK(t.target(static_cast<std::size_t>(gc))[0] == 1.0);
        CHECK(t.target(static_cast<std::size_t>(3 + gc))[0] == 1.0);
    }
    cfg.erosion_band = false;
    const auto plain = build_targets(stats, r, cfg);
    // Without the band the bottom patches split 2:2 between the classes and
    // the vote tie goes to class 0.
    CHECK(plain.hard[3] == 1);
    CHECK(plain.target(3)[0] == 1.0);
}

TEST_CASE("dense supervision, exact gate and monotone B on random scenes") {
    Rng rng(44);
    for (int rep = 0; rep < 50; ++rep) {
        const RandomScene s = random_scene(rng, 24, 24, 5);
        const auto stats = region_stats(s.labels, s.regions, 5);
        AlignConfig lo;
        lo.K = 5;
        lo.B = 0.5 + rng.below(5);
        AlignConfig hi = lo;
        hi.B = lo.B + 1.0 + rng.below(3);
        const auto a = build_targets(stats, s.regions, lo);
        const auto b = build_targets(stats, s.regions, hi);
        const double tau = tau_high(lo.B, 5);
        for (std::size_t u = 0; u < a.element_count(); ++u) {
            double sum = 0;
            for (int c = 0; c < 5; ++c) sum += a.target(u)[c];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            CHECK((a.hard[u] == 1) == (a.confidence[u] >= tau));
            CHECK(a.confidence[u] >= 0.2 - 1e-12);
            CHECK(a.confidence[u] <= 1.0 + 1e-12);
            if (!a.hard[u]) CHECK(b.hard[u] == 0);
        }
    }
}

TEST_CASE("unknown region ids are errors") {
    AlignConfig cfg;
    cfg.K = 2;
    const RegionMap r = testutil::region_map({"12"});
    CHECK_THROWS(build_targets({make_stats(1, {1.0, 0.0}, 1)}, r, cfg));
    CHECK_THROWS(build_targets({make_stats(1, {1.0, 0.0}, 1)}, testutil::region_map({"1."}), cfg));
}

}  // TEST_SUITE
