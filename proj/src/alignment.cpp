#include "usm/alignment.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "usm/grid.hpp"
#include "usm/morphology.hpp"

namespace usm {

void AlignConfig::validate() const {
    if (!(B > 0.0)) throw std::invalid_argument("align.B must be > 0");
    if (K < 2) throw std::invalid_argument("align.K must be >= 2");
    if (patch < 1) throw std::invalid_argument("align.patch must be >= 1");
    if (erosion_width < 0) throw std::invalid_argument("align.erosion_width must be >= 0");
}

double tau_high(double B, int K) {
    if (!(B > 0.0)) throw std::invalid_argument("tau_high: B must be > 0");
    if (K < 2) throw std::invalid_argument("tau_high: K must be >= 2");
    return B / (B + static_cast<double>(K) - 1.0);
}

std::vector<RegionStats> region_stats(const LabelMap& p, const RegionMap& regions, int K) {
    if (!regions.ids.same_shape(p.labels)) throw std::invalid_argument("region_stats: dimension mismatch");
    if (K < 1) throw std::invalid_argument("region_stats: K must be >= 1");
    const std::size_t n = regions.max_id();
    std::vector<std::size_t> counts(n * static_cast<std::size_t>(K), 0);
    std::vector<std::size_t> area(n, 0);
    for (std::size_t i = 0; i < regions.ids.size(); ++i) {
        const auto id = regions.ids[i];
        if (id == 0) throw std::invalid_argument("region_stats: uncovered pixel");
        if (p.labels[i] >= K) throw std::invalid_argument("region_stats: label out of range");
        ++counts[(id - 1) * static_cast<std::size_t>(K) + p.labels[i]];
        ++area[id - 1];
    }
    std::vector<RegionStats> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        RegionStats& s = out[r];
        s.region_id = static_cast<std::uint32_t>(r + 1);
        s.area = area[r];
        if (s.area == 0) throw std::invalid_argument("region_stats: region id " + std::to_string(r + 1) + " is empty");
        s.p.resize(K);
        std::size_t best = 0;
        for (int c = 0; c < K; ++c) {
            const std::size_t v = counts[r * static_cast<std::size_t>(K) + c];
            s.p[c] = static_cast<double>(v) / static_cast<double>(s.area);
            if (v > best) {
                best = v;
                s.dominant = c;
            }
        }
        s.confidence = s.p[s.dominant];
    }
    return out;
}

RegionMap complete_regions(const RegionMap& regions, const LabelMap& labels) {
    if (!regions.ids.same_shape(labels.labels)) throw std::invalid_argument("complete_regions: dimension mismatch");
    if (regions.uncovered_count() == 0) return regions;
    RegionMap out = regions;
    std::uint32_t next = regions.max_id() + 1;
    const int h = regions.height();
    const int w = regions.width();
    std::vector<std::pair<int, int>> stack;
    for (int r0 = 0; r0 < h; ++r0)
        for (int c0 = 0; c0 < w; ++c0) {
            if (out.ids(r0, c0)) continue;
            const auto label = labels.labels(r0, c0);
            const std::uint32_t id = next++;
            out.ids(r0, c0) = id;
            stack.emplace_back(r0, c0);
            while (!stack.empty()) {
                const auto [r, c] = stack.back();
                stack.pop_back();
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr;
                        const int cc = c + dc;
                        if (!out.ids.in_bounds(rr, cc) || out.ids(rr, cc) || labels.labels(rr, cc) != label) continue;
                        out.ids(rr, cc) = id;
                        stack.emplace_back(rr, cc);
                    }
            }
        }
    return out;
}

namespace {

// Marks pixels that have a differently labelled pixel within Chebyshev distance `width`.
BinaryGrid boundary_ring(const RegionMap& regions, int width) {
    const int h = regions.height();
    const int w = regions.width();
    BinaryGrid ring(h, w, 0);
    if (width <= 0) return ring;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const auto id = regions.ids(r, c);
            bool edge = false;
            for (int dr = -width; dr <= width && !edge; ++dr)
                for (int dc = -width; dc <= width; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (regions.ids.in_bounds(rr, cc) && regions.ids(rr, cc) != id) {
                        edge = true;
                        break;
                    }
                }
            ring(r, c) = edge ? 1 : 0;
        }
    return ring;
}

// Region of the nearest contributing pixel (4-connected BFS, ties to the lower id).
Grid<std::uint32_t> nearest_contributing(const RegionMap& regions, const BinaryGrid& ring) {
    const int h = regions.height();
    const int w = regions.width();
    Grid<std::uint32_t> owner(h, w, 0u);
    Grid<int> layer(h, w, 0);
    std::vector<std::pair<std::uint32_t, std::size_t>> seeds;
    for (std::size_t i = 0; i < regions.ids.size(); ++i)
        if (!ring[i]) seeds.emplace_back(regions.ids[i], i);
    if (seeds.empty()) return regions.ids;
    std::stable_sort(seeds.begin(), seeds.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> frontier;
    for (const auto& [id, i] : seeds) {
        owner[i] = id;
        frontier.push_back(i);
    }
    std::vector<std::size_t> next;
    for (int depth = 1; !frontier.empty(); ++depth) {
        next.clear();
        for (std::size_t u : frontier) {
            const int r = static_cast<int>(u / static_cast<std::size_t>(w));
            const int c = static_cast<int>(u % static_cast<std::size_t>(w));
            constexpr int dr[4] = {-1, 1, 0, 0};
            constexpr int dc[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int rr = r + dr[k];
                const int cc = c + dc[k];
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                const std::size_t v = owner.index(rr, cc);
                if (owner[v] == 0) {
                    owner[v] = owner[u];
                    layer[v] = depth;
                    next.push_back(v);
                } else if (layer[v] == depth && owner[u] < owner[v]) {
                    owner[v] = owner[u];
                }
            }
        }
        frontier.swap(next);
    }
    return owner;
}

struct Contribution {
    std::uint32_t id = 0;
    std::size_t count = 0;
};

}  // namespace

TargetMap build_targets(const std::vector<RegionStats>& stats, const RegionMap& regions, const AlignConfig& cfg) {
    cfg.validate();
    const int h = regions.height();
    const int w = regions.width();
    const int K = cfg.K;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (stats[i].region_id != i + 1) throw std::invalid_argument("build_targets: stats must list ids 1..R in order");
        if (static_cast<int>(stats[i].p.size()) != K) throw std::invalid_argument("build_targets: stats K mismatch");
    }
    for (auto id : regions.ids) {
        if (id == 0) throw std::invalid_argument("build_targets: uncovered pixel");
        if (id > stats.size()) throw std::invalid_argument("build_targets: unknown region id " + std::to_string(id));
    }
    const double tau = tau_high(cfg.B, K);
    std::vector<std::uint8_t> region_hard(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) region_hard[i] = cfg.tau_gate && stats[i].confidence >= tau ? 1 : 0;

    const BinaryGrid ring = cfg.erosion_band ? boundary_ring(regions, cfg.erosion_width) : BinaryGrid(h, w, 0);
    Grid<std::uint32_t> nearest;
    bool have_nearest = false;

    TargetMap out;
    out.grid_h = ceil_div(h, cfg.patch);
    out.grid_w = ceil_div(w, cfg.patch);
    out.K = K;
    out.y.assign(out.element_count() * K, 0.0);
    out.confidence.assign(out.element_count(), 0.0);
    out.hard.assign(out.element_count(), 0);

    // Contributions are summed in a fixed order: larger region area, then larger confidence, then lower id.
    auto before = [&](const Contribution& a, const Contribution& b) {
        const RegionStats& sa = stats[a.id - 1];
        const RegionStats& sb = stats[b.id - 1];
        if (sa.area != sb.area) return sa.area > sb.area;
        if (sa.confidence != sb.confidence) return sa.confidence > sb.confidence;
        return a.id < b.id;
    };

    std::vector<Contribution> parts;
    for (int gr = 0; gr < out.grid_h; ++gr) {
        for (int gc = 0; gc < out.grid_w; ++gc) {
            const int r0 = gr * cfg.patch;
            const int c0 = gc * cfg.patch;
            const int r1 = std::min(h, r0 + cfg.patch);
            const int c1 = std::min(w, c0 + cfg.patch);
            parts.clear();
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) {
                    if (ring(r, c)) continue;
                    const auto id = regions.ids(r, c);
                    auto it = std::find_if(parts.begin(), parts.end(), [id](const Contribution& x) { return x.id == id; });
                    if (it == parts.end())
                        parts.push_back({id, 1});
                    else
                        ++it->count;
                }
            if (parts.empty()) {
                if (!have_nearest) {
                    nearest = nearest_contributing(regions, ring);
                    have_nearest = true;
                }
                const int rc = std::min(r0 + cfg.patch / 2, r1 - 1);
                const int cc = std::min(c0 + cfg.patch / 2, c1 - 1);
                parts.push_back({nearest(rc, cc), 1});
            }
            std::sort(parts.begin(), parts.end(), before);

            std::size_t hard_n = 0;
            std::size_t soft_n = 0;
            for (const auto& pc : parts) (region_hard[pc.id - 1] ? hard_n : soft_n) += pc.count;

            const std::size_t u = static_cast<std::size_t>(gr) * out.grid_w + gc;
            double* y = out.y.data() + u * K;
            double num = 0.0;
            std::size_t den = 0;
            double lo = 1.0;
            double hi = 0.0;
            if (hard_n > soft_n) {
                std::vector<std::size_t> votes(K, 0);
                for (const auto& pc : parts)
                    if (region_hard[pc.id - 1]) votes[stats[pc.id - 1].dominant] += pc.count;
                int label = 0;
                for (int c = 1; c < K; ++c)
                    if (votes[c] > votes[label]) label = c;
                for (const auto& pc : parts) {
                    const RegionStats& s = stats[pc.id - 1];
                    if (!region_hard[pc.id - 1] || s.dominant != label) continue;
                    num += static_cast<double>(pc.count) * s.confidence;
                    den += pc.count;
                    lo = std::min(lo, s.confidence);
                    hi = std::max(hi, s.confidence);
                }
                y[label] = 1.0;
                out.hard[u] = 1;
            } else {
                for (const auto& pc : parts) {
                    const RegionStats& s = stats[pc.id - 1];
                    if (region_hard[pc.id - 1]) continue;
                    for (int c = 0; c < K; ++c) y[c] += static_cast<double>(pc.count) * s.p[c];
                    num += static_cast<double>(pc.count) * s.confidence;
                    den += pc.count;
                    lo = std::min(lo, s.confidence);
                    hi = std::max(hi, s.confidence);
                }
                for (int c = 0; c < K; ++c) y[c] /= static_cast<double>(den);
            }
            // The clamp only absorbs rounding: a weighted mean lies between its extremes.
            out.confidence[u] = std::clamp(num / static_cast<double>(den), lo, hi);
        }
    }
    return out;
}

bool scale_check(const std::vector<RegionStats>& before, const std::vector<RegionStats>& after) {
    if (before.size() != after.size()) return false;
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (before[i].p != after[i].p || before[i].dominant != after[i].dominant ||
            before[i].confidence != after[i].confidence)
            return false;
    }
    return true;
}

std::string format_region_stats(const std::vector<RegionStats>& stats) {
    std::string out = "region\tarea\tdominant\tconfidence\tp\n";
    char buf[64];
    for (const RegionStats& s : stats) {
        out += std::to_string(s.region_id) + '\t' + std::to_string(s.area) + '\t' + std::to_string(s.dominant) + '\t';
        std::snprintf(buf, sizeof buf, "%.17g", s.confidence);
        out += buf;
        out += '\t';
        for (std::size_t c = 0; c < s.p.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", s.p[c]);
            if (c) out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace usm
