#include "usm/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "usm/morphology.hpp"
#include "usm/rng.hpp"

namespace usm {

void ProposalConfig::validate() const {
    if (min_area < 1) throw std::invalid_argument("proposal.min_area must be >= 1");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
        throw std::invalid_argument("proposal.iou_threshold must be in (0, 1]");
    if (closing_radius < 0) throw std::invalid_argument("proposal.closing_radius must be >= 0");
    if (!(elongation_threshold > 0.0)) throw std::invalid_argument("proposal.elongation_threshold must be > 0");
    if (!(split_ratio > 0.0 && split_ratio <= 1.0)) throw std::invalid_argument("proposal.split_ratio must be in (0, 1]");
    if (prompt_spacing < 1) throw std::invalid_argument("proposal.prompt_spacing must be >= 1");
    if (!(prompt_jitter >= 0.0 && prompt_jitter < 1.0)) throw std::invalid_argument("proposal.prompt_jitter must be in [0, 1)");
}

PromptSet sample_prompts(int height, int width, int spacing, double jitter, PromptMode mode, std::uint64_t seed) {
    if (height < 1 || width < 1) throw std::invalid_argument("sample_prompts: empty tile");
    if (spacing < 1) throw std::invalid_argument("sample_prompts: spacing must be >= 1");
    if (!(jitter >= 0.0 && jitter < 1.0)) throw std::invalid_argument("sample_prompts: jitter must be in [0, 1)");
    PromptSet out;
    out.spacing = spacing;
    out.jitter = jitter;
    out.seed = seed;
    if (spacing > std::min(height, width)) {
        out.spacing_too_large = true;
        return out;
    }
    Rng rng(seed);
    if (mode == PromptMode::JitteredGrid) {
        const int cells_r = height / spacing;
        const int cells_c = width / spacing;
        for (int i = 0; i < cells_r; ++i) {
            for (int j = 0; j < cells_c; ++j) {
                const double dr = (rng.uniform() - 0.5) * jitter * spacing;
                const double dc = (rng.uniform() - 0.5) * jitter * spacing;
                const int r = i * spacing + spacing / 2 + static_cast<int>(std::lround(dr));
                const int c = j * spacing + spacing / 2 + static_cast<int>(std::lround(dc));
                out.points.push_back({std::clamp(r, i * spacing, i * spacing + spacing - 1),
                                      std::clamp(c, j * spacing, j * spacing + spacing - 1)});
            }
        }
        return out;
    }
    const double min_d2 = static_cast<double>(spacing) * spacing;
    int rejections = 0;
    while (rejections < 30) {
        const Point p{static_cast<int>(rng.below(static_cast<std::uint64_t>(height))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(width)))};
        bool ok = true;
        for (const Point& q : out.points) {
            const double dr = p.row - q.row;
            const double dc = p.col - q.col;
            if (dr * dr + dc * dc < min_d2) {
                ok = false;
                break;
            }
        }
        if (ok) {
            out.points.push_back(p);
            rejections = 0;
        } else {
            ++rejections;
        }
    }
    return out;
}

MaskSet filter_masks(const MaskSet& masks, const ProposalConfig& cfg) {
    MaskSet out{masks.height, masks.width, {}};
    for (const Mask& m : masks.masks)
        if (m.area() >= static_cast<std::size_t>(cfg.min_area) && m.saliency >= cfg.min_saliency) out.masks.push_back(m);
    return out;
}

RegionMap composite_masks(const MaskSet& masks, const ProposalConfig& cfg) {
    RegionMap canvas(masks.height, masks.width);
    std::vector<std::size_t> areas(masks.masks.size());
    for (std::size_t i = 0; i < masks.masks.size(); ++i) areas[i] = masks.masks[i].area();
    std::vector<std::size_t> order(masks.masks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (masks.masks[a].saliency != masks.masks[b].saliency) return masks.masks[a].saliency > masks.masks[b].saliency;
        return areas[a] > areas[b];
    });

    std::size_t foreground = 0;
    std::uint32_t next_id = 1;
    for (std::size_t idx : order) {
        const Mask& m = masks.masks[idx];
        if (m.bits.rows() != masks.height || m.bits.cols() != masks.width)
            throw std::invalid_argument("composite_masks: mask dimensions differ from tile");
        std::size_t inter = 0;
        for (std::size_t i = 0; i < m.bits.size(); ++i)
            if (m.bits[i] && canvas.ids[i]) ++inter;
        const std::size_t uni = areas[idx] + foreground - inter;
        const double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
        if (iou >= cfg.iou_threshold || inter == areas[idx]) continue;
        for (std::size_t i = 0; i < m.bits.size(); ++i) {
            if (m.bits[i] && !canvas.ids[i]) {
                canvas.ids[i] = next_id;
                ++foreground;
            }
        }
        ++next_id;
    }
    return canvas;
}

namespace {

struct Box {
    int r0 = std::numeric_limits<int>::max();
    int c0 = std::numeric_limits<int>::max();
    int r1 = -1;
    int c1 = -1;
    void add(int r, int c) {
        r0 = std::min(r0, r);
        c0 = std::min(c0, c);
        r1 = std::max(r1, r);
        c1 = std::max(c1, c);
    }
    bool empty() const { return r1 < 0; }
    Box grown(int m, int h, int w) const {
        return {std::max(0, r0 - m), std::max(0, c0 - m), std::min(h - 1, r1 + m), std::min(w - 1, c1 + m)};
    }
    int rows() const { return r1 - r0 + 1; }
    int cols() const { return c1 - c0 + 1; }
};

std::vector<Box> region_boxes(const RegionMap& regions) {
    std::vector<Box> boxes(static_cast<std::size_t>(regions.max_id()) + 1);
    for (int r = 0; r < regions.height(); ++r)
        for (int c = 0; c < regions.width(); ++c)
            if (const auto id = regions.ids(r, c)) boxes[id].add(r, c);
    return boxes;
}

BinaryGrid crop_mask(const RegionMap& regions, std::uint32_t id, const Box& b) {
    BinaryGrid m(b.rows(), b.cols(), 0);
    for (int r = 0; r < b.rows(); ++r)
        for (int c = 0; c < b.cols(); ++c) m(r, c) = regions.ids(b.r0 + r, b.c0 + c) == id ? 1 : 0;
    return m;
}

int neighbours_in(const RegionMap& regions, int r, int c, std::uint32_t id) {
    int n = 0;
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int rr = r + dr;
            const int cc = c + dc;
            if (regions.ids.in_bounds(rr, cc) && regions.ids(rr, cc) == id) ++n;
        }
    return n;
}

}  // namespace

RegionMap close_regions(const RegionMap& regions, int radius) {
    if (radius <= 0) return regions;
    const int h = regions.height();
    const int w = regions.width();
    const auto boxes = region_boxes(regions);
    Grid<std::uint32_t> best_id(h, w, 0u);
    Grid<int> best_adj(h, w, -1);
    for (std::uint32_t id = 1; id < boxes.size(); ++id) {
        if (boxes[id].empty()) continue;
        const Box b = boxes[id].grown(2 * radius, h, w);
        const BinaryGrid closed = close_square(crop_mask(regions, id, b), radius);
        for (int r = 0; r < b.rows(); ++r) {
            for (int c = 0; c < b.cols(); ++c) {
                const int rr = b.r0 + r;
                const int cc = b.c0 + c;
                if (!closed(r, c) || regions.ids(rr, cc) != 0) continue;
                const int adj = neighbours_in(regions, rr, cc, id);
                if (adj > best_adj(rr, cc)) {
                    best_adj(rr, cc) = adj;
                    best_id(rr, cc) = id;
                }
            }
        }
    }
    RegionMap out = regions;
    for (std::size_t i = 0; i < out.ids.size(); ++i)
        if (out.ids[i] == 0 && best_id[i] != 0) out.ids[i] = best_id[i];
    return out;
}

FillResult fill_coverage(const RegionMap& regions) {
    FillResult res{regions, false};
    const int h = regions.height();
    const int w = regions.width();
    std::vector<std::vector<std::size_t>> seeds(static_cast<std::size_t>(regions.max_id()) + 1);
    for (std::size_t i = 0; i < regions.ids.size(); ++i)
        if (regions.ids[i]) seeds[regions.ids[i]].push_back(i);
    std::vector<std::size_t> frontier;
    for (const auto& s : seeds) frontier.insert(frontier.end(), s.begin(), s.end());
    if (frontier.empty()) {
        res.no_coverage = true;
        return res;
    }
    auto& ids = res.regions.ids;
    Grid<int> layer(h, w, 0);
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
                const std::size_t v = static_cast<std::size_t>(rr) * static_cast<std::size_t>(w) + static_cast<std::size_t>(cc);
                if (ids[v] == 0) {
                    ids[v] = ids[u];
                    layer[v] = depth;
                    next.push_back(v);
                } else if (layer[v] == depth && ids[u] < ids[v]) {
                    ids[v] = ids[u];
                }
            }
        }
        frontier.swap(next);
    }
    return res;
}

namespace {

struct SkeletonData {
    Box box;
    BinaryGrid mask;
    BinaryGrid skeleton;
    Grid<double> radius;
    SkeletonInfo info;
};

SkeletonData analyse_region(const RegionMap& regions, std::uint32_t id, const Box& box) {
    SkeletonData d;
    d.box = box;
    d.mask = crop_mask(regions, id, box);
    d.skeleton = zhang_suen_thin(d.mask);
    d.radius = distance_transform(d.mask);
    double sum = 0.0;
    for (std::size_t i = 0; i < d.skeleton.size(); ++i) {
        if (!d.skeleton[i]) continue;
        ++d.info.skeleton_length;
        sum += d.radius[i];
        d.info.max_radius = std::max(d.info.max_radius, d.radius[i]);
    }
    if (d.info.skeleton_length > 0) {
        d.info.mean_radius = sum / static_cast<double>(d.info.skeleton_length);
        d.info.elongation = static_cast<double>(d.info.skeleton_length) / (2.0 * d.info.mean_radius);
    }
    return d;
}

// Branch index per skeleton pixel (>= 1), or 0 for pixels outside any branch.
// Returns the number of branches.
int skeleton_branches(const SkeletonData& d, double split_ratio, Grid<int>& branch) {
    const double cut_limit = split_ratio * d.info.max_radius;

    BinaryGrid cut(d.mask.rows(), d.mask.cols(), 0);
    BinaryGrid keep(d.mask.rows(), d.mask.cols(), 0);
    for (int r = 0; r < d.mask.rows(); ++r)
        for (int c = 0; c < d.mask.cols(); ++c) {
            if (!d.skeleton(r, c)) continue;
            if (d.radius(r, c) < cut_limit)
                cut(r, c) = 1;
            else
                keep(r, c) = 1;
        }
    const Components branches = label_components(keep, Connectivity::Eight);
    branch = branches.labels;
    if (branches.count < 2) return branches.count;

    // A cut run touching at most one branch is a spur or tip: fold it into that branch.
    const Components runs = label_components(cut, Connectivity::Eight);
    std::vector<std::vector<int>> touching(static_cast<std::size_t>(runs.count) + 1);
    for (int r = 0; r < cut.rows(); ++r)
        for (int c = 0; c < cut.cols(); ++c) {
            const int run = runs.labels(r, c);
            if (!run) continue;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (!branch.in_bounds(rr, cc) || !branch(rr, cc)) continue;
                    auto& t = touching[run];
                    if (std::find(t.begin(), t.end(), branch(rr, cc)) == t.end()) t.push_back(branch(rr, cc));
                }
        }
    for (int r = 0; r < cut.rows(); ++r)
        for (int c = 0; c < cut.cols(); ++c) {
            const int run = runs.labels(r, c);
            if (run && touching[run].size() == 1) branch(r, c) = touching[run][0];
        }
    return branches.count;
}

}  // namespace

SkeletonInfo skeleton_info(const RegionMap& regions, std::uint32_t id) {
    const auto boxes = region_boxes(regions);
    if (id == 0 || id >= boxes.size() || boxes[id].empty()) return {};
    return analyse_region(regions, id, boxes[id]).info;
}

RegionMap divide_elongated(const RegionMap& regions, const ProposalConfig& cfg) {
    const auto boxes = region_boxes(regions);
    RegionMap out(regions.height(), regions.width());
    std::uint32_t next_id = 1;
    for (std::uint32_t id = 1; id < boxes.size(); ++id) {
        if (boxes[id].empty()) continue;
        const SkeletonData d = analyse_region(regions, id, boxes[id]);
        Grid<int> branch;
        int n_branches = 0;
        if (d.info.skeleton_length > 0 && d.info.elongation > cfg.elongation_threshold)
            n_branches = skeleton_branches(d, cfg.split_ratio, branch);
        if (n_branches < 2) {
            for (int r = 0; r < d.mask.rows(); ++r)
                for (int c = 0; c < d.mask.cols(); ++c)
                    if (d.mask(r, c)) out.ids(d.box.r0 + r, d.box.c0 + c) = next_id;
            ++next_id;
            continue;
        }
        // Geodesic (8-connected, inside the region) nearest-branch assignment.
        Grid<int> owner(d.mask.rows(), d.mask.cols(), 0);
        std::vector<std::pair<int, int>> frontier;
        for (int b = 1; b <= n_branches; ++b)
            for (int r = 0; r < d.mask.rows(); ++r)
                for (int c = 0; c < d.mask.cols(); ++c)
                    if (branch(r, c) == b) {
                        owner(r, c) = b;
                        frontier.emplace_back(r, c);
                    }
        Grid<int> layer(d.mask.rows(), d.mask.cols(), 0);
        std::vector<std::pair<int, int>> next;
        for (int depth = 1; !frontier.empty(); ++depth) {
            next.clear();
            for (const auto& [r, c] : frontier) {
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr;
                        const int cc = c + dc;
                        if (!d.mask.in_bounds(rr, cc) || !d.mask(rr, cc)) continue;
                        if (owner(rr, cc) == 0) {
                            owner(rr, cc) = owner(r, c);
                            layer(rr, cc) = depth;
                            next.emplace_back(rr, cc);
                        } else if (layer(rr, cc) == depth && owner(r, c) < owner(rr, cc)) {
                            owner(rr, cc) = owner(r, c);
                        }
                    }
            }
            frontier.swap(next);
        }
        std::vector<std::uint32_t> new_id(static_cast<std::size_t>(n_branches) + 1, 0u);
        std::uint32_t leftover = 0;
        for (int r = 0; r < d.mask.rows(); ++r)
            for (int c = 0; c < d.mask.cols(); ++c) {
                if (!d.mask(r, c)) continue;
                const int b = owner(r, c);
                std::uint32_t& slot = b ? new_id[b] : leftover;
                if (!slot) slot = next_id++;
                out.ids(d.box.r0 + r, d.box.c0 + c) = slot;
            }
    }
    return densify(out);
}

RegionMap build_region_map(const MaskSet& masks, const ProposalConfig& cfg) {
    const MaskSet kept = filter_masks(masks, cfg);
    RegionMap regions = composite_masks(kept, cfg);
    regions = close_regions(regions, cfg.closing_radius);
    FillResult filled = fill_coverage(regions);
    if (filled.no_coverage) return filled.regions;
    regions = close_regions(filled.regions, 1);
    return divide_elongated(regions, cfg);
}

}  // namespace usm
