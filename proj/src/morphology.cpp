#include "usm/morphology.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace usm {

namespace {

// Running max (or min) over a 1-D window of half-width r, applied per row then per column.
template <bool IsMax>
BinaryGrid box_filter(const BinaryGrid& in, int r) {
    const int h = in.rows();
    const int w = in.cols();
    BinaryGrid tmp(h, w);
    BinaryGrid out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = IsMax ? 0 : 1;
            for (int dx = -r; dx <= r; ++dx) {
                const int xx = x + dx;
                if (xx < 0 || xx >= w) continue;
                const std::uint8_t s = in(y, xx) ? 1 : 0;
                v = IsMax ? std::max(v, s) : std::min(v, s);
            }
            tmp(y, x) = v;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = IsMax ? 0 : 1;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                v = IsMax ? std::max(v, tmp(yy, x)) : std::min(v, tmp(yy, x));
            }
            out(y, x) = v;
        }
    }
    return out;
}

// Ring order P2..P9: N, NE, E, SE, S, SW, W, NW.
constexpr std::array<int, 8> kRingDr = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kRingDc = {0, 1, 1, 1, 0, -1, -1, -1};

std::array<std::uint8_t, 8> ring(const BinaryGrid& g, int r, int c) {
    std::array<std::uint8_t, 8> p{};
    for (int k = 0; k < 8; ++k) {
        const int rr = r + kRingDr[k];
        const int cc = c + kRingDc[k];
        p[k] = g.in_bounds(rr, cc) && g(rr, cc) ? 1 : 0;
    }
    return p;
}

bool simple_by_crossing(const std::array<std::uint8_t, 8>& p) {
    int b = 0;
    int a = 0;
    for (int k = 0; k < 8; ++k) {
        b += p[k];
        if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
    }
    return b >= 2 && b <= 6 && a == 1;
}

bool zs_candidate(const BinaryGrid& g, int r, int c, int pass) {
    const auto p = ring(g, r, c);
    if (!simple_by_crossing(p)) return false;
    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
    if (pass == 0) return (p[0] * p[2] * p[4]) == 0 && (p[2] * p[4] * p[6]) == 0;
    return (p[0] * p[2] * p[6]) == 0 && (p[0] * p[4] * p[6]) == 0;
}

constexpr double kFar = 1e20;

// 1-D squared distance transform (Felzenszwalb & Huttenlocher lower envelope).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto intersect = [&](int q, int p) {
        return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * q - 2.0 * p);
    };
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

BinaryGrid dilate_square(const BinaryGrid& mask, int radius) {
    if (radius <= 0) return mask;
    return box_filter<true>(mask, radius);
}

BinaryGrid erode_square(const BinaryGrid& mask, int radius) {
    if (radius <= 0) return mask;
    return box_filter<false>(mask, radius);
}

BinaryGrid close_square(const BinaryGrid& mask, int radius) {
    return erode_square(dilate_square(mask, radius), radius);
}

BinaryGrid zhang_suen_thin(const BinaryGrid& mask) {
    BinaryGrid g(mask.rows(), mask.cols());
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] = mask[i] ? 1 : 0;
    std::vector<std::pair<int, int>> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            marked.clear();
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c)
                    if (g(r, c) && zs_candidate(g, r, c, pass)) marked.emplace_back(r, c);
            for (const auto& [r, c] : marked) {
                if (!simple_by_crossing(ring(g, r, c))) continue;
                g(r, c) = 0;
                changed = true;
            }
        }
    }
    return g;
}

Grid<double> distance_transform(const BinaryGrid& mask) {
    // Pad by one background pixel on every side so the grid boundary acts as background.
    const int h = mask.rows() + 2;
    const int w = mask.cols() + 2;
    Grid<double> sq(h, w, 0.0);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) sq(r + 1, c + 1) = mask(r, c) ? kFar : 0.0;

    const int n = std::max(h, w);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int c = 0; c < w; ++c) {
        f.resize(h);
        d.resize(h);
        for (int r = 0; r < h; ++r) f[r] = sq(r, c);
        edt_1d(f, d, v, z);
        for (int r = 0; r < h; ++r) sq(r, c) = d[r];
    }
    for (int r = 0; r < h; ++r) {
        f.resize(w);
        d.resize(w);
        for (int c = 0; c < w; ++c) f[c] = sq(r, c);
        edt_1d(f, d, v, z);
        for (int c = 0; c < w; ++c) sq(r, c) = d[c];
    }
    Grid<double> out(mask.rows(), mask.cols(), 0.0);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) out(r, c) = std::sqrt(sq(r + 1, c + 1));
    return out;
}

Components label_components(const BinaryGrid& mask, Connectivity conn) {
    Components out{Grid<int>(mask.rows(), mask.cols(), 0), 0};
    std::deque<std::pair<int, int>> queue;
    const int reach = conn == Connectivity::Eight ? 1 : 0;
    for (int r0 = 0; r0 < mask.rows(); ++r0) {
        for (int c0 = 0; c0 < mask.cols(); ++c0) {
            if (!mask(r0, c0) || out.labels(r0, c0)) continue;
            const int id = ++out.count;
            out.labels(r0, c0) = id;
            queue.emplace_back(r0, c0);
            while (!queue.empty()) {
                const auto [r, c] = queue.front();
                queue.pop_front();
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        if (!reach && dr != 0 && dc != 0) continue;
                        const int rr = r + dr;
                        const int cc = c + dc;
                        if (!mask.in_bounds(rr, cc) || !mask(rr, cc) || out.labels(rr, cc)) continue;
                        out.labels(rr, cc) = id;
                        queue.emplace_back(rr, cc);
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace usm
