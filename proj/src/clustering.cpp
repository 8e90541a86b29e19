#include "usm/clustering.hpp"

#include <limits>
#include <stdexcept>

#include "usm/grid.hpp"
#include "usm/rng.hpp"

namespace usm {

void KMeansConfig::validate() const {
    if (k < 1) throw std::invalid_argument("kmeans.k must be >= 1");
    if (restarts < 1) throw std::invalid_argument("kmeans.restarts must be >= 1");
    if (max_iter < 1) throw std::invalid_argument("kmeans.max_iter must be >= 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("kmeans.tol must be >= 0");
}

namespace {

double sq_dist(const float* x, const double* c, int dim) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double d = static_cast<double>(x[j]) - c[j];
        s += d * d;
    }
    return s;
}

struct Run {
    std::vector<double> centroids;
    std::vector<int> assignment;
    std::vector<double> trace;
    double inertia = 0.0;
    int iterations = 0;
};

// Assigns every point to its nearest centroid; returns the inertia.
double assign(std::span<const float> pts, std::size_t n, int dim, int k, const std::vector<double>& cent,
              std::vector<int>& assignment, std::vector<double>& dist) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const float* x = pts.data() + i * dim;
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
            const double d = sq_dist(x, cent.data() + static_cast<std::size_t>(j) * dim, dim);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        assignment[i] = best;
        dist[i] = best_d;
        inertia += best_d;
    }
    return inertia;
}

std::vector<double> plus_plus_init(std::span<const float> pts, std::size_t n, int dim, int k, Rng& rng) {
    std::vector<double> cent(static_cast<std::size_t>(k) * dim);
    auto set_center = [&](int j, std::size_t i) {
        for (int d = 0; d < dim; ++d) cent[static_cast<std::size_t>(j) * dim + d] = pts[i * dim + d];
    };
    set_center(0, static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n))));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(pts.data() + i * dim, cent.data() + static_cast<std::size_t>(j - 1) * dim, dim));
            total += d2[i];
        }
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)));
        }
        set_center(j, pick);
    }
    return cent;
}

Run lloyd(std::span<const float> pts, std::size_t n, int dim, const KMeansConfig& cfg, Rng& rng) {
    const int k = cfg.k;
    Run run;
    run.centroids = plus_plus_init(pts, n, dim, k, rng);
    run.assignment.assign(n, 0);
    std::vector<double> dist(n);
    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<std::size_t> counts(k);
    for (int it = 0; it < cfg.max_iter; ++it) {
        run.inertia = assign(pts, n, dim, k, run.centroids, run.assignment, dist);
        run.trace.push_back(run.inertia);
        run.iterations = it + 1;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const int j = run.assignment[i];
            ++counts[j];
            for (int d = 0; d < dim; ++d) sums[static_cast<std::size_t>(j) * dim + d] += pts[i * dim + d];
        }
        std::vector<double> next(run.centroids.size());
        std::vector<char> taken(n, 0);
        for (int j = 0; j < k; ++j) {
            double* c = next.data() + static_cast<std::size_t>(j) * dim;
            if (counts[j] > 0) {
                for (int d = 0; d < dim; ++d) c[d] = sums[static_cast<std::size_t>(j) * dim + d] / static_cast<double>(counts[j]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its own centroid.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            taken[far] = 1;
            for (int d = 0; d < dim; ++d) c[d] = pts[far * dim + d];
        }
        double shift = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double d = next[i] - run.centroids[i];
            shift += d * d;
        }
        run.centroids.swap(next);
        if (shift < cfg.tol) break;
    }
    run.inertia = assign(pts, n, dim, k, run.centroids, run.assignment, dist);
    if (run.trace.empty() || run.inertia != run.trace.back()) run.trace.push_back(run.inertia);
    return run;
}

}  // namespace

PointFit kmeans_fit_points(std::span<const float> points, std::size_t n, int dim, const KMeansConfig& cfg,
                           std::uint64_t seed) {
    cfg.validate();
    if (dim < 1) throw std::invalid_argument("kmeans: dim must be >= 1");
    if (points.size() != n * static_cast<std::size_t>(dim)) throw std::invalid_argument("kmeans: point buffer size mismatch");
    if (n < static_cast<std::size_t>(cfg.k)) throw std::invalid_argument("kmeans: fewer points than clusters");
    Run best;
    bool have = false;
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        Run run = lloyd(points, n, dim, cfg, rng);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }
    PointFit out;
    out.model.k = cfg.k;
    out.model.dim = dim;
    out.model.centroids = std::move(best.centroids);
    out.model.inertia = best.inertia;
    out.model.iterations_run = best.iterations;
    out.model.seed = seed;
    out.model.inertia_trace = std::move(best.trace);
    out.assignment = std::move(best.assignment);
    return out;
}

GridFit kmeans_fit(const FeatureMap& features, const KMeansConfig& cfg, std::uint64_t seed) {
    features.validate();
    PointFit fit = kmeans_fit_points(features.values(), features.element_count(), features.dim(), cfg, seed);
    GridFit out{std::move(fit.model), LabelMap(features.grid_h(), features.grid_w(), cfg.k)};
    for (std::size_t i = 0; i < fit.assignment.size(); ++i) out.q.labels[i] = static_cast<std::uint16_t>(fit.assignment[i]);
    return out;
}

ClusterModel kmeans_fit_pooled(std::span<const FeatureMap> features, const KMeansConfig& cfg, std::uint64_t seed) {
    if (features.empty()) throw std::invalid_argument("kmeans: no feature maps");
    const int dim = features.front().dim();
    std::vector<float> pooled;
    std::size_t n = 0;
    for (const FeatureMap& f : features) {
        if (f.dim() != dim) throw std::invalid_argument("kmeans: feature dims differ across tiles");
        pooled.insert(pooled.end(), f.values().begin(), f.values().end());
        n += f.element_count();
    }
    return kmeans_fit_points(pooled, n, dim, cfg, seed).model;
}

LabelMap assign_clusters(const ClusterModel& model, const FeatureMap& features) {
    if (features.dim() != model.dim) throw std::invalid_argument("assign_clusters: feature dim mismatch");
    LabelMap q(features.grid_h(), features.grid_w(), model.k);
    for (std::size_t u = 0; u < features.element_count(); ++u) {
        const auto x = features.element(u);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < model.k; ++j) {
            const double d = sq_dist(x.data(), model.centroid(j).data(), model.dim);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        q.labels[u] = static_cast<std::uint16_t>(best);
    }
    return q;
}

LabelMap project_q_to_pixels(const LabelMap& q, int height, int width, int patch) {
    if (patch < 1) throw std::invalid_argument("project_q_to_pixels: patch must be >= 1");
    if (q.height() != ceil_div(height, patch) || q.width() != ceil_div(width, patch))
        throw std::invalid_argument("project_q_to_pixels: grid does not match ceil(image / patch)");
    LabelMap out(height, width, q.num_classes);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) out.labels(r, c) = q.labels(r / patch, c / patch);
    return out;
}

LabelMap fuse_labels(const RegionMap& regions, const LabelMap& q_pixels) {
    if (!regions.ids.same_shape(q_pixels.labels)) throw std::invalid_argument("fuse_labels: dimension mismatch");
    const std::size_t n_regions = static_cast<std::size_t>(regions.max_id()) + 1;
    int k = q_pixels.num_classes;
    for (auto v : q_pixels.labels) k = std::max(k, static_cast<int>(v) + 1);
    std::vector<std::size_t> votes(n_regions * static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < regions.ids.size(); ++i)
        if (regions.ids[i]) ++votes[regions.ids[i] * static_cast<std::size_t>(k) + q_pixels.labels[i]];
    std::vector<std::uint16_t> mode(n_regions, 0);
    for (std::size_t id = 1; id < n_regions; ++id) {
        std::size_t best = 0;
        for (int c = 0; c < k; ++c) {
            const std::size_t v = votes[id * static_cast<std::size_t>(k) + c];
            if (v > best) {
                best = v;
                mode[id] = static_cast<std::uint16_t>(c);
            }
        }
    }
    LabelMap out = q_pixels;
    for (std::size_t i = 0; i < regions.ids.size(); ++i)
        if (regions.ids[i]) out.labels[i] = mode[regions.ids[i]];
    return out;
}

}  // namespace usm
