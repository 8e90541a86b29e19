#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "usm/types.hpp"

namespace usm {

struct KMeansConfig {
    int k = 5;
    int restarts = 10;
    int max_iter = 100;
    /// Convergence threshold on the summed squared centroid shift.
    double tol = 1e-4;

    void validate() const;
};

struct ClusterModel {
    int k = 0;
    int dim = 0;
    /// k * dim, row-major.
    std::vector<double> centroids;
    double inertia = 0.0;
    int iterations_run = 0;
    std::uint64_t seed = 0;
    /// Inertia after each assignment step of the winning restart.
    std::vector<double> inertia_trace;

    std::span<const double> centroid(int j) const {
        return std::span<const double>(centroids).subspan(static_cast<std::size_t>(j) * dim, dim);
    }
};

struct PointFit {
    ClusterModel model;
    std::vector<int> assignment;
};

/// k-means++ seeded Lloyd iterations over n row-major points, best of cfg.restarts.
PointFit kmeans_fit_points(std::span<const float> points, std::size_t n, int dim, const KMeansConfig& cfg,
                           std::uint64_t seed);

struct GridFit {
    ClusterModel model;
    LabelMap q;
};
GridFit kmeans_fit(const FeatureMap& features, const KMeansConfig& cfg, std::uint64_t seed);

/// Fits one model over the patch features of several tiles.
ClusterModel kmeans_fit_pooled(std::span<const FeatureMap> features, const KMeansConfig& cfg, std::uint64_t seed);

/// Nearest-centroid labels at feature-grid resolution; ties go to the lower cluster.
LabelMap assign_clusters(const ClusterModel& model, const FeatureMap& features);

/// Block upsampling: pixel (r, c) takes q(r / patch, c / patch).
LabelMap project_q_to_pixels(const LabelMap& q, int height, int width, int patch);

/// Modal Q class per nonzero region (ties to the smaller class); id-0 pixels copy Q.
LabelMap fuse_labels(const RegionMap& regions, const LabelMap& q_pixels);

}  // namespace usm
