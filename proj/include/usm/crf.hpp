#pragma once

// Mean-field refinement with a Potts model and a truncated Gaussian
// spatial/intensity kernel over the grayscale tile.

#include <span>
#include <vector>

#include "usm/types.hpp"

namespace usm {

struct CrfConfig {
    int iterations = 5;
    double spatial_sigma = 3.0;
    double intensity_sigma = 10.0;
    double pairwise_weight = 1.0;
    double unary_confidence = 0.7;

    void validate() const;
    /// Kernel window half-width: round(4 * spatial_sigma) + 1.
    int window_radius() const;
};

/// Per-pixel distributions (height*width*K): the label gets unary_confidence,
/// the rest is spread evenly over the other classes.
std::vector<double> unaries_from_labels(const LabelMap& labels, double unary_confidence);

/// Refines per-pixel class probabilities (height*width*K, channel-last).
LabelMap crf_refine(std::span<const double> probs, int K, const ImageTile& image, const CrfConfig& cfg);

LabelMap crf_refine(const LabelMap& labels, const ImageTile& image, const CrfConfig& cfg);

}  // namespace usm
