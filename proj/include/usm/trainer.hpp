#pragma once

// Single affine head over frozen patch features, trained with the
// focal-confidence loss.

#include <cstdint>
#include <span>
#include <vector>

#include "usm/alignment.hpp"
#include "usm/types.hpp"

namespace usm {

struct HeadParams {
    int K = 0;
    int dim = 0;
    /// K * dim, row-major.
    std::vector<float> weight;
    std::vector<float> bias;
    std::uint64_t seed = 0;

    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct LossConfig {
    double alpha = 1.0;
    double gamma = 2.0;
    double beta = 0.5;
    double learning_rate = 0.1;
    int epochs = 50;
    int batch = 8;
    /// When false the c^beta factor is replaced by 1.
    bool confidence_weight = true;

    void validate() const;
};

/// Small Gaussian weights (sigma 0.01), zero bias.
HeadParams init_head(int K, int dim, std::uint64_t seed);

struct Logits {
    int grid_h = 0;
    int grid_w = 0;
    int K = 0;
    std::vector<double> values;

    std::size_t element_count() const noexcept {
        return static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w);
    }
};

Logits head_forward(const HeadParams& head, const FeatureMap& features);

/// Row-wise softmax of n rows of K logits.
std::vector<double> softmax_rows(std::span<const double> logits, int K);

/// Mean class probability over n rows of K probabilities.
std::vector<double> batch_class_means(std::span<const double> probs, int K);

/// Target-weighted batch mean: sum_c y_c * pbar_c.
double target_mean(std::span<const double> y, std::span<const double> pbar);

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Focal-confidence loss over n elements. `y` holds n*K target rows and
/// `confidence` n values; `pbar` is held constant for the gradient.
LossResult focal_confidence_loss(std::span<const double> logits, std::span<const double> y,
                                 std::span<const double> confidence, std::span<const double> pbar, int K,
                                 const LossConfig& cfg);

struct TrainResult {
    HeadParams head;
    std::vector<double> loss_history;
};

/// Plain SGD over tile batches with a per-epoch shuffle derived from `seed`.
TrainResult train(std::span<const FeatureMap> features, std::span<const TargetMap> targets, const LossConfig& cfg,
                  std::uint64_t seed);

/// Per-element softmax probabilities, upsampled to pixels (channel-last, height*width*K).
std::vector<double> predict_probabilities(const HeadParams& head, const FeatureMap& features, int height, int width,
                                          int patch);

LabelMap predict(const HeadParams& head, const FeatureMap& features, int height, int width, int patch);

/// Argmax of each K-row, ties to the lower class.
LabelMap argmax_labels(std::span<const double> rows, int height, int width, int K);

}  // namespace usm
