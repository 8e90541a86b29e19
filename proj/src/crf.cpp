#include "usm/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "usm/trainer.hpp"

namespace usm {

void CrfConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("crf.iterations must be >= 1");
    if (!(spatial_sigma > 0.0)) throw std::invalid_argument("crf.spatial_sigma must be > 0");
    if (!(intensity_sigma > 0.0)) throw std::invalid_argument("crf.intensity_sigma must be > 0");
    if (!(pairwise_weight >= 0.0)) throw std::invalid_argument("crf.pairwise_weight must be >= 0");
    if (!(unary_confidence > 0.0 && unary_confidence < 1.0))
        throw std::invalid_argument("crf.unary_confidence must be in (0, 1)");
}

int CrfConfig::window_radius() const { return static_cast<int>(std::lround(4.0 * spatial_sigma)) + 1; }

std::vector<double> unaries_from_labels(const LabelMap& labels, double unary_confidence) {
    const int K = labels.num_classes;
    if (K < 1) throw std::invalid_argument("unaries_from_labels: num_classes must be >= 1");
    const double rest = K > 1 ? (1.0 - unary_confidence) / (K - 1) : 0.0;
    std::vector<double> out(labels.labels.size() * K, rest);
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        if (labels.labels[i] >= K) throw std::invalid_argument("unaries_from_labels: label out of range");
        out[i * K + labels.labels[i]] = K > 1 ? unary_confidence : 1.0;
    }
    return out;
}

LabelMap crf_refine(std::span<const double> probs, int K, const ImageTile& image, const CrfConfig& cfg) {
    cfg.validate();
    const int h = image.height();
    const int w = image.width();
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (K < 1 || probs.size() != n * K) throw std::invalid_argument("crf_refine: probabilities do not match image");

    if (cfg.pairwise_weight == 0.0) return argmax_labels(probs, h, w, K);

    const int rad = cfg.window_radius();
    const int side = 2 * rad + 1;
    std::vector<double> spatial(static_cast<std::size_t>(side) * side);
    for (int dr = -rad; dr <= rad; ++dr)
        for (int dc = -rad; dc <= rad; ++dc)
            spatial[static_cast<std::size_t>(dr + rad) * side + (dc + rad)] =
                std::exp(-(dr * dr + dc * dc) / (2.0 * cfg.spatial_sigma * cfg.spatial_sigma));
    spatial[static_cast<std::size_t>(rad) * side + rad] = 0.0;
    double intensity[256];
    for (int d = 0; d < 256; ++d)
        intensity[d] = cfg.pairwise_weight * std::exp(-(d * d) / (2.0 * cfg.intensity_sigma * cfg.intensity_sigma));

    // Unary log-potentials, floored so log stays finite.
    std::vector<double> log_u(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) log_u[i] = std::log(std::max(probs[i], 1e-300));
    std::vector<double> q(probs.begin(), probs.end());
    std::vector<double> msg(K);
    std::vector<double> next(q.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                std::fill(msg.begin(), msg.end(), 0.0);
                const int iv = image.pixels(r, c);
                const int rlo = std::max(0, r - rad);
                const int rhi = std::min(h - 1, r + rad);
                const int clo = std::max(0, c - rad);
                const int chi = std::min(w - 1, c + rad);
                for (int rr = rlo; rr <= rhi; ++rr) {
                    const double* srow = spatial.data() + static_cast<std::size_t>(rr - r + rad) * side + rad - c;
                    for (int cc = clo; cc <= chi; ++cc) {
                        const double k = srow[cc] * intensity[std::abs(iv - image.pixels(rr, cc))];
                        const double* qj = q.data() + (static_cast<std::size_t>(rr) * w + cc) * K;
                        for (int l = 0; l < K; ++l) msg[l] += k * qj[l];
                    }
                }
                const std::size_t base = (static_cast<std::size_t>(r) * w + c) * K;
                double m = -std::numeric_limits<double>::infinity();
                for (int l = 0; l < K; ++l) {
                    msg[l] += log_u[base + l];
                    m = std::max(m, msg[l]);
                }
                double z = 0.0;
                for (int l = 0; l < K; ++l) {
                    next[base + l] = std::exp(msg[l] - m);
                    z += next[base + l];
                }
                for (int l = 0; l < K; ++l) next[base + l] /= z;
            }
        }
        q.swap(next);
    }
    return argmax_labels(q, h, w, K);
}

LabelMap crf_refine(const LabelMap& labels, const ImageTile& image, const CrfConfig& cfg) {
    if (!labels.labels.same_shape(image.pixels)) throw std::invalid_argument("crf_refine: label/image size mismatch");
    cfg.validate();
    return crf_refine(unaries_from_labels(labels, cfg.unary_confidence), labels.num_classes, image, cfg);
}

}  // namespace usm
