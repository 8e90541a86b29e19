#include "usm/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "usm/clustering.hpp"
#include "usm/grid.hpp"
#include "usm/rng.hpp"

namespace usm {

void LossConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("loss.alpha must be > 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("loss.gamma must be >= 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("loss.beta must be >= 0");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("train.learning_rate must be >= 0");
    if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("train.batch must be >= 1");
}

HeadParams init_head(int K, int dim, std::uint64_t seed) {
    if (K < 1 || dim < 1) throw std::invalid_argument("init_head: K and dim must be >= 1");
    HeadParams h;
    h.K = K;
    h.dim = dim;
    h.seed = seed;
    Rng rng(seed);
    h.weight.resize(static_cast<std::size_t>(K) * dim);
    for (auto& w : h.weight) w = static_cast<float>(rng.normal(0.0, 0.01));
    h.bias.assign(K, 0.0f);
    return h;
}

namespace {

void forward_rows(const double* weight, const double* bias, int K, int dim, const FeatureMap& f, double* out) {
    for (std::size_t u = 0; u < f.element_count(); ++u) {
        const auto x = f.element(u);
        for (int k = 0; k < K; ++k) {
            const double* wk = weight + static_cast<std::size_t>(k) * dim;
            double s = bias[k];
            for (int d = 0; d < dim; ++d) s += wk[d] * static_cast<double>(x[d]);
            out[u * K + k] = s;
        }
    }
}

}  // namespace

Logits head_forward(const HeadParams& head, const FeatureMap& features) {
    if (features.dim() != head.dim) throw std::invalid_argument("head_forward: feature dim does not match head");
    const std::vector<double> w(head.weight.begin(), head.weight.end());
    const std::vector<double> b(head.bias.begin(), head.bias.end());
    Logits out{features.grid_h(), features.grid_w(), head.K, {}};
    out.values.resize(features.element_count() * head.K);
    forward_rows(w.data(), b.data(), head.K, head.dim, features, out.values.data());
    return out;
}

std::vector<double> softmax_rows(std::span<const double> logits, int K) {
    std::vector<double> out(logits.size());
    for (std::size_t r = 0; r + K <= logits.size(); r += K) {
        double m = logits[r];
        for (int k = 1; k < K; ++k) m = std::max(m, logits[r + k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) {
            out[r + k] = std::exp(logits[r + k] - m);
            z += out[r + k];
        }
        for (int k = 0; k < K; ++k) out[r + k] /= z;
    }
    return out;
}

std::vector<double> batch_class_means(std::span<const double> probs, int K) {
    if (K < 1 || probs.empty() || probs.size() % K) throw std::invalid_argument("batch_class_means: empty batch");
    const std::size_t n = probs.size() / K;
    std::vector<double> mean(K, 0.0);
    for (std::size_t u = 0; u < n; ++u)
        for (int k = 0; k < K; ++k) mean[k] += probs[u * K + k];
    for (auto& m : mean) m /= static_cast<double>(n);
    return mean;
}

double target_mean(std::span<const double> y, std::span<const double> pbar) {
    double s = 0.0;
    for (std::size_t c = 0; c < y.size(); ++c) s += y[c] * pbar[c];
    return s;
}

LossResult focal_confidence_loss(std::span<const double> logits, std::span<const double> y,
                                 std::span<const double> confidence, std::span<const double> pbar, int K,
                                 const LossConfig& cfg) {
    if (K < 1 || logits.size() % K || y.size() != logits.size() || pbar.size() != static_cast<std::size_t>(K))
        throw std::invalid_argument("focal_confidence_loss: shape mismatch");
    const std::size_t n = logits.size() / K;
    if (n == 0) throw std::invalid_argument("focal_confidence_loss: empty batch");
    if (confidence.size() != n) throw std::invalid_argument("focal_confidence_loss: confidence count mismatch");
    for (double v : logits)
        if (!std::isfinite(v)) throw std::invalid_argument("focal_confidence_loss: non-finite logit");

    LossResult res;
    res.grad.resize(logits.size());
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t u = 0; u < n; ++u) {
        const double* x = logits.data() + u * K;
        const double* yu = y.data() + u * K;
        double m = x[0];
        for (int k = 1; k < K; ++k) m = std::max(m, x[k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(x[k] - m);
        const double log_z = m + std::log(z);
        double ce = 0.0;
        for (int k = 0; k < K; ++k)
            if (yu[k] != 0.0) ce -= yu[k] * (x[k] - log_z);
        const double py = target_mean(std::span<const double>(yu, K), pbar);
        double weight = cfg.alpha * std::pow(1.0 - py, cfg.gamma);
        if (cfg.confidence_weight) weight *= std::pow(confidence[u], cfg.beta);
        total += weight * ce;
        for (int k = 0; k < K; ++k) res.grad[u * K + k] = weight * inv_n * (std::exp(x[k] - log_z) - yu[k]);
    }
    res.loss = total * inv_n;
    return res;
}

TrainResult train(std::span<const FeatureMap> features, std::span<const TargetMap> targets, const LossConfig& cfg,
                  std::uint64_t seed) {
    cfg.validate();
    if (features.empty()) throw std::invalid_argument("train: empty dataset");
    if (features.size() != targets.size()) throw std::invalid_argument("train: feature/target count mismatch");
    const int K = targets.front().K;
    const int dim = features.front().dim();
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].dim() != dim) throw std::invalid_argument("train: feature dims differ across tiles");
        if (targets[i].K != K) throw std::invalid_argument("train: class counts differ across tiles");
        if (targets[i].grid_h != features[i].grid_h() || targets[i].grid_w != features[i].grid_w())
            throw std::invalid_argument("train: target grid does not match feature grid");
    }

    TrainResult res;
    res.head = init_head(K, dim, derive_seed(seed, 0));
    std::vector<double> w(res.head.weight.begin(), res.head.weight.end());
    std::vector<double> b(res.head.bias.begin(), res.head.bias.end());

    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> logits, y, conf, gw, gb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(static_cast<std::uint64_t>(i))]);
        double epoch_loss = 0.0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            logits.clear();
            y.clear();
            conf.clear();
            for (std::size_t j = start; j < stop; ++j) {
                const FeatureMap& f = features[order[j]];
                const TargetMap& t = targets[order[j]];
                const std::size_t off = logits.size();
                logits.resize(off + f.element_count() * K);
                forward_rows(w.data(), b.data(), K, dim, f, logits.data() + off);
                y.insert(y.end(), t.y.begin(), t.y.end());
                conf.insert(conf.end(), t.confidence.begin(), t.confidence.end());
            }
            const std::vector<double> pbar = batch_class_means(softmax_rows(logits, K), K);
            const LossResult lr = focal_confidence_loss(logits, y, conf, pbar, K, cfg);
            epoch_loss += lr.loss;
            ++steps;

            gw.assign(w.size(), 0.0);
            gb.assign(b.size(), 0.0);
            std::size_t row = 0;
            for (std::size_t j = start; j < stop; ++j) {
                const FeatureMap& f = features[order[j]];
                for (std::size_t u = 0; u < f.element_count(); ++u, ++row) {
                    const auto x = f.element(u);
                    for (int k = 0; k < K; ++k) {
                        const double g = lr.grad[row * K + k];
                        if (g == 0.0) continue;
                        gb[k] += g;
                        double* gwk = gw.data() + static_cast<std::size_t>(k) * dim;
                        for (int d = 0; d < dim; ++d) gwk[d] += g * static_cast<double>(x[d]);
                    }
                }
            }
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * gw[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= cfg.learning_rate * gb[i];
        }
        res.loss_history.push_back(epoch_loss / steps);
    }
    for (std::size_t i = 0; i < w.size(); ++i) res.head.weight[i] = static_cast<float>(w[i]);
    for (std::size_t i = 0; i < b.size(); ++i) res.head.bias[i] = static_cast<float>(b[i]);
    return res;
}

LabelMap argmax_labels(std::span<const double> rows, int height, int width, int K) {
    if (rows.size() != static_cast<std::size_t>(height) * width * K) throw std::invalid_argument("argmax_labels: size mismatch");
    LabelMap out(height, width, K);
    for (std::size_t u = 0; u < out.labels.size(); ++u) {
        const double* r = rows.data() + u * K;
        int best = 0;
        for (int k = 1; k < K; ++k)
            if (r[k] > r[best]) best = k;
        out.labels[u] = static_cast<std::uint16_t>(best);
    }
    return out;
}

std::vector<double> predict_probabilities(const HeadParams& head, const FeatureMap& features, int height, int width,
                                          int patch) {
    if (ceil_div(height, patch) != features.grid_h() || ceil_div(width, patch) != features.grid_w())
        throw std::invalid_argument("predict: feature grid does not match ceil(image / patch)");
    const Logits lg = head_forward(head, features);
    const std::vector<double> probs = softmax_rows(lg.values, head.K);
    std::vector<double> out(static_cast<std::size_t>(height) * width * head.K);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const std::size_t src = (static_cast<std::size_t>(r / patch) * features.grid_w() + c / patch) * head.K;
            const std::size_t dst = (static_cast<std::size_t>(r) * width + c) * head.K;
            for (int k = 0; k < head.K; ++k) out[dst + k] = probs[src + k];
        }
    return out;
}

LabelMap predict(const HeadParams& head, const FeatureMap& features, int height, int width, int patch) {
    const Logits lg = head_forward(head, features);
    const LabelMap grid = argmax_labels(lg.values, lg.grid_h, lg.grid_w, head.K);
    return project_q_to_pixels(grid, height, width, patch);
}

}  // namespace usm
