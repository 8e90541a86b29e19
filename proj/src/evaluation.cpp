#include "usm/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "usm/errors.hpp"

namespace usm {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto v : counts) s += v;
    return s;
}

ConfusionMatrix accumulate_confusion(const LabelMap& pred, const LabelMap& gt, ConfusionMatrix existing) {
    if (!pred.labels.same_shape(gt.labels)) throw std::invalid_argument("accumulate_confusion: dimension mismatch");
    if (existing.counts.empty()) existing = ConfusionMatrix(pred.num_classes, gt.num_classes);
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const int p = pred.labels[i];
        const int g = gt.labels[i];
        if (p >= existing.k_pred || g >= existing.k_gt) throw std::invalid_argument("accumulate_confusion: label out of range");
        ++existing.at(p, g);
    }
    return existing;
}

namespace {

using Matrix = std::vector<std::vector<long long>>;

// Minimum-cost perfect assignment on a square matrix (potentials method).
// Returns the optimal cost; row_to_col receives the assignment.
long long min_cost_assignment(const Matrix& cost, std::vector<int>& row_to_col) {
    const int n = static_cast<int>(cost.size());
    row_to_col.assign(n, -1);
    if (n == 0) return 0;
    constexpr long long inf = std::numeric_limits<long long>::max() / 4;
    std::vector<long long> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<long long> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            long long delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    long long total = 0;
    for (int j = 1; j <= n; ++j) {
        row_to_col[p[j] - 1] = j - 1;
        total += cost[p[j] - 1][j - 1];
    }
    return total;
}

Matrix submatrix(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
    Matrix out(rows.size(), std::vector<long long>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out[i][j] = m[rows[i]][cols[j]];
    return out;
}

}  // namespace

std::vector<int> hungarian_match(const ConfusionMatrix& confusion) {
    const int n = std::max(confusion.k_pred, confusion.k_gt);
    // Padded square cost matrix: negated counts, zero in padding.
    Matrix cost(n, std::vector<long long>(n, 0));
    for (int p = 0; p < confusion.k_pred; ++p)
        for (int g = 0; g < confusion.k_gt; ++g) cost[p][g] = -static_cast<long long>(confusion.at(p, g));

    std::vector<int> scratch;
    std::vector<int> rows(n), cols(n);
    for (int i = 0; i < n; ++i) rows[i] = cols[i] = i;
    long long remaining = min_cost_assignment(cost, scratch);

    // Fix rows in order, each to the smallest column that keeps the optimum reachable.
    std::vector<int> assign(n, -1);
    for (int r = 0; r < n; ++r) {
        const std::vector<int> rest_rows(rows.begin() + 1, rows.end());
        for (std::size_t ci = 0; ci < cols.size(); ++ci) {
            std::vector<int> rest_cols = cols;
            rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
            const long long sub = min_cost_assignment(submatrix(cost, rest_rows, rest_cols), scratch);
            if (cost[r][cols[ci]] + sub == remaining) {
                assign[r] = cols[ci];
                remaining = sub;
                cols = std::move(rest_cols);
                break;
            }
        }
        rows.erase(rows.begin());
    }
    std::vector<int> out(confusion.k_pred, -1);
    for (int p = 0; p < confusion.k_pred; ++p) out[p] = assign[p] < confusion.k_gt ? assign[p] : -1;
    return out;
}

std::uint64_t matched_total(const ConfusionMatrix& confusion, const std::vector<int>& matching) {
    std::uint64_t s = 0;
    for (int p = 0; p < confusion.k_pred; ++p)
        if (matching[p] >= 0) s += confusion.at(p, matching[p]);
    return s;
}

MetricReport compute_metrics(const ConfusionMatrix& confusion, const std::vector<int>& matching) {
    if (static_cast<int>(matching.size()) != confusion.k_pred) throw std::invalid_argument("compute_metrics: matching size mismatch");
    std::vector<char> seen(std::max(confusion.k_gt, 0), 0);
    for (int m : matching) {
        if (m < -1 || m >= confusion.k_gt) throw std::invalid_argument("compute_metrics: matching out of range");
        if (m >= 0) {
            if (seen[m]) throw std::invalid_argument("compute_metrics: matching is not injective");
            seen[m] = 1;
        }
    }
    MetricReport rep;
    rep.pixel_count = confusion.total();
    if (rep.pixel_count == 0) throw DataError("compute_metrics: no evaluated pixels");
    rep.matching = matching;
    const int K = confusion.k_gt;
    std::vector<std::uint64_t> tp(K, 0), pred_n(K, 0), gt_n(K, 0);
    for (int p = 0; p < confusion.k_pred; ++p)
        for (int g = 0; g < K; ++g) {
            const std::uint64_t v = confusion.at(p, g);
            gt_n[g] += v;
            if (matching[p] < 0) continue;
            pred_n[matching[p]] += v;
            if (matching[p] == g) tp[g] += v;
        }
    rep.iou.assign(K, 0.0);
    rep.evaluated.assign(K, false);
    std::uint64_t correct = 0;
    double sum = 0.0;
    int classes = 0;
    for (int g = 0; g < K; ++g) {
        correct += tp[g];
        const std::uint64_t uni = pred_n[g] + gt_n[g] - tp[g];
        if (uni == 0) continue;
        rep.evaluated[g] = true;
        rep.iou[g] = 100.0 * static_cast<double>(tp[g]) / static_cast<double>(uni);
        sum += rep.iou[g];
        ++classes;
    }
    rep.miou = classes ? sum / classes : 0.0;
    rep.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(rep.pixel_count);
    return rep;
}

std::string format_report(const MetricReport& report, const std::string& title) {
    std::ostringstream os;
    char buf[128];
    os << title << '\n';
    os << "class\tIoU\n";
    for (std::size_t g = 0; g < report.iou.size(); ++g) {
        if (report.evaluated[g])
            std::snprintf(buf, sizeof buf, "%zu\t%.2f\n", g, report.iou[g]);
        else
            std::snprintf(buf, sizeof buf, "%zu\t-\n", g);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "mIoU\t%.2f\nAcc\t%.2f\n\n", report.miou, report.accuracy);
    os << buf;
    std::snprintf(buf, sizeof buf, "miou=%.2f\naccuracy=%.2f\npixels=%llu\n", report.miou, report.accuracy,
                  static_cast<unsigned long long>(report.pixel_count));
    os << buf;
    os << "matching=";
    for (std::size_t p = 0; p < report.matching.size(); ++p) os << (p ? "," : "") << report.matching[p];
    os << '\n';
    for (std::size_t g = 0; g < report.iou.size(); ++g) {
        if (!report.evaluated[g]) continue;
        std::snprintf(buf, sizeof buf, "iou.%zu=%.2f\n", g, report.iou[g]);
        os << buf;
    }
    return os.str();
}

ReportSummary parse_report_summary(const std::string& text) {
    ReportSummary s;
    bool have_m = false;
    bool have_a = false;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("miou=", 0) == 0) {
            s.miou = std::stod(line.substr(5));
            have_m = true;
        } else if (line.rfind("accuracy=", 0) == 0) {
            s.accuracy = std::stod(line.substr(9));
            have_a = true;
        }
    }
    if (!have_m || !have_a) throw ParseError("report lacks miou/accuracy keys");
    return s;
}

}  // namespace usm
