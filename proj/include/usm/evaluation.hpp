#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usm/types.hpp"

namespace usm {

struct ConfusionMatrix {
    int k_pred = 0;
    int k_gt = 0;
    /// k_pred rows by k_gt columns.
    std::vector<std::uint64_t> counts;

    ConfusionMatrix() = default;
    ConfusionMatrix(int k_pred, int k_gt)
        : k_pred(k_pred), k_gt(k_gt), counts(static_cast<std::size_t>(k_pred) * k_gt, 0) {}

    std::uint64_t& at(int p, int g) { return counts[static_cast<std::size_t>(p) * k_gt + g]; }
    std::uint64_t at(int p, int g) const { return counts[static_cast<std::size_t>(p) * k_gt + g]; }
    std::uint64_t total() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Adds one tile. An empty `existing` is sized from the label maps' class counts.
ConfusionMatrix accumulate_confusion(const LabelMap& pred, const LabelMap& gt, ConfusionMatrix existing);

/// Maximum-weight cluster-to-class assignment. Entry p is the class matched
/// to cluster p, or -1 when cluster p is left unmatched (k_pred > k_gt).
/// Among optimal assignments the lexicographically smallest is returned.
std::vector<int> hungarian_match(const ConfusionMatrix& confusion);

/// Total matched count of an assignment.
std::uint64_t matched_total(const ConfusionMatrix& confusion, const std::vector<int>& matching);

struct MetricReport {
    /// Per ground-truth class, percent; classes absent from both sides hold 0 and are flagged.
    std::vector<double> iou;
    std::vector<bool> evaluated;
    double miou = 0.0;
    double accuracy = 0.0;
    std::vector<int> matching;
    std::uint64_t pixel_count = 0;
};

MetricReport compute_metrics(const ConfusionMatrix& confusion, const std::vector<int>& matching);

/// Human-readable table followed by a key=value block, two decimals throughout.
std::string format_report(const MetricReport& report, const std::string& title);

/// Reads mIoU and Acc back from a formatted report's key=value block.
struct ReportSummary {
    double miou = 0.0;
    double accuracy = 0.0;
};
ReportSummary parse_report_summary(const std::string& text);

}  // namespace usm
