#pragma once

// Stage orchestration over an output directory:
//
//   data/     synthetic tiles and train/val/test manifests (or --data DIR)
//   stage1/   region maps, Q, P and region stats per split, plus KMeans centroids
//   train/    targets, head.wkt, loss.tsv
//   predict/  raw and refined predictions for the test split
//   eval/     metric reports
//   hashes.tsv
//
// Each stage writes stamp.txt with hashes of its config section, its inputs and
// its outputs; downstream stages refuse stale upstream outputs unless forced.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "usm/config.hpp"
#include "usm/evaluation.hpp"

namespace usm {

struct Layout {
    explicit Layout(std::filesystem::path root, std::filesystem::path data = {});

    std::filesystem::path root;
    std::filesystem::path data;
    std::filesystem::path stage1;
    std::filesystem::path train;
    std::filesystem::path predict;
    std::filesystem::path eval;
};

struct EvalSummary {
    MetricReport pipeline;
    MetricReport kmeans_baseline;
    MetricReport pseudo_labels;
};

/// Outcome of a stage invocation inside run_all.
enum class StageStatus { Ran, Reused };

void run_synth(const PipelineConfig& cfg, const Layout& layout);
void run_stage1(const PipelineConfig& cfg, const Layout& layout);
void run_train(const PipelineConfig& cfg, const Layout& layout, bool force);
void run_predict(const PipelineConfig& cfg, const Layout& layout, bool force);
EvalSummary run_eval(const PipelineConfig& cfg, const Layout& layout, bool force);

/// synth (unless an external data dir is used), stage1, train, predict, eval.
/// Stages whose stamp matches the current config and inputs are reused.
/// Failures are rethrown as StageError naming the stage.
EvalSummary run_all(const PipelineConfig& cfg, const Layout& layout, bool force, std::ostream* log = nullptr);

/// Writes hashes.tsv (relative path, FNV-1a) for every file under the root and
/// returns the hash of that listing.
std::string write_output_hashes(const Layout& layout);

/// Hash over the sorted (relative path, content hash) listing of a directory tree.
std::string tree_hash(const std::filesystem::path& dir);

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what, bool data_error)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), data_error_(data_error) {}
    const std::string& stage() const noexcept { return stage_; }
    bool data_error() const noexcept { return data_error_; }

private:
    std::string stage_;
    bool data_error_;
};

}  // namespace usm
