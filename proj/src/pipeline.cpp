#include "usm/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "usm/alignment.hpp"
#include "usm/clustering.hpp"
#include "usm/container.hpp"
#include "usm/crf.hpp"
#include "usm/errors.hpp"
#include "usm/hash.hpp"
#include "usm/manifest.hpp"
#include "usm/proposals.hpp"
#include "usm/rng.hpp"
#include "usm/synth.hpp"
#include "usm/trainer.hpp"

namespace fs = std::filesystem;

namespace usm {

Layout::Layout(fs::path root_dir, fs::path data_dir)
    : root(std::move(root_dir)),
      data(data_dir.empty() ? root / "data" : std::move(data_dir)),
      stage1(root / "stage1"),
      train(root / "train"),
      predict(root / "predict"),
      eval(root / "eval") {}

namespace {

const std::vector<std::string> kSynthKeys = {"seed", "num_classes", "patch", "synth."};
const std::vector<std::string> kStage1Keys = {"seed", "num_classes", "patch", "proposal.", "kmeans."};
// The CRF keys matter to training only when it refines pseudo-labels; they are
// included unconditionally so the stamp stays a pure function of the config.
const std::vector<std::string> kTrainKeys = {"seed", "align.", "loss.", "train.", "crf."};
const std::vector<std::string> kPredictKeys = {"crf."};

struct Stamp {
    std::string config;
    std::string inputs;
    std::string outputs;
};

std::string text_of(const std::vector<std::uint8_t>& bytes) { return std::string(bytes.begin(), bytes.end()); }

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::exists(dir)) return files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

// Hash of every file in a stage directory except its stamp.
std::string stage_output_hash(const fs::path& dir) {
    Fnv1a h;
    for (const fs::path& f : sorted_files(dir)) {
        const std::string rel = f.lexically_relative(dir).generic_string();
        if (rel == "stamp.txt") continue;
        h.update(rel);
        h.update(std::string_view("\t"));
        h.update(hash_file(f));
        h.update(std::string_view("\n"));
    }
    return h.hex();
}

void write_stamp(const fs::path& dir, const Stamp& s) {
    write_text(dir / "stamp.txt", "config=" + s.config + "\ninputs=" + s.inputs + "\noutputs=" + s.outputs + "\n");
}

std::optional<Stamp> read_stamp(const fs::path& dir) {
    const fs::path p = dir / "stamp.txt";
    if (!fs::exists(p)) return std::nullopt;
    std::istringstream is(text_of(read_file_bytes(p)));
    std::string line;
    Stamp s;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "config") s.config = value;
        if (key == "inputs") s.inputs = value;
        if (key == "outputs") s.outputs = value;
    }
    return s;
}

bool stamp_current(const fs::path& dir, const std::string& config, const std::string& inputs) {
    const auto s = read_stamp(dir);
    return s && s->config == config && s->inputs == inputs && s->outputs == stage_output_hash(dir);
}

// Verifies an upstream stage's stamp against its directory contents and config.
void require_fresh(const fs::path& dir, const std::string& stage, const std::string& config, bool force) {
    if (force) return;
    const auto s = read_stamp(dir);
    if (!s) throw DataError(stage + " outputs missing (no stamp in " + dir.string() + "); run " + stage + " first");
    if (s->config != config)
        throw DataError(stage + " outputs are stale: config changed since they were written (use --force to override)");
    if (s->outputs != stage_output_hash(dir))
        throw DataError(stage + " outputs are stale: files changed since they were written (use --force to override)");
}

std::string upstream_outputs(const fs::path& dir) {
    const auto s = read_stamp(dir);
    return s ? s->outputs : stage_output_hash(dir);
}

std::string data_hash(const Layout& layout) { return tree_hash(layout.data); }

const Split kSplits[] = {Split::Train, Split::Val, Split::Test};

fs::path manifest_path(const Layout& layout, Split s) { return layout.data / (std::string(split_name(s)) + ".tsv"); }

SplitManifest load_split(const Layout& layout, Split s) {
    const fs::path p = manifest_path(layout, s);
    if (!fs::exists(p)) throw DataError(std::string("missing manifest ") + p.string());
    return load_manifest(p);
}

fs::path tile_path(const fs::path& dir, Split s, const std::string& id, const char* suffix) {
    return dir / split_name(s) / (id + suffix);
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Tensor centroid_tensor(const ClusterModel& m) {
    std::vector<float> v(m.centroids.begin(), m.centroids.end());
    return make_tensor<float>({static_cast<std::uint32_t>(m.k), static_cast<std::uint32_t>(m.dim)}, v);
}

Tensor head_tensor(const HeadParams& h) {
    std::vector<float> v;
    v.reserve(static_cast<std::size_t>(h.K) * (h.dim + 1));
    for (int k = 0; k < h.K; ++k) {
        for (int d = 0; d < h.dim; ++d) v.push_back(h.weight[static_cast<std::size_t>(k) * h.dim + d]);
        v.push_back(h.bias[k]);
    }
    return make_tensor<float>({static_cast<std::uint32_t>(h.K), static_cast<std::uint32_t>(h.dim + 1)}, v);
}

HeadParams head_from_tensor(const Tensor& t) {
    if (t.dtype != DType::F32 || t.dims.size() != 2 || t.dims[1] < 2) throw FormatError("head container must be f32 (K, dim+1)");
    const auto v = tensor_values<float>(t);
    HeadParams h;
    h.K = static_cast<int>(t.dims[0]);
    h.dim = static_cast<int>(t.dims[1]) - 1;
    for (int k = 0; k < h.K; ++k) {
        for (int d = 0; d < h.dim; ++d) h.weight.push_back(v[static_cast<std::size_t>(k) * (h.dim + 1) + d]);
        h.bias.push_back(v[static_cast<std::size_t>(k) * (h.dim + 1) + h.dim]);
    }
    return h;
}

void write_targets(const TargetMap& t, const fs::path& stem) {
    const auto gh = static_cast<std::uint32_t>(t.grid_h);
    const auto gw = static_cast<std::uint32_t>(t.grid_w);
    const std::vector<float> y(t.y.begin(), t.y.end());
    const std::vector<float> c(t.confidence.begin(), t.confidence.end());
    write_container(make_tensor<float>({gh, gw, static_cast<std::uint32_t>(t.K)}, y), stem.string() + ".y.wkt");
    write_container(make_tensor<float>({gh, gw}, c), stem.string() + ".conf.wkt");
    write_container(make_tensor<std::uint8_t>({gh, gw}, t.hard), stem.string() + ".hard.wkt");
}

struct TileInputs {
    ImageTile image;
    FeatureMap features;
};

TileInputs read_tile(const SplitManifest& m, const ManifestRecord& r, int patch) {
    TileInputs t;
    t.image = image_from_tensor(read_container(m.resolve(r.image_path)));
    t.features = features_from_tensor(read_container(m.resolve(r.feature_path)));
    t.features.validate();
    if (t.features.grid_h() != ceil_div(t.image.height(), patch) || t.features.grid_w() != ceil_div(t.image.width(), patch))
        throw DataError("feature grid does not match ceil(image / patch)");
    return t;
}

// Runs fn on every record, collecting per-tile failures into one DataError.
template <typename Fn>
void for_each_tile(const SplitManifest& m, Fn fn) {
    std::vector<std::string> failures;
    for (const ManifestRecord& r : m.records) {
        try {
            fn(r);
        } catch (const std::exception& e) {
            failures.push_back(std::string(split_name(m.split)) + " tile " + r.id + ": " + e.what());
        }
    }
    if (!failures.empty()) {
        std::string msg = std::to_string(failures.size()) + " tile(s) failed:";
        for (const auto& f : failures) msg += "\n  " + f;
        throw DataError(msg);
    }
}

MetricReport evaluate(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, int K) {
    ConfusionMatrix cm(K, K);
    for (std::size_t i = 0; i < preds.size(); ++i) cm = accumulate_confusion(preds[i], gts[i], std::move(cm));
    return compute_metrics(cm, hungarian_match(cm));
}

}  // namespace

std::string tree_hash(const fs::path& dir) {
    Fnv1a h;
    for (const fs::path& f : sorted_files(dir)) {
        h.update(f.lexically_relative(dir).generic_string());
        h.update(std::string_view("\t"));
        h.update(hash_file(f));
        h.update(std::string_view("\n"));
    }
    return h.hex();
}

std::string write_output_hashes(const Layout& layout) {
    std::string listing;
    for (const fs::path& f : sorted_files(layout.root)) {
        const std::string rel = f.lexically_relative(layout.root).generic_string();
        if (rel == "hashes.tsv") continue;
        listing += rel + "\t" + hash_file(f) + "\n";
    }
    write_text(layout.root / "hashes.tsv", listing);
    return hash_string(listing);
}

void run_synth(const PipelineConfig& cfg, const Layout& layout) {
    fs::remove_all(layout.data);
    generate_split(cfg.synth, cfg.tiles, cfg.seed, layout.data);
    write_stamp(layout.data, {cfg.section_hash(kSynthKeys), "", stage_output_hash(layout.data)});
}

void run_stage1(const PipelineConfig& cfg, const Layout& layout) {
    const int K = cfg.num_classes;
    fs::remove_all(layout.stage1);
    fs::create_directories(layout.stage1);
    for (Split s : kSplits) {
        if (s == Split::Val && !fs::exists(manifest_path(layout, s))) continue;
        const SplitManifest m = load_split(layout, s);
        if (m.records.empty()) continue;
        fs::create_directories(layout.stage1 / split_name(s));

        std::vector<TileInputs> tiles(m.records.size());
        std::vector<RegionMap> regions(m.records.size());
        for_each_tile(m, [&](const ManifestRecord& r) {
            TileInputs t = read_tile(m, r, cfg.patch);
            const MaskSet masks = read_maskset(m.resolve(r.maskset_path));
            if (!masks.masks.empty() && (masks.height != t.image.height() || masks.width != t.image.width()))
                throw DataError("mask dimensions do not match the image");
            MaskSet sized = masks;
            sized.height = t.image.height();
            sized.width = t.image.width();
            const std::size_t idx = static_cast<std::size_t>(&r - m.records.data());
            regions[idx] = build_region_map(sized, cfg.proposal);
            tiles[idx] = std::move(t);
        });

        std::vector<FeatureMap> feats;
        for (const auto& t : tiles) feats.push_back(t.features);
        const ClusterModel model = kmeans_fit_pooled(feats, cfg.kmeans, derive_seed(cfg.seed, 100 + static_cast<int>(s)));
        write_container(centroid_tensor(model), layout.stage1 / (std::string(split_name(s)) + ".kmeans.wkt"));

        for (std::size_t t = 0; t < m.records.size(); ++t) {
            const std::string& id = m.records[t].id;
            const int h = tiles[t].image.height();
            const int w = tiles[t].image.width();
            const LabelMap q = assign_clusters(model, tiles[t].features);
            const LabelMap qp = project_q_to_pixels(q, h, w, cfg.patch);
            const LabelMap p = fuse_labels(regions[t], qp);
            const RegionMap full = complete_regions(regions[t], p);
            const auto stats = region_stats(qp, full, K);
            write_container(to_tensor(full), tile_path(layout.stage1, s, id, ".regions.wkt"));
            write_container(to_tensor(q), tile_path(layout.stage1, s, id, ".q.wkt"));
            write_container(to_tensor(p), tile_path(layout.stage1, s, id, ".p.wkt"));
            write_text(tile_path(layout.stage1, s, id, ".stats.tsv"), format_region_stats(stats));
        }
    }
    write_stamp(layout.stage1, {cfg.section_hash(kStage1Keys), data_hash(layout), stage_output_hash(layout.stage1)});
}

void run_train(const PipelineConfig& cfg, const Layout& layout, bool force) {
    require_fresh(layout.stage1, "stage1", cfg.section_hash(kStage1Keys), force);
    const SplitManifest m = load_split(layout, Split::Train);
    if (m.records.empty()) throw DataError("train split is empty");
    fs::remove_all(layout.train);
    fs::create_directories(layout.train / "targets");

    std::vector<FeatureMap> feats(m.records.size());
    std::vector<TargetMap> targets(m.records.size());
    for_each_tile(m, [&](const ManifestRecord& r) {
        const std::size_t idx = static_cast<std::size_t>(&r - m.records.data());
        TileInputs t = read_tile(m, r, cfg.patch);
        const LabelMap q = labels_from_tensor(read_container(tile_path(layout.stage1, Split::Train, r.id, ".q.wkt")), cfg.num_classes);
        LabelMap evidence = project_q_to_pixels(q, t.image.height(), t.image.width(), cfg.patch);
        const RegionMap regions = regions_from_tensor(read_container(tile_path(layout.stage1, Split::Train, r.id, ".regions.wkt")));
        if (cfg.crf_enabled && cfg.crf_target == CrfTarget::PseudoLabels) evidence = crf_refine(evidence, t.image, cfg.crf);
        const auto stats = region_stats(evidence, regions, cfg.num_classes);
        targets[idx] = build_targets(stats, regions, cfg.align);
        write_targets(targets[idx], layout.train / "targets" / r.id);
        feats[idx] = std::move(t.features);
    });

    const TrainResult res = train(feats, targets, cfg.loss, derive_seed(cfg.seed, 200));
    write_container(head_tensor(res.head), layout.train / "head.wkt");
    std::string log = "epoch\tloss\n";
    for (std::size_t e = 0; e < res.loss_history.size(); ++e) log += std::to_string(e + 1) + "\t" + fmt17(res.loss_history[e]) + "\n";
    write_text(layout.train / "loss.tsv", log);
    write_stamp(layout.train, {cfg.section_hash(kTrainKeys), upstream_outputs(layout.stage1) + ":" + data_hash(layout),
                               stage_output_hash(layout.train)});
}

void run_predict(const PipelineConfig& cfg, const Layout& layout, bool force) {
    require_fresh(layout.train, "train", cfg.section_hash(kTrainKeys), force);
    const HeadParams head = head_from_tensor(read_container(layout.train / "head.wkt"));
    const SplitManifest m = load_split(layout, Split::Test);
    fs::remove_all(layout.predict);
    fs::create_directories(layout.predict / split_name(Split::Test));
    const bool refine = cfg.crf_enabled && cfg.crf_target == CrfTarget::Predictions;
    for_each_tile(m, [&](const ManifestRecord& r) {
        const TileInputs t = read_tile(m, r, cfg.patch);
        const LabelMap pred = predict(head, t.features, t.image.height(), t.image.width(), cfg.patch);
        const LabelMap final_labels = refine ? crf_refine(pred, t.image, cfg.crf) : pred;
        write_container(to_tensor(pred), tile_path(layout.predict, Split::Test, r.id, ".pred.wkt"));
        write_container(to_tensor(final_labels), tile_path(layout.predict, Split::Test, r.id, ".final.wkt"));
    });
    write_stamp(layout.predict, {cfg.section_hash(kPredictKeys), upstream_outputs(layout.train) + ":" + data_hash(layout),
                                 stage_output_hash(layout.predict)});
}

EvalSummary run_eval(const PipelineConfig& cfg, const Layout& layout, bool force) {
    require_fresh(layout.predict, "predict", cfg.section_hash(kPredictKeys), force);
    const SplitManifest m = load_split(layout, Split::Test);
    if (m.records.empty()) throw DataError("test split is empty");
    const int K = cfg.num_classes;
    std::vector<LabelMap> finals, qs, ps, gts;
    for_each_tile(m, [&](const ManifestRecord& r) {
        if (!r.label_path) throw DataError("missing ground-truth label path");
        LabelMap gt = labels_from_tensor(read_container(m.resolve(*r.label_path)), K);
        LabelMap fin = labels_from_tensor(read_container(tile_path(layout.predict, Split::Test, r.id, ".final.wkt")), K);
        const LabelMap q = labels_from_tensor(read_container(tile_path(layout.stage1, Split::Test, r.id, ".q.wkt")), K);
        LabelMap p = labels_from_tensor(read_container(tile_path(layout.stage1, Split::Test, r.id, ".p.wkt")), K);
        if (!fin.labels.same_shape(gt.labels)) throw DataError("prediction and ground truth sizes differ");
        qs.push_back(project_q_to_pixels(q, gt.height(), gt.width(), cfg.patch));
        finals.push_back(std::move(fin));
        ps.push_back(std::move(p));
        gts.push_back(std::move(gt));
    });
    EvalSummary out;
    out.pipeline = evaluate(finals, gts, K);
    out.kmeans_baseline = evaluate(qs, gts, K);
    out.pseudo_labels = evaluate(ps, gts, K);
    fs::remove_all(layout.eval);
    fs::create_directories(layout.eval);
    write_text(layout.eval / "report.txt", format_report(out.pipeline, "pipeline (test split)"));
    write_text(layout.eval / "kmeans_baseline.txt", format_report(out.kmeans_baseline, "kmeans baseline Q (test split)"));
    write_text(layout.eval / "pseudo_labels.txt", format_report(out.pseudo_labels, "pre-pseudo-labels P (test split)"));
    return out;
}

EvalSummary run_all(const PipelineConfig& cfg, const Layout& layout, bool force, std::ostream* log) {
    auto note = [&](const std::string& stage, StageStatus st) {
        if (log) *log << stage << (st == StageStatus::Ran ? ": done" : ": up to date") << '\n';
    };
    auto guarded = [&](const std::string& stage, auto&& fn) {
        try {
            return fn();
        } catch (const StageError&) {
            throw;
        } catch (const DataError& e) {
            throw StageError(stage, e.what(), true);
        } catch (const IoError& e) {
            throw StageError(stage, e.what(), true);
        } catch (const FormatError& e) {
            throw StageError(stage, e.what(), true);
        } catch (const ParseError& e) {
            throw StageError(stage, e.what(), true);
        } catch (const std::exception& e) {
            throw StageError(stage, e.what(), false);
        }
    };
    fs::create_directories(layout.root);
    const bool own_data = layout.data == layout.root / "data";
    if (own_data) {
        guarded("synth", [&] {
            const bool cur = !force && stamp_current(layout.data, cfg.section_hash(kSynthKeys), "");
            if (!cur) run_synth(cfg, layout);
            note("synth", cur ? StageStatus::Reused : StageStatus::Ran);
        });
    }
    guarded("stage1", [&] {
        const bool cur = !force && stamp_current(layout.stage1, cfg.section_hash(kStage1Keys), data_hash(layout));
        if (!cur) run_stage1(cfg, layout);
        note("stage1", cur ? StageStatus::Reused : StageStatus::Ran);
    });
    guarded("train", [&] {
        const std::string inputs = upstream_outputs(layout.stage1) + ":" + data_hash(layout);
        const bool cur = !force && stamp_current(layout.train, cfg.section_hash(kTrainKeys), inputs);
        if (!cur) run_train(cfg, layout, false);
        note("train", cur ? StageStatus::Reused : StageStatus::Ran);
    });
    guarded("predict", [&] {
        const std::string inputs = upstream_outputs(layout.train) + ":" + data_hash(layout);
        const bool cur = !force && stamp_current(layout.predict, cfg.section_hash(kPredictKeys), inputs);
        if (!cur) run_predict(cfg, layout, false);
        note("predict", cur ? StageStatus::Reused : StageStatus::Ran);
    });
    EvalSummary summary = guarded("eval", [&] { return run_eval(cfg, layout, false); });
    note("eval", StageStatus::Ran);
    write_output_hashes(layout);
    return summary;
}

}  // namespace usm
