#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "usm/config.hpp"
#include "usm/container.hpp"
#include "usm/errors.hpp"
#include "usm/manifest.hpp"
#include "usm/pipeline.hpp"
#include "usm/synth.hpp"

using namespace usm;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config(std::uint64_t seed = 3) {
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.tiles = 6;
    cfg.synth.size = 64;
    cfg.loss.epochs = 5;
    cfg.finalize();
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("split counts") {
    const SplitCounts a = split_counts(100);
    CHECK(a.train == 60);
    CHECK(a.val == 15);
    CHECK(a.test == 25);
    const SplitCounts b = split_counts(4);
    CHECK(b.train == 2);
    CHECK(b.val == 1);
    CHECK(b.test == 1);
    CHECK_THROWS(split_counts(2));
}

TEST_CASE("scenes are deterministic per seed and differ across seeds") {
    SceneConfig cfg;
    cfg.size = 64;
    const Scene a = generate_scene(cfg);
    const Scene b = generate_scene(cfg);
    CHECK(a.gt == b.gt);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.features == b.features);
    cfg.seed = 2;
    CHECK_FALSE(generate_scene(cfg).gt == a.gt);
}

TEST_CASE("scene geometry") {
    SceneConfig cfg;
    cfg.size = 60;
    CHECK_THROWS(generate_scene(cfg));
    cfg.size = 64;
    const Scene s = generate_scene(cfg);
    CHECK(s.gt.height() == 64);
    CHECK(s.features.grid_h() == 8);
    CHECK(s.features.dim() == cfg.feature_dim);
    for (auto v : s.gt.labels) CHECK(v < cfg.K);
    CHECK_FALSE(s.masks.masks.empty());
}

TEST_CASE("generated split writes loadable manifests and containers") {
    testutil::TempDir dir;
    SceneConfig cfg;
    cfg.size = 32;
    const GeneratedSplit g = generate_split(cfg, 5, 10, dir.path);
    CHECK(g.train.records.size() == 3);
    CHECK(g.val.records.size() == 1);
    CHECK(g.test.records.size() == 1);
    const SplitManifest m = load_manifest(dir.path / "train.tsv");
    CHECK(m.split == Split::Train);
    REQUIRE(m.records.size() == 3);
    for (const auto& r : m.records) {
        const Tensor img = read_container(m.resolve(r.image_path));
        CHECK(img.dims == std::vector<std::uint32_t>{32, 32});
        CHECK(read_maskset(m.resolve(r.maskset_path)).masks.size() > 0);
    }
}

TEST_CASE("regeneration with the same seed gives identical bytes") {
    testutil::TempDir a, b;
    SceneConfig cfg;
    cfg.size = 32;
    generate_split(cfg, 4, 5, a.path);
    generate_split(cfg, 4, 5, b.path);
    CHECK(tree_hash(a.path) == tree_hash(b.path));
    for (const auto& e : fs::recursive_directory_iterator(a.path))
        if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(b.path / fs::relative(e.path(), a.path)));
}

}  // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("parse applies values and ignores comments") {
    const PipelineConfig c = parse_config("# header\nseed = 9\n\nalign.B = 4.5  # trailing\nloss.confidence_weight=false\n");
    CHECK(c.seed == 9);
    CHECK(c.align.B == 4.5);
    CHECK_FALSE(c.loss.confidence_weight);
    CHECK(c.align.K == c.num_classes);
}

TEST_CASE("unknown keys and bad values name the key and line") {
    try {
        parse_config("seed = 1\nalign.bogus = 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string w = e.what();
        CHECK(w.find("line 2") != std::string::npos);
        CHECK(w.find("align.bogus") != std::string::npos);
    }
    try {
        parse_config("loss.gamma = abc\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("loss.gamma") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("align.B = -1\n"), ConfigError);
}

TEST_CASE("serialize round trips through parse") {
    PipelineConfig c;
    set_config_value(c, "crf.iterations", "7");
    set_config_value(c, "crf.target", "pseudo_labels");
    c.finalize();
    const PipelineConfig d = parse_config(c.serialize());
    CHECK(d.serialize() == c.serialize());
    CHECK(d.crf_target == CrfTarget::PseudoLabels);
    CHECK(config_keys().size() > 30);
}

TEST_CASE("section hashes only see their prefixes") {
    PipelineConfig a, b;
    set_config_value(b, "crf.iterations", "3");
    CHECK(a.section_hash({"proposal.", "kmeans."}) == b.section_hash({"proposal.", "kmeans."}));
    CHECK(a.section_hash({"crf."}) != b.section_hash({"crf."}));
}

TEST_CASE("noiseless clears every noise source") {
    const PipelineConfig c = noiseless(PipelineConfig{});
    CHECK(c.synth.label_noise == 0.0);
    CHECK(c.synth.mask_noise == 0);
    CHECK(c.synth.merge_rate == 0.0);
}

}  // TEST_SUITE

TEST_SUITE("pipeline") {

TEST_CASE("two runs produce identical trees") {
    testutil::TempDir a, b;
    const PipelineConfig cfg = small_config();
    const EvalSummary sa = run_all(cfg, Layout(a.path), false);
    const EvalSummary sb = run_all(cfg, Layout(b.path), false);
    CHECK(sa.pipeline.miou == sb.pipeline.miou);
    CHECK(slurp(a.path / "hashes.tsv") == slurp(b.path / "hashes.tsv"));
    CHECK(tree_hash(a.path) == tree_hash(b.path));
    CHECK(sa.pipeline.miou >= 0.0);
    CHECK(sa.pipeline.miou <= 100.0);
}

TEST_CASE("reports are written and parse back") {
    testutil::TempDir d;
    const EvalSummary s = run_all(small_config(), Layout(d.path), false);
    const ReportSummary r = parse_report_summary(slurp(d.path / "eval" / "report.txt"));
    CHECK(r.miou == doctest::Approx(s.pipeline.miou).epsilon(1e-4));
    CHECK(fs::exists(d.path / "eval" / "kmeans_baseline.txt"));
    CHECK(fs::exists(d.path / "train" / "head.wkt"));
}

TEST_CASE("stale upstream outputs are refused unless forced") {
    testutil::TempDir d;
    const Layout layout(d.path);
    PipelineConfig cfg = small_config();
    run_all(cfg, layout, false);
    PipelineConfig changed = cfg;
    set_config_value(changed, "proposal.min_area", "20");
    changed.finalize();
    CHECK_THROWS_AS(run_train(changed, layout, false), DataError);
    CHECK_NOTHROW(run_train(changed, layout, true));

    std::ofstream(layout.stage1 / "extra.txt") << "x";
    CHECK_THROWS_AS(run_train(cfg, layout, false), DataError);
}

TEST_CASE("reruns reuse up-to-date stages") {
    testutil::TempDir d;
    std::ostringstream log1, log2;
    run_all(small_config(), Layout(d.path), false, &log1);
    run_all(small_config(), Layout(d.path), false, &log2);
    CHECK(log1.str().find("stage1: done") != std::string::npos);
    CHECK(log2.str().find("stage1: up to date") != std::string::npos);
    CHECK(log2.str().find("train: up to date") != std::string::npos);
}

TEST_CASE("a missing mask set names the tile") {
    testutil::TempDir d;
    const Layout layout(d.path);
    const PipelineConfig cfg = small_config();
    run_synth(cfg, layout);
    const SplitManifest m = load_manifest(layout.data / "train.tsv");
    const ManifestRecord& victim = m.records.at(1);
    fs::remove(m.resolve(victim.maskset_path));
    try {
        run_stage1(cfg, layout);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(victim.id) != std::string::npos);
    }
}

TEST_CASE("ablation flags leave upstream outputs untouched") {
    testutil::TempDir d;
    const Layout layout(d.path);
    const PipelineConfig cfg = small_config();
    run_all(cfg, layout, false);
    const std::string s1 = tree_hash(layout.stage1), tr = tree_hash(layout.train), pr = tree_hash(layout.predict);

    PipelineConfig nocrf = cfg;
    nocrf.crf_enabled = false;
    run_all(nocrf, layout, false);
    CHECK(tree_hash(layout.stage1) == s1);
    CHECK(slurp(layout.train / "head.wkt").size() > 0);
    CHECK(tree_hash(layout.predict) != pr);

    PipelineConfig noconf = cfg;
    noconf.loss.confidence_weight = false;
    run_all(noconf, layout, false);
    CHECK(tree_hash(layout.stage1) == s1);
    CHECK(tree_hash(layout.train) != tr);
}

TEST_CASE("external data directories are used without synthesis") {
    testutil::TempDir src, out;
    const PipelineConfig cfg = small_config();
    run_synth(cfg, Layout(src.path));
    const EvalSummary s = run_all(cfg, Layout(out.path, src.path / "data"), false);
    CHECK_FALSE(fs::exists(out.path / "data"));
    CHECK(s.pipeline.pixel_count > 0);
}

}  // TEST_SUITE
