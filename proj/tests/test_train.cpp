#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tabs/adam.hpp"
#include "tabs/checkpoint.hpp"
#include "tabs/config.hpp"
#include "tabs/dataset.hpp"
#include "tabs/experiment.hpp"
#include "tabs/metrics.hpp"
#include "tabs/report.hpp"
#include "tabs/trainer.hpp"

using namespace tabs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  auto p = fs::temp_directory_path() / (std::string("tabs_train_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string what_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// Small dataset + matching config for fast end-to-end training runs.
struct TinyRun {
  fs::path dir;
  std::vector<ManifestEntry> entries;
  TrainConfig cfg;
};

TinyRun tiny_run(const char* tag, std::uint64_t seed, int epochs) {
  TinyRun r;
  r.dir = temp_dir(tag);
  PhantomDatasetOptions opts;
  opts.count = 5;
  opts.size = 16;
  opts.seed = seed;
  opts.out_dir = r.dir;
  r.entries = generate_dataset(opts);
  r.cfg.model = ModelConfig::desk("unet");
  r.cfg.model.input_size = 16;
  r.cfg.model.seed = seed;
  r.cfg.epochs = epochs;
  r.cfg.batch_size = 3;
  r.cfg.learning_rate = 1e-3;  // visible progress within a few epochs
  r.cfg.train_manifest = (r.dir / "train.csv").string();
  r.cfg.val_manifest = (r.dir / "val.csv").string();
  r.cfg.test_manifest = (r.dir / "test.csv").string();
  return r;
}

MetricsRecord fixed_record(double dice, std::optional<double> pearson) {
  MetricsRecord rec;
  rec.mask_voxels = 10;
  for (int t = 0; t < kTissueCount; ++t) {
    rec.tissue[t].dice = dice;
    rec.tissue[t].jaccard = dice / (2.0 - dice);
    rec.tissue[t].hausdorff = 0.0;
    rec.tissue[t].pearson = pearson;
    rec.tissue[t].spearman = pearson;
    rec.tissue[t].mse = 0.25;
  }
  return rec;
}

}  // namespace

TEST_CASE("parse_kv_text handles comments, blanks, and reports bad lines") {
  auto kv = parse_kv_text("# header\n a = 1 \n\nb=two # trailing\n", "cfg");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two");

  CHECK_THROWS_AS(parse_kv_text("a = 1\na = 2\n", "cfg"), UsageError);
  CHECK(what_of([] { parse_kv_text("a = 1\na = 2\n", "cfg"); }).find("cfg:2") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_kv_text("just words\n", "cfg"), UsageError);
  CHECK(what_of([] { parse_kv_text("x\n", "origin"); }).find("origin:1") != std::string::npos);
  CHECK_THROWS_AS(parse_kv_text("= 3\n", "cfg"), UsageError);
}

TEST_CASE("train config parses, resolves paths, and round-trips") {
  std::map<std::string, std::string> kv{
      {"variant", "unet_se"},     {"epochs", "17"},
      {"learning_rate", "0.001"}, {"train_manifest", "data/train.csv"},
      {"val_manifest", "/abs/val.csv"},
  };
  auto cfg = parse_train_config(kv, "/base", "test");
  CHECK(cfg.model.variant == "unet_se");
  CHECK(cfg.epochs == 17);
  CHECK(cfg.learning_rate == 0.001);
  CHECK(cfg.train_manifest == "/base/data/train.csv");
  CHECK(cfg.val_manifest == "/abs/val.csv");
  CHECK(cfg.batch_size == 3);        // default
  CHECK(cfg.loss_masking == true);   // default

  const std::string text = serialize_train_config(cfg);
  auto again = parse_train_config(parse_kv_text(text, "rt"), "/elsewhere", "rt");
  CHECK(serialize_train_config(again) == text);

  kv["mystery"] = "1";
  CHECK_THROWS_AS(parse_train_config(kv, "/base", "test"), UsageError);
  kv.erase("mystery");
  kv["epochs"] = "0";
  CHECK_THROWS_AS(parse_train_config(kv, "/base", "test"), UsageError);
  kv["epochs"] = "not_a_number";
  CHECK_THROWS_AS(parse_train_config(kv, "/base", "test"), UsageError);
  kv["epochs"] = "17";
  kv["variant"] = "vggnet";
  CHECK_THROWS_AS(parse_train_config(kv, "/base", "test"), UsageError);
}

TEST_CASE("experiment plans load, validate, and locate checkpoints") {
  auto dir = temp_dir("plans");

  SUBCASE("reliability plan round-trips through a file") {
    atomic_write_file(dir / "rel.plan",
                      "kind = reliability\n"
                      "variants = tabs, unet\n"
                      "retest_manifest = retest.csv\n"
                      "checkpoint_dir = ckpts\n"
                      "checkpoint_tabs = special/tabs_model.ckpt\n"
                      "report_csv = out.csv\n"
                      "report_table = out.txt\n");
    auto plan = load_plan(dir / "rel.plan");
    CHECK(plan.kind == "reliability");
    REQUIRE(plan.variants.size() == 2);
    CHECK(plan.variants[0] == "tabs");
    CHECK(plan.variants[1] == "unet");
    CHECK(plan.retest_manifest == (dir / "retest.csv").string());
    // explicit checkpoint beats the directory fallback
    CHECK(plan_checkpoint_path(plan, "tabs") == (dir / "special/tabs_model.ckpt").string());
    CHECK(plan_checkpoint_path(plan, "unet") == (dir / "ckpts/unet.ckpt").string());
  }
  SUBCASE("bad plans are usage errors") {
    atomic_write_file(dir / "bad_kind.plan",
                      "kind = frobnicate\nvariants = tabs\nreport_csv = a\nreport_table = b\n");
    CHECK_THROWS_AS(load_plan(dir / "bad_kind.plan"), UsageError);

    atomic_write_file(dir / "variant.plan",
                      "kind = reliability\nvariant = tabs\nretest_manifest = r.csv\n"
                      "checkpoint_dir = c\nreport_csv = a\nreport_table = b\n");
    CHECK(what_of([&] { load_plan(dir / "variant.plan"); }).find("'variants'") !=
          std::string::npos);

    atomic_write_file(dir / "same_site.plan",
                      "kind = generality\nvariants = tabs\ntest_manifest = t.csv\n"
                      "checkpoint_dir = c\nsource_site = siteA\ntarget_site = siteA\n"
                      "report_csv = a\nreport_table = b\n");
    CHECK_THROWS_AS(load_plan(dir / "same_site.plan"), UsageError);

    atomic_write_file(dir / "no_ckpt.plan",
                      "kind = reliability\nvariants = tabs\nretest_manifest = r.csv\n"
                      "report_csv = a\nreport_table = b\n");
    CHECK_THROWS_AS(load_plan(dir / "no_ckpt.plan"), UsageError);

    atomic_write_file(dir / "perf_missing.plan",
                      "kind = performance\nvariants = unet\ncheckpoint_dir = c\n"
                      "report_csv = a\nreport_table = b\n");
    CHECK_THROWS_AS(load_plan(dir / "perf_missing.plan"), UsageError);

    atomic_write_file(dir / "bad_variant.plan",
                      "kind = reliability\nvariants = alexnet\nretest_manifest = r.csv\n"
                      "checkpoint_dir = c\nreport_csv = a\nreport_table = b\n");
    CHECK_THROWS_AS(load_plan(dir / "bad_variant.plan"), UsageError);
  }
}

TEST_CASE("checkpoints save and load losslessly, re-save byte-identical") {
  auto dir = temp_dir("ckpt");
  ModelConfig mc = ModelConfig::desk("unet");
  mc.input_size = 16;
  Model model(mc);
  TrainConfig cfg;
  cfg.model = mc;

  Checkpoint ckpt;
  ckpt.config_text = serialize_train_config(cfg);
  ckpt.epoch = 7;
  ckpt.best_val = 0.015625;
  ckpt.params = snapshot_params(model);
  ckpt.adam.step = 21;
  ckpt.adam.learning_rate = 2e-4;
  CheckpointEntry slot_m{"head.weight.m", model.param("head.weight").shape(), {}};
  slot_m.values.assign(shape_numel(slot_m.shape), 0.125f);
  CheckpointEntry slot_v = slot_m;
  slot_v.name = "head.weight.v";
  ckpt.adam.slots = {slot_m, slot_v};

  const auto p1 = dir / "a.ckpt";
  const auto p2 = dir / "b.ckpt";
  save_checkpoint(ckpt, p1);
  auto back = load_checkpoint(p1);
  CHECK(back.config_text == ckpt.config_text);
  CHECK(back.epoch == 7);
  CHECK(back.best_val == 0.015625);
  CHECK(back.params.size() == ckpt.params.size());
  CHECK(back.params[0].name == ckpt.params[0].name);
  CHECK(back.params[0].values == ckpt.params[0].values);
  CHECK(back.adam.step == 21);
  CHECK(back.adam.learning_rate == 2e-4);
  REQUIRE(back.adam.slots.size() == 2);
  CHECK(back.adam.slots[1].name == "head.weight.v");
  save_checkpoint(back, p2);
  CHECK(read_file(p1) == read_file(p2));

  SUBCASE("corruption is rejected") {
    auto bytes = read_file(p1);
    auto bad = bytes;
    bad[0] = 'X';
    atomic_write_file(dir / "magic.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), DataError);
    atomic_write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), DataError);
    atomic_write_file(dir / "long.ckpt", bytes + "tail");
    CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
  }
  SUBCASE("load_into_model enforces the parameter inventory") {
    Model target(mc);
    CHECK_NOTHROW(load_into_model(target, ckpt.params));
    CHECK(target.param("head.weight").data()[0] == model.param("head.weight").data()[0]);

    auto fewer = ckpt.params;
    fewer.pop_back();
    CHECK_THROWS_AS(load_into_model(target, fewer), DataError);

    auto renamed = ckpt.params;
    renamed[0].name += "_unknown";
    CHECK_THROWS_AS(load_into_model(target, renamed), UsageError);

    auto reshaped = ckpt.params;
    reshaped[0].shape.push_back(2);
    CHECK_THROWS_AS(load_into_model(target, reshaped), DataError);
  }
}

TEST_CASE("adam first step follows the closed form") {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("w", Tensor::scalar(0.0f));
  params[0].second.set_requires_grad(true);
  params[0].second.zero_grad();
  params[0].second.grad_mut()[0] = 1.0f;

  AdamState state;
  state.learning_rate = 1e-5;
  state.weight_decay = 0.0;
  adam_step(params, state);
  CHECK(state.step == 1);
  // step 1 with g=1: update = -lr * g / (|g| + eps-ish) ~ -lr
  CHECK(double(params[0].second.data()[0]) == doctest::Approx(-1e-5).epsilon(1e-4));

  SUBCASE("zero gradient leaves the parameter unchanged") {
    std::vector<std::pair<std::string, Tensor>> zp;
    zp.emplace_back("w", Tensor::scalar(0.75f));
    zp[0].second.set_requires_grad(true);
    zp[0].second.zero_grad();
    AdamState zs;
    zs.weight_decay = 0.0;
    adam_step(zp, zs);
    CHECK(zp[0].second.data()[0] == 0.75f);
  }
  SUBCASE("parameters without gradients are skipped entirely") {
    std::vector<std::pair<std::string, Tensor>> np;
    np.emplace_back("w", Tensor::scalar(0.5f));
    np[0].second.set_requires_grad(true);  // grad never allocated
    AdamState ns;
    adam_step(np, ns);
    CHECK(np[0].second.data()[0] == 0.5f);
    CHECK(ns.slots.empty());
  }
  SUBCASE("two identical steps are bitwise identical") {
    auto run = [] {
      std::vector<std::pair<std::string, Tensor>> ps;
      ps.emplace_back("w", Tensor(Shape{4}, std::vector<float>{0.1f, -0.2f, 0.3f, -0.4f}));
      ps[0].second.set_requires_grad(true);
      ps[0].second.zero_grad();
      auto g = ps[0].second.grad_mut();
      for (std::size_t i = 0; i < 4; ++i) g[i] = 0.25f * float(i + 1);
      AdamState st;
      adam_step(ps, st);
      adam_step(ps, st);
      return std::vector<float>(ps[0].second.data().begin(), ps[0].second.data().end());
    };
    CHECK(run() == run());
  }
}

TEST_CASE("training keeps history, selects the best epoch, and is deterministic") {
  auto r = tiny_run("loop", 42, 6);
  // overfit a single subject: train and validate on the same one-subject split
  r.cfg.train_manifest = r.cfg.val_manifest;
  auto result = train(r.cfg);

  REQUIRE(result.history.size() == 6);
  CHECK(result.history.back().train_loss < result.history.front().train_loss);
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (std::size_t i = 0; i < result.history.size(); ++i)
    if (result.history[i].val_loss < best) {
      best = result.history[i].val_loss;
      best_epoch = int(i) + 1;
    }
  CHECK(result.best_val == best);
  CHECK(result.best_epoch == best_epoch);
  for (const auto& e : result.history) CHECK(result.best_val <= e.val_loss);
  CHECK(result.best.epoch == std::uint32_t(best_epoch));
  CHECK(result.best.best_val == best);
  CHECK(result.best.config_text == serialize_train_config(r.cfg));
  CHECK(result.best.adam.step > 0);

  // epoch callback sees every epoch in order
  std::vector<int> seen;
  auto r2 = tiny_run("loop_cb", 7, 2);
  auto res2 = train(r2.cfg, [&](int epoch, const EpochStats& s) {
    seen.push_back(epoch);
    CHECK(std::isfinite(s.train_loss));
    CHECK(std::isfinite(s.val_loss));
  });
  CHECK(seen == std::vector<int>{1, 2});
  CHECK(res2.history.size() == 2);
}

TEST_CASE("identical configs train to byte-identical checkpoints") {
  auto r = tiny_run("det", 11, 2);
  auto dir = r.dir;
  auto res1 = train(r.cfg);
  auto res2 = train(r.cfg);
  save_checkpoint(res1.best, dir / "run1.ckpt");
  save_checkpoint(res2.best, dir / "run2.ckpt");
  CHECK(read_file(dir / "run1.ckpt") == read_file(dir / "run2.ckpt"));
  CHECK(history_csv(res1) == history_csv(res2));

  auto r3 = tiny_run("det_seed", 12, 2);
  r3.cfg.model.seed = 13;  // different init; same data
  r3.cfg.train_manifest = (dir / "train.csv").string();
  r3.cfg.val_manifest = (dir / "val.csv").string();
  auto res3 = train(r3.cfg);
  save_checkpoint(res3.best, dir / "run3.ckpt");
  CHECK(read_file(dir / "run1.ckpt") != read_file(dir / "run3.ckpt"));
}

TEST_CASE("non-finite losses abort with coordinates") {
  auto dir = temp_dir("blowup");
  auto [gt, mask] = generate_phantom(PhantomSpec::desk(16));
  auto scan = render_scan(gt, SiteParams::preset("siteA"), 3);
  save_volume(gt, (dir / "gt_s000.vol").string());
  save_volume(scan, (dir / "scan_s000_t1.vol").string());
  ManifestEntry e;
  e.subject = "s000";
  e.site = "siteA";
  e.scan_path = "scan_s000_t1.vol";
  e.gt_path = "gt_s000.vol";
  write_manifest(dir / "m.csv", {e});

  TrainConfig cfg;
  cfg.model = ModelConfig::desk("unet");
  cfg.model.input_size = 16;
  cfg.epochs = 2;
  // One step throws every weight to +/-inf, so the epoch-1 validation forward
  // hits inf - inf inside normalization and the resulting NaN must be caught.
  cfg.learning_rate = std::numeric_limits<double>::infinity();
  cfg.train_manifest = (dir / "m.csv").string();
  cfg.val_manifest = cfg.train_manifest;
  CHECK_THROWS_AS(train(cfg), NumericError);
  CHECK(what_of([&] { train(cfg); }).find("epoch 1") != std::string::npos);

  cfg.train_manifest.clear();
  CHECK_THROWS_AS(train(cfg), UsageError);
}

TEST_CASE("masked evaluation ignores ground truth outside the brain") {
  auto r = tiny_run("maskinv", 31, 1);
  auto s1 = load_sample(r.entries[0], 16);
  ModelConfig mc = ModelConfig::desk("unet");
  mc.input_size = 16;
  Model model(mc);

  // corrupt gt outside the mask, keeping the original mask tensor
  std::vector<float> gt2(s1.gt.data().begin(), s1.gt.data().end());
  const std::size_t n = s1.mask.numel();
  std::size_t touched = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!(s1.mask.data()[i] > 0)) {
      ++touched;
      for (int c = 0; c < 3; ++c) gt2[std::size_t(c) * n + i] = 9.0f + float(c);
    }
  REQUIRE(touched > 0);
  TrainSample s2;
  s2.subject = s1.subject;
  s2.input = s1.input;
  s2.gt = Tensor(s1.gt.shape(), std::move(gt2));
  s2.mask = s1.mask;

  CHECK(evaluate_loss(model, {s1}, true) == evaluate_loss(model, {s2}, true));
  CHECK(evaluate_loss(model, {s1}, false) != evaluate_loss(model, {s2}, false));
  CHECK_THROWS_AS(evaluate_loss(model, {}, true), UsageError);
}

TEST_CASE("segment_volume emits labeled probability maps") {
  auto [gt, head] = generate_phantom(PhantomSpec::desk(16));
  auto scan = render_scan(gt, SiteParams::preset("siteB"), 5);
  ModelConfig mc = ModelConfig::desk("unet");
  mc.input_size = 16;
  Model model(mc);
  auto pred = segment_volume(model, scan);
  CHECK(pred.channels == 3);
  CHECK(pred.dx == 16);
  CHECK(pred.semantics == Semantics::tissue_probs);
  CHECK(pred.meta.at("provenance") == "prediction");
  CHECK(pred.meta.at("model") == "unet");
  CHECK(pred.meta.at("site") == "siteB");  // scan metadata carried through
  const std::size_t n = pred.voxels();
  for (std::size_t i = 0; i < n; i += 97) {
    const float sum = pred.values[i] + pred.values[n + i] + pred.values[2 * n + i];
    CHECK(std::abs(sum - 1.0f) < 1e-5f);
  }

  auto big = render_scan(generate_phantom(PhantomSpec::desk(32)).first,
                         SiteParams::preset("siteA"), 1);
  CHECK_THROWS_AS(segment_volume(model, big), DataError);
}

TEST_CASE("history serializes one CSV line per epoch") {
  TrainResult r;
  r.history = {{0.5, 0.25}, {0.125, 0.0625}};
  CHECK(history_csv(r) == "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.0625\n");
}

TEST_CASE("report CSV and table aggregate per label and tissue") {
  std::vector<SubjectScore> rows;
  rows.push_back({"zeta", "s1", fixed_record(0.5, std::nullopt)});
  rows.push_back({"zeta", "s2", fixed_record(0.7, std::nullopt)});
  rows.push_back({"alpha", "s1", fixed_record(0.8, 0.9)});

  auto csv = report_csv(rows);
  CHECK(csv.rfind("label,subject,tissue,dice,jaccard,hausdorff,pearson,spearman,mse,mask_voxels\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3);
  CHECK(csv.find("zeta,s1,GM,0.5,") != std::string::npos);
  CHECK(csv.find("zeta,s1,CSF,0.5,") != std::string::npos);

  auto table = report_table(rows);
  CHECK(table.rfind("label", 0) == 0);
  CHECK(table.find("hausdorff") != std::string::npos);
  // zeta dice: mean .6, sample sd .141; matches the independent aggregator
  auto agg = oracle::mean_sd({0.5, 0.7});
  REQUIRE(agg.has_value());
  char expect[64];
  std::snprintf(expect, sizeof expect, "%.3f ± %.3f", agg->first, agg->second);
  CHECK(table.find(expect) != std::string::npos);
  CHECK(table.find("0.600 ± 0.141") != std::string::npos);
  CHECK(table.find("0.800 ± 0.000") != std::string::npos);  // n=1 arm
  CHECK(table.find("--") != std::string::npos);             // all-missing pearson for zeta
  CHECK(table.find("zeta") < table.find("alpha"));          // first-appearance order
  // 1 header + 2 labels x 3 tissues
  CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 2 * 3);
}

TEST_CASE("run_performance trains, checkpoints, and reports") {
  auto r = tiny_run("perf", 51, 2);
  ExperimentPlan plan;
  plan.kind = "performance";
  plan.variants = {"unet"};
  plan.base = r.cfg;
  plan.checkpoint_dir = (r.dir / "ckpts").string();
  plan.report_csv = (r.dir / "report.csv").string();
  plan.report_table = (r.dir / "report.txt").string();
  fs::create_directories(plan.checkpoint_dir);

  std::vector<std::string> progress;
  auto rows = run_performance(plan, [&](const std::string& line) { progress.push_back(line); });
  CHECK(rows.size() == 1);  // 1 variant x 1 test subject
  CHECK(rows[0].label == "unet");
  CHECK(fs::exists(r.dir / "ckpts/unet.ckpt"));
  CHECK(fs::exists(r.dir / "ckpts/unet_history.csv"));
  CHECK(fs::exists(plan.report_csv));
  CHECK(fs::exists(plan.report_table));
  CHECK(!progress.empty());
  auto csv = read_file(plan.report_csv);
  CHECK(csv.find("unet,") != std::string::npos);

  auto ckpt = load_checkpoint(r.dir / "ckpts/unet.ckpt");
  CHECK(parse_kv_text(ckpt.config_text, "embedded").at("variant") == "unet");

  ExperimentPlan wrong = plan;
  wrong.kind = "reliability";
  wrong.retest_manifest = r.cfg.test_manifest;
  CHECK_THROWS_AS(run_performance(wrong, nullptr), UsageError);
}

TEST_CASE("run_generality checks sites and checkpoint variants") {
  auto dir = temp_dir("gen");
  // target-site dataset (no training, just evaluation subjects)
  PhantomDatasetOptions opts;
  opts.count = 5;
  opts.size = 16;
  opts.site = "siteB";
  opts.seed = 61;
  opts.out_dir = dir;
  generate_dataset(opts);

  // checkpoint from an untrained source-site model
  ModelConfig mc = ModelConfig::desk("unet");
  mc.input_size = 16;
  Model model(mc);
  TrainConfig cfg;
  cfg.model = mc;
  Checkpoint ckpt;
  ckpt.config_text = serialize_train_config(cfg);
  ckpt.epoch = 1;
  ckpt.params = snapshot_params(model);
  save_checkpoint(ckpt, dir / "unet.ckpt");

  ExperimentPlan plan;
  plan.kind = "generality";
  plan.variants = {"unet"};
  plan.base.model = mc;
  plan.base.test_manifest = (dir / "test.csv").string();
  plan.checkpoints["unet"] = (dir / "unet.ckpt").string();
  plan.source_site = "siteA";
  plan.target_site = "siteB";
  plan.report_csv = (dir / "gen.csv").string();
  plan.report_table = (dir / "gen.txt").string();

  auto rows = run_generality(plan, nullptr);
  CHECK(rows.size() == 1);
  CHECK(rows[0].label == "unet");
  CHECK(fs::exists(plan.report_csv));

  SUBCASE("site mismatch in the test manifest") {
    auto bad = plan;
    bad.target_site = "siteC";
    bad.source_site = "siteA";
    CHECK_THROWS_AS(run_generality(bad, nullptr), DataError);
  }
  SUBCASE("missing checkpoint file") {
    auto bad = plan;
    bad.checkpoints["unet"] = (dir / "absent.ckpt").string();
    CHECK_THROWS_AS(run_generality(bad, nullptr), DataError);
  }
  SUBCASE("checkpoint variant must match the plan") {
    auto bad = plan;
    bad.variants = {"tabs"};
    bad.checkpoints["tabs"] = (dir / "unet.ckpt").string();
    CHECK_THROWS_AS(run_generality(bad, nullptr), DataError);
  }
}

TEST_CASE("run_reliability on identical retest scans is perfect") {
  auto dir = temp_dir("rel");
  auto [gt, head] = generate_phantom(PhantomSpec::desk(32));
  gt.meta["subject"] = "s000";
  auto scan = render_scan(gt, SiteParams::preset("siteA"), 9);
  save_volume(gt, (dir / "gt_s000.vol").string());
  save_volume(scan, (dir / "scan_s000_t1.vol").string());
  save_volume(scan, (dir / "scan_s000_t2.vol").string());  // identical retest
  ManifestEntry e1;
  e1.subject = "s000";
  e1.site = "siteA";
  e1.timepoint = 1;
  e1.scan_path = "scan_s000_t1.vol";
  e1.gt_path = "gt_s000.vol";
  ManifestEntry e2 = e1;
  e2.timepoint = 2;
  e2.scan_path = "scan_s000_t2.vol";
  write_manifest(dir / "retest.csv", {e1, e2});

  ModelConfig mc = ModelConfig::desk("unet");
  Model model(mc);
  TrainConfig cfg;
  cfg.model = mc;
  Checkpoint ckpt;
  ckpt.config_text = serialize_train_config(cfg);
  ckpt.params = snapshot_params(model);
  save_checkpoint(ckpt, dir / "unet.ckpt");

  ExperimentPlan plan;
  plan.kind = "reliability";
  plan.variants = {"unet"};
  plan.retest_manifest = (dir / "retest.csv").string();
  plan.checkpoints["unet"] = (dir / "unet.ckpt").string();
  plan.report_csv = (dir / "rel.csv").string();
  plan.report_table = (dir / "rel.txt").string();

  auto rows = run_reliability(plan, nullptr);
  REQUIRE(rows.size() == 2);  // model arm + gt_pipeline baseline
  CHECK(rows[0].label == "unet");
  CHECK(rows[1].label == "gt_pipeline");
  for (const auto& row : rows)
    for (int t = 0; t < kTissueCount; ++t) {
      const auto& m = row.record.tissue[t];
      if (m.dice) CHECK(*m.dice == 1.0);
      if (m.hausdorff) CHECK(*m.hausdorff == 0.0);
      REQUIRE(m.mse.has_value());
      CHECK(*m.mse == 0.0);
    }
  // the ground-truth arm has every tissue present, hence fully defined
  for (int t = 0; t < kTissueCount; ++t) {
    CHECK(rows[1].record.tissue[t].dice.has_value());
    CHECK(rows[1].record.tissue[t].hausdorff.has_value());
  }

  SUBCASE("malformed retest manifests are data errors") {
    auto bad = plan;
    ManifestEntry e3 = e1;
    e3.timepoint = 3;
    write_manifest(dir / "bad_tp.csv", {e1, e3});
    bad.retest_manifest = (dir / "bad_tp.csv").string();
    CHECK_THROWS_AS(run_reliability(bad, nullptr), DataError);

    write_manifest(dir / "missing_tp.csv", {e1});
    bad.retest_manifest = (dir / "missing_tp.csv").string();
    CHECK_THROWS_AS(run_reliability(bad, nullptr), DataError);

    write_manifest(dir / "dup_tp.csv", {e1, e1});
    bad.retest_manifest = (dir / "dup_tp.csv").string();
    CHECK_THROWS_AS(run_reliability(bad, nullptr), DataError);
  }
}
