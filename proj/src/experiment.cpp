#include "tabs/experiment.hpp"

#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "tabs/checkpoint.hpp"
#include "tabs/dataset.hpp"
#include "tabs/metrics.hpp"
#include "tabs/trainer.hpp"

namespace tabs {

namespace fs = std::filesystem;

namespace {

// Indexed parallel map over subjects (--jobs). Results are slotted by index,
// so the schedule cannot change the output.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int jobs = std::min<int>(eval_jobs(), static_cast<int>(n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct LoadedModel {
  TrainConfig cfg;
  Model model;
};

LoadedModel model_from_checkpoint(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const auto kv = parse_kv_text(ckpt.config_text, path + " (embedded config)");
  LoadedModel lm;
  lm.cfg = parse_train_config(kv, fs::path(), path + " (embedded config)");
  lm.model = Model(lm.cfg.model);
  load_into_model(lm.model, ckpt.params);
  return lm;
}

std::string subject_label(const ManifestEntry& e) {
  if (e.timepoint == 1) return e.subject;
  return e.subject + "_t" + std::to_string(e.timepoint);
}

// Segment + score every manifest entry against its ground truth.
std::vector<SubjectScore> evaluate_entries(const Model& model,
                                           const std::vector<ManifestEntry>& entries,
                                           const std::string& label) {
  std::vector<SubjectScore> rows(entries.size());
  for_each_index(entries.size(), [&](std::size_t i) {
    const ManifestEntry& e = entries[i];
    const Volume scan = load_volume(e.scan_path);
    const Volume gt = load_volume(e.gt_path);
    const Volume pred = segment_volume(model, scan);
    rows[i] = SubjectScore{label, subject_label(e), evaluate_pair(pred, gt)};
  });
  return rows;
}

void write_reports(const ExperimentPlan& plan, const std::vector<SubjectScore>& rows) {
  atomic_write_file(plan.report_csv, report_csv(rows));
  atomic_write_file(plan.report_table, report_table(rows));
}

void say(const ProgressFn& progress, const std::string& line) {
  if (progress) progress(line);
}

Volume intersect_masks(const Volume& a, const Volume& b) {
  Volume out(1, a.dx, a.dy, a.dz, Semantics::mask);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (a.values[i] > 0 && b.values[i] > 0) ? 1.0f : 0.0f;
  return out;
}

}  // namespace

std::vector<SubjectScore> run_performance(const ExperimentPlan& plan, const ProgressFn& progress) {
  validate(plan);
  if (plan.kind != "performance") throw UsageError("plan kind is not performance");
  const auto test_entries = read_manifest(plan.base.test_manifest);
  std::vector<SubjectScore> rows;
  for (const auto& variant : plan.variants) {
    TrainConfig cfg = plan.base;
    cfg.model.variant = variant;
    cfg.checkpoint_out = plan_checkpoint_path(plan, variant);
    cfg.history_out =
        (fs::path(plan.checkpoint_dir) / (variant + "_history.csv")).lexically_normal().string();
    say(progress, "training " + variant);
    const TrainResult result = train(cfg, [&](int epoch, const EpochStats& stats) {
      if (epoch == 1 || epoch % 25 == 0 || epoch == cfg.epochs)
        say(progress, variant + " epoch " + std::to_string(epoch) + "/" +
                          std::to_string(cfg.epochs) + " train " +
                          std::to_string(stats.train_loss) + " val " +
                          std::to_string(stats.val_loss));
    });
    save_checkpoint(result.best, cfg.checkpoint_out);
    atomic_write_file(cfg.history_out, history_csv(result));
    say(progress, variant + " best val " + std::to_string(result.best_val) + " at epoch " +
                      std::to_string(result.best_epoch));

    Model model(cfg.model);
    load_into_model(model, result.best.params);
    auto variant_rows = evaluate_entries(model, test_entries, variant);
    rows.insert(rows.end(), variant_rows.begin(), variant_rows.end());
  }
  write_reports(plan, rows);
  return rows;
}

std::vector<SubjectScore> run_generality(const ExperimentPlan& plan, const ProgressFn& progress) {
  validate(plan);
  if (plan.kind != "generality") throw UsageError("plan kind is not generality");
  const auto test_entries = read_manifest(plan.base.test_manifest);
  for (const auto& e : test_entries)
    if (e.site != plan.target_site)
      throw DataError("test manifest subject " + e.subject + " is from site " + e.site +
                      ", plan targets " + plan.target_site);
  std::vector<SubjectScore> rows;
  for (const auto& variant : plan.variants) {
    const std::string path = plan_checkpoint_path(plan, variant);
    say(progress, "evaluating " + variant + " checkpoint on site " + plan.target_site);
    const LoadedModel lm = model_from_checkpoint(path);
    if (lm.cfg.model.variant != variant)
      throw DataError(path + ": checkpoint holds variant '" + lm.cfg.model.variant +
                      "', plan expects '" + variant + "'");
    auto variant_rows = evaluate_entries(lm.model, test_entries, variant);
    rows.insert(rows.end(), variant_rows.begin(), variant_rows.end());
  }
  write_reports(plan, rows);
  return rows;
}

std::vector<SubjectScore> run_reliability(const ExperimentPlan& plan, const ProgressFn& progress) {
  validate(plan);
  if (plan.kind != "reliability") throw UsageError("plan kind is not reliability");
  const auto entries = read_manifest(plan.retest_manifest);
  // Pair up the two timepoints of every subject, keeping manifest order.
  std::vector<std::string> subjects;
  std::map<std::string, std::array<const ManifestEntry*, 2>> pairs;
  for (const auto& e : entries) {
    if (e.timepoint < 1 || e.timepoint > 2)
      throw DataError("retest manifest subject " + e.subject + " has timepoint " +
                      std::to_string(e.timepoint) + ", expected 1 or 2");
    auto [it, fresh] = pairs.try_emplace(e.subject);
    if (fresh) subjects.push_back(e.subject);
    auto*& slot = it->second[e.timepoint - 1];
    if (slot) throw DataError("retest manifest repeats subject " + e.subject + " timepoint " +
                              std::to_string(e.timepoint));
    slot = &e;
  }
  for (const auto& s : subjects)
    if (!pairs[s][0] || !pairs[s][1])
      throw DataError("retest manifest subject " + s + " is missing a timepoint");

  std::vector<SubjectScore> rows;
  for (const auto& variant : plan.variants) {
    const std::string path = plan_checkpoint_path(plan, variant);
    say(progress, "retest evaluation of " + variant);
    const LoadedModel lm = model_from_checkpoint(path);
    std::vector<SubjectScore> arm(subjects.size());
    for_each_index(subjects.size(), [&](std::size_t i) {
      const ManifestEntry& e1 = *pairs[subjects[i]][0];
      const ManifestEntry& e2 = *pairs[subjects[i]][1];
      const Volume gt1 = load_volume(e1.gt_path), gt2 = load_volume(e2.gt_path);
      const Volume mask = intersect_masks(brain_mask(gt1), brain_mask(gt2));
      const Volume p1 = segment_volume(lm.model, load_volume(e1.scan_path));
      const Volume p2 = segment_volume(lm.model, load_volume(e2.scan_path));
      arm[i] = SubjectScore{variant, subjects[i], reliability_pair(p1, p2, mask)};
    });
    rows.insert(rows.end(), arm.begin(), arm.end());
  }
  // Ground-truth pipeline baseline: score the two reference maps of each pair.
  std::vector<SubjectScore> baseline(subjects.size());
  for_each_index(subjects.size(), [&](std::size_t i) {
    const Volume gt1 = load_volume(pairs[subjects[i]][0]->gt_path);
    const Volume gt2 = load_volume(pairs[subjects[i]][1]->gt_path);
    const Volume mask = intersect_masks(brain_mask(gt1), brain_mask(gt2));
    baseline[i] = SubjectScore{"gt_pipeline", subjects[i], reliability_pair(gt1, gt2, mask)};
  });
  rows.insert(rows.end(), baseline.begin(), baseline.end());
  write_reports(plan, rows);
  return rows;
}

}  // namespace tabs
