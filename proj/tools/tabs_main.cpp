#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tabs/checkpoint.hpp"
#include "tabs/common.hpp"
#include "tabs/config.hpp"
#include "tabs/dataset.hpp"
#include "tabs/experiment.hpp"
#include "tabs/metrics.hpp"
#include "tabs/model.hpp"
#include "tabs/trainer.hpp"
#include "tabs/volume.hpp"

namespace {

using namespace tabs;

std::string join_shape(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "×";
    out += std::to_string(shape[i]);
  }
  return out;
}

std::pair<double, double> parse_range(const std::string& text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos)
    throw UsageError("--atrophy-range expects lo:hi, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("--atrophy-range expects numbers, got '" + text + "'");
  }
}

void print_progress(const std::string& line) { std::cout << line << "\n"; }

int run(int argc, char** argv) {
  CLI::App app{"Volumetric 3-class tissue segmentation toolkit"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("--jobs", jobs, "evaluation parallelism (subjects scored concurrently)");

  auto* phantom = app.add_subcommand("phantom", "generate a synthetic multi-site dataset");
  PhantomDatasetOptions popts;
  std::string out_dir, atrophy_range = "0:1";
  phantom->add_option("--out", out_dir, "output directory")->required();
  phantom->add_option("--count", popts.count, "number of subjects");
  phantom->add_option("--size", popts.size, "cube edge length (multiple of 16)");
  phantom->add_option("--site", popts.site, "site preset (siteA..siteD)");
  phantom->add_option("--atrophy-range", atrophy_range, "covariate range lo:hi");
  phantom->add_flag("--retest", popts.retest, "render two scans per subject");
  phantom->add_option("--seed", popts.seed, "dataset seed");

  auto* train_cmd = app.add_subcommand("train", "train one model or a performance plan");
  std::string train_config, train_plan;
  train_cmd->add_option("--config", train_config, "training config file");
  train_cmd->add_option("--plan", train_plan, "performance experiment plan");

  auto* segment = app.add_subcommand("segment", "segment one scan with a checkpoint");
  std::string seg_model, seg_in, seg_out;
  segment->add_option("--model", seg_model, "checkpoint file")->required();
  segment->add_option("--in", seg_in, "input scan volume")->required();
  segment->add_option("--out", seg_out, "output probability volume")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score a prediction against a reference");
  std::string eval_pred, eval_ref, eval_out;
  eval_cmd->add_option("--pred", eval_pred, "predicted probability volume")->required();
  eval_cmd->add_option("--ref", eval_ref, "reference probability volume")->required();
  eval_cmd->add_option("--out", eval_out, "metrics CSV path")->required();

  auto* generality = app.add_subcommand("generality", "cross-site evaluation of checkpoints");
  std::string gen_plan;
  generality->add_option("--plan", gen_plan, "generality experiment plan")->required();

  auto* reliability = app.add_subcommand("reliability", "test-retest evaluation");
  std::string rel_plan;
  reliability->add_option("--plan", rel_plan, "reliability experiment plan")->required();

  auto* shapes = app.add_subcommand("shapes", "symbolic forward shape chain");
  std::string shapes_config, shapes_preset = "desk", shapes_variant = "tabs";
  shapes->add_option("--config", shapes_config, "training config file");
  shapes->add_option("--preset", shapes_preset, "desk or paper (when no --config)");
  shapes->add_option("--variant", shapes_variant, "model variant (when no --config)");

  auto* inspect = app.add_subcommand("inspect", "print a volume header");
  std::string inspect_in;
  inspect->add_option("--in", inspect_in, "volume file")->required();

  CLI11_PARSE(app, argc, argv);
  set_eval_jobs(jobs);

  if (phantom->parsed()) {
    auto [lo, hi] = parse_range(atrophy_range);
    popts.atrophy_lo = lo;
    popts.atrophy_hi = hi;
    popts.out_dir = out_dir;
    const auto entries = generate_dataset(popts);
    std::cout << "wrote " << entries.size() << " scans for " << popts.count << " subjects to "
              << out_dir << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    if (train_config.empty() == train_plan.empty())
      throw UsageError("train needs exactly one of --config or --plan");
    if (!train_plan.empty()) {
      const ExperimentPlan plan = load_plan(train_plan);
      if (plan.kind != "performance")
        throw UsageError("train --plan expects a performance plan, got kind '" + plan.kind + "'");
      run_performance(plan, print_progress);
      std::cout << "report written to " << plan.report_csv << "\n";
      return 0;
    }
    const TrainConfig cfg = load_train_config(train_config);
    if (cfg.checkpoint_out.empty()) throw UsageError("config needs checkpoint_out");
    const TrainResult result = train(cfg, [&](int epoch, const EpochStats& stats) {
      std::printf("epoch %d/%d train %.6g val %.6g\n", epoch, cfg.epochs, stats.train_loss,
                  stats.val_loss);
    });
    save_checkpoint(result.best, cfg.checkpoint_out);
    if (!cfg.history_out.empty()) atomic_write_file(cfg.history_out, history_csv(result));
    std::printf("best val %.6g at epoch %d -> %s\n", result.best_val, result.best_epoch,
                cfg.checkpoint_out.c_str());
    return 0;
  }

  if (segment->parsed()) {
    const Checkpoint ckpt = load_checkpoint(seg_model);
    const auto kv = parse_kv_text(ckpt.config_text, seg_model + " (embedded config)");
    const TrainConfig cfg = parse_train_config(kv, {}, seg_model + " (embedded config)");
    Model model(cfg.model);
    load_into_model(model, ckpt.params);
    const Volume pred = segment_volume(model, load_volume(seg_in));
    save_volume(pred, seg_out);
    std::cout << "wrote " << seg_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const MetricsRecord rec = evaluate_pair(load_volume(eval_pred), load_volume(eval_ref));
    const std::string csv = metrics_csv_header() + "\n" + metrics_csv_rows(rec);
    atomic_write_file(eval_out, csv);
    std::cout << csv;
    return 0;
  }

  if (generality->parsed()) {
    const ExperimentPlan plan = load_plan(gen_plan);
    run_generality(plan, print_progress);
    std::cout << "report written to " << plan.report_csv << "\n";
    return 0;
  }

  if (reliability->parsed()) {
    const ExperimentPlan plan = load_plan(rel_plan);
    run_reliability(plan, print_progress);
    std::cout << "report written to " << plan.report_csv << "\n";
    return 0;
  }

  if (shapes->parsed()) {
    ModelConfig cfg;
    if (!shapes_config.empty()) {
      cfg = load_train_config(shapes_config).model;
    } else if (shapes_preset == "desk") {
      cfg = ModelConfig::desk(shapes_variant);
    } else if (shapes_preset == "paper") {
      cfg = ModelConfig::paper(shapes_variant);
    } else {
      throw UsageError("--preset must be desk or paper, got '" + shapes_preset + "'");
    }
    for (const auto& [name, shape] : infer_shapes(cfg))
      std::cout << name << ": " << join_shape(shape) << "\n";
    return 0;
  }

  if (inspect->parsed()) {
    const VolumeInfo info = inspect_volume(inspect_in);
    std::cout << "channels: " << info.channels << "\n"
              << "dims: " << info.dx << "×" << info.dy << "×" << info.dz << "\n"
              << "semantics: " << semantics_name(info.semantics) << "\n";
    for (const auto& [k, v] : info.meta) std::cout << "meta." << k << ": " << v << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
