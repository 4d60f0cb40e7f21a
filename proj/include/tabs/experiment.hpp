#pragma once

#include <functional>
#include <string>

#include "tabs/config.hpp"
#include "tabs/report.hpp"

namespace tabs {

using ProgressFn = std::function<void(const std::string& line)>;

// Each harness executes its plan end to end and writes report_csv +
// report_table atomically. The returned rows mirror the CSV contents.

// Train every variant on the train split, evaluate on the test split
// (Table-2-shaped output). Also writes <checkpoint_dir>/<variant>.ckpt and
// <variant>_history.csv.
std::vector<SubjectScore> run_performance(const ExperimentPlan& plan,
                                          const ProgressFn& progress = nullptr);

// Evaluate source-site checkpoints on a different site's test split
// (Table-3-shaped output). No retraining.
std::vector<SubjectScore> run_generality(const ExperimentPlan& plan,
                                         const ProgressFn& progress = nullptr);

// Segment both scans of every retest pair with each checkpoint and score the
// two predictions against each other; the two ground-truth maps of the pair
// form the pipeline baseline arm (Table-5-shaped output).
std::vector<SubjectScore> run_reliability(const ExperimentPlan& plan,
                                          const ProgressFn& progress = nullptr);

}  // namespace tabs
