#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "easr/config.hpp"
#include "easr/dataset.hpp"
#include "easr/model.hpp"

namespace easr {

struct EvalResult {
  double cer = 0.0;  // corpus level
  std::size_t exact = 0;
  std::vector<std::vector<int>> hypotheses;
};

// Greedy decoding of every item; max_len 0 means longest reference + 2.
EvalResult evaluate(const Model& model, const Dataset& data, std::size_t max_len = 0,
                    std::size_t batch_size = 32);

struct MetricRow {
  std::size_t step = 0;
  double loss = 0.0;
  double ce = 0.0;
  double ctc = 0.0;
  double lr = 0.0;
  double dev_cer = -1.0;  // negative when not evaluated at this step
};

struct ExperimentResult {
  std::vector<MetricRow> metrics;
  double final_dev_cer = -1.0;
  double dev_exact_fraction = 0.0;
  std::string metrics_path;
  std::string checkpoint_path;
};

// Trains on the synthetic task and writes under out_dir: config.txt,
// metrics.csv (flushed per step, so it survives an abort), checkpoint.bin,
// cost_report.csv and cost_report.txt.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::string& out_dir);

// Writes eval.csv (id,reference,hypothesis,cer) for the dev split regenerated
// from the checkpoint's task settings.
EvalResult run_eval(const std::string& checkpoint_path, const std::string& out_dir);

// Writes train/dev token and feature CSVs.
void run_gen_data(const ExperimentConfig& config, const std::string& out_dir);

// Writes cost_report.csv and cost_report.txt for config.model against its
// matched baseline.
void run_cost_report(const ExperimentConfig& config, const std::string& out_dir, std::size_t batch,
                     std::size_t steps, std::size_t dec_steps);

}  // namespace easr
