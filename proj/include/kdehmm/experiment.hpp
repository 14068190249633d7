#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "kdehmm/datasets.hpp"
#include "kdehmm/kde_hmm.hpp"
#include "kdehmm/kde_mm.hpp"
#include "kdehmm/serialization.hpp"

namespace kdehmm {

// Model families compared by the harness. "hmm" is the Gaussian-output HMM,
// i.e. an AR-HMM of order 0.
struct ModelSpec {
  std::string type;  // ar | hmm | ar_hmm | kde_mm | kde_hmm
  int order = 1;
  int states = 1;
};

struct FitSettings {
  int max_iterations = 500;
  double relative_tolerance = 1e-6;
  GemMode hmm_mode = GemMode::kAccelerated;
  bool update_weights = false;
  MmTrainingMode mm_mode = MmTrainingMode::kScalarNumeric;
  double bandwidth_floor = 0.0;
  Deadline deadline;
  Execution execution = Execution::kParallel;
};

struct FitOutcome {
  AnyModel model;
  TrainingReport report;
};

// Initializes (hidden-state models from `occupancy`, M x N) and trains.
FitOutcome fit_model(const ModelSpec& spec, const TimeSeries& train, const Eigen::MatrixXd& occupancy,
                     const FitSettings& settings);

// Total held-out log-probability, first p values used as context only.
double score_model(const AnyModel& model, const TimeSeries& heldout, Execution exec = Execution::kParallel);
int model_order(const AnyModel& model);

struct DataSource {
  std::string path;  // empty: generated chaotic surrogate
  std::string format = "plain";
  std::string column = "0";
};

struct ExperimentConfig {
  std::string experiment = "synthetic_convergence";  // | markov_order_sweep | hmm_grid
  std::string profile = "desk";
  std::uint64_t seed = 1;
  int replications = 10;
  int workers = 1;
  double timeout_seconds = 7200.0;

  // synthetic_convergence
  std::vector<std::size_t> sizes;
  std::vector<std::string> noise_families;
  std::size_t validation_length = 1000;
  std::vector<std::string> models;

  // markov_order_sweep and hmm_grid
  std::vector<int> orders;
  std::vector<int> states;
  std::size_t train_length = 1000;
  std::size_t heldout_length = 1000;
  double dequantize_amplitude = 0.5;
  DataSource data;
  std::optional<int> scatter_states;
  std::optional<int> scatter_order;

  FitSettings fit;

  void validate() const;
};

// Profile defaults overridden by the keys present in `doc`.
ExperimentConfig resolve_experiment_config(const nlohmann::json& doc, const std::string& profile_override = {});
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

struct ResultRow {
  std::string experiment;
  std::string data;  // noise family or "series"
  std::string model_type;
  int order = 0;
  int states = 1;
  std::size_t n = 0;
  int replication = 0;
  std::optional<double> heldout_log_prob;
  std::optional<double> heldout_per_sample;
  int iterations = 0;
  bool converged = false;
  std::string status = "ok";  // ok | timeout | error:<kind>
  double train_seconds = 0.0;
};

struct ScatterPoint {
  std::size_t n;
  double y_prev;
  double y;
  int state;
  std::vector<double> bandwidths;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  // canonical (cell, replication) order
  std::vector<ScatterPoint> scatter;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// results.csv (deterministic columns only), timings.csv, summary.csv,
// scatter.csv when present, and the resolved config as config.json.
void write_experiment_outputs(const std::string& out_dir, const ExperimentConfig& config,
                              const ExperimentResult& result);

std::string results_csv(const std::vector<ResultRow>& rows);
std::string summary_csv(const std::vector<ResultRow>& rows);

// Linear-interpolation quantile of unsorted values.
double quantile_of(std::vector<double> values, double prob);

// Training and validation series for the real-data experiments: the loaded
// or generated series, dequantized with fresh noise per replication, split
// into consecutive blocks.
std::pair<TimeSeries, TimeSeries> real_data_split(const ExperimentConfig& config, int replication = 0);

}  // namespace kdehmm
