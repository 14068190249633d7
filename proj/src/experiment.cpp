#include "kdehmm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "kdehmm/baselines.hpp"
#include "kdehmm/error.hpp"

namespace kdehmm {

using nlohmann::json;

namespace {

const std::vector<std::string> kModelTypes = {"ar", "hmm", "ar_hmm", "kde_mm", "kde_hmm"};

bool hidden_state(const std::string& type) { return type == "hmm" || type == "ar_hmm" || type == "kde_hmm"; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::vector<int> range_inclusive(int lo, int hi) {
  std::vector<int> v;
  for (int i = lo; i <= hi; ++i) v.push_back(i);
  return v;
}

Eigen::MatrixXd uniform_guess(std::size_t n) { return Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(n)); }

struct Job {
  std::string data;
  ModelSpec spec;
  std::size_t n = 0;
  int replication = 0;
  bool scatter = false;
};

}  // namespace

int model_order(const AnyModel& model) {
  switch (model.index()) {
    case 0: return std::get<KdeMm>(model).order;
    case 1: return std::get<KdeHmm>(model).order;
    case 2: return std::get<ArModel>(model).order;
    default: return std::get<ArHmm>(model).order;
  }
}

FitOutcome fit_model(const ModelSpec& spec, const TimeSeries& train, const Eigen::MatrixXd& occupancy,
                     const FitSettings& s) {
  if (spec.type == "ar") {
    ArModel m = ar_fit(train, spec.order);
    TrainingReport r;
    r.converged = true;
    r.objective.push_back(ar_score(m, train));
    return {m, r};
  }
  if (spec.type == "hmm" || spec.type == "ar_hmm") {
    ArHmmFitConfig c;
    c.max_iterations = s.max_iterations;
    c.relative_tolerance = s.relative_tolerance;
    c.deadline = s.deadline;
    auto r = ar_hmm_fit(train, occupancy, spec.type == "hmm" ? 0 : spec.order, c);
    return {r.model, r.report};
  }
  if (spec.type == "kde_mm") {
    MmTrainingConfig c;
    c.mode = s.mm_mode;
    c.max_iterations = s.max_iterations;
    c.relative_tolerance = s.relative_tolerance;
    c.bandwidth_floor = s.bandwidth_floor;
    c.deadline = s.deadline;
    c.execution = s.execution;
    auto r = mm_train(make_kde_mm(train, spec.order, true), c);
    return {r.model, r.report};
  }
  if (spec.type == "kde_hmm") {
    HmmTrainingConfig c;
    c.mode = s.hmm_mode;
    c.update_weights = s.update_weights;
    c.max_iterations = s.max_iterations;
    c.relative_tolerance = s.relative_tolerance;
    c.bandwidth_floor = s.bandwidth_floor;
    c.deadline = s.deadline;
    c.execution = s.execution;
    auto r = hmm_train(hmm_initialize(train, occupancy, spec.order), c);
    return {r.model, r.report};
  }
  throw Error(ErrorKind::kConfig, "unknown model type '" + spec.type + "'");
}

double score_model(const AnyModel& model, const TimeSeries& heldout, Execution exec) {
  switch (model.index()) {
    case 0: return mm_sequence_logpdf(std::get<KdeMm>(model), heldout, ContextMode::kTruncate, exec);
    case 1: return hmm_score(std::get<KdeHmm>(model), heldout, exec);
    case 2: return ar_score(std::get<ArModel>(model), heldout);
    default: return ar_hmm_score(std::get<ArHmm>(model), heldout);
  }
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kConfig, m); };
  if (experiment != "synthetic_convergence" && experiment != "markov_order_sweep" && experiment != "hmm_grid")
    fail("unknown experiment '" + experiment + "'");
  if (replications < 1) fail("replications must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
  if (!(timeout_seconds > 0.0)) fail("timeout_seconds must be positive");
  if (models.empty()) fail("model list is empty");
  for (const auto& m : models)
    if (std::find(kModelTypes.begin(), kModelTypes.end(), m) == kModelTypes.end()) fail("unknown model '" + m + "'");
  if (fit.max_iterations < 1 || !(fit.relative_tolerance > 0.0))
    fail("max_iterations must be >= 1 and relative_tolerance > 0");
  if (fit.hmm_mode == GemMode::kAccelerated && fit.update_weights)
    fail("accelerated updates keep the weights fixed; drop update_weights or use exact mode");
  if (experiment == "synthetic_convergence") {
    if (sizes.empty() || noise_families.empty()) fail("sizes and noise_families must be non-empty");
    if (orders.empty() || states.empty()) fail("orders and states must be non-empty");
    if (validation_length < 2) fail("validation_length too small");
  } else {
    if (orders.empty()) fail("orders must be non-empty");
    if (experiment == "hmm_grid" && states.empty()) fail("states must be non-empty");
    if (train_length < 4 || heldout_length < 2) fail("train/heldout lengths too small");
    if (!(dequantize_amplitude > 0.0)) fail("dequantize_amplitude must be positive");
  }
  for (int p : orders)
    if (p < 0) fail("orders must be non-negative");
  for (int m : states)
    if (m < 1) fail("state counts must be positive");
}

ExperimentConfig resolve_experiment_config(const json& raw, const std::string& profile_override) {
  ExperimentConfig c;
  const json doc = raw.is_null() ? json::object() : raw;
  if (!doc.is_object()) throw Error(ErrorKind::kConfig, "experiment config must be a JSON object");
  try {
    c.experiment = doc.value("experiment", c.experiment);
    c.profile = profile_override.empty() ? doc.value("profile", c.profile) : profile_override;
    if (c.profile != "smoke" && c.profile != "desk" && c.profile != "full")
      throw Error(ErrorKind::kConfig, "unknown profile '" + c.profile + "'");
    const bool smoke = c.profile == "smoke", full = c.profile == "full";

    if (c.experiment == "synthetic_convergence") {
      c.sizes = smoke ? std::vector<std::size_t>{32, 100} : std::vector<std::size_t>{32, 100, 316, 1000, 3162};
      c.noise_families = smoke ? std::vector<std::string>{"bimodal_gmm"}
                               : std::vector<std::string>{"gaussian", "bimodal_gmm"};
      c.models = smoke ? std::vector<std::string>{"ar", "kde_mm"} : kModelTypes;
      c.replications = smoke ? 2 : (full ? 30 : 10);
      c.validation_length = smoke ? 200 : 1000;
      c.orders = {1};
      c.states = {2};
    } else if (c.experiment == "markov_order_sweep") {
      c.models = {"ar", "kde_mm", "kde_hmm"};
      c.orders = smoke ? std::vector<int>{0, 1} : range_inclusive(0, 10);
      c.states = {1};
      c.replications = 1;
      c.train_length = c.heldout_length = smoke ? 200 : (full ? 3000 : 1000);
    } else {
      c.models = {"ar_hmm", "kde_hmm"};
      c.orders = smoke ? std::vector<int>{0, 1} : range_inclusive(0, full ? 3 : 2);
      c.states = smoke ? std::vector<int>{1, 2} : range_inclusive(1, full ? 15 : 8);
      c.replications = 1;
      c.train_length = c.heldout_length = smoke ? 200 : (full ? 3000 : 1000);
    }
    if (smoke) c.fit.max_iterations = 20;

    c.seed = doc.value("seed", c.seed);
    c.replications = doc.value("replications", c.replications);
    c.workers = doc.value("workers", c.workers);
    c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
    if (doc.contains("sizes")) c.sizes = doc.at("sizes").get<std::vector<std::size_t>>();
    if (doc.contains("noise_families")) c.noise_families = doc.at("noise_families").get<std::vector<std::string>>();
    for (const auto& f : c.noise_families) noise_family_from_string(f);
    c.validation_length = doc.value("validation_length", c.validation_length);
    if (doc.contains("models")) c.models = doc.at("models").get<std::vector<std::string>>();
    if (doc.contains("orders")) c.orders = doc.at("orders").get<std::vector<int>>();
    if (doc.contains("states")) c.states = doc.at("states").get<std::vector<int>>();
    c.train_length = doc.value("train_length", c.train_length);
    c.heldout_length = doc.value("heldout_length", c.heldout_length);
    c.dequantize_amplitude = doc.value("dequantize_amplitude", c.dequantize_amplitude);
    if (doc.contains("data")) {
      const json& d = doc.at("data");
      c.data.path = d.value("path", c.data.path);
      c.data.format = d.value("format", c.data.format);
      c.data.column = d.value("column", c.data.column);
      if (c.data.format != "plain" && c.data.format != "csv")
        throw Error(ErrorKind::kConfig, "data.format must be plain or csv");
    }
    if (doc.contains("scatter")) {
      const json& s = doc.at("scatter");
      if (s.contains("states")) c.scatter_states = s.at("states").get<int>();
      if (s.contains("order")) c.scatter_order = s.at("order").get<int>();
    }
    c.fit.max_iterations = doc.value("max_iterations", c.fit.max_iterations);
    c.fit.relative_tolerance = doc.value("relative_tolerance", c.fit.relative_tolerance);
    c.fit.bandwidth_floor = doc.value("bandwidth_floor", c.fit.bandwidth_floor);
    c.fit.update_weights = doc.value("update_weights", c.fit.update_weights);
    if (doc.contains("kde_hmm_mode")) c.fit.hmm_mode = gem_mode_from_string(doc.at("kde_hmm_mode").get<std::string>());
    if (doc.contains("kde_mm_mode")) c.fit.mm_mode = mm_mode_from_string(doc.at("kde_mm_mode").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json j{{"experiment", c.experiment},
         {"profile", c.profile},
         {"seed", c.seed},
         {"replications", c.replications},
         {"workers", c.workers},
         {"timeout_seconds", c.timeout_seconds},
         {"models", c.models},
         {"orders", c.orders},
         {"states", c.states},
         {"max_iterations", c.fit.max_iterations},
         {"relative_tolerance", c.fit.relative_tolerance},
         {"bandwidth_floor", c.fit.bandwidth_floor},
         {"update_weights", c.fit.update_weights},
         {"kde_hmm_mode", to_string(c.fit.hmm_mode)},
         {"kde_mm_mode", to_string(c.fit.mm_mode)}};
  if (c.experiment == "synthetic_convergence") {
    j["sizes"] = c.sizes;
    j["noise_families"] = c.noise_families;
    j["validation_length"] = c.validation_length;
  } else {
    j["train_length"] = c.train_length;
    j["heldout_length"] = c.heldout_length;
    j["dequantize_amplitude"] = c.dequantize_amplitude;
    j["data"] = json{{"path", c.data.path}, {"format", c.data.format}, {"column", c.data.column}};
    if (c.scatter_states) j["scatter"]["states"] = *c.scatter_states;
    if (c.scatter_order) j["scatter"]["order"] = *c.scatter_order;
  }
  return j;
}

std::pair<TimeSeries, TimeSeries> real_data_split(const ExperimentConfig& c, int replication) {
  const std::size_t total = c.train_length + c.heldout_length;
  TimeSeries raw;
  if (c.data.path.empty()) {
    raw = chaotic_surrogate(total, derive_seed(c.seed, hash_tag("surrogate")));
  } else {
    raw = load_series(c.data.path, c.data.format == "csv" ? SeriesFormat::kCsv : SeriesFormat::kPlain,
                      c.data.column);
    if (raw.size() < total)
      throw Error(ErrorKind::kSequenceTooShort, "'" + c.data.path + "' has " + std::to_string(raw.size()) +
                                                    " values, need " + std::to_string(total));
  }
  const TimeSeries noisy =
      dequantize(raw.slice(0, total), c.dequantize_amplitude,
                 derive_seed(c.seed, hash_tag("dequantize/" + std::to_string(replication))));
  return {noisy.slice(0, c.train_length), noisy.slice(c.train_length, c.heldout_length)};
}

double quantile_of(std::vector<double> v, double prob) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = prob * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const bool synthetic = config.experiment == "synthetic_convergence";

  std::vector<Job> jobs;
  if (synthetic) {
    const int p = config.orders.front();
    const int m = config.states.front();
    for (const auto& family : config.noise_families)
      for (std::size_t n : config.sizes)
        for (const auto& type : config.models)
          for (int r = 0; r < config.replications; ++r) {
            ModelSpec spec{type, type == "hmm" ? 0 : p, hidden_state(type) ? m : 1};
            jobs.push_back({family, spec, n, r, false});
          }
  } else {
    const bool grid = config.experiment == "hmm_grid";
    const std::vector<int> state_list = grid ? config.states : std::vector<int>{1};
    const int scatter_m = config.scatter_states.value_or(*std::max_element(state_list.begin(), state_list.end()));
    const int scatter_p = config.scatter_order.value_or(
        std::find(config.orders.begin(), config.orders.end(), 1) != config.orders.end()
            ? 1
            : *std::max_element(config.orders.begin(), config.orders.end()));
    for (const auto& type : config.models)
      for (int p : config.orders)
        for (int m : hidden_state(type) ? state_list : std::vector<int>{1})
          for (int r = 0; r < config.replications; ++r) {
            const bool scatter = grid && type == "kde_hmm" && m == scatter_m && p == scatter_p && r == 0;
            jobs.push_back({"series", {type, type == "hmm" ? 0 : p, m}, config.train_length, r, scatter});
          }
  }

  // Real-data splits are shared by every job of a replication.
  std::vector<std::pair<TimeSeries, TimeSeries>> splits;
  if (!synthetic)
    for (int r = 0; r < config.replications; ++r) splits.push_back(real_data_split(config, r));

  FitSettings fit = config.fit;
  if (config.workers > 1) fit.execution = Execution::kSerial;

  ExperimentResult result;
  result.rows.resize(jobs.size());
  std::mutex scatter_mutex;

  auto run_job = [&](std::size_t index) {
    const Job& job = jobs[index];
    ResultRow& row = result.rows[index];
    row.experiment = config.experiment;
    row.data = job.data;
    row.model_type = job.spec.type;
    row.order = job.spec.order;
    row.states = job.spec.states;
    row.n = job.n;
    row.replication = job.replication;
    const auto start = std::chrono::steady_clock::now();
    try {
      TimeSeries train, heldout;
      Eigen::MatrixXd guess;
      if (synthetic) {
        SyntheticSpec spec;
        spec.noise_family = noise_family_from_string(job.data);
        spec.length = job.n;
        spec.seed = derive_seed(config.seed, hash_tag("train/" + job.data + "/" + std::to_string(job.n) + "/" +
                                                      std::to_string(job.replication)));
        train = generate_synthetic(spec).series;
        spec.length = config.validation_length;
        spec.seed = derive_seed(config.seed, hash_tag("valid/" + job.data + "/" + std::to_string(job.replication)));
        heldout = generate_synthetic(spec).series;
        if (hidden_state(job.spec.type))
          guess = job.spec.states == 2 ? threshold_occupancies(train).gamma_hat : uniform_guess(train.size());
        if (job.spec.states != 1 && job.spec.states != 2 && hidden_state(job.spec.type))
          throw Error(ErrorKind::kConfig, "threshold initialization supports M = 1 or 2");
      } else {
        train = splits[static_cast<std::size_t>(job.replication)].first;
        heldout = splits[static_cast<std::size_t>(job.replication)].second;
        if (hidden_state(job.spec.type))
          guess = job.spec.states == 1 ? uniform_guess(train.size())
                                       : phase_occupancies(train, job.spec.states).gamma_hat;
      }
      FitSettings s = fit;
      s.deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               std::chrono::duration<double>(config.timeout_seconds));
      FitOutcome out = fit_model(job.spec, train, guess, s);
      const double total = score_model(out.model, heldout, s.execution);
      if (!std::isfinite(total)) throw Error(ErrorKind::kNumericalFailure, "held-out log-probability is not finite");
      row.heldout_log_prob = total;
      row.heldout_per_sample = total / static_cast<double>(heldout.size() - static_cast<std::size_t>(model_order(out.model)));
      row.iterations = out.report.iterations;
      row.converged = out.report.converged;
      row.status = out.report.timed_out ? "timeout" : "ok";
      if (job.scatter) {
        const KdeHmm& m = std::get<KdeHmm>(out.model);
        const auto labels = hmm_state_assignments(m, train, s.execution);
        std::vector<ScatterPoint> pts;
        const std::size_t p = static_cast<std::size_t>(m.order);
        for (std::size_t i = 0; i < labels.size(); ++i) {
          const std::size_t n = i + p;
          if (n == 0) continue;
          const int q = labels[i];
          std::vector<double> h(m.bandwidths.cols());
          for (Eigen::Index l = 0; l < m.bandwidths.cols(); ++l) h[static_cast<std::size_t>(l)] = m.bandwidths(q, l);
          pts.push_back({n, train[n - 1], train[n], q, std::move(h)});
        }
        std::lock_guard<std::mutex> lock(scatter_mutex);
        result.scatter = std::move(pts);
      }
    } catch (const Error& e) {
      row.status = std::string("error:") + to_string(e.kind());
      row.converged = false;
    } catch (const std::exception&) {
      row.status = "error:internal";
      row.converged = false;
    }
    row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  if (config.workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < config.workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) run_job(i);
      });
    for (auto& t : pool) t.join();
  }
  return result;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "experiment,data,model_type,p,M,N,replication,heldout_log_prob,heldout_per_sample,iterations,converged,status\n";
  for (const ResultRow& r : rows) {
    out += r.experiment + "," + r.data + "," + r.model_type + "," + std::to_string(r.order) + "," +
           std::to_string(r.states) + "," + std::to_string(r.n) + "," + std::to_string(r.replication) + "," +
           opt(r.heldout_log_prob) + "," + opt(r.heldout_per_sample) + "," + std::to_string(r.iterations) + "," +
           (r.converged ? "true" : "false") + "," + r.status + "\n";
  }
  return out;
}

std::string summary_csv(const std::vector<ResultRow>& rows) {
  struct Cell {
    const ResultRow* first;
    std::vector<double> values;
    int failures = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Cell> cells;
  for (const ResultRow& r : rows) {
    const std::string key = r.experiment + "," + r.data + "," + r.model_type + "," + std::to_string(r.order) + "," +
                            std::to_string(r.states) + "," + std::to_string(r.n);
    auto [it, inserted] = cells.try_emplace(key, Cell{&r, {}, 0});
    if (inserted) order.push_back(key);
    if (r.heldout_per_sample)
      it->second.values.push_back(*r.heldout_per_sample);
    else
      ++it->second.failures;
  }
  std::string out = "experiment,data,model_type,p,M,N,count,failures,median,q25,q75\n";
  for (const auto& key : order) {
    const Cell& c = cells.at(key);
    out += key + "," + std::to_string(c.values.size()) + "," + std::to_string(c.failures) + ",";
    if (c.values.empty()) {
      out += ",,\n";
      continue;
    }
    out += fmt(quantile_of(c.values, 0.5)) + "," + fmt(quantile_of(c.values, 0.25)) + "," +
           fmt(quantile_of(c.values, 0.75)) + "\n";
  }
  return out;
}

void write_experiment_outputs(const std::string& out_dir, const ExperimentConfig& config,
                              const ExperimentResult& result) {
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(out_dir) / name).string(); };
  write_text(path("results.csv"), results_csv(result.rows));
  write_text(path("summary.csv"), summary_csv(result.rows));
  std::string timings = "experiment,data,model_type,p,M,N,replication,train_seconds\n";
  for (const ResultRow& r : result.rows)
    timings += r.experiment + "," + r.data + "," + r.model_type + "," + std::to_string(r.order) + "," +
               std::to_string(r.states) + "," + std::to_string(r.n) + "," + std::to_string(r.replication) + "," +
               fmt(r.train_seconds) + "\n";
  write_text(path("timings.csv"), timings);
  if (!result.scatter.empty()) {
    std::string s = "n,y_prev,y,state";
    for (std::size_t l = 0; l < result.scatter.front().bandwidths.size(); ++l) s += ",h" + std::to_string(l);
    s += "\n";
    for (const ScatterPoint& pt : result.scatter) {
      s += std::to_string(pt.n) + "," + fmt(pt.y_prev) + "," + fmt(pt.y) + "," + std::to_string(pt.state);
      for (double h : pt.bandwidths) s += "," + fmt(h);
      s += "\n";
    }
    write_text(path("scatter.csv"), s);
  }
  write_text(path("config.json"), experiment_config_to_json(config).dump(2) + "\n");
}

}  // namespace kdehmm
