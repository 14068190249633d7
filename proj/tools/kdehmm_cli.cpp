#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "kdehmm/datasets.hpp"
#include "kdehmm/error.hpp"
#include "kdehmm/experiment.hpp"
#include "kdehmm/numeric.hpp"
#include "kdehmm/serialization.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kdehmm;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
  std::string profile;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kNumericalFailure:
    case ErrorKind::kRankDeficient: return 4;
    default: return 3;
  }
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  const std::string text = read_text(path);
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorKind::kConfig, "'" + path + "' is not a JSON object");
  return doc;
}

// Relative data paths in a config file are taken from the file's directory.
std::string resolve_path(const std::string& config_path, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || config_path.empty()) return p;
  return (fs::path(config_path).parent_path() / p).string();
}

SeriesFormat format_of(const std::string& name, const std::string& path) {
  if (name.empty()) return series_format_from_path(path);
  if (name == "plain") return SeriesFormat::kPlain;
  if (name == "csv") return SeriesFormat::kCsv;
  throw Error(ErrorKind::kConfig, "unknown series format '" + name + "'");
}

std::string out_file(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
  try {
    return doc.contains(key) ? doc.at(key).get<T>() : fallback;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config key '") + key + "': " + e.what());
  }
}

// Training data named by a train config: a file, or the synthetic process.
TimeSeries training_data(const json& cfg, const Globals& g, std::uint64_t seed) {
  TimeSeries series;
  if (cfg.contains("data")) {
    const json& d = cfg.at("data");
    const std::string path = resolve_path(g.config, get_or<std::string>(d, "path", ""));
    if (path.empty()) throw Error(ErrorKind::kConfig, "data.path is empty");
    series = load_series(path, format_of(get_or<std::string>(d, "format", ""), path),
                         get_or<std::string>(d, "column", "0"));
  } else if (cfg.contains("synthetic")) {
    const json& s = cfg.at("synthetic");
    SyntheticSpec spec;
    spec.noise_family = noise_family_from_string(get_or<std::string>(s, "noise_family", "gaussian"));
    spec.length = get_or<std::size_t>(s, "length", 1000);
    spec.seed = derive_seed(seed, hash_tag("synthetic"));
    series = generate_synthetic(spec).series;
  } else if (get_or<bool>(cfg, "surrogate", false)) {
    series = chaotic_surrogate(get_or<std::size_t>(cfg, "train_length", 1000), derive_seed(seed, hash_tag("surrogate")));
  } else {
    throw Error(ErrorKind::kConfig, "train config needs 'data', 'synthetic' or 'surrogate'");
  }
  const std::size_t n = get_or<std::size_t>(cfg, "train_length", series.size());
  if (n > series.size())
    throw Error(ErrorKind::kSequenceTooShort,
                "train_length " + std::to_string(n) + " exceeds series length " + std::to_string(series.size()));
  series = series.slice(0, n);
  const double amplitude = get_or<double>(cfg, "dequantize", 0.0);
  if (amplitude > 0.0) series = dequantize(series, amplitude, derive_seed(seed, hash_tag("dequantize")));
  return series;
}

Eigen::MatrixXd occupancy_guess(const std::string& method, const TimeSeries& series, int states) {
  if (method == "uniform" || states == 1) {
    if (states != 1) throw Error(ErrorKind::kConfig, "uniform occupancy needs states = 1");
    return Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(series.size()));
  }
  if (method == "threshold") {
    if (states != 2) throw Error(ErrorKind::kConfig, "threshold occupancy needs states = 2");
    return threshold_occupancies(series).gamma_hat;
  }
  if (method == "phase") return phase_occupancies(series, states).gamma_hat;
  throw Error(ErrorKind::kConfig, "unknown occupancy method '" + method + "'");
}

int cmd_train(const Globals& g) {
  json cfg = read_config(g.config);
  if (g.seed) cfg["seed"] = *g.seed;
  const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 1);
  const std::string out = g.out.empty() ? "train_out" : g.out;

  ModelSpec spec;
  spec.type = get_or<std::string>(cfg, "model_type", "kde_hmm");
  spec.order = get_or<int>(cfg, "order", 1);
  spec.states = get_or<int>(cfg, "states", 1);

  FitSettings s;
  s.max_iterations = get_or<int>(cfg, "max_iterations", s.max_iterations);
  s.relative_tolerance = get_or<double>(cfg, "relative_tolerance", s.relative_tolerance);
  s.bandwidth_floor = get_or<double>(cfg, "bandwidth_floor", s.bandwidth_floor);
  s.update_weights = get_or<bool>(cfg, "update_weights", s.update_weights);
  try {
    if (cfg.contains("mode")) {
      const std::string mode = cfg.at("mode").get<std::string>();
      if (spec.type == "kde_mm")
        s.mm_mode = mm_mode_from_string(mode);
      else
        s.hmm_mode = gem_mode_from_string(mode);
    }
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
  if (spec.type == "kde_hmm" && s.hmm_mode == GemMode::kAccelerated && s.update_weights)
    throw Error(ErrorKind::kConfig, "accelerated mode keeps the kernel weights fixed; set mode to exact to update them");
  if (s.max_iterations < 0 || !(s.relative_tolerance > 0.0))
    throw Error(ErrorKind::kConfig, "max_iterations must be >= 0 and relative_tolerance > 0");
  if (cfg.contains("timeout_seconds"))
    s.deadline = std::chrono::steady_clock::now() +
                 std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                     std::chrono::duration<double>(get_or<double>(cfg, "timeout_seconds", 0.0)));

  FitOutcome result{ArModel{}, {}};
  const std::string resume = resolve_path(g.config, get_or<std::string>(cfg, "resume", ""));
  if (!resume.empty()) {
    AnyModel start = load_model(resume);
    if (auto* m = std::get_if<KdeHmm>(&start)) {
      HmmTrainingConfig c{s.hmm_mode, s.update_weights, s.max_iterations, s.relative_tolerance,
                          s.bandwidth_floor, s.deadline, s.execution};
      auto r = hmm_train(*m, c);
      result = {r.model, r.report};
    } else if (auto* mm = std::get_if<KdeMm>(&start)) {
      MmTrainingConfig c{s.mm_mode, s.max_iterations, s.relative_tolerance, s.bandwidth_floor, s.deadline,
                         s.execution};
      auto r = mm_train(*mm, c);
      result = {r.model, r.report};
    } else if (auto* ah = std::get_if<ArHmm>(&start)) {
      ArHmmFitConfig c{s.max_iterations, s.relative_tolerance, s.deadline};
      auto r = ar_hmm_train(*ah, training_data(cfg, g, seed), c);
      result = {r.model, r.report};
    } else {
      throw Error(ErrorKind::kConfig, "AR models are fitted in closed form and cannot be resumed");
    }
  } else {
    const TimeSeries train = training_data(cfg, g, seed);
    const bool hidden = spec.type == "hmm" || spec.type == "ar_hmm" || spec.type == "kde_hmm";
    Eigen::MatrixXd guess;
    fs::create_directories(out);
    if (hidden) {
      const std::string fallback = spec.states == 1 ? "uniform" : (spec.states == 2 ? "threshold" : "phase");
      guess = occupancy_guess(get_or<std::string>(cfg, "occupancy", fallback), train, spec.states);
      write_matrix_csv(out_file(out, "occupancy.csv"), guess, "gamma_hat");
    }
    result = fit_model(spec, train, guess, s);
  }

  fs::create_directories(out);
  save_model(out_file(out, "model.json"), result.model,
             get_or<bool>(cfg, "series_by_hash", false) ? SeriesStorage::kByHash : SeriesStorage::kInline);
  write_report_csv(out_file(out, "trace.csv"), result.report);
  write_text(out_file(out, "report.json"), report_to_json(result.report).dump(2) + "\n");
  write_text(out_file(out, "config.json"), cfg.dump(2) + "\n");
  const json summary{{"model", out_file(out, "model.json")},
                     {"iterations", result.report.iterations},
                     {"converged", result.report.converged},
                     {"objective", result.report.objective.empty() ? json(nullptr)
                                                                   : json(result.report.objective.back())}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& model_path, const std::string& heldout_path,
                 const std::string& format, const std::string& column) {
  const AnyModel model = load_model(model_path);
  const TimeSeries heldout = load_series(heldout_path, format_of(format, heldout_path), column);
  const std::size_t p = static_cast<std::size_t>(model_order(model));
  if (heldout.size() <= p)
    throw Error(ErrorKind::kSequenceTooShort, "held-out series needs more than " + std::to_string(p) + " values");
  const double total = score_model(model, heldout);
  const std::size_t scored = heldout.size() - p;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", total);
  json result{{"model_type", model_type(model)},
              {"total", json::parse(buf)},
              {"per_sample", total / static_cast<double>(scored)},
              {"scored", scored}};
  std::cout << result.dump() << "\n";
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    write_text(out_file(g.out, "evaluation.json"), result.dump(2) + "\n");
    write_text(out_file(g.out, "config.json"),
               json{{"model", model_path}, {"heldout", heldout_path}, {"format", format}, {"column", column}}.dump(2) +
                   "\n");
  }
  return 0;
}

template <class V>
void write_lines(const std::string& path, const V& values) {
  std::string text;
  for (const auto& v : values) text += std::to_string(v) + "\n";
  write_text(path, text);
}

int cmd_sample(const Globals& g, const std::string& model_path, std::size_t length) {
  const AnyModel model = load_model(model_path);
  const std::uint64_t seed = g.seed.value_or(1);
  const std::string out = g.out.empty() ? "sample_out" : g.out;
  fs::create_directories(out);
  if (const auto* mm = std::get_if<KdeMm>(&model)) {
    // The first p training values start the chain.
    const auto& v = mm->training.values;
    const MmSample s = mm_sample(*mm, std::span<const double>(v.data(), static_cast<std::size_t>(mm->order)), length, seed);
    write_series(out_file(out, "series.txt"), s.series);
    write_lines(out_file(out, "exemplars.txt"), s.exemplars);
  } else if (const auto* h = std::get_if<KdeHmm>(&model)) {
    const HmmSample s = hmm_sample(*h, length, seed);
    write_series(out_file(out, "series.txt"), s.series);
    write_lines(out_file(out, "states.txt"), s.states);
    write_lines(out_file(out, "exemplars.txt"), s.exemplars);
  } else if (const auto* ah = std::get_if<ArHmm>(&model)) {
    const ArHmmSample s = ar_hmm_sample(*ah, length, seed);
    write_series(out_file(out, "series.txt"), s.series);
    write_lines(out_file(out, "states.txt"), s.states);
  } else {
    // An AR model is a one-state AR-HMM.
    const ArModel& ar = std::get<ArModel>(model);
    ArHmm one{1, ar.order, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1), {ar}};
    write_series(out_file(out, "series.txt"), ar_hmm_sample(one, length, seed).series);
  }
  write_text(out_file(out, "config.json"),
             json{{"model", model_path}, {"length", length}, {"seed", seed}}.dump(2) + "\n");
  return 0;
}

int cmd_experiment(const Globals& g) {
  json doc = read_config(g.config);
  if (g.seed) doc["seed"] = *g.seed;
  if (doc.contains("data") && doc["data"].contains("path"))
    doc["data"]["path"] = resolve_path(g.config, doc["data"]["path"].get<std::string>());
  const ExperimentConfig config = resolve_experiment_config(doc, g.profile);
  const std::string out = g.out.empty() ? "experiment_out" : g.out;
  const ExperimentResult result = run_experiment(config);
  write_experiment_outputs(out, config, result);
  std::size_t failed = 0;
  for (const auto& r : result.rows) failed += r.status == "ok" ? 0 : 1;
  std::cout << json{{"rows", result.rows.size()}, {"failed", failed}, {"out", out}}.dump() << "\n";
  return 0;
}

int cmd_inspect(const std::string& model_path) {
  const AnyModel model = load_model(model_path);
  json info{{"model_type", model_type(model)}, {"order", model_order(model)}};
  auto matrix = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  if (const auto* mm = std::get_if<KdeMm>(&model)) {
    info["training_length"] = mm->training.size();
    info["bandwidth"] = mm->bandwidth;
    info["periodic_extension"] = mm->periodic_extension;
    info["exemplars"] = mm->exemplar_count();
  } else if (const auto* h = std::get_if<KdeHmm>(&model)) {
    info["training_length"] = h->training.size();
    info["states"] = h->states;
    info["exemplars"] = h->exemplar_count();
    info["transition"] = matrix(h->transition);
    info["stationary"] = std::vector<double>(h->stationary.data(), h->stationary.data() + h->stationary.size());
    info["bandwidths"] = matrix(h->bandwidths);
    json nonzero = json::array();
    for (Eigen::Index q = 0; q < h->weights.rows(); ++q) nonzero.push_back((h->weights.row(q).array() > 0.0).count());
    info["nonzero_weights"] = nonzero;
  } else if (const auto* ar = std::get_if<ArModel>(&model)) {
    info["coefficients"] = ar->coefficients;
    info["intercept"] = ar->intercept;
    info["noise_std"] = ar->noise_std;
  } else {
    const ArHmm& ah = std::get<ArHmm>(model);
    info["states"] = ah.states;
    info["transition"] = matrix(ah.transition);
    json em = json::array();
    for (const ArModel& e : ah.emissions)
      em.push_back({{"coefficients", e.coefficients}, {"intercept", e.intercept}, {"noise_std", e.noise_std}});
    info["emissions"] = em;
  }
  std::cout << info.dump(2) << "\n";
  return 0;
}

void report_error(const Globals& g, int code, const std::string& kind, const std::string& message,
                  std::optional<std::size_t> index = std::nullopt) {
  json err{{"error", kind}, {"message", message}, {"exit_code", code}};
  if (index) err["index"] = *index;
  std::cerr << err.dump() << "\n";
  if (!g.out.empty()) {
    try {
      fs::create_directories(g.out);
      write_text(out_file(g.out, "error.json"), err.dump(2) + "\n");
    } catch (...) {
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KDE Markov models and KDE hidden Markov models"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads for kernel sums (0 = runtime default)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--profile", g.profile, "experiment size profile")->check(CLI::IsMember({"smoke", "desk", "full"}));
  app.fallthrough();

  auto* train = app.add_subcommand("train", "initialize and train a model");
  auto* evaluate = app.add_subcommand("evaluate", "held-out log-probability of a series");
  std::string model_path, heldout_path, format, column = "0";
  evaluate->add_option("--model", model_path)->required();
  evaluate->add_option("--heldout", heldout_path)->required();
  evaluate->add_option("--format", format)->check(CLI::IsMember({"plain", "csv"}));
  evaluate->add_option("--column", column);
  auto* sample = app.add_subcommand("sample", "draw a series from a model");
  std::size_t length = 1000;
  sample->add_option("--model", model_path)->required();
  sample->add_option("--length", length)->check(CLI::PositiveNumber);
  auto* experiment = app.add_subcommand("experiment", "run an evaluation sweep");
  auto* inspect = app.add_subcommand("inspect", "print a model summary");
  inspect->add_option("--model", model_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error(g, 2, "usage", e.what());
    return 2;
  }

  try {
    if (g.threads > 0) set_thread_count(g.threads);
    if (*train) return cmd_train(g);
    if (*evaluate) return cmd_evaluate(g, model_path, heldout_path, format, column);
    if (*sample) return cmd_sample(g, model_path, length);
    if (*experiment) return cmd_experiment(g);
    if (*inspect) return cmd_inspect(model_path);
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    report_error(g, code, to_string(e.kind()), e.what(), e.index());
    return code;
  } catch (const json::exception& e) {
    report_error(g, 2, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(g, 4, "internal", e.what());
    return 4;
  }
  return 0;
}
