#include "kdehmm/serialization.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kdehmm/datasets.hpp"
#include "kdehmm/error.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm {

using nlohmann::json;

namespace {

std::string series_text(const TimeSeries& s) {
  std::string out;
  char buf[40];
  for (double v : s.values) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out += buf;
  }
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw Error(ErrorKind::kParse, std::string(what) + " has the wrong number of rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(ErrorKind::kParse, std::string(what) + " has the wrong number of columns");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json series_to_json(const TimeSeries& s) {
  return json{{"values", s.values}, {"source", s.source}};
}

// Sparse rows when most weights are zero, as produced by phase initialization.
json weights_to_json(const Eigen::MatrixXd& w) {
  const Eigen::Index zeros = (w.array() == 0.0).count();
  if (zeros * 2 <= w.size()) return json{{"dense", matrix_to_json(w)}};
  json rows = json::array();
  for (Eigen::Index q = 0; q < w.rows(); ++q) {
    json entries = json::array();
    for (Eigen::Index n = 0; n < w.cols(); ++n)
      if (w(q, n) != 0.0) entries.push_back(json::array({n, w(q, n)}));
    rows.push_back(std::move(entries));
  }
  return json{{"sparse", rows}};
}

Eigen::MatrixXd weights_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (j.contains("dense")) return matrix_from_json(j.at("dense"), rows, cols, "weights");
  const json& sparse = j.at("sparse");
  if (!sparse.is_array() || static_cast<Eigen::Index>(sparse.size()) != rows)
    throw Error(ErrorKind::kParse, "sparse weights have the wrong number of rows");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index q = 0; q < rows; ++q)
    for (const json& e : sparse[static_cast<std::size_t>(q)]) {
      const auto n = e.at(0).get<Eigen::Index>();
      if (n < 0 || n >= cols) throw Error(ErrorKind::kParse, "sparse weight index out of range");
      w(q, n) = e.at(1).get<double>();
    }
  return w;
}

json ar_to_json(const ArModel& m) {
  return json{{"order", m.order}, {"coefficients", m.coefficients}, {"intercept", m.intercept},
              {"noise_std", m.noise_std}};
}

ArModel ar_from_json(const json& j) {
  ArModel m;
  m.order = j.at("order").get<int>();
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  m.intercept = j.at("intercept").get<double>();
  m.noise_std = j.at("noise_std").get<double>();
  m.validate();
  return m;
}

TimeSeries training_from_json(const json& doc, const std::string& base_dir) {
  if (doc.contains("training_series")) {
    const json& s = doc.at("training_series");
    return TimeSeries(s.at("values").get<std::vector<double>>(), s.value("source", ""));
  }
  const json& ref = doc.at("training_series_ref");
  const std::string file = (std::filesystem::path(base_dir) / ref.at("file").get<std::string>()).string();
  TimeSeries s = load_series(file, SeriesFormat::kPlain);
  if (series_hash(s) != ref.at("hash").get<std::string>())
    throw Error(ErrorKind::kParse, "training series '" + file + "' does not match its recorded hash");
  s.source = ref.value("source", file);
  return s;
}

struct ToJson {
  json operator()(const KdeMm& m) const {
    return json{{"model_type", "kde_mm"},
                {"order", m.order},
                {"bandwidth", m.bandwidth},
                {"periodic_extension", m.periodic_extension},
                {"kernel", to_string(m.kernel)},
                {"training_series", series_to_json(m.training)}};
  }
  json operator()(const KdeHmm& m) const {
    return json{{"model_type", "kde_hmm"},
                {"order", m.order},
                {"states", m.states},
                {"kernel", to_string(m.kernel)},
                {"transition", matrix_to_json(m.transition)},
                {"bandwidths", matrix_to_json(m.bandwidths)},
                {"weights", weights_to_json(m.weights)},
                {"training_series", series_to_json(m.training)}};
  }
  json operator()(const ArModel& m) const {
    json j = ar_to_json(m);
    j["model_type"] = "ar";
    return j;
  }
  json operator()(const ArHmm& m) const {
    json e = json::array();
    for (const ArModel& a : m.emissions) e.push_back(ar_to_json(a));
    return json{{"model_type", "ar_hmm"},
                {"order", m.order},
                {"states", m.states},
                {"transition", matrix_to_json(m.transition)},
                {"emissions", e}};
  }
};

const TimeSeries* training_of(const AnyModel& model) {
  if (auto* m = std::get_if<KdeMm>(&model)) return &m->training;
  if (auto* m = std::get_if<KdeHmm>(&model)) return &m->training;
  return nullptr;
}

}  // namespace

const char* model_type(const AnyModel& model) {
  switch (model.index()) {
    case 0: return "kde_mm";
    case 1: return "kde_hmm";
    case 2: return "ar";
    default: return "ar_hmm";
  }
}

std::string series_hash(const TimeSeries& series) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_tag(series_text(series))));
  return std::string("fnv1a64:") + buf;
}

json model_to_json(const AnyModel& model) { return std::visit(ToJson{}, model); }

AnyModel model_from_json(const json& doc, const std::string& base_dir) {
  try {
    const std::string type = doc.at("model_type").get<std::string>();
    if (type == "kde_mm") {
      KdeMm m;
      m.training = training_from_json(doc, base_dir);
      m.order = doc.at("order").get<int>();
      m.bandwidth = doc.at("bandwidth").get<double>();
      m.periodic_extension = doc.at("periodic_extension").get<bool>();
      m.kernel = kernel_from_string(doc.value("kernel", "gaussian"));
      m.validate();
      return m;
    }
    if (type == "kde_hmm") {
      KdeHmm m;
      m.training = training_from_json(doc, base_dir);
      m.order = doc.at("order").get<int>();
      m.states = doc.at("states").get<int>();
      m.kernel = kernel_from_string(doc.value("kernel", "gaussian"));
      if (m.order < 0 || m.states < 1 || m.training.size() <= static_cast<std::size_t>(m.order))
        throw Error(ErrorKind::kParse, "KDE-HMM document has invalid sizes");
      m.transition = matrix_from_json(doc.at("transition"), m.states, m.states, "transition");
      m.stationary = stationary_distribution(m.transition);
      m.bandwidths = matrix_from_json(doc.at("bandwidths"), m.states, m.order + 1, "bandwidths");
      m.weights = weights_from_json(doc.at("weights"), m.states, static_cast<Eigen::Index>(m.exemplar_count()));
      m.validate();
      return m;
    }
    if (type == "ar") return ar_from_json(doc);
    if (type == "ar_hmm") {
      ArHmm m;
      m.order = doc.at("order").get<int>();
      m.states = doc.at("states").get<int>();
      if (m.states < 1) throw Error(ErrorKind::kParse, "AR-HMM document has invalid sizes");
      m.transition = matrix_from_json(doc.at("transition"), m.states, m.states, "transition");
      m.stationary = stationary_distribution(m.transition);
      for (const json& e : doc.at("emissions")) m.emissions.push_back(ar_from_json(e));
      m.validate();
      return m;
    }
    throw Error(ErrorKind::kParse, "unknown model_type '" + type + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed model document: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidArgument) throw Error(ErrorKind::kParse, e.what());
    throw;
  }
}

void save_model(const std::string& path, const AnyModel& model, SeriesStorage storage) {
  json doc = model_to_json(model);
  const TimeSeries* training = training_of(model);
  if (training && storage == SeriesStorage::kByHash) {
    const std::string hash = series_hash(*training);
    const std::string file = "series-" + hash.substr(hash.find(':') + 1) + ".txt";
    const auto dir = std::filesystem::path(path).parent_path();
    const auto target = dir / file;
    if (!std::filesystem::exists(target)) write_text(target.string(), series_text(*training));
    doc.erase("training_series");
    doc["training_series_ref"] = json{{"hash", hash}, {"file", file}, {"source", training->source}};
  }
  write_text(path, doc.dump(2) + "\n");
}

AnyModel load_model(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "'" + path + "' is not valid JSON: " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return model_from_json(doc, dir.empty() ? "." : dir.string());
}

json report_to_json(const TrainingReport& r) {
  return json{{"iterations", r.iterations},
              {"converged", r.converged},
              {"timed_out", r.timed_out},
              {"decreasing_steps", r.decreasing_steps},
              {"largest_relative_decrease", r.largest_relative_decrease},
              {"degenerate_separation", r.degenerate_separation},
              {"starved_states", r.starved_states},
              {"final_objective", r.objective.empty() ? 0.0 : r.objective.back()},
              {"notes", r.notes}};
}

void write_report_csv(const std::string& path, const TrainingReport& report) {
  std::string out = "iteration,objective\n";
  char buf[64];
  for (std::size_t i = 0; i < report.objective.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, report.objective[i]);
    out += buf;
  }
  write_text(path, out);
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& gamma, const std::string& value_name,
                      std::size_t first_index) {
  std::string out = "t,q," + value_name + "\n";
  char buf[80];
  for (Eigen::Index t = 0; t < gamma.cols(); ++t)
    for (Eigen::Index q = 0; q < gamma.rows(); ++q) {
      std::snprintf(buf, sizeof buf, "%zu,%td,%.17g\n", first_index + static_cast<std::size_t>(t), q, gamma(q, t));
      out += buf;
    }
  write_text(path, out);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace kdehmm
