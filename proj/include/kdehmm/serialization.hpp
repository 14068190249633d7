#pragma once

#include <json.hpp>
#include <string>
#include <variant>

#include "kdehmm/baselines.hpp"
#include "kdehmm/kde_hmm.hpp"
#include "kdehmm/kde_mm.hpp"
#include "kdehmm/training_report.hpp"

namespace kdehmm {

using AnyModel = std::variant<KdeMm, KdeHmm, ArModel, ArHmm>;

const char* model_type(const AnyModel& model);

// How training series are stored in model documents.
enum class SeriesStorage {
  kInline,   // "training_series": [values]
  kByHash,   // "training_series_ref": {"hash", "file"}; the file sits next to the model
};

// Content hash of a series as written by write_series.
std::string series_hash(const TimeSeries& series);

nlohmann::json model_to_json(const AnyModel& model);
// Models with a training series reference need `base_dir` to locate it.
AnyModel model_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");

void save_model(const std::string& path, const AnyModel& model, SeriesStorage storage = SeriesStorage::kInline);
AnyModel load_model(const std::string& path);

nlohmann::json report_to_json(const TrainingReport& report);

// CSV exports with a header row.
void write_report_csv(const std::string& path, const TrainingReport& report);
// Rows (t, q, gamma); t counts from `first_index`.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& gamma, const std::string& value_name,
                      std::size_t first_index = 0);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace kdehmm
