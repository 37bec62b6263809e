#pragma once

#include "fabnet/optimize.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fabnet {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  std::size_t classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * classes() + pred); }
  void add(std::size_t truth, std::size_t pred);
  void set(std::size_t truth, std::size_t pred, std::uint64_t count);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;

  bool operator==(const ConfusionMatrix&) const = default;

private:
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

std::vector<std::string> default_class_names(std::size_t k);

/// Throws DataError on length mismatch or labels outside [0, k).
ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
                          std::size_t k);

/// nullopt marks a 0/0 metric.
using Metric = std::optional<double>;

struct BinaryMetrics {
  Metric accuracy;
  Metric precision;
  Metric recall;
};

/// accuracy = (TP+TN)/(TP+TN+FP+FN), precision = TP/(TP+FP), recall = TP/(TP+FN).
BinaryMetrics binary_metrics(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp,
                             std::uint64_t fn);

/// sqrt(precision * recall), undefined if either side is.
Metric geometric_mean(Metric precision, Metric recall);

struct ClassMetrics {
  std::string name;
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  Metric precision;
  Metric recall;
  Metric accuracy;         // per-class accuracy, reported as that class's recall
  Metric binary_accuracy;  // one-vs-rest (TP+TN)/total
  Metric geometric_mean;

  bool operator==(const ClassMetrics&) const = default;
};

struct MetricReport {
  std::uint64_t total = 0;
  double accuracy = 0.0;  // trace / total
  std::vector<ClassMetrics> per_class;
  Metric macro_precision;  // mean over defined per-class values
  Metric macro_recall;
  Metric macro_geometric_mean;  // sqrt(macro_precision * macro_recall)

  bool operator==(const MetricReport&) const = default;
};

/// One-vs-rest reduction per class. Throws DataError for an empty matrix.
MetricReport report(const ConfusionMatrix& cm);

std::string metrics_json(const MetricReport& report, const ConfusionMatrix& cm);
MetricReport parse_metrics_json(const std::string& text);
ConfusionMatrix parse_confusion_from_metrics_json(const std::string& text);
std::string confusion_csv(const ConfusionMatrix& cm);

struct EmittedFiles {
  std::filesystem::path metrics;
  std::filesystem::path confusion;
  std::optional<std::filesystem::path> curves;
};

/// Writes metrics.json, confusion.csv and (when a log is given) curves.csv.
EmittedFiles emit(const MetricReport& report, const ConfusionMatrix& cm, const TrainLog* log,
                  const std::filesystem::path& out_dir);

/// Writes `text` to `path`, surfacing failures as IoError with the path.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace fabnet
