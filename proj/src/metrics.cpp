#include "fabnet/metrics.hpp"

#include "fabnet/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace fabnet {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred) {
  counts_.at(truth * classes() + pred) += 1;
}

void ConfusionMatrix::set(std::size_t truth, std::size_t pred, std::uint64_t count) {
  counts_.at(truth * classes() + pred) = count;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_)
    t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes(); ++i)
    t += at(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < classes(); ++j)
    t += at(truth, j);
  return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes(); ++i)
    t += at(i, pred);
  return t;
}

std::vector<std::string> default_class_names(std::size_t k) {
  if (k == class_count)
    return {"defect-free", "color-spot", "misprint"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i)
    names.push_back("class" + std::to_string(i));
  return names;
}

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
                          std::size_t k) {
  if (preds.size() != truths.size())
    throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(truths.size()) + " truths");
  ConfusionMatrix cm(default_class_names(k));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= k || truths[i] >= k)
      throw DataError("confusion: label outside [0, " + std::to_string(k) + ") at position " +
                      std::to_string(i));
    cm.add(truths[i], preds[i]);
  }
  return cm;
}

namespace {

Metric ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0)
    return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Metric mean_defined(const std::vector<ClassMetrics>& rows, Metric ClassMetrics::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (const Metric& m = r.*field) {
      sum += *m;
      ++n;
    }
  }
  if (n == 0)
    return std::nullopt;
  return sum / static_cast<double>(n);
}

} // namespace

BinaryMetrics binary_metrics(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp,
                             std::uint64_t fn) {
  return {ratio(tp + tn, tp + tn + fp + fn), ratio(tp, tp + fp), ratio(tp, tp + fn)};
}

Metric geometric_mean(Metric precision, Metric recall) {
  if (!precision || !recall)
    return std::nullopt;
  return std::sqrt(*precision * *recall);
}

MetricReport report(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (cm.classes() == 0 || total == 0)
    throw DataError("cannot report metrics for an empty confusion matrix");
  MetricReport r;
  r.total = total;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    ClassMetrics m;
    m.name = cm.names()[k];
    m.tp = cm.at(k, k);
    m.fn = cm.row_sum(k) - m.tp;
    m.fp = cm.col_sum(k) - m.tp;
    m.tn = total - m.tp - m.fn - m.fp;
    const BinaryMetrics b = binary_metrics(m.tp, m.tn, m.fp, m.fn);
    m.precision = b.precision;
    m.recall = b.recall;
    m.accuracy = b.recall;
    m.binary_accuracy = b.accuracy;
    m.geometric_mean = geometric_mean(b.precision, b.recall);
    r.per_class.push_back(std::move(m));
  }
  r.macro_precision = mean_defined(r.per_class, &ClassMetrics::precision);
  r.macro_recall = mean_defined(r.per_class, &ClassMetrics::recall);
  r.macro_geometric_mean = geometric_mean(r.macro_precision, r.macro_recall);
  return r;
}

namespace {

json metric_json(const Metric& m) {
  return m ? json(*m) : json(nullptr);
}

Metric metric_from(const json& j) {
  if (j.is_null())
    return std::nullopt;
  return j.get<double>();
}

} // namespace

std::string metrics_json(const MetricReport& report, const ConfusionMatrix& cm) {
  json j;
  j["classes"] = cm.names();
  json matrix = json::array();
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < cm.classes(); ++p)
      row.push_back(cm.at(t, p));
    matrix.push_back(row);
  }
  j["confusion"] = matrix;
  j["total"] = report.total;
  j["accuracy"] = report.accuracy;
  j["macro"] = {{"precision", metric_json(report.macro_precision)},
                {"recall", metric_json(report.macro_recall)},
                {"geometric_mean", metric_json(report.macro_geometric_mean)}};
  json per = json::array();
  for (const auto& m : report.per_class)
    per.push_back({{"name", m.name},
                   {"tp", m.tp},
                   {"tn", m.tn},
                   {"fp", m.fp},
                   {"fn", m.fn},
                   {"precision", metric_json(m.precision)},
                   {"recall", metric_json(m.recall)},
                   {"accuracy", metric_json(m.accuracy)},
                   {"binary_accuracy", metric_json(m.binary_accuracy)},
                   {"geometric_mean", metric_json(m.geometric_mean)}});
  j["per_class"] = per;
  return j.dump(2) + "\n";
}

MetricReport parse_metrics_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricReport r;
    r.total = j.at("total").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = metric_from(j.at("macro").at("precision"));
    r.macro_recall = metric_from(j.at("macro").at("recall"));
    r.macro_geometric_mean = metric_from(j.at("macro").at("geometric_mean"));
    for (const auto& e : j.at("per_class")) {
      ClassMetrics m;
      m.name = e.at("name").get<std::string>();
      m.tp = e.at("tp").get<std::uint64_t>();
      m.tn = e.at("tn").get<std::uint64_t>();
      m.fp = e.at("fp").get<std::uint64_t>();
      m.fn = e.at("fn").get<std::uint64_t>();
      m.precision = metric_from(e.at("precision"));
      m.recall = metric_from(e.at("recall"));
      m.accuracy = metric_from(e.at("accuracy"));
      m.binary_accuracy = metric_from(e.at("binary_accuracy"));
      m.geometric_mean = metric_from(e.at("geometric_mean"));
      r.per_class.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics document: ") + e.what());
  }
}

ConfusionMatrix parse_confusion_from_metrics_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ConfusionMatrix cm(j.at("classes").get<std::vector<std::string>>());
    const auto& rows = j.at("confusion");
    for (std::size_t t = 0; t < cm.classes(); ++t)
      for (std::size_t p = 0; p < cm.classes(); ++p)
        cm.set(t, p, rows.at(t).at(p).get<std::uint64_t>());
    return cm;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics document: ") + e.what());
  }
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (const auto& name : cm.names())
    out += "," + name;
  out += "\n";
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    out += cm.names()[t];
    for (std::size_t p = 0; p < cm.classes(); ++p)
      out += "," + std::to_string(cm.at(t, p));
    out += "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << text;
  if (!out)
    throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

EmittedFiles emit(const MetricReport& report, const ConfusionMatrix& cm, const TrainLog* log,
                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  EmittedFiles files{out_dir / "metrics.json", out_dir / "confusion.csv", std::nullopt};
  write_text_file(files.metrics, metrics_json(report, cm));
  write_text_file(files.confusion, confusion_csv(cm));
  if (log) {
    files.curves = out_dir / "curves.csv";
    write_text_file(*files.curves, log->to_csv());
  }
  return files;
}

} // namespace fabnet
