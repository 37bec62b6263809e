// fabnet: synth / split / augment / tune / train / eval / predict.
//
// Standard output carries predict results only; progress goes to stderr.
// Exit codes: 0 ok, 1 unexpected, 2 config, 3 data, 4 numeric, 5 io.

#include "fabnet/checkpoint.hpp"
#include "fabnet/dataset.hpp"
#include "fabnet/error.hpp"
#include "fabnet/image_io.hpp"
#include "fabnet/metrics.hpp"
#include "fabnet/random.hpp"
#include "fabnet/synth.hpp"
#include "fabnet/tuner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace fabnet;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  fs::path out_dir = ".";
  std::optional<fs::path> config;
};

int exit_code(ErrorFamily family) {
  switch (family) {
  case ErrorFamily::config:
    return 2;
  case ErrorFamily::data:
    return 3;
  case ErrorFamily::numeric:
    return 4;
  case ErrorFamily::io:
    return 5;
  }
  return 1;
}

std::vector<Sample> load_rows(const Manifest& m, const fs::path& root,
                              const std::vector<std::size_t>& rows) {
  std::vector<Sample> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) {
    const ManifestRecord& r = m.records[i];
    out.push_back({load_image(root / r.path), r.label, r.path, r.provenance});
  }
  return out;
}

std::vector<Sample> load_split(const Manifest& m, const fs::path& manifest_path, SplitTag tag) {
  const auto rows = m.indices_with(tag);
  if (rows.empty())
    throw DataError(manifest_path.string() + " has no " + split_name(tag) + " rows");
  return load_rows(m, manifest_path.parent_path(), rows);
}

SpecTemplate template_for(const Tensor& image) {
  SpecTemplate t;
  t.input = image.shape();
  return t;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

fs::path in_out_dir(const Globals& g, const std::string& name) {
  ensure_dir(g.out_dir);
  return g.out_dir / name;
}

// Config document for a subcommand: an explicit flag wins over --config.
std::optional<KeyValueDoc> config_doc(const Globals& g, const std::string& flag_path) {
  if (!flag_path.empty())
    return KeyValueDoc::load(flag_path);
  if (g.config)
    return KeyValueDoc::load(*g.config);
  return std::nullopt;
}

struct SynthFlags {
  std::size_t count = 0;
  std::string classes = "0,1,2";
  std::optional<std::size_t> size;
  std::optional<std::size_t> tile_period;
  std::optional<double> noise;
  std::optional<std::string> motif;
  fs::path out;
};

void run_synth(const Globals& g, const SynthFlags& f) {
  const std::size_t count = f.count;
  const std::string& classes_text = f.classes;
  std::vector<ClassLabel> classes;
  for (const auto& item : split_list(classes_text)) {
    const long long id = parse_int(item, "classes");
    if (id < 0 || id >= static_cast<long long>(class_count))
      throw ConfigError("--classes: " + item + " is not a class id (0, 1 or 2)");
    const auto label = to_class_label(id);
    if (std::find(classes.begin(), classes.end(), label) != classes.end())
      throw ConfigError("class " + item + " listed twice");
    classes.push_back(label);
  }
  if (classes.empty())
    throw ConfigError("empty class list");
  if (count < classes.size())
    throw ConfigError("--count " + std::to_string(count) + " is smaller than the " +
                      std::to_string(classes.size()) + " requested classes");
  SynthParams params;
  if (auto doc = config_doc(g, ""))
    params = SynthParams::from_doc(*doc);
  if (f.size)
    params.size = *f.size;
  if (f.tile_period)
    params.tile_period = *f.tile_period;
  if (f.noise)
    params.noise = *f.noise;
  if (f.motif)
    params.motif = parse_motif(*f.motif);
  params.validate();

  const fs::path dir = f.out.empty() ? g.out_dir : f.out;
  ensure_dir(dir);

  Manifest m;
  for (std::size_t i = 0; i < count; ++i) {
    const ClassLabel label = classes[i % classes.size()];
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    write_image(synth_fabric(label, params, derive_seed(g.seed, i)).sample.image, dir / name);
    m.records.push_back({name, label, Provenance::synthetic, std::nullopt});
  }
  m.save(dir / "manifest.csv");
  std::cerr << "synth: wrote " << count << " images to " << dir.string() << "\n";
}

SplitRatios parse_ratios(const std::string& text) {
  const auto items = split_list(text);
  if (items.size() != 3)
    throw ConfigError("--ratios needs three values, got " + std::to_string(items.size()));
  SplitRatios r;
  for (std::size_t i = 0; i < 3; ++i)
    r[i] = parse_double(items[i], "ratios");
  return r;
}

void run_split(const Globals& g, const fs::path& manifest_path, const std::string& ratios) {
  Manifest m = Manifest::load(manifest_path);
  const SplitResult r = split(m, parse_ratios(ratios), g.seed);
  for (std::size_t i : r.train)
    m.records[i].split = SplitTag::train;
  for (std::size_t i : r.val)
    m.records[i].split = SplitTag::val;
  for (std::size_t i : r.test)
    m.records[i].split = SplitTag::test;
  m.save(manifest_path);
  std::cerr << "split: " << r.train.size() << " train, " << r.val.size() << " val, "
            << r.test.size() << " test\n";
}

void run_augment(const Globals& g, const fs::path& manifest_path, std::size_t factor) {
  Manifest m = Manifest::load(manifest_path);
  if (factor == 0)
    throw ConfigError("--factor must be at least 1");
  const std::string marker =
      "augment factor=" + std::to_string(factor) + " seed=" + std::to_string(g.seed);
  for (const auto& a : m.annotations) {
    if (a == marker) {
      std::cerr << "augment: manifest already carries '" << marker << "', nothing to do\n";
      return;
    }
    if (a.rfind("augment ", 0) == 0)
      throw DataError(manifest_path.string() + " was already augmented (" + a + ")");
  }
  for (const auto& r : m.records)
    if (!r.split)
      throw DataError(manifest_path.string() + ": row " + r.path + " has no split tag");

  const fs::path root = manifest_path.parent_path();
  std::vector<std::size_t> rows = m.indices_with(SplitTag::train);
  if (rows.empty())
    throw DataError(manifest_path.string() + " has no train rows");
  const std::vector<Sample> train = load_rows(m, root, rows);
  const std::vector<Sample> out = augment(train, factor, g.seed);

  std::size_t written = 0;
  for (const Sample& s : out) {
    if (s.provenance != Provenance::augmented)
      continue;
    const auto hash = s.source_id.find('#');
    const std::string stem = fs::path(s.source_id.substr(0, hash)).stem().string();
    const std::string name = "aug/" + stem + "_" + s.source_id.substr(hash + 1) + ".png";
    ensure_dir(root / "aug");
    write_image(s.image, root / name);
    m.records.push_back({name, s.label, Provenance::augmented, SplitTag::train});
    ++written;
  }
  m.annotations.push_back(marker);
  m.save(manifest_path);
  std::cerr << "augment: " << rows.size() << " train rows -> " << rows.size() + written << "\n";
}

void report_trial(const TrialRecord& t) {
  std::cerr << "tune: " << axis_name(t.axis) << "[" << t.candidate << "] ";
  if (t.failed)
    std::cerr << "failed: " << t.failure << "\n";
  else
    std::cerr << "val_acc=" << t.val_accuracy << " val_loss=" << t.val_loss << "\n";
}

void run_tune(const Globals& g, const fs::path& manifest_path, const std::string& space_path,
              std::size_t threads, bool timings) {
  SearchSpace space;
  if (auto doc = config_doc(g, space_path))
    space = SearchSpace::from_doc(*doc);
  const Manifest m = Manifest::load(manifest_path);
  const auto train_set = load_split(m, manifest_path, SplitTag::train);
  const auto val_set = load_split(m, manifest_path, SplitTag::val);

  SearchOptions opts;
  opts.threads = threads;
  opts.on_trial = report_trial;
  const SearchResult r =
      coordinate_search(space, template_for(train_set.front().image), train_set, val_set, g.seed,
                        opts);
  std::string lines;
  for (const auto& t : r.trials)
    lines += t.to_json_line(timings) + "\n";
  write_text_file(in_out_dir(g, "trials.jsonl"), lines);
  r.best.to_doc().save(in_out_dir(g, "best.cfg"));
  std::cerr << "tune: " << r.trials.size() << " trials, best written to "
            << (g.out_dir / "best.cfg").string() << "\n";
}

void run_train(const Globals& g, const fs::path& manifest_path, const std::string& hp_path,
               std::optional<std::size_t> epochs, const std::string& model_path) {
  HyperParams hp;
  if (auto doc = config_doc(g, hp_path))
    hp = HyperParams::from_doc(*doc);
  if (epochs)
    hp.epochs = *epochs;
  hp.validate();
  const Manifest m = Manifest::load(manifest_path);
  const auto train_set = load_split(m, manifest_path, SplitTag::train);
  const auto val_set = load_split(m, manifest_path, SplitTag::val);

  const ModelSpec spec = model_path.empty()
                             ? instantiate(template_for(train_set.front().image), hp)
                             : parse_model_spec(read_text_file(model_path));
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& e, double) {
    std::cerr << "train: epoch " << e.epoch << "/" << hp.epochs << " loss=" << e.train_loss
              << " acc=" << e.train_accuracy << " val_loss=" << e.val_loss
              << " val_acc=" << e.val_accuracy << "\n";
  };
  const TrainResult r = train(spec, hp, train_set, val_set, g.seed, opts);
  save_checkpoint(r.model, in_out_dir(g, "model.ckpt"));
  write_text_file(in_out_dir(g, "curves.csv"), r.log.to_csv());
  std::cerr << "train: checkpoint written to " << (g.out_dir / "model.ckpt").string() << "\n";
}

void run_eval(const Globals& g, const fs::path& manifest_path, const fs::path& checkpoint) {
  const Model model = load_checkpoint(checkpoint);
  const Manifest m = Manifest::load(manifest_path);
  const auto test_set = load_split(m, manifest_path, SplitTag::test);
  const Evaluation e = evaluate(model, test_set);
  std::vector<std::size_t> truths;
  for (const auto& s : test_set)
    truths.push_back(index_of(s.label));
  const ConfusionMatrix cm = confusion(e.predictions, truths, model.spec().classes);
  const MetricReport r = report(cm);
  emit(r, cm, nullptr, g.out_dir);
  std::cerr << "eval: accuracy " << r.accuracy << " over " << r.total << " test images\n";
}

void run_predict(const fs::path& image_path, const fs::path& checkpoint) {
  const Model model = load_checkpoint(checkpoint);
  const Tensor image = load_image(image_path);
  const Tensor scores = predict_scores(model, stack(std::vector<const Tensor*>{&image}));
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.dim(1); ++k)
    if (scores.at(0, k) > scores.at(0, best))
      best = k;
  std::printf("%zu %.6f\n", best, scores.at(0, best));
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Printed-fabric defect classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::string config_path;
  app.add_option("--seed", g.seed, "Seed for every stochastic step")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for generated outputs")->capture_default_str();
  app.add_option("--config", config_path, "Config document for the subcommand")
      ->check(CLI::ExistingFile);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Render a synthetic fabric corpus with manifest.csv");
  synth->add_option("--count", sf.count, "Number of images")->required();
  synth->add_option("--classes", sf.classes, "Comma-separated class ids")->capture_default_str();
  synth->add_option("--size", sf.size, "Image side in pixels (default 64)");
  synth->add_option("--tile-period", sf.tile_period, "Motif repeat in pixels (default 8)");
  synth->add_option("--noise", sf.noise, "Uniform noise amplitude (default 0.03)");
  synth->add_option("--motif", sf.motif, "dot, diamond, cross or mixed (default dot)");
  synth->add_option("--out", sf.out, "Output directory (default: --out-dir)");

  fs::path manifest;
  std::string ratios = "0.4,0.3,0.3";
  auto* split_cmd = app.add_subcommand("split", "Tag manifest rows as train/val/test");
  split_cmd->add_option("--manifest", manifest, "Manifest to update")->required();
  split_cmd->add_option("--ratios", ratios, "train,val,test fractions")->capture_default_str();

  std::size_t factor = 5;
  auto* augment_cmd = app.add_subcommand("augment", "Add augmented copies of train rows");
  augment_cmd->add_option("--manifest", manifest, "Split manifest to update")->required();
  augment_cmd->add_option("--factor", factor, "Rows per train sample after augmenting")
      ->capture_default_str();

  std::string space_path;
  std::size_t threads = 1;
  bool timings = false;
  auto* tune = app.add_subcommand("tune", "Coordinate search; writes trials.jsonl and best.cfg");
  tune->add_option("--manifest", manifest, "Split manifest")->required();
  tune->add_option("--space", space_path, "Search space document")->check(CLI::ExistingFile);
  tune->add_option("--threads", threads, "Concurrent probes per axis")->capture_default_str();
  tune->add_flag("--timings", timings, "Record elapsed seconds per trial");

  std::string hp_path, model_path;
  std::optional<std::size_t> epochs;
  auto* train_cmd = app.add_subcommand("train", "Train; writes model.ckpt and curves.csv");
  train_cmd->add_option("--manifest", manifest, "Split manifest")->required();
  train_cmd->add_option("--hp", hp_path, "Hyperparameter document")->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", epochs, "Override the epoch count");
  train_cmd->add_option("--model", model_path, "Model spec document (default: reference model)")
      ->check(CLI::ExistingFile);

  fs::path checkpoint;
  auto* eval = app.add_subcommand("eval", "Score test rows; writes metrics.json and confusion.csv");
  eval->add_option("--manifest", manifest, "Split manifest")->required();
  eval->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();

  fs::path image;
  auto* predict = app.add_subcommand("predict", "Print `label confidence` for one image");
  predict->add_option("--image", image, "PNG image")->required();
  predict->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (!config_path.empty())
    g.config = config_path;

  try {
    if (*synth)
      run_synth(g, sf);
    else if (*split_cmd)
      run_split(g, manifest, ratios);
    else if (*augment_cmd)
      run_augment(g, manifest, factor);
    else if (*tune)
      run_tune(g, manifest, space_path, threads, timings);
    else if (*train_cmd)
      run_train(g, manifest, hp_path, epochs, model_path);
    else if (*eval)
      run_eval(g, manifest, checkpoint);
    else if (*predict)
      run_predict(image, checkpoint);
  } catch (const Error& e) {
    std::cerr << "fabnet: " << e.what() << "\n";
    return exit_code(e.family());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "fabnet: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "fabnet: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
