#include "fabnet/error.hpp"
#include "fabnet/random.hpp"
#include "fabnet/synth.hpp"
#include "fabnet/tuner.hpp"

#include <doctest.h>
#include <json.hpp>

#include <atomic>
#include <map>

using namespace fabnet;

namespace {

std::vector<Sample> tiny_corpus(std::size_t per_class, std::uint64_t seed) {
  SynthParams p;
  p.size = 32;
  std::vector<Sample> out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.push_back(synth_fabric(to_class_label(static_cast<long long>(c)), p,
                                 derive_seed(seed, i * 3 + c))
                        .sample);
  return out;
}

SearchSpace singleton_space() {
  SearchSpace s;
  s.learning_rate = {1e-2};
  s.batch_size = {8};
  s.hidden_layers = {1};
  s.dropout_p = {0.0};
  s.l2_lambda = {0.0};
  s.activation = {Activation::relu};
  s.probe_epochs = 2;
  return s;
}

// Scores each configuration from a table keyed by learning rate and
// batch size; other axes leave the score unchanged.
ProbeRunner table_probe(std::map<std::pair<double, std::size_t>, ProbeOutcome> table,
                        std::atomic<int>* calls = nullptr) {
  return [table, calls](const HyperParams& hp, std::uint64_t) {
    if (calls)
      ++*calls;
    const auto it = table.find({hp.learning_rate, hp.batch_size});
    if (it == table.end())
      throw NumericError("diverged");
    return it->second;
  };
}

} // namespace

TEST_CASE("search space") {
  const SearchSpace s;
  CHECK(s.trial_budget() == 4 + 3 + 3 + 3 + 3 + 2);
  const HyperParams d = s.defaults();
  CHECK(d.learning_rate == 1e-1);
  CHECK(d.batch_size == 8);
  CHECK(d.epochs == 10);
  CHECK(s.with_candidate(d, Axis::activation, 1).activation == Activation::sigmoid);
  const std::string text = s.to_doc().to_text();
  CHECK(SearchSpace::from_doc(KeyValueDoc::parse(text)).to_doc().to_text() == text);
  SearchSpace bad = s;
  bad.dropout_p.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.dropout_p = {1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(SearchSpace::from_doc(KeyValueDoc::parse("momentum = 0.9\n")), ConfigError);
}

TEST_CASE("singleton axes give one trial per axis") {
  std::atomic<int> calls = 0;
  const auto probe = table_probe({{{1e-2, 8}, {0.5, 1.0}}}, &calls);
  const SearchResult r = coordinate_search(singleton_space(), probe, 5);
  CHECK(r.trials.size() == 6);
  CHECK(calls == 1);
  CHECK(r.best.to_doc().to_text() == singleton_space().defaults().to_doc().to_text());
  for (const auto& t : r.trials)
    CHECK(t.seed == 5);
}

TEST_CASE("winner selection") {
  SearchSpace s = singleton_space();
  s.learning_rate = {0.1, 0.01, 0.001};

  SUBCASE("accuracy first") {
    const auto r = coordinate_search(
        s, table_probe({{{0.1, 8}, {0.5, 0.1}}, {{0.01, 8}, {0.7, 0.9}}, {{0.001, 8}, {0.6, 0.2}}}),
        1);
    CHECK(r.best.learning_rate == 0.01);
  }
  SUBCASE("loss breaks accuracy ties") {
    const auto r = coordinate_search(
        s, table_probe({{{0.1, 8}, {0.7, 0.5}}, {{0.01, 8}, {0.7, 0.9}}, {{0.001, 8}, {0.7, 0.4}}}),
        1);
    CHECK(r.best.learning_rate == 0.001);
  }
  SUBCASE("earlier candidate breaks full ties") {
    const auto r = coordinate_search(
        s, table_probe({{{0.1, 8}, {0.6, 0.5}}, {{0.01, 8}, {0.7, 0.5}}, {{0.001, 8}, {0.7, 0.5}}}),
        1);
    CHECK(r.best.learning_rate == 0.01);
  }
  SUBCASE("failed trials are recorded and never win") {
    const auto r =
        coordinate_search(s, table_probe({{{0.01, 8}, {0.0, 50.0}}}), 1);
    CHECK(r.best.learning_rate == 0.01);
    REQUIRE(r.trials.size() == 3 + 5);
    CHECK(r.trials[0].failed);
    CHECK(r.trials[0].failure == "diverged");
    CHECK(r.trials[2].failed);
    const auto j = nlohmann::json::parse(r.trials[0].to_json_line());
    CHECK(j["val_accuracy"].is_null());
    CHECK(j["failed"] == true);
  }
  SUBCASE("an axis whose candidates all fail keeps its first candidate") {
    const auto r = coordinate_search(s, table_probe({}), 1);
    CHECK(r.best.learning_rate == 0.1);
    for (const auto& t : r.trials)
      CHECK(t.failed);
  }
}

TEST_CASE("axes are swept in order with earlier winners locked") {
  SearchSpace s = singleton_space();
  s.learning_rate = {0.1, 0.01};
  s.batch_size = {8, 16, 32};
  const auto probe = table_probe({{{0.1, 8}, {0.5, 1.0}},
                                  {{0.01, 8}, {0.6, 1.0}},
                                  {{0.01, 16}, {0.8, 1.0}},
                                  {{0.01, 32}, {0.7, 1.0}},
                                  {{0.1, 16}, {0.99, 1.0}}});
  std::vector<std::string> seen;
  SearchOptions opts;
  opts.on_trial = [&](const TrialRecord& t) { seen.push_back(axis_name(t.axis)); };
  const auto r = coordinate_search(s, probe, 3, opts);
  CHECK(r.best.learning_rate == 0.01);
  CHECK(r.best.batch_size == 16);
  CHECK(r.trials.size() == s.trial_budget());
  CHECK(seen.size() == r.trials.size());
  CHECK(seen.front() == "learning_rate");
  CHECK(r.trials[2].hp.learning_rate == 0.01);
  CHECK(r.trials[2].hp.batch_size == 8);
}

TEST_CASE("search with real training") {
  const auto train_set = tiny_corpus(3, 11);
  const auto val_set = tiny_corpus(2, 12);
  SpecTemplate tmpl;
  tmpl.input = {3, 32, 32};
  SearchSpace s = singleton_space();
  s.learning_rate = {1e-2, 1e-4};
  s.batch_size = {4};
  s.probe_epochs = 3;

  const SearchResult a = coordinate_search(s, tmpl, train_set, val_set, 9);
  CHECK(a.trials.size() == s.trial_budget());

  SUBCASE("reproducible, whatever the thread count") {
    SearchOptions opts;
    opts.threads = 2;
    const SearchResult b = coordinate_search(s, tmpl, train_set, val_set, 9, opts);
    REQUIRE(b.trials.size() == a.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i)
      CHECK(a.trials[i].to_json_line() == b.trials[i].to_json_line());
    CHECK(a.best.to_doc().to_text() == b.best.to_doc().to_text());
  }

  SUBCASE("winner matches independently trained candidates") {
    std::vector<EpochRecord> last;
    for (double lr : s.learning_rate) {
      HyperParams hp = s.defaults();
      hp.learning_rate = lr;
      last.push_back(train(instantiate(tmpl, hp), hp, train_set, val_set, 9).log.records.back());
    }
    CHECK(a.trials[0].val_accuracy == last[0].val_accuracy);
    CHECK(a.trials[1].val_loss == last[1].val_loss);
    const bool second = last[1].val_accuracy > last[0].val_accuracy ||
                        (last[1].val_accuracy == last[0].val_accuracy &&
                         last[1].val_loss < last[0].val_loss);
    CHECK(a.best.learning_rate == (second ? 1e-4 : 1e-2));
  }

  SUBCASE("final training at the probe length reproduces the probe") {
    const TrainResult r = final_train(a.best, tmpl, train_set, val_set, s.probe_epochs, 9);
    const auto& rec = r.log.records.back();
    const auto& winner = a.trials.back();
    CHECK(rec.val_accuracy == winner.val_accuracy);
    CHECK(rec.val_loss == winner.val_loss);
  }

  SUBCASE("empty data") {
    CHECK_THROWS_AS(coordinate_search(s, tmpl, {}, val_set, 9), DataError);
    CHECK_THROWS_AS(coordinate_search(s, tmpl, train_set, {}, 9), DataError);
  }
}
