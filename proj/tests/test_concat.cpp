#include <doctest.h>

#include <cmath>

#include "embgeom/concat_experiment.hpp"
#include "embgeom/error.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace embgeom;

namespace {

// Keyword "bank" in five one-token-context sentences plus one concatenation.
EmbeddingCorpus hand_corpus() {
  EmbeddingCorpus c;
  c.meta.layers = 1;
  c.meta.dim = 2;
  auto add = [&](std::string id, std::optional<std::string> sense, float x, float y) {
    EmbeddedSentence s;
    s.id = std::move(id);
    s.tokens = {"the", "bank"};
    s.senses = {std::nullopt, std::move(sense)};
    LayerMatrix h(2, 2);
    h << 9, 9, x, y;
    s.layers.push_back(h);
    c.sentences.push_back(std::move(s));
  };
  add("r1", "bank%river", 1, 0);
  add("r2", "bank%river", 3, 0);
  add("r3", "bank%river", 2, 3);
  add("m1", "bank%money", 0, 2);
  add("m2", "bank%money", 0, 4);
  EmbeddedSentence cat;
  cat.id = "r1+m1";
  cat.kind = "concat";
  cat.sources = {"r1", "m1"};
  cat.tokens = {"the", "bank", "and", "the", "bank"};
  LayerMatrix h(5, 2);
  h << 9, 9, 1, 1, 9, 9, 9, 9, 1, 2;
  cat.layers.push_back(h);
  c.sentences.push_back(std::move(cat));
  return c;
}

SensePair hand_pair() {
  SensePair p;
  p.keyword = "bank";
  p.sentence_a = "r1";
  p.sense_a = "bank%river";
  p.position_a = 1;
  p.sentence_b = "m1";
  p.sense_b = "bank%money";
  p.position_b = 1;
  p.concat_id = "r1+m1";
  p.concat_position_a = 1;
  p.concat_position_b = 4;
  return p;
}

}  // namespace

TEST_SUITE("concat_experiment") {

TEST_CASE("similarity ratio") {
  const Eigen::Vector2d e(1, 0);
  const auto big = similarity_ratio(e, e, Eigen::Vector2d(1e-3, 1));
  CHECK(big.value > 100.0);
  CHECK_FALSE(big.flagged);
  CHECK(similarity_ratio(e, Eigen::Vector2d(2, 1), Eigen::Vector2d(2, 1)).value == doctest::Approx(1.0));

  const double pi = std::acos(-1.0);
  const Eigen::Vector2d at30(std::cos(pi / 6), std::sin(pi / 6));
  const Eigen::Vector2d at60(std::cos(pi / 3), -std::sin(pi / 3));
  CHECK(similarity_ratio(e, at30, at60).value == doctest::Approx(1.732050807568877).epsilon(1e-12));

  const auto flagged = similarity_ratio(e, e, Eigen::Vector2d(-1, 1));
  CHECK(flagged.flagged);
  CHECK(flagged.value < 0.0);
  CHECK(similarity_ratio(e, e, Eigen::Vector2d(0, 1)).flagged);

  CHECK_THROWS_AS(similarity_ratio(Eigen::Vector2d::Zero(), e, e), ValidationError);
  CHECK_THROWS_AS(similarity_ratio(e, e, Eigen::Vector2d::Zero()), ValidationError);
  const Eigen::VectorXd two = e, three = Eigen::Vector3d(1, 0, 0);
  CHECK_THROWS_AS(similarity_ratio(two, two, three), ValidationError);
}

TEST_CASE("similarity ratio is scale invariant") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd k = synthetic::gaussian_matrix(8, 1, rng);
    const Eigen::VectorXd m = synthetic::gaussian_matrix(8, 1, rng);
    const Eigen::VectorXd o = synthetic::gaussian_matrix(8, 1, rng);
    const double base = similarity_ratio(k, m, o).value;
    const double scaled = similarity_ratio(k * scale(rng), m * scale(rng), o * scale(rng)).value;
    CHECK(std::abs(scaled - base) <= 1e-12 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("matching and opposing centroids by hand") {
  const auto corpus = hand_corpus();
  const auto all = matching_opposing_centroids(hand_pair(), corpus, 0, CentroidPolicy::all_occurrences);
  REQUIRE(all.has_value());
  CHECK(all->matching_a == Eigen::Vector2d(2, 1));
  CHECK(all->opposing_a == Eigen::Vector2d(0, 3));
  CHECK(all->matching_b == all->opposing_a);
  CHECK(all->opposing_b == all->matching_a);

  const auto loo = matching_opposing_centroids(hand_pair(), corpus, 0, CentroidPolicy::leave_out_pair);
  REQUIRE(loo.has_value());
  CHECK(loo->matching_a == Eigen::Vector2d(2.5, 1.5));
  CHECK(loo->opposing_a == Eigen::Vector2d(0, 4));
  CHECK(loo->matching_b == loo->opposing_a);
}

TEST_CASE("single occurrence centroid is the embedding") {
  auto corpus = hand_corpus();
  corpus.sentences.erase(corpus.sentences.begin() + 4);  // drop m2
  const auto c = matching_opposing_centroids(hand_pair(), corpus, 0, CentroidPolicy::all_occurrences);
  REQUIRE(c.has_value());
  CHECK(c->opposing_a == Eigen::Vector2d(0, 2));
  CHECK_FALSE(matching_opposing_centroids(hand_pair(), corpus, 0, CentroidPolicy::leave_out_pair));

  const std::vector<SensePair> pairs = {hand_pair()};
  const auto report = run_experiment(pairs, corpus);
  CHECK(report.pairs_used == 0);
  CHECK(report.pairs_skipped == 1);
  CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("hand experiment") {
  const auto corpus = hand_corpus();
  const std::vector<SensePair> pairs = {hand_pair()};
  ExperimentOptions opts;
  opts.policy = CentroidPolicy::all_occurrences;
  const auto report = run_experiment(pairs, corpus, nullptr, opts);
  REQUIRE(report.layers.size() == 1);
  const auto& l = report.layers[0];
  CHECK(l.instances == 2);
  auto cosine = [](Eigen::Vector2d a, Eigen::Vector2d b) { return a.dot(b) / (a.norm() * b.norm()); };
  const Eigen::Vector2d ma(2, 1), mb(0, 3);
  const double ind_a = cosine({1, 0}, ma) / cosine({1, 0}, mb);
  CHECK(std::isinf(ind_a));
  const double ind_b = cosine({0, 2}, mb) / cosine({0, 2}, ma);
  const double cat_a = cosine({1, 1}, ma) / cosine({1, 1}, mb);
  const double cat_b = cosine({1, 2}, mb) / cosine({1, 2}, ma);
  CHECK(l.individual[1] == doctest::Approx(ind_b));
  CHECK(l.concatenated[0] == doctest::Approx(cat_a));
  CHECK(l.concatenated[1] == doctest::Approx(cat_b));
  CHECK(l.flagged == 1);
  CHECK(l.misclassified_concatenated == doctest::Approx(0.0));
}

TEST_CASE("mixing generator lowers every concatenated ratio") {
  synthetic::MixingSpec spec;
  const auto mix = synthetic::mixing_corpus(spec);
  const auto report = run_experiment(mix.pairs, mix.corpus);
  CHECK(report.pairs_used == static_cast<long>(mix.pairs.size()));
  REQUIRE(report.layers.size() == static_cast<std::size_t>(spec.layers));
  for (const auto& layer : report.layers) {
    REQUIRE(layer.individual.size() == 2 * mix.pairs.size());
    for (std::size_t i = 0; i < layer.individual.size(); ++i) {
      CHECK(layer.concatenated[i] < layer.individual[i]);
    }
    CHECK(layer.mean_concatenated < layer.mean_individual);
    CHECK(layer.flagged == 0);
  }
}

TEST_CASE("mean concatenated ratio falls as mixing grows") {
  std::vector<double> means;
  for (int step = 1; step <= 9; ++step) {
    synthetic::MixingSpec spec;
    spec.alpha = step / 10.0;
    const auto mix = synthetic::mixing_corpus(spec);
    means.push_back(run_experiment(mix.pairs, mix.corpus).layers.back().mean_concatenated);
  }
  for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] < means[i - 1]);
}

TEST_CASE("random-sentence control leaves ratios unchanged") {
  synthetic::MixingSpec spec;
  spec.alpha = 0.0;
  const auto mix = synthetic::mixing_corpus(spec);
  const auto report = run_experiment(mix.pairs, mix.corpus);
  for (const auto& layer : report.layers) {
    CHECK(layer.individual == layer.concatenated);
    CHECK(layer.mean_individual == layer.mean_concatenated);
  }
}

TEST_CASE("probe scores the final layer") {
  const auto mix = synthetic::mixing_corpus({});
  std::mt19937_64 rng(2);
  const ProbeMatrix probe(synthetic::random_orthogonal(32, rng));
  const auto plain = run_experiment(mix.pairs, mix.corpus);
  const auto probed = run_experiment(mix.pairs, mix.corpus, &probe);
  REQUIRE(probed.probed_final_layer.has_value());
  CHECK(probed.probed_final_layer->probed);
  CHECK(probed.probed_final_layer->layer == 2);
  // a rotation changes no cosine
  CHECK(probed.probed_final_layer->mean_individual ==
        doctest::Approx(plain.layers.back().mean_individual).epsilon(1e-9));
  const auto j = probed.to_json();
  CHECK(j.contains("probed_final_layer"));
}

TEST_CASE("bad pairs and layers are reported") {
  const auto mix = synthetic::mixing_corpus({});
  auto pairs = mix.pairs;
  pairs[0].concat_id = "missing";
  pairs[1].position_a = 0;  // not the keyword
  pairs[2].concat_position_b = 99;
  ExperimentOptions opts;
  opts.layers = {0, 7};
  const auto report = run_experiment(pairs, mix.corpus, nullptr, opts);
  CHECK(report.pairs_skipped == 3);
  CHECK(report.pairs_used == static_cast<long>(pairs.size()) - 3);
  REQUIRE(report.layers.size() == 1);
  CHECK(report.warnings.size() == 4);
}

TEST_CASE("plot data and json") {
  const auto mix = synthetic::mixing_corpus({});
  const auto report = run_experiment(mix.pairs, mix.corpus);
  const auto tsv = report.plot_data();
  CHECK(tsv.rfind("layer\t", 0) == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 1 + 3);
  const auto j = report.to_json(true);
  CHECK(j["layers"].size() == 3);
  CHECK(j["layers"][0]["individual"].size() == 2 * mix.pairs.size());
}

TEST_CASE("sense pair files") {
  const auto mix = synthetic::mixing_corpus({});
  testing::TempDir dir;
  write_sense_pairs(mix.pairs, dir / "pairs.jsonl");
  const auto back = read_sense_pairs(dir / "pairs.jsonl");
  REQUIRE(back.size() == mix.pairs.size());
  CHECK(back[3].to_json() == mix.pairs[3].to_json());

  auto same = mix.pairs[0].to_json();
  same["sense_b"] = same["sense_a"];
  CHECK_THROWS_AS(SensePair::from_json(same), ValidationError);
}

}
