// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "embgeom/concat_experiment.hpp"
#include "embgeom/ingest.hpp"
#include "embgeom/probes.hpp"
#include "embgeom/projection_viz.hpp"
#include "embgeom/senses.hpp"
#include "embgeom/service.hpp"
#include "embgeom/tree_geometry.hpp"
#include "embgeom/wsd.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace embgeom;

namespace {

// tolerances
constexpr double kPythagoreanTol = 1e-9;
constexpr double kPythagoreanSeconds = 5.0;
constexpr double kStarEigenBelow = -1e-6;
constexpr double kBranchSeMultiple = 4.0;
constexpr double kBranchStdRelTol = 0.20;
constexpr double kBranchSeconds = 10.0;
constexpr double kAttentionAccuracy = 0.99;
constexpr double kStructuralMae = 0.1;
constexpr double kSemanticLift = 0.10;
constexpr double kRotationTol = 1e-9;
constexpr double kScaleTol = 1e-12;
constexpr double kPanelTol = 1e-9;
constexpr double kPcaTol = 1e-8;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd metric(const Tree& t) { return tree_distance_matrix(t).cast<double>(); }

DependencyParse parse_of(const Tree& tree) {
  std::vector<std::string> rels(tree.size(), "dep");
  rels[tree.root()] = "root";
  return DependencyParse(tree.parents(), rels);
}

std::vector<std::string> names(int n) {
  std::vector<std::string> t;
  for (int i = 0; i < n; ++i) t.push_back("t" + std::to_string(i));
  return t;
}

Eigen::MatrixXd pairwise(const Eigen::MatrixXd& p) {
  Eigen::MatrixXd d(p.rows(), p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.rows(); ++j) d(i, j) = (p.row(i) - p.row(j)).norm();
  return d;
}

// ---------------------------------------------------------------------------

void pythagorean(Outcome& o) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 64);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto tree = synthetic::random_tree(size(rng), rng);
    const auto cloud = canonical_pythagorean_embedding(tree);
    const auto d = tree_distance_matrix(tree);
    for (int i = 0; i < tree.size(); ++i)
      for (int j = 0; j < tree.size(); ++j)
        worst = std::max(worst, std::abs((cloud.points.row(i) - cloud.points.row(j)).squaredNorm() - d(i, j)));
  }
  const double secs = seconds_since(t0);
  o.detail << "max deviation " << worst << ", " << secs << " s";
  o.require(worst < kPythagoreanTol, "deviation");
  o.require(secs < kPythagoreanSeconds, "runtime");
}

void feasibility(Outcome& o) {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<int> size(2, 64);
  int p2_feasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    p2_feasible += power_p_feasibility(metric(synthetic::random_tree(size(rng), rng)), 2.0).feasible;
  }
  const auto star = metric(Tree::star(50));
  const auto s1 = power_p_feasibility(star, 1.0);
  const auto s15 = power_p_feasibility(star, 1.5);
  const auto s3 = power_p_feasibility(star, 3.0);

  // once feasible at some p on the grid, feasible at every larger p
  const double grid[] = {1.0, 1.5, 2.0, 2.5, 3.0};
  int monotone = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = metric(synthetic::random_tree(size(rng), rng));
    bool seen = false, ok = true;
    for (double p : grid) {
      const bool f = power_p_feasibility(d, p).feasible;
      if (seen && !f) ok = false;
      seen = seen || f;
    }
    monotone += ok;
  }
  o.detail << "p=2 feasible " << p2_feasible << "/200; star50 min eig p=1 " << s1.min_eigenvalue
           << ", p=1.5 " << s15.min_eigenvalue << ", p=3 feasible " << s3.feasible << "; monotone "
           << monotone << "/50";
  o.require(p2_feasible == 200, "p=2");
  o.require(s1.min_eigenvalue < kStarEigenBelow && !s1.feasible, "star p=1");
  o.require(s15.min_eigenvalue < kStarEigenBelow && !s15.feasible, "star p=1.5");
  o.require(s3.feasible, "star p=3");
  o.require(monotone == 50, "monotone");
}

void branch(Outcome& o) {
  const int m = 4, d = 1024, trials = 1000;
  const auto t0 = std::chrono::steady_clock::now();
  const auto stats = sample_branch_distances(Tree::path(m + 1), 0, m, d, trials, 1);
  const double secs = seconds_since(t0);

  // oracle: squared norm of a sum of m independent N(0, I/d) draws
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, std::sqrt(static_cast<double>(m) / d));
  const int draws = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < draws; ++k) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double x = g(rng);
      s += x * x;
    }
    sum += s;
    sum_sq += s * s;
  }
  const double oracle_mean = sum / draws;
  const double oracle_std = std::sqrt((sum_sq - draws * oracle_mean * oracle_mean) / (draws - 1));

  o.detail << "mean " << stats.mean << " (SE " << stats.standard_error << "), std " << stats.stddev
           << " vs oracle " << oracle_std << ", " << secs << " s";
  o.require(std::abs(stats.mean - m) <= kBranchSeMultiple * stats.standard_error, "mean");
  o.require(std::abs(stats.stddev - oracle_std) <= kBranchStdRelTol * oracle_std, "std");
  o.require(secs < kBranchSeconds, "runtime");
}

ProbeTrainConfig attention_config() {
  ProbeTrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.l2_lambda = 1e-4;
  cfg.seed = 7;
  return cfg;
}

void attention(Outcome& o) {
  synthetic::PlantedAttentionSpec spec;  // 12 x 12 = 144 dims, 10k examples
  spec.margin = 0.1;
  const auto binary_data = synthetic::planted_attention(spec);
  const auto binary = train_attention_binary(binary_data, attention_config());
  const auto again = train_attention_binary(binary_data, attention_config());

  spec.classes = 5;
  const auto multi_data = synthetic::planted_attention(spec);
  MulticlassOptions mo;
  mo.filter.min_examples = 100;
  const auto multi = train_attention_multiclass(multi_data, attention_config(), mo);
  const auto multi_again = train_attention_multiclass(multi_data, attention_config(), mo);

  const bool same = again.probe.weights == binary.probe.weights && again.probe.bias == binary.probe.bias &&
                    multi_again.probe.weights == multi.probe.weights &&
                    multi_again.probe.bias == multi.probe.bias &&
                    multi_again.test_metrics.accuracy == multi.test_metrics.accuracy;
  o.detail << "binary " << binary.test_metrics.accuracy << ", 5-class " << multi.test_metrics.accuracy
           << ", deterministic " << same;
  o.require(binary.test_metrics.accuracy >= kAttentionAccuracy, "binary");
  o.require(multi.test_metrics.accuracy >= kAttentionAccuracy, "5-class");
  o.require(same, "determinism");
}

void structural(Outcome& o) {
  synthetic::StructuralSpec spec;  // 64 noise dims
  spec.sentences = 300;
  auto held_spec = spec;
  held_spec.sentences = 60;
  held_spec.seed = 77;
  const auto train = synthetic::structural_corpus(spec);
  const auto held = synthetic::structural_corpus(held_spec);
  ProbeTrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 80;
  cfg.batch_size = 4;
  cfg.l2_lambda = 0.0;
  cfg.lr_decay = 0.95;
  cfg.seed = 1;
  const auto trained = train_structural_probe(train, 0, spec.max_nodes - 1, cfg);

  double total = 0.0;
  int sentences = 0;
  for (const auto& s : held.sentences) {
    if (s.size() < 2) continue;
    const auto d = tree_distance_matrix(s.parse->tree);
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < s.size(); ++i)
      for (int j = i + 1; j < s.size(); ++j) {
        const Eigen::VectorXd dh = s.embedding(0, i) - s.embedding(0, j);
        sum += std::abs(d(i, j) - (trained.probe.entries.transpose() * dh).squaredNorm());
        ++pairs;
      }
    total += sum / pairs;
    ++sentences;
  }
  const double mae = total / sentences;
  o.detail << "held-out mean |d - ||B^T dh||^2| " << mae;
  o.require(mae < kStructuralMae, "mae");
}

void semantic(Outcome& o) {
  synthetic::SenseSpec spec;
  spec.train_per_sense = 80;
  const auto corpora = synthetic::sense_corpora(spec);
  const auto train = collect_sense_occurrences(corpora.train, 0);
  const auto test = collect_sense_occurrences(corpora.test, 0);
  ProbeTrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.l2_lambda = 0.0;
  cfg.seed = 3;
  const auto result = train_semantic_probe(train, spec.planted_dims, ClampSpec{}, cfg);
  const auto control = random_probe(spec.planted_dims + spec.nuisance_dims, spec.planted_dims, 1234);
  const double trained = evaluate_f1(fit_centroids(train, 0, &result.trained.probe), test).accuracy;
  const double random = evaluate_f1(fit_centroids(train, 0, &control), test).accuracy;

  std::mt19937_64 rng(8);
  const ProbeMatrix ortho(synthetic::random_orthogonal(spec.planted_dims + spec.nuisance_dims, rng));
  const auto plain = fit_centroids(train, 0);
  const auto rotated = fit_centroids(train, 0, &ortho);
  int changed = 0;
  for (const auto& q : test) changed += plain.classify(q.embedding, q.lemma) != rotated.classify(q.embedding, q.lemma);

  o.detail << "trained " << trained << " vs random " << random << "; orthonormal probe changed " << changed
           << "/" << test.size() << " decisions";
  o.require(trained - random >= kSemanticLift, "lift");
  o.require(changed == 0, "orthonormal");
}

SenseOccurrence occ(std::string lemma, std::string sense, Eigen::VectorXd e) {
  return {std::move(lemma), std::move(sense), "s", 0, std::move(e)};
}

void wsd(Outcome& o) {
  std::mt19937_64 rng(12);
  const int dim = 16;
  std::vector<SenseOccurrence> singles;
  for (int l = 0; l < 20; ++l)
    for (int s = 0; s < 3; ++s)
      singles.push_back(occ("w" + std::to_string(l), "w" + std::to_string(l) + "%" + std::to_string(s),
                            synthetic::gaussian_matrix(dim, 1, rng)));
  const double singleton = evaluate_f1(fit_centroids(singles, 0), singles).accuracy;

  SenseInventory inventory;
  inventory.add("unseen", "unseen%rare", 2);
  inventory.add("unseen", "unseen%common", 9);
  const auto model = fit_centroids(singles, 0, nullptr, inventory);
  const auto fallback = model.classify(Eigen::VectorXd::Zero(dim), "unseen");

  const Eigen::MatrixXd q = synthetic::random_orthogonal(dim, rng);
  auto turned = singles;
  for (auto& x : turned) x.embedding = q * x.embedding;
  const auto rotated = fit_centroids(turned, 0);
  double worst = 0.0;
  bool same = true;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = synthetic::gaussian_matrix(dim, 1, rng);
    const std::string lemma = "w" + std::to_string(k % 20);
    same = same && model.classify(x, lemma) == rotated.classify(q * x, lemma);
    const auto& a = model.centroids.at(lemma);
    const auto& b = rotated.centroids.at(lemma);
    for (std::size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::abs((a[i].centroid - x).norm() - (b[i].centroid - q * x).norm()));
    }
  }
  o.detail << "singleton accuracy " << singleton << ", fallback " << fallback << ", rotation distance gap "
           << worst;
  o.require(singleton == 1.0, "singleton");
  o.require(fallback == "unseen%common", "fallback");
  o.require(same && worst < kRotationTol, "rotation");
}

void concat(Outcome& o) {
  synthetic::MixingSpec spec;  // alpha 0.3
  const auto mix = synthetic::mixing_corpus(spec);
  const auto report = run_experiment(mix.pairs, mix.corpus);
  long lowered = 0, total = 0;
  for (const auto& layer : report.layers)
    for (std::size_t i = 0; i < layer.individual.size(); ++i) {
      lowered += layer.concatenated[i] < layer.individual[i];
      ++total;
    }

  spec.alpha = 0.0;
  const auto copy = synthetic::mixing_corpus(spec);
  const auto control = run_experiment(copy.pairs, copy.corpus);
  bool equal = !control.layers.empty();
  for (const auto& layer : control.layers) equal = equal && layer.individual == layer.concatenated;

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd k = synthetic::gaussian_matrix(16, 1, rng);
    const Eigen::VectorXd m = synthetic::gaussian_matrix(16, 1, rng);
    const Eigen::VectorXd op = synthetic::gaussian_matrix(16, 1, rng);
    const double base = similarity_ratio(k, m, op).value;
    const double scaled = similarity_ratio(k * scale(rng), m * scale(rng), op * scale(rng)).value;
    worst = std::max(worst, std::abs(scaled - base) / std::max(1.0, std::abs(base)));
  }
  o.detail << "concatenated < individual for " << lowered << "/" << total << "; control equal " << equal
           << "; scale gap " << worst;
  o.require(total > 0 && lowered == total, "per-instance");
  o.require(equal, "control");
  o.require(worst <= kScaleTol, "scale");
}

void viz(Outcome& o) {
  std::mt19937_64 rng(14);
  const auto tree = synthetic::random_tree(15, rng);
  const Eigen::MatrixXd h = synthetic::gaussian_matrix(15, 8, rng);
  const ProbeMatrix probe(synthetic::gaussian_matrix(8, 4, rng));
  const auto panel = comparison_panel(names(15), parse_of(tree), h, probe, 1024, 9);
  double panel_b = 0.0;
  for (const auto& e : panel[1].solid) panel_b = std::max(panel_b, std::abs(e.deviation));

  const auto big = synthetic::random_tree(20, rng);
  const Eigen::MatrixXd hb = synthetic::gaussian_matrix(20, 16, rng) * 0.4;
  bool monotone = true;
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  std::vector<std::pair<int, int>> before;
  for (double t = -2.0; t <= 6.0; t += 0.25) {
    const auto d = build_tree_drawing(names(20), parse_of(big), hb, ProbeMatrix::identity(16), t);
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : d.dotted) edges.emplace_back(e.a, e.b);
    if (previous != std::numeric_limits<std::size_t>::max()) {
      for (const auto& e : edges) monotone = monotone && std::find(before.begin(), before.end(), e) != before.end();
    }
    previous = edges.size();
    before = edges;
  }

  // det (1 + 9) / 2, nsubj (4 + 4) / 2, advmod 1
  const auto table = per_dependency_edge_lengths(synthetic::edge_length_fixture(), 0, ProbeMatrix::identity(2));
  const bool hand = table.size() == 3 && table.at("det").mean_squared_length == 5.0 &&
                    table.at("det").count == 2 && table.at("nsubj").mean_squared_length == 4.0 &&
                    table.at("nsubj").count == 2 && table.at("advmod").mean_squared_length == 1.0 &&
                    table.at("advmod").count == 1;

  double pca_gap = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd x = synthetic::gaussian_matrix(25, 12, rng) *
                              Eigen::VectorXd::LinSpaced(12, 3.0, 0.2).asDiagonal();
    const Eigen::MatrixXd q = synthetic::random_orthogonal(12, rng);
    const auto a = pca_project(x, 2);
    const auto b = pca_project(x * q, 2);
    pca_gap = std::max(pca_gap, (pairwise(a.coordinates) - pairwise(b.coordinates)).cwiseAbs().maxCoeff());
  }
  o.detail << "panel (b) max deviation " << panel_b << "; dotted monotone " << monotone << "; edge table "
           << hand << "; pca gap " << pca_gap;
  o.require(panel_b < kPanelTol, "panel");
  o.require(monotone, "dotted");
  o.require(hand, "edge lengths");
  o.require(pca_gap < kPcaTol, "pca");
}

bool bits_equal(const LayerMatrix& a, const LayerMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

void ingest_service(Outcome& o) {
  testing::TempDir tmp;
  synthetic::SenseSpec spec;
  spec.layers = 3;
  auto corpus = synthetic::sense_corpora(spec).train;
  // values that do not survive a decimal round trip
  corpus.sentences[0].layers[0](0, 0) = std::nextafter(1.0f, 2.0f);
  corpus.sentences[0].layers[1](0, 1) = -0.0f;
  write_embedding_corpus(corpus, tmp / "corpus");
  const auto back = read_embedding_corpus(tmp / "corpus");
  bool round = back.sentences.size() == corpus.sentences.size();
  for (std::size_t s = 0; round && s < corpus.sentences.size(); ++s) {
    const auto& a = corpus.sentences[s];
    const auto& b = back.sentences[s];
    round = a.id == b.id && a.tokens == b.tokens && a.senses == b.senses && a.layers.size() == b.layers.size();
    for (std::size_t l = 0; round && l < a.layers.size(); ++l) round = bits_equal(a.layers[l], b.layers[l]);
  }

  synthetic::PlantedAttentionSpec aspec;
  aspec.examples = 200;
  const auto data = synthetic::planted_attention(aspec);
  std::stringstream buf;
  write_attention_dataset(data, buf);
  const auto again = read_attention_dataset(buf);
  bool attn = again.records.size() == data.records.size();
  for (std::size_t i = 0; attn && i < data.records.size(); ++i) {
    attn = std::memcmp(data.records[i].values.data(), again.records[i].values.data(),
                       sizeof(float) * data.records[i].values.size()) == 0 &&
           data.records[i].has_relation == again.records[i].has_relation;
  }

  auto drawn = synthetic::edge_length_fixture();
  std::map<std::string, ProbeMatrix> probes;
  probes.emplace("id", ProbeMatrix::identity(2));
  const ExplorerService svc(drawn, probes);
  bool idempotent = true;
  for (const std::string path : {"/v1/meta", "/v1/words/cat", "/v1/sentences/dog/tree"}) {
    const auto first = svc.handle(path, {});
    const auto second = svc.handle(path, {});
    idempotent = idempotent && first.status == 200 && first.body == second.body;
  }

  // nothing outside the C++ library went into this binary or its build tree
  bool standalone = true;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(EMBGEOM_BUILD_DIR)) {
    const auto ext = entry.path().extension();
    if (ext == ".js" || ext == ".pyc" || entry.path().filename() == "node_modules") standalone = false;
  }
  o.detail << "corpus round trip " << round << ", attention round trip " << attn << ", service idempotent "
           << idempotent << ", no secondary artifacts " << standalone;
  o.require(round, "corpus");
  o.require(attn, "attention");
  o.require(idempotent, "service");
  o.require(standalone, "standalone");
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
      {"pythagorean-exactness", pythagorean},
      {"power-p-feasibility", feasibility},
      {"random-branch-concentration", branch},
      {"attention-probe-recovery", attention},
      {"structural-probe-recovery", structural},
      {"semantic-probe-planted-subspace", semantic},
      {"wsd", wsd},
      {"concatenation-experiment", concat},
      {"visualization", viz},
      {"ingest-service-standalone", ingest_service},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
