// embgeom command-line front end.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "embgeom/concat_experiment.hpp"
#include "embgeom/error.hpp"
#include "embgeom/ingest.hpp"
#include "embgeom/probe_matrix.hpp"
#include "embgeom/probes.hpp"
#include "embgeom/projection_viz.hpp"
#include "embgeom/senses.hpp"
#include "embgeom/service.hpp"
#include "embgeom/tree_geometry.hpp"
#include "embgeom/wsd.hpp"

// after Eigen: resolv.h defines _res
#include <httplib.h>

namespace fs = std::filesystem;
using namespace embgeom;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string(), e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open for writing");
  out << text;
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

ProbeTrainConfig load_config(const std::string& path) {
  return path.empty() ? ProbeTrainConfig{} : ProbeTrainConfig::from_json(read_json_file(path));
}

int last_layer(const EmbeddingCorpus& c) { return c.meta.layers - 1; }

Eigen::MatrixXd distances_for(const Tree& t) { return tree_distance_matrix(t).cast<double>(); }

json feasibility_json(const FeasibilityReport& r) {
  return {{"p", r.p},
          {"min_eigenvalue", r.min_eigenvalue},
          {"max_abs_eigenvalue", r.max_abs_eigenvalue},
          {"tolerance", r.tolerance},
          {"feasible", r.feasible}};
}

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

fs::path sidecar(const fs::path& svg) {
  fs::path j = svg;
  return j.replace_extension(".json");
}

// ---------------------------------------------------------------------------

void add_tree(CLI::App& app) {
  auto* tree = app.add_subcommand("tree", "tree metrics and embeddings");
  tree->require_subcommand(1);

  struct Source {
    std::string file;
    int star = 0;
    int path = 0;
    Tree load() const {
      if (!file.empty()) return Tree::from_json(read_json_file(file));
      if (star > 0) return Tree::star(star);
      if (path > 0) return Tree::path(path);
      throw ValidationError("give --tree FILE, --star K or --path N");
    }
  };
  auto source = std::make_shared<Source>();
  auto add_source = [source](CLI::App* cmd) {
    cmd->add_option("--tree", source->file, "JSON tree {n, parents}");
    cmd->add_option("--star", source->star, "star with K leaves");
    cmd->add_option("--path", source->path, "path with N nodes");
  };

  auto* embed = tree->add_subcommand("embed", "canonical or random branch embedding");
  add_source(embed);
  auto kind = std::make_shared<std::string>("canonical");
  auto dim = std::make_shared<int>(1024);
  auto seed = std::make_shared<std::uint64_t>(0);
  auto power = std::make_shared<double>(2.0);
  embed->add_option("--kind", *kind)->check(CLI::IsMember({"canonical", "random"}));
  embed->add_option("--dim", *dim, "random branch dimension");
  embed->add_option("--seed", *seed);
  embed->add_option("--p", *power, "power for the reported deviation");
  embed->callback([=] {
    const Tree t = source->load();
    const auto cloud = *kind == "canonical" ? canonical_pythagorean_embedding(t)
                                            : random_branch_embedding(t, *dim, *seed);
    emit({{"kind", *kind},
          {"n", t.size()},
          {"dim", cloud.dim()},
          {"points", matrix_rows(cloud.points)},
          {"p", *power},
          {"max_deviation", verify_power_p(cloud, t, *power)}});
  });

  auto* feas = tree->add_subcommand("feasibility", "power-p embeddability by classical MDS");
  add_source(feas);
  auto powers = std::make_shared<std::vector<double>>(std::vector<double>{1.0, 1.5, 2.0, 2.5, 3.0});
  auto tolerance = std::make_shared<double>(-1.0);
  feas->add_option("--p", *powers, "one or more powers");
  feas->add_option("--tolerance", *tolerance, "absolute PSD tolerance (default relative 1e-8)");
  feas->callback([=] {
    const Tree t = source->load();
    const auto d = distances_for(t);
    json reports = json::array();
    for (double p : *powers) {
      const auto r = *tolerance >= 0 ? power_p_feasibility(d, p, *tolerance) : power_p_feasibility(d, p);
      reports.push_back(feasibility_json(r));
    }
    json out{{"n", t.size()}, {"reports", reports}};
    if (source->star > 1) {
      json bounds = json::array();
      for (double p : *powers) bounds.push_back({{"p", p}, {"bound", star_tree_pairwise_bound(source->star, p)}});
      out["star_bounds"] = bounds;
    }
    emit(out);
  });
}

// ---------------------------------------------------------------------------

void add_probe(CLI::App& app) {
  auto* probe = app.add_subcommand("probe", "train, evaluate and compare probes");
  probe->require_subcommand(1);

  {
    auto* cmd = probe->add_subcommand("train-attention", "linear classifier over attention vectors");
    struct Opts {
      std::string data, config, out;
      bool multiclass = false, table = false;
      long min_examples = 5000;
      int max_relations = 30;
      std::size_t max_train = 300000, max_test = 150000;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--data", o->data, "attention dataset (JSON lines)")->required();
    cmd->add_option("--config", o->config, "training config JSON");
    cmd->add_option("--out", o->out, "write the trained probe here");
    cmd->add_flag("--multiclass", o->multiclass, "predict the relation label");
    cmd->add_option("--min-examples", o->min_examples, "keep relations with more examples");
    cmd->add_option("--max-relations", o->max_relations);
    cmd->add_option("--max-train", o->max_train);
    cmd->add_option("--max-test", o->max_test);
    cmd->add_flag("--table", o->table, "print a per-class table after the JSON");
    cmd->callback([o] {
      const auto data = read_attention_dataset(fs::path(o->data));
      const auto cfg = load_config(o->config);
      AttentionProbeRun run;
      if (o->multiclass) {
        MulticlassOptions mo;
        mo.filter = {o->min_examples, o->max_relations};
        mo.max_train = o->max_train;
        mo.max_test = o->max_test;
        run = train_attention_multiclass(data, cfg, mo);
      } else {
        run = train_attention_binary(data, cfg);
      }
      if (!o->out.empty()) write_linear_probe(run.probe, fs::path(o->out));
      auto j = run.to_json();
      j["config"] = cfg.to_json();
      emit(j);
      if (o->table) std::cout << run.test_metrics.table();
    });
  }

  {
    auto* cmd = probe->add_subcommand("train-structural", "structural probe on parsed sentences");
    struct Opts {
      std::string corpus, config, out;
      int layer = -1, rank = 0;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--corpus", o->corpus)->required();
    cmd->add_option("--layer", o->layer, "default: last layer");
    cmd->add_option("--rank", o->rank, "probe rank m (default: embedding dim)");
    cmd->add_option("--config", o->config);
    cmd->add_option("--out", o->out)->required();
    cmd->callback([o] {
      const auto corpus = read_embedding_corpus(o->corpus);
      const int layer = o->layer < 0 ? last_layer(corpus) : o->layer;
      const int rank = o->rank > 0 ? o->rank : corpus.meta.dim;
      const auto trained = train_structural_probe(corpus, layer, rank, load_config(o->config));
      write_probe_matrix(trained.probe, fs::path(o->out));
      emit({{"layer", layer},
            {"rank", rank},
            {"initial_loss", trained.loss_history.front()},
            {"final_loss", trained.loss_history.back()},
            {"loss_history", trained.loss_history}});
    });
  }

  {
    auto* cmd = probe->add_subcommand("train-semantic", "semantic probe with clamped cosine loss");
    struct Opts {
      std::string corpus, config, out, half_width = "0.1";
      int layer = -1, rank = 0;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--corpus", o->corpus, "sense-labelled corpus")->required();
    cmd->add_option("--layer", o->layer, "default: last layer");
    cmd->add_option("--rank", o->rank, "probe rank m (default: embedding dim)");
    cmd->add_option("--half-width", o->half_width, "clamp half width, or 'inf'");
    cmd->add_option("--config", o->config);
    cmd->add_option("--out", o->out)->required();
    cmd->callback([o] {
      const auto corpus = read_embedding_corpus(o->corpus);
      const int layer = o->layer < 0 ? last_layer(corpus) : o->layer;
      const int rank = o->rank > 0 ? o->rank : corpus.meta.dim;
      ClampSpec clamp;
      clamp.half_width = o->half_width == "inf" ? ClampSpec::unclamped : std::stod(o->half_width);
      const auto occ = collect_sense_occurrences(corpus, layer);
      auto result = train_semantic_probe(occ, rank, clamp, load_config(o->config));
      result.trained.probe.metadata["layer"] = layer;
      write_probe_matrix(result.trained.probe, fs::path(o->out));
      emit({{"layer", layer},
            {"rank", rank},
            {"baseline_same", result.baselines.same},
            {"baseline_diff", result.baselines.diff},
            {"same_pairs", result.baselines.same_pairs},
            {"diff_pairs", result.baselines.diff_pairs},
            {"loss_history", result.trained.loss_history}});
    });
  }

  {
    auto* cmd = probe->add_subcommand("eval", "score a probe on held-out data");
    struct Opts {
      std::string probe, data, corpus;
      int layer = -1;
      bool multiclass = false, table = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--probe", o->probe)->required();
    cmd->add_option("--data", o->data, "attention dataset for a linear probe");
    cmd->add_option("--corpus", o->corpus, "parsed corpus for a structural probe");
    cmd->add_option("--layer", o->layer);
    cmd->add_flag("--table", o->table);
    cmd->callback([o] {
      if (!o->data.empty()) {
        const auto probe = read_linear_probe(fs::path(o->probe));
        const auto data = read_attention_dataset(fs::path(o->data));
        const auto examples = probe.is_binary() ? binary_examples(data) : relation_examples(data);
        const auto metrics = evaluate_probe(probe, examples);
        emit(metrics.to_json());
        if (o->table) std::cout << metrics.table();
      } else if (!o->corpus.empty()) {
        const auto probe = read_probe_matrix(fs::path(o->probe));
        const auto corpus = read_embedding_corpus(o->corpus);
        const int layer = resolve_probe_layer(probe, corpus, o->layer < 0 ? std::nullopt : std::optional(o->layer));
        emit({{"layer", layer}, {"structural_loss", structural_probe_loss(corpus, layer, probe)}});
      } else {
        throw ValidationError("probe eval needs --data or --corpus");
      }
    });
  }

  {
    auto* cmd = probe->add_subcommand("compare", "singular values of A^T B and A B^T");
    auto a = std::make_shared<std::string>();
    auto b = std::make_shared<std::string>();
    cmd->add_option("--a", *a)->required();
    cmd->add_option("--b", *b)->required();
    cmd->callback([a, b] {
      const auto cmp = compare_probe_subspaces(read_probe_matrix(fs::path(*a)), read_probe_matrix(fs::path(*b)));
      emit({{"singular_values_AtB", to_vector(cmp.at_b)}, {"singular_values_ABt", to_vector(cmp.a_bt)}});
    });
  }
}

// ---------------------------------------------------------------------------

void add_wsd(CLI::App& app) {
  auto* wsd = app.add_subcommand("wsd", "nearest-centroid word sense disambiguation");
  wsd->require_subcommand(1);

  struct Opts {
    std::string train, test, model, probe, fallback, out;
    int layer = -1;
    bool all_layers = false;
  };

  {
    auto* cmd = wsd->add_subcommand("fit", "fit sense centroids");
    auto o = std::make_shared<Opts>();
    cmd->add_option("--train", o->train, "sense-labelled corpus")->required();
    cmd->add_option("--layer", o->layer, "default: last layer");
    cmd->add_option("--probe", o->probe, "probe applied before centroiding");
    cmd->add_option("--fallback", o->fallback, "sense-frequency JSON {lemma: {sense: count}}");
    cmd->add_option("--out", o->out, "model directory")->required();
    cmd->callback([o] {
      const auto corpus = read_embedding_corpus(o->train);
      const int layer = o->layer < 0 ? last_layer(corpus) : o->layer;
      std::optional<ProbeMatrix> probe;
      if (!o->probe.empty()) probe = read_probe_matrix(fs::path(o->probe));
      const auto fallback = o->fallback.empty() ? SenseInventory{} : SenseInventory::from_json(read_json_file(o->fallback));
      const auto model = fit_centroids(corpus, layer, probe ? &*probe : nullptr, fallback);
      save_centroid_model(model, o->out);
      long centroids = 0;
      for (const auto& [lemma, list] : model.centroids) centroids += static_cast<long>(list.size());
      emit({{"layer", layer}, {"lemmas", model.centroids.size()}, {"centroids", centroids}});
    });
  }

  {
    auto* cmd = wsd->add_subcommand("eval", "score a model, or fit and score per layer");
    auto o = std::make_shared<Opts>();
    cmd->add_option("--test", o->test, "sense-labelled corpus")->required();
    cmd->add_option("--model", o->model, "model directory from 'wsd fit'");
    cmd->add_option("--train", o->train, "fit on this corpus instead of loading a model");
    cmd->add_option("--layer", o->layer, "default: the model's layer or the last layer");
    cmd->add_option("--probe", o->probe);
    cmd->add_option("--fallback", o->fallback);
    cmd->add_flag("--all-layers", o->all_layers, "fit and score every layer (needs --train)");
    cmd->callback([o] {
      const auto test = read_embedding_corpus(o->test);
      std::optional<ProbeMatrix> probe;
      if (!o->probe.empty()) probe = read_probe_matrix(fs::path(o->probe));
      const auto fallback = o->fallback.empty() ? SenseInventory{} : SenseInventory::from_json(read_json_file(o->fallback));
      if (!o->model.empty()) {
        const auto model = load_centroid_model(o->model);
        const int layer = o->layer < 0 ? model.layer : o->layer;
        auto j = evaluate_f1(model, collect_sense_occurrences(test, layer)).to_json();
        j["layer"] = layer;
        emit(j);
        return;
      }
      if (o->train.empty()) throw ValidationError("wsd eval needs --model or --train");
      const auto train = read_embedding_corpus(o->train);
      std::vector<int> layers;
      if (o->all_layers) {
        for (int l = 0; l < train.meta.layers; ++l) layers.push_back(l);
      } else {
        layers.push_back(o->layer < 0 ? last_layer(train) : o->layer);
      }
      json out = json::array();
      for (const auto& s : evaluate_layers(train, test, layers, probe ? &*probe : nullptr, fallback)) {
        auto j = s.score.to_json();
        j["layer"] = s.layer;
        out.push_back(j);
      }
      emit(o->all_layers ? out : out[0]);
    });
  }
}

// ---------------------------------------------------------------------------

void add_concat(CLI::App& app) {
  auto* concat = app.add_subcommand("concat", "sentence concatenation experiment");
  concat->require_subcommand(1);
  auto* cmd = concat->add_subcommand("run", "similarity ratios per layer");
  struct Opts {
    std::string pairs, corpus, probe, out, plot, policy = "leave-out-pair";
    std::vector<int> layers;
    bool instances = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--pairs", o->pairs, "sense pairs (JSON lines)")->required();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--probe", o->probe, "score the final layer through this probe as well");
  cmd->add_option("--out", o->out, "report JSON (default: stdout)");
  cmd->add_option("--plot", o->plot, "per-layer TSV (layer, individual, concatenated)");
  cmd->add_option("--layers", o->layers);
  cmd->add_option("--policy", o->policy)->check(CLI::IsMember({"leave-out-pair", "all-occurrences"}));
  cmd->add_flag("--instances", o->instances, "include per-instance ratios");
  cmd->callback([o] {
    const auto corpus = read_embedding_corpus(o->corpus);
    const auto pairs = read_sense_pairs(o->pairs);
    std::optional<ProbeMatrix> probe;
    if (!o->probe.empty()) probe = read_probe_matrix(fs::path(o->probe));
    ExperimentOptions opts;
    opts.layers = o->layers;
    opts.policy = o->policy == "all-occurrences" ? CentroidPolicy::all_occurrences : CentroidPolicy::leave_out_pair;
    const auto report = run_experiment(pairs, corpus, probe ? &*probe : nullptr, opts);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    const std::string text = report.to_json(o->instances).dump(2) + "\n";
    if (o->out.empty()) {
      std::cout << text;
    } else {
      write_text(o->out, text);
    }
    if (!o->plot.empty()) write_text(o->plot, report.plot_data());
  });
}

// ---------------------------------------------------------------------------

void add_viz(CLI::App& app) {
  auto* viz = app.add_subcommand("viz", "tree drawings and edge statistics");
  viz->require_subcommand(1);
  struct Opts {
    std::string corpus, sentence, probe, out;
    int layer = -1, dim = 1024;
    double threshold = 1.0;
    std::uint64_t seed = 0;
  };

  auto load = [](const Opts& o) {
    auto corpus = read_embedding_corpus(o.corpus);
    auto probe = o.probe.empty() ? ProbeMatrix::identity(corpus.meta.dim) : read_probe_matrix(fs::path(o.probe));
    const int layer = resolve_probe_layer(probe, corpus, o.layer < 0 ? std::nullopt : std::optional(o.layer));
    return std::make_tuple(std::move(corpus), std::move(probe), layer);
  };
  auto sentence_of = [](const EmbeddingCorpus& corpus, const std::string& id) {
    const auto* s = corpus.find(id);
    if (!s) throw NotFoundError("unknown sentence '" + id + "'");
    if (!s->parse) throw ValidationError("sentence '" + id + "' has no parse");
    return s;
  };

  {
    auto* cmd = viz->add_subcommand("tree", "PCA drawing of a probe-transformed parse");
    auto o = std::make_shared<Opts>();
    cmd->add_option("--corpus", o->corpus)->required();
    cmd->add_option("--sentence-id", o->sentence)->required();
    cmd->add_option("--probe", o->probe, "structural probe (default: identity)");
    cmd->add_option("--layer", o->layer, "default: probe metadata, else last layer");
    cmd->add_option("--threshold", o->threshold, "dotted-edge threshold");
    cmd->add_option("--out", o->out, "SVG path; the JSON sidecar goes next to it")->required();
    cmd->callback([=] {
      const auto [corpus, probe, layer] = load(*o);
      const auto drawing = build_tree_drawing(*sentence_of(corpus, o->sentence), layer, probe, o->threshold);
      write_text(o->out, render_svg(drawing));
      write_text(sidecar(o->out), drawing_json_text(drawing));
    });
  }

  {
    auto* cmd = viz->add_subcommand("edge-lengths", "mean squared probe-space edge length per relation");
    auto o = std::make_shared<Opts>();
    cmd->add_option("--corpus", o->corpus)->required();
    cmd->add_option("--probe", o->probe);
    cmd->add_option("--layer", o->layer);
    cmd->add_option("--out", o->out, "JSON path (default: stdout)");
    cmd->callback([=] {
      const auto [corpus, probe, layer] = load(*o);
      const std::string text = to_json(per_dependency_edge_lengths(corpus, layer, probe)).dump(2) + "\n";
      if (o->out.empty()) {
        std::cout << text;
      } else {
        write_text(o->out, text);
      }
    });
  }

  {
    auto* cmd = viz->add_subcommand("panel", "probe vs canonical vs random branch vs random");
    auto o = std::make_shared<Opts>();
    cmd->add_option("--corpus", o->corpus)->required();
    cmd->add_option("--sentence-id", o->sentence)->required();
    cmd->add_option("--probe", o->probe);
    cmd->add_option("--layer", o->layer);
    cmd->add_option("--dim", o->dim, "dimension of the random embeddings");
    cmd->add_option("--seed", o->seed);
    cmd->add_option("--threshold", o->threshold);
    cmd->add_option("--out", o->out)->required();
    cmd->callback([=] {
      const auto [corpus, probe, layer] = load(*o);
      const auto* s = sentence_of(corpus, o->sentence);
      auto panel = comparison_panel(s->tokens, *s->parse, s->layer_matrix(layer), probe, o->dim, o->seed,
                                    o->threshold);
      json sides = json::array();
      for (auto& d : panel) {
        d.sentence_id = s->id;
        sides.push_back(d.to_json());
      }
      write_text(o->out, render_svg(panel));
      write_text(sidecar(o->out), sides.dump(2) + "\n");
    });
  }
}

// ---------------------------------------------------------------------------

int validate_path(const fs::path& path) {
  if (fs::is_directory(path)) {
    const auto corpus = read_embedding_corpus(path);
    emit({{"kind", "embedding-corpus"}, {"valid", true}, {"stats", to_json(corpus_stats(corpus))}});
    return 0;
  }
  if (path.extension() == ".conllu") {
    const auto doc = read_conllu(path);
    json errors = json::array();
    for (const auto& e : doc.errors) {
      errors.push_back({{"sentence_index", e.sentence_index}, {"line", e.line}, {"message", e.message}});
    }
    emit({{"kind", "conllu"},
          {"valid", doc.errors.empty()},
          {"sentences", doc.sentences.size()},
          {"errors", errors},
          {"warnings", doc.warnings}});
    return doc.errors.empty() ? 0 : 1;
  }
  const auto data = read_attention_dataset(path);
  emit({{"kind", "attention"},
        {"valid", true},
        {"layers", data.layers},
        {"heads", data.heads},
        {"vector_length", data.vector_length()},
        {"records", data.records.size()}});
  return 0;
}

void add_ingest(CLI::App& app, int& exit_code) {
  auto* ingest = app.add_subcommand("ingest", "check corpus artifacts");
  ingest->require_subcommand(1);
  auto path = std::make_shared<std::string>();

  auto* validate = ingest->add_subcommand("validate", "corpus directory, .conllu file or attention dataset");
  validate->add_option("path", *path)->required();
  validate->callback([path, &exit_code] { exit_code = validate_path(*path); });

  auto* stats = ingest->add_subcommand("stats", "counts for an embedding corpus");
  stats->add_option("dir", *path)->required();
  stats->callback([path] {
    const auto corpus = read_embedding_corpus(*path);
    auto j = to_json(corpus_stats(corpus));
    j["model"] = corpus.meta.model;
    j["layers"] = corpus.meta.layers;
    j["dim"] = corpus.meta.dim;
    j["wordpiece"] = corpus.meta.wordpiece;
    emit(j);
  });
}

// ---------------------------------------------------------------------------

httplib::Server* running_server = nullptr;

void add_serve(CLI::App& app) {
  auto* cmd = app.add_subcommand("serve", "read-only HTTP API over a corpus");
  struct Opts {
    std::string corpus, probes, static_dir, host = "127.0.0.1";
    int port = 8080;
    double threshold = 1.0;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus)->required();
  cmd->add_option("--port", o->port);
  cmd->add_option("--host", o->host);
  cmd->add_option("--probes", o->probes, "directory of *.probe files");
  cmd->add_option("--static", o->static_dir, "serve these files at /");
  cmd->add_option("--threshold", o->threshold, "dotted-edge threshold for tree drawings");
  cmd->callback([o] {
    ExplorerService service(read_embedding_corpus(o->corpus), load_probe_directory(o->probes), o->threshold);
    httplib::Server server;
    service.mount(server, o->static_dir);
    running_server = &server;
    std::signal(SIGINT, [](int) { running_server->stop(); });
    std::signal(SIGTERM, [](int) { running_server->stop(); });
    std::clog << json{{"event", "listening"}, {"host", o->host}, {"port", o->port}}.dump() << std::endl;
    if (!server.listen(o->host, o->port)) throw std::runtime_error("cannot listen on port " + std::to_string(o->port));
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry of contextual embeddings: trees, probes, senses"};
  app.require_subcommand(1);
  int exit_code = 0;
  add_tree(app);
  add_probe(app);
  add_wsd(app);
  add_concat(app);
  add_viz(app);
  add_ingest(app, exit_code);
  add_serve(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
