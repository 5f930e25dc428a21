// Copyright 2026 The agl-desk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// agl: graphflat | graphtrainer | graphinfer | gen

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agl/agl.hpp"

namespace fs = std::filesystem;
using namespace agl;

namespace {

void emit(const std::optional<fs::path>& out, const std::string& text) {
  if (out) {
    write_file(*out, text);
  } else {
    std::cout << text;
    std::cout.flush();
    if (!std::cout) raise(ErrorKind::kIo, "write to stdout failed");
  }
}

/// Lines `<id>` or `<id>\t<tag>`; with `tag` set only matching rows count.
std::vector<NodeId> read_targets(const fs::path& path, const std::string& tag) {
  std::vector<NodeId> ids;
  auto text = read_file(path);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto f = split(line, '\t');
    NodeId id = 0;
    if (!parse_u64(f[0], id)) raise(ErrorKind::kParse, path.string() + ":" + std::to_string(line_no) + ": bad node id");
    if (!tag.empty() && (f.size() < 2 || f[1] != tag)) continue;
    ids.push_back(id);
  }
  return ids;
}

Graph load_input_graph(const fs::path& nodes, const fs::path& edges, bool sym) {
  auto g = load_graph(nodes, edges);
  return sym ? symmetrize(g) : g;
}

template <typename T>
T number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(value, &used));
    } else {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    raise(ErrorKind::kUsage, "bad value for " + key + ": '" + value + "'");
  }
}

bool boolean(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  raise(ErrorKind::kUsage, "bad value for " + key + ": '" + value + "'");
}

// graphflat -------------------------------------------------------------------------

struct FlatArgs {
  fs::path nodes, edges;
  int hops = 2;
  std::string sampling = "none";
  std::optional<fs::path> labels, targets, out, work_dir;
  std::string tag;
  std::size_t workers = 1, partitions = 8, reindex_threshold = 1000, suffixes = 8;
  std::uint64_t seed = 0;
  bool symmetrize = false;
};

int run_graphflat(const FlatArgs& a) {
  auto g = load_input_graph(a.nodes, a.edges, a.symmetrize);
  FlatOptions opt;
  opt.sampling = parse_sampling(a.sampling, a.seed);
  opt.reindex = {a.reindex_threshold, a.suffixes, a.seed};
  opt.workers = a.workers;
  opt.partitions = a.partitions;
  opt.work_dir = a.work_dir;
  std::map<NodeId, Label> labels;
  if (a.labels) labels = parse_label_table(read_file(*a.labels));
  std::vector<NodeId> targets;
  if (a.targets) {
    targets = read_targets(*a.targets, a.tag);
  } else {
    for (const auto& n : g.nodes()) targets.push_back(n.id);
  }
  auto gfs = build_graphfeatures(g, targets, a.hops, opt);
  std::string text;
  for (auto& [id, gf] : gfs) {
    auto it = labels.find(id);
    text += to_line(Triple{id, it == labels.end() ? Label{} : it->second, std::move(gf)});
    text.push_back('\n');
  }
  emit(a.out, text);
  std::cerr << "graphflat: " << gfs.size() << " triples, K=" << a.hops << ", sampling=" << to_string(opt.sampling)
            << "\n";
  return 0;
}

// graphtrainer ----------------------------------------------------------------------

struct TrainArgs {
  std::string model = "gcn";
  fs::path input;
  std::string strategy, dist;
  std::optional<fs::path> val, test, metrics;
  fs::path out = "model.ckpt";
};

std::size_t infer_classes(std::initializer_list<const std::vector<Triple>*> sets, bool& multi) {
  std::size_t classes = 0;
  multi = false;
  for (const auto* s : sets) {
    for (const auto& t : *s) {
      if (t.label.is_multi()) {
        multi = true;
        classes = std::max(classes, t.label.multi.size());
      } else if (t.label.cls >= 0) {
        classes = std::max(classes, static_cast<std::size_t>(t.label.cls) + 1);
      }
    }
  }
  return classes;
}

int run_graphtrainer(const TrainArgs& a) {
  auto train_set = read_triples(a.input);
  std::vector<Triple> val_set, test_set;
  if (a.val) val_set = read_triples(*a.val);
  if (a.test) test_set = read_triples(*a.test);
  if (train_set.empty()) raise(ErrorKind::kEmptySpec, "no training triples in " + a.input.string());

  ModelConfig mc;
  mc.kind = parse_layer_kind(a.model);
  TrainConfig tc;
  std::size_t hidden = 16;
  std::optional<std::size_t> classes;
  std::optional<LossKind> loss;
  std::uint64_t init_seed = 1;
  for (const auto& [k, v] : parse_kv_list(a.strategy)) {
    if (k == "epochs") tc.epochs = number<std::size_t>(k, v);
    else if (k == "batch_size") tc.batch_size = number<std::size_t>(k, v);
    else if (k == "lr") tc.lr = number<double>(k, v);
    else if (k == "weight_decay") tc.weight_decay = number<double>(k, v);
    else if (k == "dropout") tc.dropout = number<double>(k, v);
    else if (k == "seed") tc.seed = init_seed = number<std::uint64_t>(k, v);
    else if (k == "eval_every") tc.eval_every = number<std::size_t>(k, v);
    else if (k == "metric") tc.metric = parse_metric(v);
    else if (k == "threads") tc.threads = number<std::size_t>(k, v);
    else if (k == "prefetch") tc.prefetch = number<std::size_t>(k, v);
    else if (k == "pipeline") tc.pipeline = boolean(k, v);
    else if (k == "hidden") hidden = number<std::size_t>(k, v);
    else if (k == "heads") mc.heads = number<std::size_t>(k, v);
    else if (k == "classes") classes = number<std::size_t>(k, v);
    else if (k == "activation") mc.activation = v == "none" ? Activation::kNone : v == "relu" ? Activation::kRelu : (raise(ErrorKind::kUsage, "activation must be relu or none"), Activation::kRelu);
    else if (k == "loss") loss = v == "softmax" ? LossKind::kSoftmax : v == "sigmoid" ? LossKind::kSigmoid : (raise(ErrorKind::kUsage, "loss must be softmax or sigmoid"), LossKind::kSoftmax);
    else raise(ErrorKind::kUsage, "unknown train strategy key '" + k + "'");
  }
  for (const auto& [k, v] : parse_kv_list(a.dist)) {
    if (k == "workers") tc.workers = number<std::size_t>(k, v);
    else if (k == "mode") tc.mode = parse_update_mode(v);
    else raise(ErrorKind::kUsage, "unknown dist config key '" + k + "'");
  }
  if (tc.workers == 0 || tc.batch_size == 0 || tc.epochs == 0 || tc.epochs > 200 || tc.eval_every == 0) {
    raise(ErrorKind::kUsage, "workers, batch_size, eval_every >= 1 and epochs in [1, 200] required");
  }

  bool multi = false;
  const std::size_t seen = infer_classes({&train_set, &val_set, &test_set}, multi);
  mc.classes = classes.value_or(seen);
  if (mc.classes == 0) raise(ErrorKind::kSchema, "no labels in the training triples");
  mc.loss = loss.value_or(multi ? LossKind::kSigmoid : LossKind::kSoftmax);
  const auto& first = train_set.front().gf;
  const std::size_t in_dim = first.nodes.empty() ? 0 : first.nodes.front().features.size();
  mc.dims.assign(static_cast<std::size_t>(first.hop) + 1, hidden);
  mc.dims[0] = in_dim;

  auto result = train(train_set, val_set, init_model<float>(mc, init_seed), tc);
  write_file(a.out, save_model(result.model));
  if (a.metrics) write_file(*a.metrics, history_csv(result.history));
  std::cout << "model=" << to_string(mc.kind) << " K=" << mc.hops() << " epochs=" << tc.epochs
            << " best_epoch=" << result.best_epoch;
  if (!val_set.empty()) std::cout << " val_" << to_string(tc.metric) << "=" << result.best_score;
  if (!test_set.empty()) std::cout << " test_" << to_string(tc.metric) << "=" << evaluate(result.model, test_set, tc.metric);
  std::cout << " seconds=" << result.seconds << "\n";
  return 0;
}

// graphinfer ------------------------------------------------------------------------

struct InferArgs {
  fs::path model;
  std::optional<fs::path> input, nodes, edges, targets, out, work_dir;
  std::string tag, config;
  bool counters = false;
};

int run_graphinfer(const InferArgs& a) {
  fs::path nodes, edges;
  if (a.input) {
    nodes = *a.input / "nodes.tsv";
    edges = *a.input / "edges.tsv";
  }
  if (a.nodes) nodes = *a.nodes;
  if (a.edges) edges = *a.edges;
  if (nodes.empty() || edges.empty()) raise(ErrorKind::kUsage, "give -i <graph dir> or both -n and -e");
  InferOptions opt;
  std::string sampling = "none";
  std::uint64_t seed = 0;
  std::size_t threshold = 1000, suffixes = 8;
  bool sym = false;
  for (const auto& [k, v] : parse_kv_list(a.config)) {
    if (k == "workers") opt.workers = number<std::size_t>(k, v);
    else if (k == "partitions") opt.partitions = number<std::size_t>(k, v);
    else if (k == "sampling") sampling = v;
    else if (k == "seed") seed = number<std::uint64_t>(k, v);
    else if (k == "reindex_threshold") threshold = number<std::size_t>(k, v);
    else if (k == "suffixes") suffixes = number<std::size_t>(k, v);
    else if (k == "symmetrize") sym = boolean(k, v);
    else raise(ErrorKind::kUsage, "unknown infer config key '" + k + "'");
  }
  if (opt.workers == 0 || opt.partitions == 0 || suffixes == 0) raise(ErrorKind::kUsage, "workers, partitions, suffixes >= 1");
  opt.sampling = parse_sampling(sampling, seed);
  opt.reindex = {threshold, suffixes, seed};
  opt.work_dir = a.work_dir;
  if (a.targets) opt.targets = read_targets(*a.targets, a.tag);
  auto g = load_input_graph(nodes, edges, sym);
  auto result = run_inference(g, read_file(a.model), opt);
  emit(a.out, format_scores(result.scores));
  if (a.counters) {
    std::cerr << "embedding_evals=" << result.work.embedding_evals
              << " aggregation_ops=" << result.work.aggregation_ops << "\n";
  }
  return 0;
}

// gen ---------------------------------------------------------------------------

struct GenArgs {
  std::string model = "power_law";
  std::size_t n = 1000, dim = 8, attach = 2, classes = 5;
  std::uint64_t seed = 1;
  std::optional<fs::path> out;
};

int run_gen(const GenArgs& a) {
  fs::path dir = a.out.value_or(fs::path("gen-" + a.model + "-" + std::to_string(a.n) + "-" + std::to_string(a.seed)));
  if (a.model == "citation") {
    CitationSpec spec;
    spec.n = a.n;
    spec.classes = a.classes;
    spec.seed = a.seed;
    spec.words = std::max(a.dim, a.classes);
    const std::size_t per_class = std::max<std::size_t>(1, std::min<std::size_t>(20, a.n / (4 * a.classes)));
    auto d = synthetic_citation(spec, {.per_class = per_class, .val = a.n / 4, .test = a.n / 2, .seed = a.seed});
    save_prepared(d, dir);
  } else {
    auto model = parse_synthetic_model(a.model);
    if (!model) raise(ErrorKind::kUsage, "unknown generator model '" + a.model + "'");
    auto g = generate_synthetic({.n = a.n, .model = *model, .seed = a.seed, .node_dim = a.dim, .attach = a.attach});
    fs::create_directories(dir);
    write_file(dir / "nodes.tsv", write_node_table(g.nodes()));
    write_file(dir / "edges.tsv", write_edge_table(g.edges()));
  }
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agl: graph learning pipeline (graphflat -> graphtrainer -> graphinfer)", "agl"};
  app.set_help_flag("--help", "Print help and exit");
  app.require_subcommand(1);

  FlatArgs flat;
  auto* fl = app.add_subcommand("graphflat", "Write k-hop GraphFeature triples for target nodes");
  fl->set_help_flag("--help", "Print help and exit");
  fl->add_option("-n,--nodes", flat.nodes, "Node table: <id>\\t<features...>")->required()->check(CLI::ExistingFile);
  fl->add_option("-e,--edges", flat.edges, "Edge table: <src>\\t<dst>\\t<weight>\\t<features...>")->required()->check(CLI::ExistingFile);
  fl->add_option("-h,--hops", flat.hops, "Neighborhood depth K")->required()->check(CLI::Range(0, 16));
  fl->add_option("-s,--sampling", flat.sampling, "none | uniform:<F> | weighted:<F>")->required();
  fl->add_option("-l,--labels", flat.labels, "Label table: <id>\\t<class or 0,1,...>")->check(CLI::ExistingFile);
  fl->add_option("--targets", flat.targets, "Target ids, one per line (default: every node)")->check(CLI::ExistingFile);
  fl->add_option("--tag", flat.tag, "Keep only target lines whose second column equals this");
  fl->add_option("-o,--out", flat.out, "Output triple file (default: stdout)");
  fl->add_option("--workers", flat.workers, "Engine worker threads")->check(CLI::PositiveNumber);
  fl->add_option("--partitions", flat.partitions, "Shuffle partitions")->check(CLI::PositiveNumber);
  fl->add_option("--reindex-threshold", flat.reindex_threshold, "In-degree above which a key is split");
  fl->add_option("--suffixes", flat.suffixes, "Sub-keys per split key")->check(CLI::PositiveNumber);
  fl->add_option("--seed", flat.seed, "Sampling seed");
  fl->add_flag("--symmetrize", flat.symmetrize, "Add the reverse of every edge before flattening");
  fl->add_option("--work-dir", flat.work_dir, "Engine scratch directory (default: a temp dir)");

  TrainArgs tr;
  auto* tp = app.add_subcommand("graphtrainer", "Train a GNN on GraphFeature triples");
  tp->set_help_flag("--help", "Print help and exit");
  tp->add_option("-m,--model", tr.model, "gcn | sage | gat")->required();
  tp->add_option("-i,--input", tr.input, "Training triples")->required()->check(CLI::ExistingFile);
  tp->add_option("-t,--train-strategy", tr.strategy,
                 "key=value list: epochs, batch_size, lr, weight_decay, dropout, hidden, heads, seed, metric, "
                 "eval_every, classes, loss, activation, threads, prefetch, pipeline");
  tp->add_option("-c,--dist-config", tr.dist, "key=value list: workers, mode (sync | async)");
  tp->add_option("--val", tr.val, "Validation triples; the best-scoring epoch is saved")->check(CLI::ExistingFile);
  tp->add_option("--test", tr.test, "Test triples, scored once at the end")->check(CLI::ExistingFile);
  tp->add_option("-o,--out", tr.out, "Checkpoint path");
  tp->add_option("--metrics", tr.metrics, "Metric history CSV: epoch,split,metric,value");

  InferArgs inf;
  auto* ip = app.add_subcommand("graphinfer", "Score every node of a graph with a trained model");
  ip->set_help_flag("--help", "Print help and exit");
  ip->add_option("-m,--model", inf.model, "Checkpoint from graphtrainer")->required()->check(CLI::ExistingFile);
  ip->add_option("-i,--input", inf.input, "Graph directory holding nodes.tsv and edges.tsv")->check(CLI::ExistingDirectory);
  ip->add_option("-n,--nodes", inf.nodes, "Node table (overrides -i)")->check(CLI::ExistingFile);
  ip->add_option("-e,--edges", inf.edges, "Edge table (overrides -i)")->check(CLI::ExistingFile);
  ip->add_option("-c,--infer-config", inf.config,
                 "key=value list: workers, partitions, sampling, seed, reindex_threshold, suffixes, symmetrize");
  ip->add_option("--targets", inf.targets, "Only score these ids (one per line)")->check(CLI::ExistingFile);
  ip->add_option("--tag", inf.tag, "Keep only target lines whose second column equals this");
  ip->add_option("-o,--out", inf.out, "Score file (default: stdout)");
  ip->add_option("--work-dir", inf.work_dir, "Engine scratch directory (default: a temp dir)");
  ip->add_flag("--counters", inf.counters, "Print work counters to stderr");

  GenArgs gen;
  auto* gp = app.add_subcommand("gen", "Generate a synthetic graph fixture");
  gp->set_help_flag("--help", "Print help and exit");
  gp->add_option("--model", gen.model, "path | star | power_law | citation");
  gp->add_option("--n", gen.n, "Node count")->check(CLI::PositiveNumber);
  gp->add_option("--seed", gen.seed, "Seed");
  gp->add_option("--dim", gen.dim, "Node feature width (citation: vocabulary size)")->check(CLI::PositiveNumber);
  gp->add_option("--attach", gen.attach, "power_law: edges per new node")->check(CLI::PositiveNumber);
  gp->add_option("--classes", gen.classes, "citation: class count")->check(CLI::PositiveNumber);
  gp->add_option("--out", gen.out, "Output directory (default: gen-<model>-<n>-<seed>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*fl) return run_graphflat(flat);
    if (*tp) return run_graphtrainer(tr);
    if (*ip) return run_graphinfer(inf);
    if (*gp) return run_gen(gen);
  } catch (const Error& e) {
    std::cerr << "agl: " << e.what() << "\n";
    if (e.kind() == ErrorKind::kUsage) {
      auto subs = app.get_subcommands();
      if (!subs.empty()) std::cerr << "\n" << subs.front()->help();
    }
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "agl: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
