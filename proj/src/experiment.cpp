#include "pairal/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "pairal/error.hpp"
#include "pairal/rng.hpp"

namespace pairal {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig synthetic_config() {
  ExperimentConfig config;
  config.synthetic = true;
  config.schedule.n1 = 64;
  config.schedule.rounds = 6;
  config.m = 20;
  config.model.dim = 128;
  config.train.batch_size = 32;
  config.train.epochs = 4;
  config.train.learning_rate = 3e-3;
  config.near_per_utterance = 10;
  config.random_negatives = 20000;
  return config;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
void read_key(const boost::property_tree::ptree& tree, const char* key, T& value) {
  // get_optional() swallows conversion failures; get() reports them.
  if (tree.get_child_optional(key)) value = tree.get<T>(key);
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kParse, "config: bad seed '" + text + "'");
  }
  return v;
}

}  // namespace

void load_config(std::istream& in, ExperimentConfig& config) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  try {
    read_key(tree, "corpus.synthetic", config.synthetic);
    if (auto v = tree.get_optional<std::string>("corpus.utterances")) config.utterances = *v;
    if (auto v = tree.get_optional<std::string>("corpus.pairs")) config.pairs = *v;
    if (auto v = tree.get_optional<std::string>("corpus.mode")) config.mode = parse_pair_mode(*v);

    auto& syn = config.synthetic_params;
    read_key(tree, "synthetic.n_clusters", syn.n_clusters);
    read_key(tree, "synthetic.cluster_size", syn.cluster_size);
    read_key(tree, "synthetic.n_distractors", syn.n_distractors);
    read_key(tree, "synthetic.seed", syn.seed);
    read_key(tree, "synthetic.n_concepts", syn.vocab.n_concepts);
    read_key(tree, "synthetic.synonyms_per_concept", syn.vocab.synonyms_per_concept);
    read_key(tree, "synthetic.concepts_per_cluster", syn.vocab.concepts_per_cluster);
    read_key(tree, "synthetic.n_templates", syn.vocab.n_templates);
    read_key(tree, "synthetic.template_length", syn.vocab.template_length);
    read_key(tree, "synthetic.template_per_utterance", syn.vocab.template_per_utterance);
    read_key(tree, "synthetic.home_template_prob", syn.vocab.home_template_prob);
    read_key(tree, "synthetic.filler_vocab", syn.vocab.filler_vocab);
    read_key(tree, "synthetic.fillers_per_utterance", syn.vocab.fillers_per_utterance);
    read_key(tree, "synthetic.stated_negatives_per_member", syn.vocab.stated_negatives_per_member);

    read_key(tree, "split.train", config.split_fractions[0]);
    read_key(tree, "split.dev", config.split_fractions[1]);
    read_key(tree, "split.test", config.split_fractions[2]);
    read_key(tree, "split.seed", config.split_seed);

    read_key(tree, "schedule.n1", config.schedule.n1);
    if (auto v = tree.get_optional<std::string>("schedule.growth")) {
      std::tie(config.schedule.growth_num, config.schedule.growth_den) = parse_growth(*v);
    }
    read_key(tree, "schedule.rounds", config.schedule.rounds);
    read_key(tree, "schedule.m", config.m);
    if (auto v = tree.get_optional<std::string>("schedule.seed_source")) {
      if (*v == "static_retrieval") config.seed_source = SeedSource::kStaticRetrieval;
      else if (*v == "stated") config.seed_source = SeedSource::kStated;
      else throw Error(ErrorCode::kInvalidArgument, "config: unknown seed_source '" + *v + "'");
    }

    if (auto v = tree.get_optional<std::string>("strategies.list")) {
      config.strategies.clear();
      for (const auto& s : split_list(*v)) config.strategies.push_back(parse_strategy(s));
    }

    read_key(tree, "model.dim", config.model.dim);
    read_key(tree, "model.buckets", config.model.tokenizer.buckets);
    read_key(tree, "model.lowercase", config.model.tokenizer.lowercase);
    read_key(tree, "model.tokenizer_seed", config.model.tokenizer.seed);
    read_key(tree, "model.max_tokens", config.model.tokenizer.max_tokens);
    read_key(tree, "model.init_seed", config.model.init_seed);
    read_key(tree, "model.init_scale", config.model.init_scale);
    read_key(tree, "model.bn_momentum", config.model.bn_momentum);
    read_key(tree, "model.bn_epsilon", config.model.bn_epsilon);

    read_key(tree, "train.epochs", config.train.epochs);
    read_key(tree, "train.batch_size", config.train.batch_size);
    read_key(tree, "train.learning_rate", config.train.learning_rate);
    read_key(tree, "train.head_lr_multiplier", config.train.head_lr_multiplier);
    read_key(tree, "train.beta1", config.train.beta1);
    read_key(tree, "train.beta2", config.train.beta2);
    read_key(tree, "train.adam_epsilon", config.train.adam_epsilon);

    read_key(tree, "eval.near_per_utterance", config.near_per_utterance);
    read_key(tree, "eval.random_negatives", config.random_negatives);
    read_key(tree, "eval.seed", config.eval_seed);
    read_key(tree, "eval.dev", config.eval_dev);

    if (auto v = tree.get_optional<std::string>("run.seeds")) {
      config.seeds.clear();
      for (const auto& s : split_list(*v)) config.seeds.push_back(parse_seed(s));
    }
    if (auto v = tree.get_optional<std::string>("run.outdir")) config.outdir = *v;
  } catch (const boost::property_tree::ptree_bad_data& e) {
    throw Error(ErrorCode::kParse, std::string("config: bad value: ") + e.what());
  }
}

void load_config(const fs::path& path, ExperimentConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  load_config(in, config);
}

void write_config(std::ostream& out, const ExperimentConfig& c) {
  const auto& syn = c.synthetic_params;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "[corpus]\n"
      << "synthetic = " << b(c.synthetic) << '\n'
      << "utterances = " << c.utterances.string() << '\n'
      << "pairs = " << c.pairs.string() << '\n'
      << "mode = " << to_string(c.mode) << '\n';
  out << "\n[synthetic]\n"
      << "n_clusters = " << syn.n_clusters << '\n'
      << "cluster_size = " << syn.cluster_size << '\n'
      << "n_distractors = " << syn.n_distractors << '\n'
      << "seed = " << syn.seed << '\n'
      << "n_concepts = " << syn.vocab.n_concepts << '\n'
      << "synonyms_per_concept = " << syn.vocab.synonyms_per_concept << '\n'
      << "concepts_per_cluster = " << syn.vocab.concepts_per_cluster << '\n'
      << "n_templates = " << syn.vocab.n_templates << '\n'
      << "template_length = " << syn.vocab.template_length << '\n'
      << "template_per_utterance = " << syn.vocab.template_per_utterance << '\n'
      << "home_template_prob = " << format_double(syn.vocab.home_template_prob) << '\n'
      << "filler_vocab = " << syn.vocab.filler_vocab << '\n'
      << "fillers_per_utterance = " << syn.vocab.fillers_per_utterance << '\n'
      << "stated_negatives_per_member = " << syn.vocab.stated_negatives_per_member << '\n';
  out << "\n[split]\n"
      << "train = " << format_double(c.split_fractions[0]) << '\n'
      << "dev = " << format_double(c.split_fractions[1]) << '\n'
      << "test = " << format_double(c.split_fractions[2]) << '\n'
      << "seed = " << c.split_seed << '\n';
  out << "\n[schedule]\n"
      << "n1 = " << c.schedule.n1 << '\n'
      << "growth = " << c.schedule.growth_num << '/' << c.schedule.growth_den << '\n'
      << "rounds = " << c.schedule.rounds << '\n'
      << "m = " << c.m << '\n'
      << "seed_source = "
      << (c.seed_source == SeedSource::kStated ? "stated" : "static_retrieval") << '\n';
  out << "\n[strategies]\nlist = ";
  for (std::size_t i = 0; i < c.strategies.size(); ++i) {
    out << (i ? "," : "") << to_string(c.strategies[i]);
  }
  out << "\n\n[model]\n"
      << "dim = " << c.model.dim << '\n'
      << "buckets = " << c.model.tokenizer.buckets << '\n'
      << "lowercase = " << b(c.model.tokenizer.lowercase) << '\n'
      << "tokenizer_seed = " << c.model.tokenizer.seed << '\n'
      << "max_tokens = " << c.model.tokenizer.max_tokens << '\n'
      << "init_seed = " << c.model.init_seed << '\n'
      << "init_scale = " << format_double(c.model.init_scale) << '\n'
      << "bn_momentum = " << format_double(c.model.bn_momentum) << '\n'
      << "bn_epsilon = " << format_double(c.model.bn_epsilon) << '\n';
  out << "\n[train]\n"
      << "epochs = " << c.train.epochs << '\n'
      << "batch_size = " << c.train.batch_size << '\n'
      << "learning_rate = " << format_double(c.train.learning_rate) << '\n'
      << "head_lr_multiplier = " << format_double(c.train.head_lr_multiplier) << '\n'
      << "beta1 = " << format_double(c.train.beta1) << '\n'
      << "beta2 = " << format_double(c.train.beta2) << '\n'
      << "adam_epsilon = " << format_double(c.train.adam_epsilon) << '\n';
  out << "\n[eval]\n"
      << "near_per_utterance = " << c.near_per_utterance << '\n'
      << "random_negatives = " << c.random_negatives << '\n'
      << "seed = " << c.eval_seed << '\n'
      << "dev = " << b(c.eval_dev) << '\n';
  out << "\n[run]\nseeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << "\noutdir = " << c.outdir.string() << '\n';
}

void validate(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "config: seeds must be non-empty");
  if (config.strategies.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "config: strategy list must be non-empty");
  }
  if (!config.synthetic) {
    for (const auto& path : {config.utterances, config.pairs}) {
      if (path.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "config: corpus.utterances and corpus.pairs are required unless synthetic");
      }
      if (!fs::exists(path)) throw Error(ErrorCode::kIo, "config: no such file " + path.string());
    }
  } else if (config.mode != PairMode::kSymmetric) {
    throw Error(ErrorCode::kInvalidArgument, "config: the synthetic corpus is symmetric");
  }
  if (config.m < 1) throw Error(ErrorCode::kInvalidArgument, "config: m must be >= 1");
  batch_sizes(config.schedule);
}

// ---------------------------------------------------------------- pipeline

Experiment prepare(const ExperimentConfig& config) {
  validate(config);
  std::optional<Corpus> corpus;
  StatedDataset stated;
  std::optional<LabelOracle> oracle;
  if (config.synthetic) {
    const auto& p = config.synthetic_params;
    auto syn = gen_synthetic(p.n_clusters, p.cluster_size, p.n_distractors, p.vocab, p.seed);
    corpus.emplace(std::move(syn.corpus));
    stated = std::move(syn.stated);
    oracle.emplace(std::move(syn.oracle));
  } else {
    auto in = ingest(config.utterances, config.pairs, config.mode);
    spdlog::info("ingested {} left / {} right utterances, {} stated positives, {} stated negatives",
                 in.report.left_utterances, in.report.right_utterances, in.report.stated_positives,
                 in.report.stated_negatives);
    if (in.report.stated_negatives_contradicted > 0) {
      spdlog::warn("{} stated negatives are positive under the transitive closure",
                   in.report.stated_negatives_contradicted);
    }
    corpus.emplace(std::move(in.corpus));
    stated = std::move(in.stated);
    oracle.emplace(std::move(in.oracle));
  }
  SplitSpec split = split_corpus(*corpus, stated, config.split_fractions, config.split_seed);
  EmbeddingModel static_model = EmbeddingModel::initialize(config.model);

  auto pool_for = [&](Split s) {
    const auto space = split.space(s);
    const std::size_t near = config.near_per_utterance * split.left_ids(s).size();
    auto pool = build_eval_pool(*corpus, *oracle, space, static_model, near, config.random_negatives,
                                mix_seed(config.eval_seed, static_cast<std::uint64_t>(s)));
    if (pool.positives.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(to_string(s)) +
                      " split has no positive pairs; change the split fractions or split seed");
    }
    return pool;
  };
  EvalPool dev_pool = config.eval_dev ? pool_for(Split::kDev) : EvalPool{};
  EvalPool test_pool = pool_for(Split::kTest);
  const std::uint64_t fingerprint = corpus->fingerprint();
  return Experiment{std::move(*corpus),   std::move(stated),    std::move(*oracle),
                    std::move(split),     std::move(static_model), std::move(dev_pool),
                    std::move(test_pool), fingerprint};
}

EvalSummary evaluate(const Experiment& experiment, const EvalPool& pool, Split split,
                     const EmbeddingModel& model, PRCurve* curve) {
  const auto scores = score_pool(pool, model, experiment.corpus, experiment.split.space(split));
  auto c = pr_curve(scores, pool);
  auto summary = summarize(c, pool);
  if (curve != nullptr) *curve = std::move(c);
  return summary;
}

RunContext make_context(const ExperimentConfig& config, const Experiment& experiment,
                        const StatedDataset& stated_train) {
  RunContext context{experiment.corpus, experiment.oracle, experiment.split.space(Split::kTrain),
                     experiment.static_model, config.train, config.m, {}, &stated_train};
  if (config.eval_dev) {
    context.evaluators.emplace_back("dev", [&experiment](const EmbeddingModel& model) {
      return evaluate(experiment, experiment.dev_pool, Split::kDev, model);
    });
  }
  context.evaluators.emplace_back("test", [&experiment](const EmbeddingModel& model) {
    return evaluate(experiment, experiment.test_pool, Split::kTest, model);
  });
  return context;
}

CellResult run_cell(const ExperimentConfig& config, const Experiment& experiment, Strategy strategy,
                    std::uint64_t seed, std::optional<ReferenceCounts> reference) {
  const StatedDataset stated_train =
      experiment.stated.restrict_to(experiment.split.space(Split::kTrain));
  const RunContext context = make_context(config, experiment, stated_train);
  CellResult cell;
  cell.strategy = strategy;
  cell.seed = seed;
  if (is_adaptive(strategy)) {
    cell.state = run_active_learning(context, config.schedule, strategy, seed, config.seed_source);
  } else {
    const auto sizes = batch_sizes(config.schedule);
    std::vector<std::uint64_t> checkpoints;
    std::uint64_t budget = 0;
    for (auto n : sizes) checkpoints.push_back(budget += n);
    cell.state = run_baseline(context, budget, strategy, seed, checkpoints, reference);
  }
  evaluate(experiment, experiment.test_pool, Split::kTest, *cell.state.model, &cell.test_curve);
  return cell;
}

// ---------------------------------------------------------------- persistence

namespace {

Json summary_json(const EvalSummary& s) {
  Json j;
  j["ap"] = s.average_precision;
  j["p_at_r20"] = s.precision_at_r20 ? Json(*s.precision_at_r20) : Json(nullptr);
  j["positives"] = s.positives;
  j["near_negatives"] = s.near_negatives;
  j["random_negatives"] = s.random_negatives;
  j["w_random"] = s.w_random;
  return j;
}

const EvalSummary* find_metric(const RoundRecord& r, std::string_view name) {
  for (const auto& [n, s] : r.metrics) {
    if (n == name) return &s;
  }
  return nullptr;
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_cell(const fs::path& dir, const CellResult& cell) {
  fs::create_directories(dir);
  const auto& state = cell.state;
  {
    auto out = open_out(dir / "run_log.jsonl");
    for (const auto& r : state.rounds) {
      Json j;
      j["round"] = r.round;
      j["n_i"] = r.requested;
      j["acquired"] = r.acquired;
      j["positives_in_batch"] = r.positives_in_batch;
      j["cumulative_positives"] = r.cumulative_positives;
      j["cumulative_labels"] = r.cumulative_labels;
      j["trained"] = r.trained;
      for (const auto& [name, s] : r.metrics) j[name + "_metrics"] = summary_json(s);
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open_out(dir / "labeled.tsv");
    std::vector<StatedPair> pairs;
    pairs.reserve(state.labeled.size());
    for (const auto& p : state.labeled) pairs.push_back({p.key, p.label});
    write_pairs(out, pairs);
  }
  save_checkpoint(*state.model, dir / "model.ckpt");
  {
    auto out = open_out(dir / "metrics.csv");
    write_curve_csv(out, cell.test_curve);
  }
  {
    Json j;
    j["strategy"] = std::string(to_string(cell.strategy));
    j["seed"] = cell.seed;
    j["labels"] = state.labeled.size();
    j["positives"] = state.positives();
    j["rounds"] = state.rounds.size();
    j["stopped_early"] = state.stopped_early;
    j["test"] = summary_json(summarize(cell.test_curve, {}));
    if (!state.rounds.empty()) {
      if (const auto* test = find_metric(state.rounds.back(), "test")) j["test"] = summary_json(*test);
      if (const auto* dev = find_metric(state.rounds.back(), "dev")) j["dev"] = summary_json(*dev);
    }
    auto out = open_out(dir / "metrics.json");
    out << j.dump(2) << '\n';
  }
}

namespace {

void print_positives_table(std::ostream& out, const Json& strategies) {
  out << "strategy\tlabels\tpositives\ttest_ap\n";
  for (const auto& s : strategies) {
    const auto& mean = s["mean"];
    char line[256];
    std::snprintf(line, sizeof line, "%s\t%.1f\t%.1f\t%.4f\n",
                  s["name"].get<std::string>().c_str(), mean["labels"].get<double>(),
                  mean["positives"].get<double>(), mean["test_ap"].get<double>());
    out << line;
  }
}

}  // namespace

int cmd_run(const ExperimentConfig& config) {
  const Experiment experiment = prepare(config);
  fs::create_directories(config.outdir);
  {
    auto out = open_out(config.outdir / "config.ini");
    write_config(out, config);
  }
  if (config.synthetic) {
    auto u = open_out(config.outdir / "utterances.tsv");
    write_utterances(u, experiment.corpus);
    auto p = open_out(config.outdir / "pairs.tsv");
    write_pairs(p, experiment.stated.pairs);
  }

  // Adaptive strategies first: STRATIFIED_MATCH copies uncertainty's counts.
  std::vector<Strategy> order = config.strategies;
  std::stable_partition(order.begin(), order.end(), is_adaptive);

  std::map<std::uint64_t, ReferenceCounts> uncertainty_counts;
  Json strategies = Json::array();
  for (Strategy strategy : order) {
    Json entry;
    entry["name"] = std::string(to_string(strategy));
    Json per_seed = Json::array();
    double sum_labels = 0, sum_pos = 0, sum_ap = 0, sum_dev = 0;
    for (std::uint64_t seed : config.seeds) {
      std::optional<ReferenceCounts> reference;
      if (auto it = uncertainty_counts.find(seed); it != uncertainty_counts.end()) reference = it->second;
      spdlog::info("running {} seed {}", to_string(strategy), seed);
      CellResult cell = run_cell(config, experiment, strategy, seed, reference);
      write_cell(config.outdir / std::string(to_string(strategy)) / std::to_string(seed), cell);
      const auto& state = cell.state;
      if (strategy == Strategy::kUncertainty) {
        uncertainty_counts[seed] = {state.positives(), state.labeled.size() - state.positives()};
      }
      Json s;
      s["seed"] = seed;
      s["labels"] = state.labeled.size();
      s["positives"] = state.positives();
      s["test_ap"] = cell.test_curve.average_precision;
      const EvalSummary* dev = state.rounds.empty() ? nullptr : find_metric(state.rounds.back(), "dev");
      s["dev_ap"] = dev ? Json(dev->average_precision) : Json(nullptr);
      Json rounds = Json::array();
      for (const auto& r : state.rounds) {
        Json jr;
        jr["round"] = r.round;
        jr["labels"] = r.cumulative_labels;
        jr["positives"] = r.cumulative_positives;
        const auto* t = find_metric(r, "test");
        jr["test_ap"] = t ? Json(t->average_precision) : Json(nullptr);
        const auto* d = find_metric(r, "dev");
        jr["dev_ap"] = d ? Json(d->average_precision) : Json(nullptr);
        rounds.push_back(jr);
      }
      s["rounds"] = rounds;
      per_seed.push_back(s);
      sum_labels += static_cast<double>(state.labeled.size());
      sum_pos += static_cast<double>(state.positives());
      sum_ap += cell.test_curve.average_precision;
      if (dev) sum_dev += dev->average_precision;
      spdlog::info("{} seed {}: {} labels, {} positives, test AP {:.4f}", to_string(strategy), seed,
                   state.labeled.size(), state.positives(), cell.test_curve.average_precision);
    }
    const double n = static_cast<double>(config.seeds.size());
    entry["per_seed"] = per_seed;
    Json mean;
    mean["labels"] = sum_labels / n;
    mean["positives"] = sum_pos / n;
    mean["test_ap"] = sum_ap / n;
    mean["dev_ap"] = config.eval_dev ? Json(sum_dev / n) : Json(nullptr);
    entry["mean"] = mean;
    strategies.push_back(entry);
  }

  Json summary;
  summary["fingerprint"] = hex(experiment.fingerprint);
  summary["mode"] = std::string(to_string(experiment.corpus.mode()));
  summary["left_utterances"] = experiment.corpus.left_size();
  summary["right_utterances"] = experiment.corpus.right_size();
  summary["train_pairs"] = experiment.split.space(Split::kTrain).size();
  summary["train_positives"] =
      experiment.oracle.positives_in(experiment.split.space(Split::kTrain)).size();
  summary["test_pool"] = summary_json(summarize(PRCurve{}, experiment.test_pool));
  summary["budget"] = [&] {
    std::uint64_t total = 0;
    for (auto v : batch_sizes(config.schedule)) total += v;
    return total;
  }();
  summary["strategies"] = strategies;
  {
    auto out = open_out(config.outdir / "summary.json");
    out << summary.dump(2) << '\n';
  }
  {
    auto out = open_out(config.outdir / "positives_table.tsv");
    print_positives_table(out, strategies);
  }
  print_positives_table(std::cout, strategies);
  return 0;
}

int cmd_gen(const SyntheticParams& params, const fs::path& outdir) {
  auto syn = gen_synthetic(params.n_clusters, params.cluster_size, params.n_distractors,
                           params.vocab, params.seed);
  fs::create_directories(outdir);
  auto u = open_out(outdir / "utterances.tsv");
  write_utterances(u, syn.corpus);
  auto p = open_out(outdir / "pairs.tsv");
  write_pairs(p, syn.stated.pairs);
  spdlog::info("wrote {} utterances, {} stated pairs ({} positive) to {}", syn.corpus.left_size(),
               syn.stated.pairs.size(), syn.stated.positives(), outdir.string());
  return 0;
}

int cmd_eval(const ExperimentConfig& config, const EvalRequest& request) {
  if (request.split == Split::kTrain) {
    throw Error(ErrorCode::kInvalidArgument, "eval: choose the dev or test split");
  }
  ExperimentConfig c = config;
  c.eval_dev = request.split == Split::kDev;
  const Experiment experiment = prepare(c);
  const EmbeddingModel model = load_checkpoint(request.checkpoint);
  const EvalPool& pool = request.split == Split::kDev ? experiment.dev_pool : experiment.test_pool;
  const PairSpace space = experiment.split.space(request.split);

  const auto scores = score_pool(pool, model, experiment.corpus, space);
  const PRCurve curve = pr_curve(scores, pool, request.adjustment);
  Json j = summary_json(summarize(curve, pool));
  j["split"] = std::string(to_string(request.split));
  if (request.adjustment) {
    j["p_near"] = request.adjustment->p_near;
    j["p_rand"] = request.adjustment->p_rand;
  }

  const StatedDataset stated = experiment.stated.restrict_to(space);
  if (!stated.pairs.empty()) {
    std::vector<double> probs;
    probs.reserve(stated.pairs.size());
    for (const auto& p : stated.pairs) {
      const auto u = model.embed(experiment.corpus.left_text(p.key.a));
      const auto v = model.embed(experiment.corpus.right_text(p.key.b));
      probs.push_back(model.predict_prob(u, v));
    }
    const auto balanced = balanced_metrics(probs, stated.pairs);
    Json b;
    b["examples"] = balanced.examples;
    b["accuracy"] = balanced.accuracy;
    b["f1"] = balanced.f1;
    b["c_map"] = balanced.c_map ? Json(*balanced.c_map) : Json(nullptr);
    b["clean_questions"] = balanced.clean_questions;
    j["stated"] = b;
  }

  if (request.outdir.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    fs::create_directories(request.outdir);
    auto csv = open_out(request.outdir / "metrics.csv");
    write_curve_csv(csv, curve);
    auto out = open_out(request.outdir / "metrics.json");
    out << j.dump(2) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- report

std::optional<double> labels_to_match(const StrategyCurve& target, const StrategyCurve& baseline) {
  if (baseline.mean_ap.empty()) return std::nullopt;
  const double goal = baseline.mean_ap.back();
  for (std::size_t i = 0; i < target.mean_ap.size(); ++i) {
    if (target.mean_ap[i] >= goal) return target.labels[i];
  }
  return std::nullopt;
}

std::optional<double> efficiency_ratio(const StrategyCurve& target, const StrategyCurve& baseline) {
  const auto needed = labels_to_match(target, baseline);
  if (!needed || *needed <= 0.0) return std::nullopt;
  return baseline.labels.back() / *needed;
}

std::vector<StrategyCurve> read_curves(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw Error(ErrorCode::kInvalidArgument, "report: no run directories");
  std::vector<StrategyCurve> curves;
  std::optional<std::string> fingerprint;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "summary.json");
    if (!in) throw Error(ErrorCode::kIo, "report: no summary.json in " + dir.string());
    Json summary;
    try {
      summary = Json::parse(in);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kParse, "report: " + dir.string() + ": " + e.what());
    }
    const auto fp = summary.at("fingerprint").get<std::string>();
    if (fingerprint && *fingerprint != fp) {
      throw Error(ErrorCode::kCorpusMismatch,
                  "report: " + dir.string() + " was run on a different corpus");
    }
    fingerprint = fp;
    for (const auto& s : summary.at("strategies")) {
      StrategyCurve curve;
      curve.name = s.at("name").get<std::string>();
      if (run_dirs.size() > 1) curve.name = dir.filename().string() + ":" + curve.name;
      std::size_t rounds = std::numeric_limits<std::size_t>::max();
      for (const auto& ps : s.at("per_seed")) rounds = std::min(rounds, ps.at("rounds").size());
      for (const auto& ps : s.at("per_seed")) {
        if (ps.at("rounds").size() != rounds) {
          spdlog::warn("report: {} has seeds with differing round counts; truncating to {}",
                       curve.name, rounds);
        }
      }
      curve.labels.assign(rounds, 0.0);
      curve.mean_ap.assign(rounds, 0.0);
      curve.mean_positives.assign(rounds, 0.0);
      for (const auto& ps : s.at("per_seed")) {
        curve.seeds.push_back(ps.at("seed").get<std::uint64_t>());
        std::vector<double> ap;
        for (std::size_t r = 0; r < rounds; ++r) {
          const auto& jr = ps.at("rounds")[r];
          curve.labels[r] += jr.at("labels").get<double>();
          curve.mean_positives[r] += jr.at("positives").get<double>();
          const double v = jr.at("test_ap").is_null() ? 0.0 : jr.at("test_ap").get<double>();
          curve.mean_ap[r] += v;
          ap.push_back(v);
        }
        curve.ap.push_back(std::move(ap));
      }
      const double n = static_cast<double>(curve.seeds.size());
      for (std::size_t r = 0; r < rounds; ++r) {
        curve.labels[r] /= n;
        curve.mean_ap[r] /= n;
        curve.mean_positives[r] /= n;
      }
      curves.push_back(std::move(curve));
    }
  }
  return curves;
}

namespace {

Strategy kind_of(const StrategyCurve& curve) {
  const auto colon = curve.name.rfind(':');
  return parse_strategy(colon == std::string::npos ? curve.name : curve.name.substr(colon + 1));
}

bool is_static_kind(Strategy s) {
  return s == Strategy::kRandom || s == Strategy::kStaticRetrieval || s == Strategy::kStated;
}

}  // namespace

int cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& outdir) {
  const auto curves = read_curves(run_dirs);
  fs::create_directories(outdir);
  {
    auto out = open_out(outdir / "ap_curve.csv");
    out << "strategy,round,labels,mean_ap";
    std::size_t max_seeds = 0;
    for (const auto& c : curves) max_seeds = std::max(max_seeds, c.seeds.size());
    for (std::size_t s = 0; s < max_seeds; ++s) out << ",ap_" << s;
    out << '\n';
    for (const auto& c : curves) {
      for (std::size_t r = 0; r < c.mean_ap.size(); ++r) {
        out << c.name << ',' << r + 1 << ',' << format_double(c.labels[r]) << ','
            << format_double(c.mean_ap[r]);
        for (const auto& ap : c.ap) out << ',' << format_double(ap[r]);
        out << '\n';
      }
    }
  }
  {
    auto out = open_out(outdir / "positives_curve.csv");
    out << "strategy,round,labels,mean_positives\n";
    for (const auto& c : curves) {
      for (std::size_t r = 0; r < c.mean_positives.size(); ++r) {
        out << c.name << ',' << r + 1 << ',' << format_double(c.labels[r]) << ','
            << format_double(c.mean_positives[r]) << '\n';
      }
    }
  }

  // Baseline: best final AP among non-adaptive, non-oracle strategies.
  const StrategyCurve* baseline = nullptr;
  for (const auto& c : curves) {
    if (c.mean_ap.empty() || !is_static_kind(kind_of(c))) continue;
    if (baseline == nullptr || c.mean_ap.back() > baseline->mean_ap.back()) baseline = &c;
  }
  if (baseline == nullptr) baseline = &curves.front();

  Json efficiency;
  efficiency["baseline"] = baseline->name;
  efficiency["baseline_final_ap"] = baseline->mean_ap.empty() ? 0.0 : baseline->mean_ap.back();
  efficiency["baseline_labels"] = baseline->labels.empty() ? 0.0 : baseline->labels.back();
  Json targets = Json::array();
  {
    auto out = open_out(outdir / "summary_table.csv");
    out << "strategy,seeds,labels,positives,final_ap,labels_to_match_baseline,efficiency_ratio\n";
    for (const auto& c : curves) {
      if (c.mean_ap.empty()) continue;
      const auto needed = labels_to_match(c, *baseline);
      const auto ratio = efficiency_ratio(c, *baseline);
      out << c.name << ',' << c.seeds.size() << ',' << format_double(c.labels.back()) << ','
          << format_double(c.mean_positives.back()) << ',' << format_double(c.mean_ap.back()) << ','
          << (needed ? format_double(*needed) : "") << ',' << (ratio ? format_double(*ratio) : "")
          << '\n';
      if (&c == baseline) continue;
      Json t;
      t["strategy"] = c.name;
      t["labels_needed"] = needed ? Json(*needed) : Json(nullptr);
      t["efficiency_ratio"] = ratio ? Json(*ratio) : Json(nullptr);
      targets.push_back(t);
      std::cout << c.name << " vs " << baseline->name << ": efficiency ratio "
                << (ratio ? format_double(*ratio) : std::string("n/a")) << '\n';
    }
  }
  efficiency["targets"] = targets;
  auto out = open_out(outdir / "efficiency.json");
  out << efficiency.dump(2) << '\n';
  return 0;
}

}  // namespace pairal
