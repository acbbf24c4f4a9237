#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hyb/analysis.hpp"
#include "hyb/block_spec.hpp"
#include "hyb/checkpoint.hpp"
#include "hyb/corpus.hpp"
#include "hyb/eval_report.hpp"
#include "hyb/io.hpp"
#include "hyb/loss.hpp"
#include "hyb/perplexity.hpp"
#include "hyb/pipeline.hpp"
#include "hyb/qa_client.hpp"
#include "hyb/recall.hpp"
#include "hyb/train.hpp"
#include "hyb/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

// Thrown after a site has already printed its own diagnostics.
struct CliExit {
  int code;
};

// Run directory: declared outputs plus the resolved config and a manifest,
// so a run can be audited from its artifacts alone.
struct RunDir {
  fs::path dir;
  std::map<std::string, std::string> config;
  std::vector<std::string> outputs;

  explicit RunDir(const std::string& out) : dir(out) { fs::create_directories(dir); }

  void write(const std::string& name, const std::string& bytes) {
    hyb::write_file(dir / name, bytes);
    outputs.push_back(name);
  }

  void finish(const std::string& command, uint64_t seed) {
    std::string cfg;
    for (const auto& [k, v] : config) cfg += k + "=" + v + "\n";
    hyb::write_file(dir / "config.txt", cfg);

    nlohmann::json j;
    j["command"] = command;
    j["outputs"] = outputs;
    j["seed"] = seed;
    j["version"] = hyb::version_string();
    hyb::write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

// Flat key=value config file; '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_kv_file(const fs::path& path) {
  std::map<std::string, std::string> kv;
  const std::string text = hyb::read_file(path);
  size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

int64_t to_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int64_t n = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return n;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for '" + key + "': " + value);
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for '" + key + "': " + value);
  }
}

std::string fmt_int(int64_t n) { return std::to_string(n); }

std::string fmt_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

hyb::BlockSpec parse_arch_or_exit(const std::string& arch) {
  try {
    return hyb::parse_block_spec(arch);
  } catch (const hyb::SpecParseError& e) {
    std::fprintf(stderr, "%s\nerror: %s\n", e.render(arch).c_str(), e.what());
    throw CliExit{2};
  }
}

// Sampled [n, len+1] windows split into inputs and shifted targets.
struct EvalBatch {
  hyb::Tensor<int32_t> x{{1, 1}}, y{{1, 1}};
};

EvalBatch make_eval_batch(const std::vector<int32_t>& tokens, int64_t n, int64_t len,
                          uint64_t seed) {
  const auto win = hyb::sample_windows(tokens, n, len + 1, seed);
  EvalBatch b;
  b.x = hyb::Tensor<int32_t>({n, len});
  b.y = hyb::Tensor<int32_t>({n, len});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t t = 0; t < len; ++t) {
      b.x.v[static_cast<size_t>(i * len + t)] = win.v[static_cast<size_t>(i * (len + 1) + t)];
      b.y.v[static_cast<size_t>(i * len + t)] =
          win.v[static_cast<size_t>(i * (len + 1) + t + 1)];
    }
  return b;
}

std::vector<int32_t> corpus_tokens_at(const std::string& dir) {
  const hyb::Corpus corpus = hyb::load_corpus_dir(dir);
  auto tokens = hyb::corpus_tokens(corpus);
  if (tokens.empty()) throw std::invalid_argument("corpus '" + dir + "' is empty");
  return tokens;
}

// ---------------------------------------------------------------------------
// dataset

struct DatasetBuildOpts {
  std::string corpus, out, client = "stub", endpoint, model = "default";
  int64_t seq_len = 4096, target = 1000, retries = 3;
  uint64_t seed = 0;
};

void cmd_dataset_build(const DatasetBuildOpts& o) {
  std::unique_ptr<hyb::QaClient> client;
  if (o.client == "stub") {
    client = std::make_unique<hyb::StubQaClient>();
  } else {
    if (o.endpoint.empty())
      throw std::invalid_argument("dataset build: --client remote requires --endpoint");
    client = std::make_unique<hyb::HttpQaClient>(o.endpoint, o.model,
                                                 static_cast<int>(o.retries));
  }

  const hyb::Corpus corpus = hyb::load_corpus_dir(o.corpus);
  const auto chunks = hyb::chunk_corpus(corpus);
  if (chunks.empty())
    std::fprintf(stderr, "warning: corpus '%s' yields no full chunks; dataset is empty\n",
                 o.corpus.c_str());

  const auto records = hyb::dedup_cloze(hyb::run_pipeline(corpus, *client));
  const auto seqs = hyb::assemble_dataset(records, chunks, o.seq_len, o.target, o.seed);

  int64_t accepted = 0;
  std::map<std::string, int64_t> rejected = {
      {"AnswerNotInChunk", 0}, {"ClozeNotTerminal", 0}, {"NoValidQa", 0}};
  for (const auto& rec : records) {
    if (rec.accept)
      ++accepted;
    else
      rejected[hyb::reject_reason_name(rec.reason)]++;
  }
  nlohmann::json summary;
  summary["accepted"] = accepted;
  summary["rejected_by_reason"] = rejected;
  summary["sequences"] = static_cast<int64_t>(seqs.size());

  RunDir run(o.out);
  run.write("records.jsonl", hyb::render_records(records));
  run.write("dataset.jsonl", hyb::render_dataset(seqs));
  run.write("summary.json", summary.dump(2) + "\n");
  run.config = {{"client", o.client},         {"corpus", o.corpus},
                {"endpoint", o.endpoint},     {"model", o.model},
                {"retries", fmt_int(o.retries)}, {"seed", fmt_int(static_cast<int64_t>(o.seed))},
                {"seq_len", fmt_int(o.seq_len)}, {"target", fmt_int(o.target)}};
  run.finish("dataset build", o.seed);
}

struct DatasetRecallOpts {
  std::string out;
  int64_t pairs = 8, context_len = 256, window = 128, tasks = 200;
  uint64_t seed = 0;
};

void cmd_dataset_recall(const DatasetRecallOpts& o) {
  const auto suite = hyb::gen_recall_suite(hyb::kByteVocab, o.pairs, o.context_len, o.window,
                                           o.tasks, o.seed);
  RunDir run(o.out);
  run.write("recall_suite.jsonl", hyb::render_recall_suite(suite));
  run.config = {{"context_len", fmt_int(o.context_len)},
                {"pairs", fmt_int(o.pairs)},
                {"seed", fmt_int(static_cast<int64_t>(o.seed))},
                {"tasks", fmt_int(o.tasks)},
                {"window", fmt_int(o.window)}};
  run.finish("dataset recall", o.seed);
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string arch, phase, from, corpus, config, out;
  bool has_arch = false, has_phase = false, has_from = false, has_corpus = false;
  bool has_seed = false;
  uint64_t seed = 0;
  std::map<std::string, std::string> flag_kv;  // numeric overrides by key
};

void cmd_train(const TrainOpts& o) {
  // Defaults, then config file, then explicit flags.
  std::map<std::string, std::string> kv = {
      {"arch", ""},           {"phase", "pretrain"},   {"from", ""},
      {"corpus", ""},         {"seed", "0"},           {"d_model", "64"},
      {"n_state", "0"},       {"heads", "4"},          {"window", "128"},
      {"blocks", "2"},        {"batch_size", "8"},     {"seq_len", "256"},
      {"learning_rate", "0.0004"}, {"weight_decay", "0.1"}, {"steps", "0"},
      {"epochs", "0"},        {"warmup_frac", "0.02"}, {"log_every", "10"}};
  if (!o.config.empty())
    for (const auto& [k, v] : parse_kv_file(o.config)) {
      if (!kv.count(k)) throw std::invalid_argument("config: unknown key '" + k + "'");
      kv[k] = v;
    }
  if (o.has_arch) kv["arch"] = o.arch;
  if (o.has_phase) kv["phase"] = o.phase;
  if (o.has_from) kv["from"] = o.from;
  if (o.has_corpus) kv["corpus"] = o.corpus;
  if (o.has_seed) kv["seed"] = fmt_int(static_cast<int64_t>(o.seed));
  for (const auto& [k, v] : o.flag_kv) kv[k] = v;

  const std::string phase = kv["phase"];
  if (phase != "pretrain" && phase != "continual")
    throw std::invalid_argument("train: phase must be pretrain or continual");
  if (phase == "continual" && kv["from"].empty())
    throw std::invalid_argument("train: --phase continual requires --from <checkpoint>");
  if (kv["corpus"].empty()) throw std::invalid_argument("train: --corpus is required");
  if (!fs::is_directory(kv["corpus"]))
    throw std::invalid_argument("train: corpus '" + kv["corpus"] + "' is not a directory");

  hyb::TrainConfig cfg;
  cfg.batch_size = to_int("batch_size", kv["batch_size"]);
  cfg.seq_len = to_int("seq_len", kv["seq_len"]);
  cfg.learning_rate = to_real("learning_rate", kv["learning_rate"]);
  cfg.weight_decay = to_real("weight_decay", kv["weight_decay"]);
  cfg.steps = to_int("steps", kv["steps"]);
  cfg.epochs = to_int("epochs", kv["epochs"]);
  cfg.warmup_frac = to_real("warmup_frac", kv["warmup_frac"]);
  cfg.seed = static_cast<uint64_t>(to_int("seed", kv["seed"]));
  cfg.phase = phase == "pretrain" ? hyb::TrainPhase::Pretrain : hyb::TrainPhase::Continual;
  cfg.log_every = to_int("log_every", kv["log_every"]);
  if (cfg.steps == 0 && cfg.epochs == 0) {
    cfg.steps = 200;
    kv["steps"] = "200";
  }

  hyb::Model<float> model;
  hyb::AdamWState<float> opt;
  int64_t start_tokens = 0;
  if (phase == "pretrain") {
    if (kv["arch"].empty()) throw std::invalid_argument("train: --arch is required");
    const hyb::BlockSpec spec = parse_arch_or_exit(kv["arch"]);
    hyb::ModelDims dims;
    dims.d = to_int("d_model", kv["d_model"]);
    dims.n = to_int("n_state", kv["n_state"]);
    dims.heads = to_int("heads", kv["heads"]);
    dims.window = to_int("window", kv["window"]);
    dims.blocks = to_int("blocks", kv["blocks"]);
    model = hyb::build_model<float>(spec, dims, cfg.seed);
    opt.init(model, hyb::AdamWConfig{.lr = cfg.learning_rate,
                                     .weight_decay = cfg.weight_decay});
  } else {
    auto loaded = hyb::load_checkpoint(kv["from"]);
    model = std::move(loaded.model);
    if (loaded.has_optimizer)
      opt = std::move(loaded.opt);
    else
      opt.init(model, hyb::AdamWConfig{.lr = cfg.learning_rate,
                                       .weight_decay = cfg.weight_decay});
    start_tokens = loaded.meta.tokens_seen;
    const std::string canon = hyb::render_block_spec(model.spec);
    if (!kv["arch"].empty() && kv["arch"] != canon)
      throw std::invalid_argument("train: --arch '" + kv["arch"] +
                                  "' differs from checkpoint architecture '" + canon + "'");
    kv["arch"] = canon;
    kv["d_model"] = fmt_int(model.dims.d);
    kv["n_state"] = fmt_int(model.dims.n);
    kv["heads"] = fmt_int(model.dims.heads);
    kv["window"] = fmt_int(model.dims.window);
    kv["blocks"] = fmt_int(model.dims.blocks);
  }

  const auto tokens = corpus_tokens_at(kv["corpus"]);
  const hyb::TrainResult result = hyb::train(model, opt, tokens, cfg, 0, start_tokens, 0);

  hyb::CheckpointMeta meta;
  meta.step = result.steps_done;
  meta.tokens_seen = result.tokens_seen;
  meta.seed = cfg.seed;
  meta.rng_state = result.rng_state;

  RunDir run(o.out);
  hyb::save_checkpoint(run.dir / "model.ckpt", model, &opt, meta);
  run.outputs.push_back("model.ckpt");
  run.write("metrics.csv", result.csv);
  run.config = kv;
  run.finish("train", cfg.seed);

  if (result.diverged) {
    std::fprintf(stderr, "error: training diverged at step %lld; last stable state saved\n",
                 static_cast<long long>(result.steps_done));
    throw CliExit{1};
  }
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string ckpt, recall_suite, corpus, out;
  std::vector<int64_t> ppl_lengths;
};

void cmd_eval(const EvalOpts& o) {
  auto loaded = hyb::load_checkpoint(o.ckpt);

  hyb::EvalReport report;
  report.model = hyb::render_block_spec(loaded.model.spec);
  report.seed = loaded.meta.seed;

  if (!o.recall_suite.empty()) {
    const auto suite = hyb::parse_recall_suite(hyb::read_file(o.recall_suite));
    set_recall(report, hyb::eval_recall(loaded.model, suite));
  }
  if (!o.ppl_lengths.empty()) {
    if (o.corpus.empty())
      throw std::invalid_argument("eval: --ppl-lengths requires --corpus");
    const auto tokens = corpus_tokens_at(o.corpus);
    for (const int64_t len : o.ppl_lengths)
      report.ppl_by_length[len] = hyb::perplexity(loaded.model, tokens, len);
    // Proxy for plain LM quality: next-token NLL at the shortest length.
    report.lm_proxy = std::log(report.ppl_by_length.begin()->second);
  }

  RunDir run(o.out);
  run.write("report.json", hyb::eval_report_to_json(report));
  std::string lengths;
  for (const int64_t len : o.ppl_lengths)
    lengths += (lengths.empty() ? "" : ",") + fmt_int(len);
  run.config = {{"ckpt", o.ckpt},
                {"corpus", o.corpus},
                {"ppl_lengths", lengths},
                {"recall_suite", o.recall_suite}};
  run.finish("eval", report.seed);
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOpts {
  std::vector<std::string> ckpts;
  std::string corpus, reports, out;
  int64_t samples = 8, sample_len = 128;
  bool sublayers = false, agg_avg = false;
  uint64_t seed = 0;
};

void analyze_config(RunDir& run, const AnalyzeOpts& o) {
  std::string ckpts;
  for (const auto& c : o.ckpts) ckpts += (ckpts.empty() ? "" : ",") + c;
  run.config = {{"ckpt", ckpts},
                {"corpus", o.corpus},
                {"sample_len", fmt_int(o.sample_len)},
                {"samples", fmt_int(o.samples)},
                {"seed", fmt_int(static_cast<int64_t>(o.seed))}};
}

void cmd_analyze_similarity(const AnalyzeOpts& o) {
  auto loaded = hyb::load_checkpoint(o.ckpts.front());
  const auto samples =
      hyb::sample_windows(corpus_tokens_at(o.corpus), o.samples, o.sample_len, o.seed);
  const auto curve = hyb::branch_cosine_similarity(loaded.model, samples);

  RunDir run(o.out);
  run.write("similarity.csv", hyb::similarity_csv(curve));
  analyze_config(run, o);
  run.finish("analyze similarity", o.seed);
}

void cmd_analyze_ablation(const AnalyzeOpts& o) {
  auto loaded = hyb::load_checkpoint(o.ckpts.front());
  const auto batch =
      make_eval_batch(corpus_tokens_at(o.corpus), o.samples, o.sample_len, o.seed);
  // Higher-is-better metric: geometric mean per-token probability.
  const auto metric = [&](const hyb::Model<float>& m, const hyb::ForwardOptions& opts) {
    return std::exp(-hyb::cross_entropy(hyb::model_forward(m, batch.x, opts), batch.y));
  };

  std::vector<hyb::AblationSite> sites;
  const int nsub = static_cast<int>(loaded.model.spec.sublayers().size());
  for (int b = 0; b < static_cast<int>(loaded.model.blocks.size()); ++b) {
    if (o.sublayers)
      for (int j = 0; j < nsub; ++j)
        sites.push_back({hyb::SiteKind::SubLayer, b, j});
    if (o.agg_avg && loaded.model.spec.parallel &&
        loaded.model.spec.agg != hyb::Aggregation::Avg)
      sites.push_back({hyb::SiteKind::AggToAvg, b, 0});
  }
  const auto report = hyb::block_removal_sweep<float>(loaded.model, metric, sites);

  RunDir run(o.out);
  run.write("ablation.csv", hyb::ablation_csv(report));
  analyze_config(run, o);
  run.config["sublayers"] = o.sublayers ? "1" : "0";
  run.config["agg_avg"] = o.agg_avg ? "1" : "0";
  run.finish("analyze ablation", o.seed);
}

void cmd_analyze_attention(const AnalyzeOpts& o) {
  const auto samples =
      hyb::sample_windows(corpus_tokens_at(o.corpus), o.samples, o.sample_len, o.seed);
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& path : o.ckpts) {
    auto loaded = hyb::load_checkpoint(path);
    rows.emplace_back(hyb::render_block_spec(loaded.model.spec),
                      hyb::avg_attending_weight(loaded.model, samples));
  }

  RunDir run(o.out);
  run.write("attention.csv", hyb::attend_weight_csv(rows));
  analyze_config(run, o);
  run.finish("analyze attention", o.seed);
}

void cmd_analyze_correlation(const AnalyzeOpts& o) {
  std::vector<hyb::EvalReport> reports;
  for (const auto& path : hyb::list_files_sorted(o.reports))
    if (path.extension() == ".json")
      reports.push_back(hyb::eval_report_from_json(hyb::read_file(path)));
  const auto corr = hyb::axes_correlation(reports);

  std::string matrix = "axis";
  for (const auto& axis : corr.axes) matrix += "," + axis;
  matrix += "\n";
  for (int i = 0; i < 3; ++i) {
    matrix += corr.axes[static_cast<size_t>(i)];
    for (int j = 0; j < 3; ++j) matrix += "," + fmt_real(corr.r[i][j]);
    matrix += "\n";
  }

  RunDir run(o.out);
  run.write("correlation.csv", matrix);
  run.write("scatter.csv", corr.scatter_csv);
  run.config = {{"reports", o.reports}};
  run.finish("analyze correlation", 0);
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const CliExit& e) {
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int hyb_cli_main(int argc, const char* const* argv) {
  CLI::App app{"hybrid SSM-attention sequence model toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hyb::version_string());
  int rc = 0;

  // dataset
  auto* dataset = app.add_subcommand("dataset", "build training data and probe suites");
  dataset->require_subcommand(1);

  DatasetBuildOpts db;
  auto* build = dataset->add_subcommand("build", "paraphrase-augmented dataset from a corpus");
  build->add_option("--corpus", db.corpus, "corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  build->add_option("--seq-len", db.seq_len, "training sequence length")
      ->check(CLI::IsMember({2048, 4096, 6144, 8192}));
  build->add_option("--target", db.target, "number of sequences to assemble");
  build->add_option("--client", db.client, "QA backend")
      ->check(CLI::IsMember({"stub", "remote"}));
  build->add_option("--endpoint", db.endpoint, "remote completion endpoint URL");
  build->add_option("--model", db.model, "remote model name");
  build->add_option("--retries", db.retries, "remote attempts per chunk");
  build->add_option("--seed", db.seed, "assembly seed");
  build->add_option("--out", db.out, "run directory")->required();
  build->callback([&] { rc = guarded([&] { cmd_dataset_build(db); }); });

  DatasetRecallOpts dr;
  auto* recall = dataset->add_subcommand("recall", "synthetic key-value recall suite");
  recall->add_option("--pairs", dr.pairs, "key-value pairs per task");
  recall->add_option("--context-len", dr.context_len, "context length in tokens");
  recall->add_option("--window", dr.window, "attention window for the short/long split");
  recall->add_option("--tasks", dr.tasks, "number of tasks");
  recall->add_option("--seed", dr.seed, "generation seed");
  recall->add_option("--out", dr.out, "run directory")->required();
  recall->callback([&] { rc = guarded([&] { cmd_dataset_recall(dr); }); });

  // train
  TrainOpts tr;
  auto* train = app.add_subcommand("train", "train a model on a byte corpus");
  auto* arch_opt = train->add_option("--arch", tr.arch, "architecture string, e.g. \"MF|SF+MergeAttn\"");
  auto* phase_opt = train->add_option("--phase", tr.phase, "pretrain or continual")
                        ->check(CLI::IsMember({"pretrain", "continual"}));
  auto* from_opt = train->add_option("--from", tr.from, "checkpoint to continue from")
                       ->check(CLI::ExistingFile);
  auto* corpus_opt = train->add_option("--corpus", tr.corpus, "corpus directory");
  train->add_option("--config", tr.config, "key=value config file")->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--out", tr.out, "run directory")->required();
  std::map<std::string, std::string> tr_raw;
  for (const char* key : {"d-model", "n-state", "heads", "window", "blocks", "batch-size",
                          "seq-len", "learning-rate", "weight-decay", "steps", "epochs",
                          "warmup-frac", "log-every"}) {
    std::string under = key;
    std::replace(under.begin(), under.end(), '-', '_');
    train->add_option("--" + std::string(key), tr_raw[under], "overrides config key " + under);
  }
  train->callback([&] {
    tr.has_arch = arch_opt->count() > 0;
    tr.has_phase = phase_opt->count() > 0;
    tr.has_from = from_opt->count() > 0;
    tr.has_corpus = corpus_opt->count() > 0;
    tr.has_seed = seed_opt->count() > 0;
    tr.flag_kv.clear();
    for (const auto& [k, v] : tr_raw)
      if (!v.empty()) tr.flag_kv[k] = v;
    rc = guarded([&] { cmd_train(tr); });
  });

  // eval
  EvalOpts ev;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ev.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--recall-suite", ev.recall_suite, "recall suite JSONL")
      ->check(CLI::ExistingFile);
  eval->add_option("--corpus", ev.corpus, "corpus directory for perplexity")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--ppl-lengths", ev.ppl_lengths, "context lengths, e.g. 256,512,1024")
      ->delimiter(',');
  eval->add_option("--out", ev.out, "run directory")->required();
  eval->callback([&] { rc = guarded([&] { cmd_eval(ev); }); });

  // analyze
  AnalyzeOpts an;
  auto* analyze = app.add_subcommand("analyze", "introspection reports");
  analyze->require_subcommand(1);
  const auto add_common = [&](CLI::App* sub, bool multi_ckpt) {
    auto* opt = sub->add_option("--ckpt", an.ckpts, "checkpoint file")
                    ->required()
                    ->check(CLI::ExistingFile);
    if (!multi_ckpt) opt->expected(1);
    sub->add_option("--corpus", an.corpus, "corpus directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    sub->add_option("--samples", an.samples, "sampled windows");
    sub->add_option("--sample-len", an.sample_len, "window length");
    sub->add_option("--seed", an.seed, "sampling seed");
    sub->add_option("--out", an.out, "run directory")->required();
  };

  auto* sim = analyze->add_subcommand("similarity", "branch cosine similarity by depth");
  add_common(sim, false);
  sim->callback([&] { rc = guarded([&] { cmd_analyze_similarity(an); }); });

  auto* abl = analyze->add_subcommand("ablation", "block and site removal sweep");
  add_common(abl, false);
  abl->add_flag("--sublayers", an.sublayers, "also remove each sub-layer");
  abl->add_flag("--agg-avg", an.agg_avg, "also downgrade aggregators to averaging");
  abl->callback([&] { rc = guarded([&] { cmd_analyze_ablation(an); }); });

  auto* att = analyze->add_subcommand("attention", "average attending weight per model");
  add_common(att, true);
  att->callback([&] { rc = guarded([&] { cmd_analyze_attention(an); }); });

  auto* corr = analyze->add_subcommand("correlation", "axis correlation over eval reports");
  corr->add_option("--reports", an.reports, "directory of eval report JSON files")
      ->required()
      ->check(CLI::ExistingDirectory);
  corr->add_option("--out", an.out, "run directory")->required();
  corr->callback([&] { rc = guarded([&] { cmd_analyze_correlation(an); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return rc;
}
