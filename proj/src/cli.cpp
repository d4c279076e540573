#include "vgcm/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vgcm/dataset.hpp"
#include "vgcm/evaluation.hpp"
#include "vgcm/inference.hpp"
#include "vgcm/model.hpp"
#include "vgcm/refinement.hpp"
#include "vgcm/training.hpp"

namespace vgcm::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

uint64_t fnv1a_str(const std::string& s, uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hash8(const std::string& payload) {
  uint64_t h = fnv1a_str(payload);
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0')
     << static_cast<uint32_t>(h ^ (h >> 32));
  return os.str();
}

/// Run directories are versioned: an existing directory is never
/// overwritten, the run lands in <base>-r2, -r3, ...
fs::path make_run_dir(const fs::path& output, const std::string& name) {
  fs::create_directories(output);
  fs::path base = output / name;
  fs::path dir = base;
  int version = 1;
  while (fs::exists(dir)) {
    ++version;
    dir = base;
    dir += "-r" + std::to_string(version);
  }
  fs::create_directories(dir);
  return dir;
}

struct CommonArgs {
  std::string config_path;
  std::string corpus_path;
  std::string checkpoint_path;
  std::string output = "vgcm-runs";
  long seed = -1;  // -1: take the config file's seed
  int jobs = 1;
  double threshold = 0.5;
  std::vector<std::string> ablate;
  std::string mode = "nonregressive";
  std::string stress_path;
  std::string baseline;
  std::string resume_path;
};

void write_run_info(const fs::path& dir, const std::string& subcommand,
                    uint64_t seed, const CommonArgs& a) {
  ojson j;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["config"] = a.config_path;
  j["corpus"] = a.corpus_path;
  j["checkpoint"] = a.checkpoint_path;
  j["threshold"] = a.threshold;
  j["mode"] = a.mode;
  j["ablate"] = a.ablate;
  std::ofstream out(dir / "run_info.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

void apply_ablations(const std::vector<std::string>& ablate,
                     TrainingFileConfig& tc) {
  for (const std::string& a : ablate) {
    if (a == "refinement") {
      tc.trainer.refinement.enabled = false;
    } else if (a == "frontdoor") {
      tc.trainer.refinement.frontdoor = false;
    } else if (a == "counterfactual") {
      tc.trainer.refinement.counterfactual = false;
    } else if (a == "context") {
      tc.trainer.context_chain = false;
    } else if (a.rfind("losses:", 0) == 0) {
      std::string which = a.substr(7);
      if (which == "c") tc.weights.lambda_c = 0.0;
      else if (which == "r") tc.weights.lambda_r = 0.0;
      else if (which == "v") tc.weights.lambda_v = 0.0;
      else if (which == "s") tc.weights.lambda_s = 0.0;
      else throw ConfigError("unknown loss ablation: " + which);
    } else {
      throw ConfigError("unknown --ablate value: " + a);
    }
  }
}

/// Inference options derived from checkpoint metadata plus CLI ablations.
InferenceOptions inference_options(const Checkpoint* ck, const CommonArgs& a,
                                   const AuxiliaryTextProvider& texts) {
  InferenceOptions opts;
  opts.threshold = a.threshold;
  opts.texts = &texts;
  if (ck) {
    auto flag = [&](const std::string& key, bool dflt) {
      auto it = ck->metadata.find(key);
      return it == ck->metadata.end() ? dflt : (it->second == "1");
    };
    opts.refinement.enabled = flag("refinement", true);
    opts.refinement.frontdoor = flag("frontdoor", true);
    opts.refinement.counterfactual = flag("counterfactual", true);
  }
  for (const std::string& ab : a.ablate) {
    if (ab == "refinement") opts.refinement.enabled = false;
    if (ab == "frontdoor") opts.refinement.frontdoor = false;
    if (ab == "counterfactual") opts.refinement.counterfactual = false;
  }
  return opts;
}

std::unique_ptr<AuxiliaryTextProvider> make_text_provider() {
  const char* cache_dir = std::getenv("VGCM_CACHE");
  if (cache_dir) {
    fs::path file = fs::path(cache_dir) / "aux_texts.json";
    if (fs::exists(file))
      return std::make_unique<CachedTextProvider>(file);
  }
  return std::make_unique<TemplateTextProvider>();
}

CausalGraph truth_graph(const EventSequence& seq) {
  if (seq.planted_graph) return *seq.planted_graph;
  return graph_from_complete(*seq.complete_labels);
}

bool has_truth_graph(const EventSequence& seq) {
  return seq.planted_graph.has_value() || seq.complete_labels.has_value();
}

int cmd_synth(const CommonArgs& a, std::ostream& out) {
  if (a.config_path.empty()) throw ConfigError("synth needs --config");
  KvConfig kv = KvConfig::load(a.config_path);
  SyntheticWorldConfig wc = parse_world_config(kv);
  if (a.seed >= 0) wc.seed = static_cast<uint64_t>(a.seed);

  auto corpus = generate_synthetic_corpus(wc);
  std::string run_name = "synth-s" + std::to_string(wc.seed) + "-" +
                         hash8(read_file(a.config_path) + "|" +
                               std::to_string(wc.seed));
  fs::path dir = make_run_dir(a.output, run_name);
  save_corpus(dir / "corpus", corpus);
  write_run_info(dir, "synth", wc.seed, a);

  long events = 0, edges = 0, pairs = 0, positives = 0, relations = 0;
  for (const auto& seq : corpus) {
    events += seq.n_events();
    if (seq.planted_graph) {
      edges += seq.planted_graph->edge_count();
      pairs += seq.n_events() * (seq.n_events() - 1) / 2;
    }
    for (int v : seq.chain_labels) positives += (v != 0);
    relations += static_cast<long>(seq.chain_labels.size());
  }
  out << "corpus: " << corpus.size() << " videos, " << events << " events\n";
  if (pairs > 0)
    out << "edge density: " << format2(100.0 * edges / pairs)
        << "% of ordered pairs\n";
  out << "positive chain fraction: " << format2(100.0 * positives / relations)
      << "%\n";
  out << "manifest: " << (dir / "corpus" / "manifest.json").string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& a, std::ostream& out) {
  if (a.config_path.empty()) throw ConfigError("train needs --config");
  if (a.corpus_path.empty()) throw ConfigError("train needs --corpus");
  KvConfig kv = KvConfig::load(a.config_path);
  TrainingFileConfig tc = parse_training_config(kv);
  if (a.seed >= 0) {
    tc.model.seed = static_cast<uint64_t>(a.seed);
    tc.trainer.seed = static_cast<uint64_t>(a.seed);
    tc.schedule.seed = static_cast<uint64_t>(a.seed);
  }
  apply_ablations(a.ablate, tc);
  tc.trainer.threshold = a.threshold;

  auto corpus = load_corpus(a.corpus_path);
  for (const auto& seq : corpus) {
    auto violations = validate_sequence(seq, SequenceRole::train);
    if (!violations.empty())
      throw SchemaError("video " + seq.video_id +
                        " unfit for training: " + violations.front());
  }

  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (!a.resume_path.empty()) {
    resume = load_checkpoint(a.resume_path);
    resume_ptr = &resume;
  }

  std::string run_name =
      "train-s" + std::to_string(tc.trainer.seed) + "-" +
      hash8(read_file(a.config_path) + "|" + a.corpus_path + "|" +
            std::to_string(tc.trainer.seed) + "|" +
            (a.ablate.empty() ? "" : a.ablate.front()));
  fs::path dir = make_run_dir(a.output, run_name);
  write_run_info(dir, "train", tc.trainer.seed, a);

  auto texts = make_text_provider();
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);

  std::map<std::string, std::string> metadata;
  metadata["seed"] = std::to_string(tc.trainer.seed);
  metadata["refinement"] = tc.trainer.refinement.enabled ? "1" : "0";
  metadata["frontdoor"] = tc.trainer.refinement.frontdoor ? "1" : "0";
  metadata["counterfactual"] = tc.trainer.refinement.counterfactual ? "1" : "0";
  metadata["context_chain"] = tc.trainer.context_chain ? "1" : "0";
  if (!a.ablate.empty()) {
    std::string joined;
    for (const auto& s : a.ablate) joined += (joined.empty() ? "" : ",") + s;
    metadata["ablated"] = joined;
  }

  CheckpointSink sink = [&](const Vgcm& m, const TrainerState& st, long step) {
    save_checkpoint(dir / ("checkpoint-step" + std::to_string(step) + ".vgck"),
                    m, metadata, &st);
  };

  TrainResult r = train(corpus, tc.model, tc.weights, tc.schedule,
                        tc.optimizer, tc.trainer, *texts, &log, sink,
                        resume_ptr);
  save_checkpoint(dir / "checkpoint.vgck", *r.model, metadata, &r.state);
  out << "trained " << r.steps << " steps; best val acc "
      << format2(r.best_val_acc) << "\n";
  out << "checkpoint: " << (dir / "checkpoint.vgck").string() << "\n";
  return 0;
}

struct EvalOutput {
  MetricsReport report;
  std::vector<std::vector<int>> preds;
};

EvalOutput evaluate_corpus(const std::vector<EventSequence>& corpus,
                           Vgcm* model, const InferenceOptions& opts,
                           const std::string& baseline, uint64_t seed,
                           bool with_graphs) {
  std::vector<std::vector<int>> preds, truths;
  std::vector<std::string> ids;
  std::vector<std::pair<CausalGraph, CausalGraph>> graph_pairs;
  std::vector<std::string> graph_ids;

  std::function<std::vector<int>(const EventSequence&)> chain_fn;
  if (!baseline.empty())
    chain_fn = baseline_predictor(baseline_from_name(baseline), 0.5, seed);

  for (const auto& seq : corpus) {
    std::vector<int> pred;
    if (model) {
      pred = infer_chain(*model, seq, opts).decisions;
    } else {
      pred = chain_fn(seq);
    }
    preds.push_back(pred);
    truths.push_back(seq.chain_labels);
    ids.push_back(seq.video_id);
    if (with_graphs && has_truth_graph(seq)) {
      CausalGraph truth = truth_graph(seq);
      CausalGraph predicted(seq.n_events());
      if (model) {
        predicted = infer_complete_graph(*model, seq, opts).graph;
      } else {
        BaselineKind kind = baseline_from_name(baseline);
        std::mt19937_64 rng(fnv1a_str(seq.video_id, seed));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (int j = 1; j < seq.n_events(); ++j)
          for (int i = 0; i < j; ++i) {
            bool on = kind == BaselineKind::all_causal ||
                      (kind == BaselineKind::seeded_random && uni(rng) < 0.5);
            if (on) predicted.add_edge(i, j);
          }
      }
      graph_pairs.emplace_back(predicted, truth);
      graph_ids.push_back(seq.video_id);
    }
  }
  EvalOutput out;
  out.report = compute_chain_metrics(preds, truths, ids);
  if (!graph_pairs.empty())
    add_graph_metrics(out.report, graph_pairs, graph_ids);
  out.preds = std::move(preds);
  return out;
}

int cmd_eval(const CommonArgs& a, std::ostream& out) {
  if (a.corpus_path.empty()) throw ConfigError("eval needs --corpus");
  if (a.checkpoint_path.empty() && a.baseline.empty())
    throw ConfigError("eval needs --checkpoint or --baseline");
  auto corpus = load_corpus(a.corpus_path);

  Checkpoint ck;
  Vgcm* model = nullptr;
  if (!a.checkpoint_path.empty()) {
    ck = load_checkpoint(a.checkpoint_path);
    model = ck.model.get();
  }
  auto texts = make_text_provider();
  InferenceOptions opts =
      inference_options(model ? &ck : nullptr, a, *texts);
  uint64_t seed = a.seed >= 0 ? static_cast<uint64_t>(a.seed) : 0;

  std::string run_name =
      "eval-s" + std::to_string(seed) + "-" +
      hash8(a.corpus_path + "|" + a.checkpoint_path + "|" + a.baseline + "|" +
            a.stress_path + "|" + std::to_string(a.threshold));
  fs::path dir = make_run_dir(a.output, run_name);
  write_run_info(dir, "eval", seed, a);

  EvalOutput main_eval =
      evaluate_corpus(corpus, model, opts, a.baseline, seed, true);
  std::string label = a.baseline.empty() ? "vgcm" : a.baseline;
  emit_report(main_eval.report, "json", dir / "report.json", label);

  std::optional<double> change;
  if (!a.stress_path.empty()) {
    auto stress_corpus = load_corpus(a.stress_path);
    std::vector<std::vector<int>> spreds, struths;
    std::vector<std::string> sids;
    EvalOutput se =
        evaluate_corpus(stress_corpus, model, opts, a.baseline, seed, false);
    for (const auto& seq : stress_corpus) {
      struths.push_back(seq.chain_labels);
      sids.push_back(seq.video_id);
    }
    StressReport sr = illusory_stress_eval(se.preds, struths, sids,
                                           main_eval.report.acc());
    change = sr.change;
    emit_report(sr.metrics, "json", dir / "stress_report.json", label);
  }

  std::string table = report_table(main_eval.report, label, change);
  {
    std::ofstream t(dir / "report.txt", std::ios::binary);
    t << table;
  }
  out << table;
  out << "report: " << (dir / "report.json").string() << "\n";
  return 0;
}

int cmd_infer(const CommonArgs& a, std::ostream& out) {
  if (a.corpus_path.empty()) throw ConfigError("infer needs --corpus");
  if (a.checkpoint_path.empty()) throw ConfigError("infer needs --checkpoint");
  if (a.mode != "nonregressive" && a.mode != "regressive")
    throw ConfigError("--mode must be nonregressive or regressive");
  auto corpus = load_corpus(a.corpus_path);
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  auto texts = make_text_provider();
  InferenceOptions opts = inference_options(&ck, a, *texts);
  uint64_t seed = a.seed >= 0 ? static_cast<uint64_t>(a.seed) : 0;

  std::string run_name =
      "infer-s" + std::to_string(seed) + "-" +
      hash8(a.corpus_path + "|" + a.checkpoint_path + "|" + a.mode + "|" +
            std::to_string(a.threshold));
  fs::path dir = make_run_dir(a.output, run_name);
  write_run_info(dir, "infer", seed, a);
  fs::create_directories(dir / "graphs");

  InferenceBudget budget;
  long regressive_estimate = 0;
  for (const auto& seq : corpus) {
    GraphResult result =
        a.mode == "regressive"
            ? infer_complete_graph_regressive(*ck.model, seq, opts, &budget)
            : infer_complete_graph(*ck.model, seq, opts, &budget);
    regressive_estimate += regressive_extra_pass_count(seq.n_events());
    std::ofstream gj(dir / "graphs" / (seq.video_id + ".json"),
                     std::ios::binary);
    gj << graph_to_json(result, seq.video_id);
    std::ofstream gd(dir / "graphs" / (seq.video_id + ".dot"),
                     std::ios::binary);
    gd << graph_to_dot(result, seq.video_id);
  }
  out << "decoder passes: unmasked " << budget.unmasked_passes << ", masked "
      << budget.masked_passes << ", result " << budget.result_passes
      << ", conditional " << budget.conditional_passes << "\n";
  out << "regressive-oracle extra masked passes (sum over videos): "
      << regressive_estimate << "\n";
  out << "graphs: " << (dir / "graphs").string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"video granger causality model toolkit"};
  app.require_subcommand(1);
  CommonArgs a;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", a.config_path, "config file");
    sub->add_option("--seed", a.seed, "seed override");
    sub->add_option("--output", a.output, "output directory");
    sub->add_option("--jobs", a.jobs, "worker cap")->check(CLI::Range(1, 64));
    sub->add_option("--threshold", a.threshold, "decision threshold");
    sub->add_option("--ablate", a.ablate,
                    "refinement|frontdoor|counterfactual|context|losses:<c|r|v|s>");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, true);

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, true);
  train_cmd->add_option("--corpus", a.corpus_path, "corpus manifest");
  train_cmd->add_option("--resume", a.resume_path, "checkpoint to resume");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate chains and graphs");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--corpus", a.corpus_path, "corpus manifest");
  eval_cmd->add_option("--checkpoint", a.checkpoint_path, "model checkpoint");
  eval_cmd->add_option("--baseline", a.baseline,
                       "all_causal|all_noncausal|seeded_random");
  eval_cmd->add_option("--stress", a.stress_path, "illusory stress manifest");

  CLI::App* infer_cmd = app.add_subcommand("infer", "emit causal graphs");
  add_common(infer_cmd, false);
  infer_cmd->add_option("--corpus", a.corpus_path, "corpus manifest");
  infer_cmd->add_option("--checkpoint", a.checkpoint_path, "model checkpoint");
  infer_cmd->add_option("--mode", a.mode, "nonregressive|regressive");

  try {
    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "argument error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand("synth")) return cmd_synth(a, out);
    if (app.got_subcommand("train")) return cmd_train(a, out);
    if (app.got_subcommand("eval")) return cmd_eval(a, out);
    if (app.got_subcommand("infer")) return cmd_infer(a, out);
    err << "no subcommand\n";
    return 2;
  } catch (const DivergenceError& e) {
    err << "runtime guard: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    err << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace vgcm::cli
