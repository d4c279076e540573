#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vgcm/cli.hpp"
#include "vgcm/model.hpp"

namespace fs = std::filesystem;

namespace {

struct RunOutcome {
  int code;
  std::string out;
  std::string err;
};

RunOutcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = vgcm::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("vgcm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kWorldCfg =
    "n_videos = 8\n"
    "n_events_min = 4\n"
    "n_events_max = 6\n"
    "feature_dim = 12\n"
    "frames = 4\n"
    "cause_strength = 2.0\n"
    "noise_std = 0.1\n"
    "edge_prob = 0.4\n";

const char* kTrainCfg =
    "model_dim = 32\n"
    "n_encoder_layers = 1\n"
    "n_decoder_layers = 1\n"
    "n_heads = 4\n"
    "max_caption_len = 10\n"
    "max_aux_len = 20\n"
    "feature_dim = 12\n"
    "epochs = 2\n"
    "batch_size = 4\n"
    "val_fraction = 0.25\n"
    "eval_every = 2\n"
    "lr = 0.001\n"
    "warmup_steps = 2\n"
    "seed = 3\n";

// one synth + train pipeline shared by the eval/infer cases
struct Pipeline {
  fs::path dir;
  fs::path manifest;
  fs::path checkpoint;

  Pipeline() {
    dir = fresh_dir("pipeline");
    write_file(dir / "world.cfg", kWorldCfg);
    write_file(dir / "train.cfg", kTrainCfg);
    auto synth = run_cli({"synth", "--config", (dir / "world.cfg").string(),
                          "--seed", "7", "--output", (dir / "runs").string()});
    REQUIRE(synth.code == 0);
    manifest = dir / "runs" / "synth-s7-00000000" / "corpus" / "manifest.json";
    // the run-dir hash depends on config bytes; find it instead of guessing
    for (const auto& entry : fs::directory_iterator(dir / "runs"))
      if (entry.path().filename().string().rfind("synth", 0) == 0)
        manifest = entry.path() / "corpus" / "manifest.json";
    REQUIRE(fs::exists(manifest));

    auto train = run_cli({"train", "--config", (dir / "train.cfg").string(),
                          "--corpus", manifest.string(), "--seed", "3",
                          "--output", (dir / "runs").string()});
    REQUIRE(train.code == 0);
    for (const auto& entry : fs::directory_iterator(dir / "runs"))
      if (entry.path().filename().string().rfind("train", 0) == 0)
        checkpoint = entry.path() / "checkpoint.vgck";
    REQUIRE(fs::exists(checkpoint));
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("synth is byte-identical across reruns and never overwrites") {
  auto dir = fresh_dir("synth_repro");
  write_file(dir / "world.cfg", kWorldCfg);
  std::vector<std::string> args{"synth",  "--config",
                                (dir / "world.cfg").string(), "--seed", "7",
                                "--output", (dir / "runs").string()};
  REQUIRE(run_cli(args).code == 0);
  REQUIRE(run_cli(args).code == 0);

  std::vector<fs::path> runs;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    runs.push_back(entry.path());
  std::sort(runs.begin(), runs.end());
  REQUIRE(runs.size() == 2);  // versioned, not overwritten
  CHECK(runs[1].string().find("-r2") != std::string::npos);

  CHECK(slurp(runs[0] / "corpus" / "manifest.json") ==
        slurp(runs[1] / "corpus" / "manifest.json"));
  // feature containers byte-identical too
  for (const auto& f : fs::directory_iterator(runs[0] / "corpus" / "features"))
    CHECK(slurp(f.path()) ==
          slurp(runs[1] / "corpus" / "features" / f.path().filename()));
}

TEST_CASE("synth rejects bad configs with exit code 2") {
  auto dir = fresh_dir("synth_bad");
  auto missing = run_cli({"synth", "--config",
                          (dir / "nope.cfg").string(), "--output",
                          (dir / "runs").string()});
  CHECK(missing.code == 2);

  write_file(dir / "zero.cfg", "n_videos = 0\n");
  auto zero = run_cli({"synth", "--config", (dir / "zero.cfg").string(),
                       "--output", (dir / "runs").string()});
  CHECK(zero.code == 2);
  CHECK(zero.err.find("n_videos must be >= 1") != std::string::npos);
}

TEST_CASE("train smoke run finishes and writes checkpoint plus log") {
  auto& p = pipeline();
  CHECK(fs::exists(p.checkpoint));
  fs::path log = p.checkpoint.parent_path() / "train_log.jsonl";
  REQUIRE(fs::exists(log));
  std::ifstream in(log);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("\"total\":") != std::string::npos);
    CHECK(line.find("nan") == std::string::npos);
    CHECK(line.find("inf") == std::string::npos);
  }
  CHECK(lines > 0);
}

TEST_CASE("ablated training marks the checkpoint metadata") {
  auto& p = pipeline();
  auto dir = fresh_dir("train_ablate");
  write_file(dir / "train.cfg", kTrainCfg);
  auto r = run_cli({"train", "--config", (dir / "train.cfg").string(),
                    "--corpus", p.manifest.string(), "--seed", "3",
                    "--output", (dir / "runs").string(), "--ablate",
                    "refinement"});
  REQUIRE(r.code == 0);
  fs::path ckpt;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    if (entry.path().filename().string().rfind("train", 0) == 0)
      ckpt = entry.path() / "checkpoint.vgck";
  REQUIRE(fs::exists(ckpt));
  vgcm::Checkpoint ck = vgcm::load_checkpoint(ckpt);
  CHECK(ck.metadata.at("ablated") == "refinement");
  CHECK(ck.metadata.at("refinement") == "0");
}

TEST_CASE("eval of the all-noncausal baseline reports Neg 100.00") {
  auto& p = pipeline();
  auto dir = fresh_dir("eval_baseline");
  auto r = run_cli({"eval", "--corpus", p.manifest.string(), "--baseline",
                    "all_noncausal", "--output", (dir / "runs").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Neg") != std::string::npos);
  // table columns: Method SHD Neg Pos Acc
  std::istringstream lines(r.out);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(row.find("all_noncausal\t") == 0);
  CHECK(row.find("\t100.00\t") != std::string::npos);
}

TEST_CASE("eval without checkpoint or baseline is a config error") {
  auto& p = pipeline();
  auto dir = fresh_dir("eval_nothing");
  auto r = run_cli({"eval", "--corpus", p.manifest.string(), "--output",
                    (dir / "runs").string()});
  CHECK(r.code == 2);
}

TEST_CASE("eval runs twice to identical report files") {
  auto& p = pipeline();
  auto dir = fresh_dir("eval_repro");
  std::vector<std::string> args{"eval",     "--corpus",
                                p.manifest.string(), "--checkpoint",
                                p.checkpoint.string(), "--output",
                                (dir / "runs").string()};
  REQUIRE(run_cli(args).code == 0);
  REQUIRE(run_cli(args).code == 0);
  std::vector<fs::path> runs;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    runs.push_back(entry.path());
  std::sort(runs.begin(), runs.end());
  REQUIRE(runs.size() == 2);
  CHECK(slurp(runs[0] / "report.json") == slurp(runs[1] / "report.json"));
  CHECK(slurp(runs[0] / "report.txt") == slurp(runs[1] / "report.txt"));
}

TEST_CASE("stress evaluation adds the Change column") {
  auto& p = pipeline();
  auto dir = fresh_dir("eval_stress");
  write_file(dir / "stress.cfg",
             "n_videos = 5\nfeature_dim = 12\nframes = 4\nstress_only = on\n");
  auto synth = run_cli({"synth", "--config", (dir / "stress.cfg").string(),
                        "--seed", "9", "--output", (dir / "runs").string()});
  REQUIRE(synth.code == 0);
  fs::path stress_manifest;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    if (entry.path().filename().string().rfind("synth", 0) == 0)
      stress_manifest = entry.path() / "corpus" / "manifest.json";

  auto r = run_cli({"eval", "--corpus", p.manifest.string(), "--checkpoint",
                    p.checkpoint.string(), "--stress",
                    stress_manifest.string(), "--output",
                    (dir / "runs").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Change") != std::string::npos);
  fs::path eval_dir;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    if (entry.path().filename().string().rfind("eval", 0) == 0)
      eval_dir = entry.path();
  CHECK(fs::exists(eval_dir / "stress_report.json"));
}

TEST_CASE("infer writes graphs and prints the pass-count summary") {
  auto& p = pipeline();
  auto dir = fresh_dir("infer");
  auto r = run_cli({"infer", "--corpus", p.manifest.string(), "--checkpoint",
                    p.checkpoint.string(), "--output",
                    (dir / "runs").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("decoder passes") != std::string::npos);
  CHECK(r.out.find("regressive-oracle extra masked passes") !=
        std::string::npos);

  fs::path graphs;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    if (entry.path().filename().string().rfind("infer", 0) == 0)
      graphs = entry.path() / "graphs";
  REQUIRE(fs::exists(graphs));
  int json_files = 0, dot_files = 0;
  for (const auto& f : fs::directory_iterator(graphs)) {
    if (f.path().extension() == ".json") ++json_files;
    if (f.path().extension() == ".dot") {
      ++dot_files;
      std::string dot = slurp(f.path());
      CHECK(dot.rfind("digraph", 0) == 0);
      CHECK(std::count(dot.begin(), dot.end(), '{') ==
            std::count(dot.begin(), dot.end(), '}'));
    }
  }
  CHECK(json_files == 8);
  CHECK(dot_files == 8);

  auto bad_mode = run_cli({"infer", "--corpus", p.manifest.string(),
                           "--checkpoint", p.checkpoint.string(), "--mode",
                           "sideways", "--output", (dir / "runs").string()});
  CHECK(bad_mode.code == 2);

  auto reg = run_cli({"infer", "--corpus", p.manifest.string(),
                      "--checkpoint", p.checkpoint.string(), "--mode",
                      "regressive", "--output", (dir / "runs").string()});
  CHECK(reg.code == 0);
}

TEST_CASE("missing checkpoint for infer is a config error") {
  auto& p = pipeline();
  auto dir = fresh_dir("infer_missing");
  auto r = run_cli({"infer", "--corpus", p.manifest.string(), "--output",
                    (dir / "runs").string()});
  CHECK(r.code == 2);
}

TEST_SUITE_END();
