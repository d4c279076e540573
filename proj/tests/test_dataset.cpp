#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "vgcm/dataset.hpp"
#include "vgcm/vocab.hpp"

using namespace vgcm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("vgcm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Ridge regression oracle over event features. `pooled` holds one row per
// event (frame-averaged). Returns the R^2 of predicting each column of y
// from x, averaged over columns.
double ridge_r2(const Mat& x, const Mat& y, double lambda = 1e-3) {
  Mat xc = x.rowwise() - x.colwise().mean();
  Mat yc = y.rowwise() - y.colwise().mean();
  Mat gram = xc.transpose() * xc +
             lambda * Mat::Identity(x.cols(), x.cols());
  Mat beta = gram.ldlt().solve(xc.transpose() * yc);
  Mat resid = yc - xc * beta;
  double ss_res = resid.squaredNorm();
  double ss_tot = yc.squaredNorm();
  return ss_tot <= 0 ? 0.0 : 1.0 - ss_res / ss_tot;
}

struct PooledCorpus {
  // per video: one pooled feature row per event
  std::vector<Mat> videos;
  std::vector<const EventSequence*> seqs;
};

PooledCorpus pool(const std::vector<EventSequence>& corpus) {
  PooledCorpus out;
  for (const auto& seq : corpus) {
    Mat m(seq.n_events(), seq.events[0].feature_dim());
    for (int i = 0; i < seq.n_events(); ++i)
      m.row(i) = seq.events[i].visual.colwise().mean();
    out.videos.push_back(std::move(m));
    out.seqs.push_back(&seq);
  }
  return out;
}

// Predictive-lift oracle: R^2 gain of adding event i's features when
// predicting event j's features from all other earlier events, pooled over
// all (video, j) slots that share the same j and candidate i. Requires many
// videos with identical N, so the test corpus pins n_events_min == max.
double regression_lift(const PooledCorpus& pc, int i, int j) {
  int n_videos = static_cast<int>(pc.videos.size());
  int d = static_cast<int>(pc.videos[0].cols());
  Mat y(n_videos, d);
  Mat x_full(n_videos, d * j);
  Mat x_wo(n_videos, d * (j - 1));
  for (int v = 0; v < n_videos; ++v) {
    y.row(v) = pc.videos[v].row(j);
    int at = 0;
    for (int p = 0; p < j; ++p) {
      x_full.block(v, p * d, 1, d) = pc.videos[v].row(p);
      if (p != i) {
        x_wo.block(v, at * d, 1, d) = pc.videos[v].row(p);
        ++at;
      }
    }
  }
  return ridge_r2(x_full, y) - ridge_r2(x_wo, y);
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("synthetic corpus is reproducible bit for bit") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 3;
  cfg.seed = 7;
  cfg.confounder_rate = 0.0;
  cfg.illusory_rate = 0.0;
  auto a = generate_synthetic_corpus(cfg);
  auto b = generate_synthetic_corpus(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t v = 0; v < a.size(); ++v) {
    CHECK(a[v].video_id == b[v].video_id);
    CHECK(a[v].chain_labels == b[v].chain_labels);
    REQUIRE(a[v].n_events() == b[v].n_events());
    for (int e = 0; e < a[v].n_events(); ++e) {
      CHECK(a[v].events[e].caption == b[v].events[e].caption);
      CHECK((a[v].events[e].visual - b[v].events[e].visual).cwiseAbs().maxCoeff() ==
            0.0);
    }
  }
}

TEST_CASE("synthetic sequences satisfy the training invariants") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 40;
  cfg.seed = 11;
  cfg.confounder_rate = 0.3;
  cfg.illusory_rate = 0.5;
  for (const auto& seq : generate_synthetic_corpus(cfg)) {
    CHECK(validate_sequence(seq, SequenceRole::train).empty());
    REQUIRE(seq.planted_graph.has_value());
    CHECK(seq.chain_labels == seq.planted_graph->row_into(seq.n_events() - 1));
  }
}

TEST_CASE("zero cause strength leaves no predictive lift") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 300;
  cfg.n_events_min = cfg.n_events_max = 5;
  cfg.feature_dim = 8;
  cfg.frames = 4;
  cfg.cause_strength = 0.0;
  cfg.noise_std = 0.1;
  cfg.edge_prob = 0.4;
  cfg.seed = 23;
  auto pc = pool(generate_synthetic_corpus(cfg));

  // empirical noise floor: lift distribution with event-i rows permuted
  // across videos, which destroys any real coupling by construction
  std::mt19937_64 rng(97);
  auto floor_for = [&](int i, int j) {
    double floor = 0.0;
    for (int rep = 0; rep < 30; ++rep) {
      PooledCorpus shuffled = pc;
      std::vector<int> order(shuffled.videos.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t v = 0; v < order.size(); ++v)
        shuffled.videos[v].row(i) = pc.videos[order[v]].row(i);
      floor = std::max(floor, regression_lift(shuffled, i, j));
    }
    return floor;
  };
  for (int j = 1; j < 5; ++j)
    for (int i = 0; i < j; ++i)
      CHECK(regression_lift(pc, i, j) <= floor_for(i, j) + 0.02);
}

TEST_CASE("planted edges carry more predictive lift than any non-edge") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 300;
  cfg.n_events_min = cfg.n_events_max = 5;
  cfg.feature_dim = 8;
  cfg.frames = 4;
  cfg.cause_strength = 2.0;
  cfg.noise_std = 0.1;
  cfg.edge_prob = 0.4;
  cfg.seed = 29;
  auto corpus = generate_synthetic_corpus(cfg);
  auto pc = pool(corpus);

  // pool lift per (i,j) over the subsets of videos sharing the edge / non-edge
  const int n = 5;
  double min_edge_lift = 1e9, max_nonedge_lift = -1e9;
  for (int j = 1; j < n; ++j) {
    for (int i = 0; i < j; ++i) {
      PooledCorpus with_edge, without_edge;
      for (size_t v = 0; v < pc.videos.size(); ++v) {
        if (pc.seqs[v]->planted_graph->has_edge(i, j)) {
          with_edge.videos.push_back(pc.videos[v]);
          with_edge.seqs.push_back(pc.seqs[v]);
        } else {
          without_edge.videos.push_back(pc.videos[v]);
          without_edge.seqs.push_back(pc.seqs[v]);
        }
      }
      if (with_edge.videos.size() > 40)
        min_edge_lift = std::min(min_edge_lift, regression_lift(with_edge, i, j));
      if (without_edge.videos.size() > 40)
        max_nonedge_lift =
            std::max(max_nonedge_lift, regression_lift(without_edge, i, j));
    }
  }
  // every planted edge out-lifts every non-edge, with a real margin
  CHECK(min_edge_lift > max_nonedge_lift * 1.3);
  CHECK(min_edge_lift > 0.1);
}

TEST_CASE("illusory decoys always carry label zero") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 60;
  cfg.illusory_rate = 1.0;
  cfg.seed = 31;
  for (const auto& seq : generate_synthetic_corpus(cfg)) {
    // adjacent events with a tiny gap must be non-edges
    for (int i = 0; i + 1 < seq.n_events(); ++i) {
      double gap = seq.events[i + 1].start_sec - seq.events[i].end_sec;
      if (gap < 0.5) CHECK_FALSE(seq.planted_graph->has_edge(i, i + 1));
    }
  }
}

TEST_CASE("stress corpora are causality-free with decoy structure") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 20;
  cfg.stress_only = true;
  cfg.seed = 5;
  for (const auto& seq : generate_synthetic_corpus(cfg)) {
    for (int v : seq.chain_labels) CHECK(v == 0);
    CHECK(seq.planted_graph->edge_count() == 0);
  }
}

TEST_CASE("annotation files round-trip byte-stably") {
  auto dir = temp_dir("annot");
  SyntheticWorldConfig cfg;
  cfg.n_videos = 4;
  cfg.seed = 13;
  auto corpus = generate_synthetic_corpus(cfg);
  std::vector<AnnotationRecord> records;
  for (const auto& seq : corpus) records.push_back(record_from_sequence(seq));
  save_annotations(dir / "a.json", records);
  auto loaded = load_annotations(dir / "a.json");
  save_annotations(dir / "b.json", loaded);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  REQUIRE(loaded.size() == records.size());
  CHECK(loaded[0].video_id == records[0].video_id);
}

TEST_CASE("annotation loader reports schema violations with video ids") {
  auto dir = temp_dir("annot_bad");
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"vid-1": {"duration": 10.0,
      "timestamps": [[0,1],[2,3],[4,5]],
      "sentences": ["a","b","c","d","e"],
      "causality": [1,0]}})";
  }
  try {
    load_annotations(dir / "bad.json");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("vid-1") != std::string::npos);
  }

  {
    std::ofstream out(dir / "bad2.json");
    out << R"({"vid-2": {"duration": 10.0,
      "timestamps": [[0,1],[2,3],[4,5],[6,7]],
      "sentences": ["a","b","c","d"],
      "causality": [1,0]}})";
  }
  CHECK_THROWS_AS(load_annotations(dir / "bad2.json"), SchemaError);

  {
    std::ofstream out(dir / "ok.json");
    out << R"({"vid-3": {"duration": 10.0,
      "timestamps": [[0,1],[2,3],[4,5],[6,7]],
      "sentences": ["a b","b c","c d","d e"],
      "causality": [1,0,1]}})";
  }
  auto records = load_annotations(dir / "ok.json");
  REQUIRE(records.size() == 1);
  CHECK(records[0].video_id == "vid-3");
}

TEST_CASE("causality disagreement with complete causality is a warning") {
  auto dir = temp_dir("annot_warn");
  std::ofstream out(dir / "w.json");
  out << R"({"vid-9": {"duration": 9.0,
    "timestamps": [[0,1],[2,3],[4,5],[6,7]],
    "sentences": ["a","b","c","d"],
    "causality": [1,0,1],
    "complete causality": [[1],[0,1],[0,0,1]]}})";
  out.close();
  std::vector<std::string> warnings;
  auto records = load_annotations(dir / "w.json", &warnings);
  CHECK(records.size() == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("vid-9") != std::string::npos);
}

TEST_CASE("attach_features is deterministic and reports missing events") {
  auto dir = temp_dir("attach");
  std::ofstream out(dir / "a.json");
  out << R"({"vid-1": {"duration": 9.0,
    "timestamps": [[0,1],[2,3],[4,5],[6,7]],
    "sentences": ["the person lifts the cup and the tray",
                  "the person pours the cup and the bowl",
                  "the person cuts the bread and the plate",
                  "the person opens the door and the box"],
    "causality": [1,0,1]}})";
  out.close();
  auto records = load_annotations(dir / "a.json");

  ZeroFeatureProvider zero(4, 8);
  auto seqs = attach_features(records, zero);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].events[0].visual.cwiseAbs().sum() == 0.0);

  SeededFeatureProvider s1(4, 8, 99), s2(4, 8, 99);
  auto a = attach_features(records, s1);
  auto b = attach_features(records, s2);
  CHECK((a[0].events[2].visual - b[0].events[2].visual).cwiseAbs().maxCoeff() ==
        0.0);

  struct Missing final : FeatureProvider {
    bool has(const std::string&, int index) const override {
      return index != 3;
    }
    Mat features(const std::string&, int) const override {
      return Mat::Zero(4, 8);
    }
  } missing;
  try {
    attach_features(records, missing);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("(vid-1,3)") != std::string::npos);
  }
}

TEST_CASE("feature containers and corpora round-trip") {
  auto dir = temp_dir("corpus");
  SyntheticWorldConfig cfg;
  cfg.n_videos = 3;
  cfg.seed = 17;
  cfg.feature_dim = 6;
  cfg.frames = 3;
  auto corpus = generate_synthetic_corpus(cfg);
  save_corpus(dir / "c1", corpus);
  auto loaded = load_corpus(dir / "c1" / "manifest.json");
  REQUIRE(loaded.size() == corpus.size());
  CHECK(loaded[1].chain_labels == corpus[1].chain_labels);
  REQUIRE(loaded[1].planted_graph.has_value());
  CHECK(loaded[1].planted_graph->edges() == corpus[1].planted_graph->edges());
  // captions survive the text round trip through the fixed vocabulary
  CHECK(loaded[2].events[0].caption == corpus[2].events[0].caption);

  // float32 container: saving the loaded corpus again is byte-stable
  save_corpus(dir / "c2", loaded);
  CHECK(slurp(dir / "c1" / "manifest.json") ==
        slurp(dir / "c2" / "manifest.json"));
  CHECK(slurp(dir / "c1" / "features" / (corpus[0].video_id + ".vgfc")) ==
        slurp(dir / "c2" / "features" / (corpus[0].video_id + ".vgfc")));
}

TEST_CASE("planted graph density tracks edge_prob over many videos") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 150;
  cfg.seed = 41;
  cfg.edge_prob = 0.35;
  long edges = 0, pairs = 0;
  for (const auto& seq : generate_synthetic_corpus(cfg)) {
    edges += seq.planted_graph->edge_count();
    pairs += seq.n_events() * (seq.n_events() - 1) / 2;
  }
  double density = static_cast<double>(edges) / pairs;
  // forcing >= 2 result parents biases density upward a little
  CHECK(density > 0.30);
  CHECK(density < 0.48);
}

TEST_SUITE_END();
