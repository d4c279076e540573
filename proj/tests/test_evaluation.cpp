#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "vgcm/dataset.hpp"
#include "vgcm/evaluation.hpp"

using namespace vgcm;

namespace {

CausalGraph graph_from_bits(int n, unsigned bits) {
  CausalGraph g(n);
  int at = 0;
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < j; ++i, ++at)
      if (bits & (1u << at)) g.add_edge(i, j);
  return g;
}

// independent oracle: double loop over all i<j pairs comparing membership
long shd_brute_force(const CausalGraph& a, const CausalGraph& b) {
  long count = 0;
  for (int j = 1; j < a.n_events(); ++j)
    for (int i = 0; i < j; ++i)
      if (a.has_edge(i, j) != b.has_edge(i, j)) ++count;
  return count;
}

}  // namespace

TEST_SUITE_BEGIN("evaluation");

TEST_CASE("shd reproduces the two-missing-one-extra worked case") {
  CausalGraph truth(5);
  truth.add_edge(0, 1);
  truth.add_edge(1, 3);
  truth.add_edge(2, 4);
  truth.add_edge(0, 4);
  CausalGraph pred(5);
  pred.add_edge(0, 1);   // kept
  pred.add_edge(1, 3);   // kept
  pred.add_edge(1, 2);   // extra
  // (2,4) and (0,4) missing
  CHECK(compute_shd(pred, truth) == 3);
  CHECK(compute_shd(truth, truth) == 0);
  CHECK(compute_shd(CausalGraph(5), truth) == truth.edge_count());
  CHECK_THROWS_AS(compute_shd(CausalGraph(4), truth), ConfigError);
}

TEST_CASE("shd equals the brute-force membership oracle") {
  // exhaustive over all graph pairs for small N
  for (int n = 4; n <= 5; ++n) {
    const int bits = n * (n - 1) / 2;
    for (unsigned a = 0; a < (1u << bits); ++a) {
      CausalGraph ga = graph_from_bits(n, a);
      for (unsigned b = a; b < (1u << bits); b += 7) {  // stride keeps it fast
        CausalGraph gb = graph_from_bits(n, b);
        CHECK(compute_shd(ga, gb) == shd_brute_force(ga, gb));
      }
    }
  }
  // randomized beyond
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    int n = 4 + static_cast<int>(rng() % 8);
    unsigned mask = (n * (n - 1) / 2 >= 32)
                        ? 0xFFFFFFFFu
                        : ((1u << (n * (n - 1) / 2)) - 1);
    CausalGraph ga = graph_from_bits(n, static_cast<unsigned>(rng()) & mask);
    CausalGraph gb = graph_from_bits(n, static_cast<unsigned>(rng()) & mask);
    CHECK(compute_shd(ga, gb) == shd_brute_force(ga, gb));
  }
}

TEST_CASE("the complete-graph prediction has a closed-form shd") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 4 + static_cast<int>(rng() % 8);
    unsigned mask = (n * (n - 1) / 2 >= 32)
                        ? 0xFFFFFFFFu
                        : ((1u << (n * (n - 1) / 2)) - 1);
    CausalGraph truth = graph_from_bits(n, static_cast<unsigned>(rng()) & mask);
    CausalGraph full(n);
    for (int j = 1; j < n; ++j)
      for (int i = 0; i < j; ++i) full.add_edge(i, j);
    CHECK(compute_shd(full, truth) ==
          n * (n - 1) / 2 - truth.edge_count());
  }
}

TEST_CASE("baseline rows reproduce the random-guess table entries") {
  // 10000 relations with exactly 4239 positive: all-causal scores 42.39
  std::vector<std::vector<int>> truths, all_pos, all_neg;
  std::vector<std::string> ids;
  int remaining_pos = 4239;
  for (int v = 0; v < 2000; ++v) {
    std::vector<int> t(5, 0);
    for (int k = 0; k < 5 && remaining_pos > 0; ++k, --remaining_pos) t[k] = 1;
    truths.push_back(t);
    all_pos.push_back(std::vector<int>(5, 1));
    all_neg.push_back(std::vector<int>(5, 0));
    ids.push_back("v" + std::to_string(v));
  }

  MetricsReport causal = compute_chain_metrics(all_pos, truths, ids);
  CHECK(causal.n_relations == 10000);
  CHECK(causal.n_positive == 4239);
  CHECK(format2(causal.acc()) == "42.39");
  CHECK(format2(causal.pos()) == "100.00");
  CHECK(format2(causal.neg()) == "0.00");

  MetricsReport noncausal = compute_chain_metrics(all_neg, truths, ids);
  CHECK(format2(noncausal.acc()) == "57.61");
  CHECK(format2(noncausal.neg()) == "100.00");
  CHECK(format2(noncausal.pos()) == "0.00");

  // the exact identity acc*T = pos*P + neg*(T-P) in integer form
  CHECK(causal.correct_total ==
        causal.correct_positive + causal.correct_negative);
  double lhs = causal.acc() * causal.n_relations;
  double rhs = *causal.pos() * causal.n_positive +
               *causal.neg() * (causal.n_relations - causal.n_positive);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("a perfect predictor scores 100 everywhere") {
  std::vector<std::vector<int>> truths{{1, 0, 1}, {0, 0, 1}};
  std::vector<std::string> ids{"a", "b"};
  MetricsReport r = compute_chain_metrics(truths, truths, ids);
  CHECK(format2(r.acc()) == "100.00");
  CHECK(format2(r.pos()) == "100.00");
  CHECK(format2(r.neg()) == "100.00");
}

TEST_CASE("swapping predictions and labels swaps Pos and Neg") {
  std::mt19937_64 rng(17);
  std::vector<std::vector<int>> preds, truths;
  std::vector<std::string> ids;
  for (int v = 0; v < 30; ++v) {
    std::vector<int> p(4), t(4);
    for (int k = 0; k < 4; ++k) {
      p[k] = static_cast<int>(rng() % 2);
      t[k] = static_cast<int>(rng() % 2);
    }
    preds.push_back(p);
    truths.push_back(t);
    ids.push_back("v" + std::to_string(v));
  }
  MetricsReport r = compute_chain_metrics(preds, truths, ids);
  auto flip = [](std::vector<std::vector<int>> vs) {
    for (auto& v : vs)
      for (auto& x : v) x = 1 - x;
    return vs;
  };
  MetricsReport f = compute_chain_metrics(flip(preds), flip(truths), ids);
  CHECK(f.acc() == r.acc());
  CHECK(*f.pos() == *r.neg());
  CHECK(*f.neg() == *r.pos());
}

TEST_CASE("length mismatches are reported per video") {
  std::vector<std::vector<int>> preds{{1, 0}};
  std::vector<std::vector<int>> truths{{1, 0, 1}};
  std::vector<std::string> ids{"vid-x"};
  try {
    compute_chain_metrics(preds, truths, ids);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("vid-x") != std::string::npos);
  }
}

TEST_CASE("baseline predictors are constant or seed-stable") {
  SyntheticWorldConfig cfg;
  cfg.n_videos = 3;
  cfg.seed = 5;
  auto corpus = generate_synthetic_corpus(cfg);

  auto all_c = baseline_predictor(BaselineKind::all_causal);
  auto all_n = baseline_predictor(BaselineKind::all_noncausal);
  auto rnd1 = baseline_predictor(BaselineKind::seeded_random, 0.5, 99);
  auto rnd2 = baseline_predictor(BaselineKind::seeded_random, 0.5, 99);
  for (const auto& seq : corpus) {
    CHECK(all_c(seq) == std::vector<int>(seq.n_events() - 1, 1));
    CHECK(all_n(seq) == std::vector<int>(seq.n_events() - 1, 0));
    CHECK(rnd1(seq) == rnd2(seq));
  }
  CHECK(baseline_from_name("all_causal") == BaselineKind::all_causal);
  CHECK_THROWS_AS(baseline_from_name("everything"), ConfigError);
}

TEST_CASE("stress evaluation rejects positive labels and reports change") {
  std::vector<std::vector<int>> truths{{0, 0, 0}, {0, 0, 0}};
  std::vector<std::string> ids{"s1", "s2"};

  // perfect model: accuracy 100, Pos undefined
  StressReport perfect = illusory_stress_eval(truths, truths, ids, 90.0);
  CHECK(format2(perfect.accuracy) == "100.00");
  CHECK_FALSE(perfect.metrics.pos().has_value());
  CHECK(format2(perfect.metrics.pos()) == "n/a");
  CHECK(perfect.change == doctest::Approx(10.0));

  // all-causal baseline: accuracy 0
  std::vector<std::vector<int>> ones{{1, 1, 1}, {1, 1, 1}};
  StressReport worst = illusory_stress_eval(ones, truths, ids, 50.0);
  CHECK(worst.accuracy == 0.0);

  std::vector<std::vector<int>> bad_truth{{0, 1, 0}, {0, 0, 0}};
  CHECK_THROWS_AS(illusory_stress_eval(truths, bad_truth, ids, 0.0),
                  ConfigError);
}

TEST_CASE("rounding is half-even and applied only at emission") {
  CHECK(format2(71.284999) == "71.28");
  CHECK(format2(71.285001) == "71.29");
  CHECK(round2(0.125) == 0.12);  // tie resolves to the even neighbour
  CHECK(round2(0.135) == 0.14);
  CHECK(round2(2.675) == 2.68);  // 267.5 ties to 268, the even side
  CHECK(format2(std::nullopt) == "n/a");
}

TEST_CASE("reports round-trip through json and emit to files") {
  std::vector<std::vector<int>> preds{{1, 0, 1}, {0, 0, 1}};
  std::vector<std::vector<int>> truths{{1, 0, 0}, {0, 1, 1}};
  std::vector<std::string> ids{"a", "b"};
  MetricsReport r = compute_chain_metrics(preds, truths, ids);

  CausalGraph ga(4), gb(4);
  ga.add_edge(0, 3);
  gb.add_edge(0, 3);
  gb.add_edge(1, 3);
  add_graph_metrics(r, {{ga, gb}}, {"a"});
  CHECK(r.n_graph_videos == 1);
  CHECK(r.shd_total == 1);

  MetricsReport back = report_from_json(report_json(r));
  CHECK(back.n_relations == r.n_relations);
  CHECK(back.correct_total == r.correct_total);
  CHECK(back.n_graph_videos == r.n_graph_videos);
  CHECK(back.shd_total == r.shd_total);
  REQUIRE(back.per_video.size() == r.per_video.size());
  CHECK(back.per_video[0].shd == r.per_video[0].shd);
  CHECK(back.per_video[1].shd == r.per_video[1].shd);

  auto dir = std::filesystem::temp_directory_path() / "vgcm_test_report";
  std::filesystem::create_directories(dir);
  emit_report(r, "json", dir / "r.json");
  emit_report(r, "table", dir / "r.txt", "model");
  std::ifstream t(dir / "r.txt");
  std::string header;
  std::getline(t, header);
  CHECK(header == "Method\tSHD\tNeg\tPos\tAcc");

  MetricsReport empty;
  CHECK_THROWS_AS(emit_report(empty, "json", dir / "e.json"), ConfigError);
}

TEST_SUITE_END();
