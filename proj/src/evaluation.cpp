#include "vgcm/evaluation.hpp"

#include <cfenv>
#include <random>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vgcm {

namespace {

uint64_t mix_hash(uint64_t seed, const std::string& s) {
  uint64_t h = seed ^ 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

double MetricsReport::acc() const {
  return n_relations == 0 ? 0.0 : 100.0 * correct_total / n_relations;
}

std::optional<double> MetricsReport::pos() const {
  if (n_positive == 0) return std::nullopt;
  return 100.0 * correct_positive / n_positive;
}

std::optional<double> MetricsReport::neg() const {
  long n_neg = n_relations - n_positive;
  if (n_neg == 0) return std::nullopt;
  return 100.0 * correct_negative / n_neg;
}

std::optional<double> MetricsReport::shd_mean() const {
  if (n_graph_videos == 0) return std::nullopt;
  return static_cast<double>(shd_total) / n_graph_videos;
}

long compute_shd(const CausalGraph& pred, const CausalGraph& truth) {
  if (pred.n_events() != truth.n_events())
    throw ConfigError("SHD needs graphs over the same number of events");
  long shd = 0;
  for (auto [i, j] : pred.edges())
    if (!truth.has_edge(i, j)) ++shd;
  for (auto [i, j] : truth.edges())
    if (!pred.has_edge(i, j)) ++shd;
  return shd;
}

MetricsReport compute_chain_metrics(
    const std::vector<std::vector<int>>& preds,
    const std::vector<std::vector<int>>& truths,
    const std::vector<std::string>& video_ids) {
  if (preds.size() != truths.size() || preds.size() != video_ids.size())
    throw ConfigError("chain metrics need aligned per-video vectors");
  MetricsReport r;
  for (size_t v = 0; v < preds.size(); ++v) {
    if (preds[v].size() != truths[v].size())
      throw ConfigError("video " + video_ids[v] +
                        ": prediction/label length mismatch");
    MetricsReport::PerVideo pv;
    pv.video_id = video_ids[v];
    pv.total = static_cast<long>(preds[v].size());
    for (size_t k = 0; k < preds[v].size(); ++k) {
      bool correct = (preds[v][k] != 0) == (truths[v][k] != 0);
      r.n_relations += 1;
      r.n_positive += (truths[v][k] != 0);
      if (correct) {
        r.correct_total += 1;
        pv.correct += 1;
        if (truths[v][k] != 0)
          r.correct_positive += 1;
        else
          r.correct_negative += 1;
      }
    }
    r.per_video.push_back(std::move(pv));
    r.n_videos += 1;
  }
  return r;
}

void add_graph_metrics(MetricsReport& report,
                       const std::vector<std::pair<CausalGraph, CausalGraph>>&
                           graph_pairs_by_video,
                       const std::vector<std::string>& video_ids) {
  if (graph_pairs_by_video.size() != video_ids.size())
    throw ConfigError("graph metrics need aligned per-video vectors");
  for (size_t v = 0; v < graph_pairs_by_video.size(); ++v) {
    long shd =
        compute_shd(graph_pairs_by_video[v].first, graph_pairs_by_video[v].second);
    report.n_graph_videos += 1;
    report.shd_total += shd;
    for (auto& pv : report.per_video)
      if (pv.video_id == video_ids[v]) {
        pv.shd = shd;
        break;
      }
  }
}

BaselineKind baseline_from_name(const std::string& name) {
  if (name == "all_causal") return BaselineKind::all_causal;
  if (name == "all_noncausal") return BaselineKind::all_noncausal;
  if (name == "seeded_random") return BaselineKind::seeded_random;
  throw ConfigError("unknown baseline kind: " + name);
}

std::function<std::vector<int>(const EventSequence&)> baseline_predictor(
    BaselineKind kind, double p, uint64_t seed) {
  switch (kind) {
    case BaselineKind::all_causal:
      return [](const EventSequence& seq) {
        return std::vector<int>(seq.n_events() - 1, 1);
      };
    case BaselineKind::all_noncausal:
      return [](const EventSequence& seq) {
        return std::vector<int>(seq.n_events() - 1, 0);
      };
    case BaselineKind::seeded_random:
      return [p, seed](const EventSequence& seq) {
        std::mt19937_64 rng(mix_hash(seed, seq.video_id));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::vector<int> out(seq.n_events() - 1);
        for (auto& v : out) v = uni(rng) < p ? 1 : 0;
        return out;
      };
  }
  throw ConfigError("unknown baseline kind");
}

StressReport illusory_stress_eval(
    const std::vector<std::vector<int>>& preds,
    const std::vector<std::vector<int>>& truths,
    const std::vector<std::string>& video_ids, double main_acc) {
  for (size_t v = 0; v < truths.size(); ++v)
    for (int label : truths[v])
      if (label != 0)
        throw ConfigError("stress corpus must be causality-free, video " +
                          video_ids[v] + " has a positive label");
  StressReport out;
  out.metrics = compute_chain_metrics(preds, truths, video_ids);
  out.accuracy = out.metrics.acc();
  out.change = out.accuracy - main_acc;
  return out;
}

double round2(double value) {
  // half-even, applied only at emission
  int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  double r = std::nearbyint(value * 100.0) / 100.0;
  std::fesetround(saved);
  return r;
}

std::string format2(std::optional<double> value) {
  if (!value) return "n/a";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << round2(*value);
  return os.str();
}

std::string report_table(const MetricsReport& report,
                         const std::string& row_label,
                         std::optional<double> change) {
  std::ostringstream os;
  os << "Method\tSHD\tNeg\tPos\tAcc";
  if (change) os << "\tChange";
  os << "\n";
  os << row_label << "\t" << format2(report.shd_mean()) << "\t"
     << format2(report.neg()) << "\t" << format2(report.pos()) << "\t"
     << format2(report.acc());
  if (change) {
    os << "\t";
    std::ostringstream c;
    c.setf(std::ios::fixed);
    c.precision(2);
    c << (*change >= 0 ? "+" : "") << round2(*change);
    os << c.str();
  }
  os << "\n";
  return os.str();
}

std::string report_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["n_videos"] = report.n_videos;
  j["n_relations"] = report.n_relations;
  j["n_positive"] = report.n_positive;
  j["correct_total"] = report.correct_total;
  j["correct_positive"] = report.correct_positive;
  j["correct_negative"] = report.correct_negative;
  j["n_graph_videos"] = report.n_graph_videos;
  j["shd_total"] = report.shd_total;
  j["acc"] = round2(report.acc());
  j["pos"] = report.pos() ? nlohmann::ordered_json(round2(*report.pos()))
                          : nlohmann::ordered_json(nullptr);
  j["neg"] = report.neg() ? nlohmann::ordered_json(round2(*report.neg()))
                          : nlohmann::ordered_json(nullptr);
  j["shd_mean"] = report.shd_mean()
                      ? nlohmann::ordered_json(round2(*report.shd_mean()))
                      : nlohmann::ordered_json(nullptr);
  j["per_video"] = nlohmann::ordered_json::array();
  for (const auto& pv : report.per_video) {
    nlohmann::ordered_json v;
    v["video_id"] = pv.video_id;
    v["correct"] = pv.correct;
    v["total"] = pv.total;
    v["shd"] = pv.shd ? nlohmann::ordered_json(*pv.shd)
                      : nlohmann::ordered_json(nullptr);
    j["per_video"].push_back(std::move(v));
  }
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.n_videos = j.at("n_videos").get<long>();
  r.n_relations = j.at("n_relations").get<long>();
  r.n_positive = j.at("n_positive").get<long>();
  r.correct_total = j.at("correct_total").get<long>();
  r.correct_positive = j.at("correct_positive").get<long>();
  r.correct_negative = j.at("correct_negative").get<long>();
  r.n_graph_videos = j.at("n_graph_videos").get<long>();
  r.shd_total = j.at("shd_total").get<long>();
  for (const auto& v : j.at("per_video")) {
    MetricsReport::PerVideo pv;
    pv.video_id = v.at("video_id").get<std::string>();
    pv.correct = v.at("correct").get<long>();
    pv.total = v.at("total").get<long>();
    if (!v.at("shd").is_null()) pv.shd = v.at("shd").get<long>();
    r.per_video.push_back(std::move(pv));
  }
  return r;
}

void emit_report(const MetricsReport& report, const std::string& format,
                 const std::filesystem::path& path,
                 const std::string& row_label) {
  if (report.per_video.empty()) throw ConfigError("no videos evaluated");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path.string());
  if (format == "json")
    out << report_json(report);
  else if (format == "table")
    out << report_table(report, row_label);
  else
    throw ConfigError("unknown report format: " + format);
}

}  // namespace vgcm
