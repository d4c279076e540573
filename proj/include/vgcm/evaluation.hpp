#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vgcm/core_types.hpp"

namespace vgcm {

/// Chain-metric aggregates over a corpus. Percentages are stored unrounded;
/// rounding to two decimals (half-even) happens only at emission.
struct MetricsReport {
  long n_videos = 0;
  long n_relations = 0;
  long n_positive = 0;        // ground-truth causal relations
  long correct_total = 0;
  long correct_positive = 0;
  long correct_negative = 0;

  long n_graph_videos = 0;  // videos carrying complete-graph ground truth
  long shd_total = 0;

  struct PerVideo {
    std::string video_id;
    long correct = 0;
    long total = 0;
    std::optional<long> shd;
  };
  std::vector<PerVideo> per_video;

  double acc() const;                 // percent
  std::optional<double> pos() const;  // percent; empty when no positives
  std::optional<double> neg() const;  // percent; empty when no negatives
  std::optional<double> shd_mean() const;
};

/// Symmetric-difference edge count between two graphs over the same events.
long compute_shd(const CausalGraph& pred, const CausalGraph& truth);

/// Micro-averaged accuracy over relations plus accuracy restricted to
/// ground-truth positive (Pos) and negative (Neg) relations.
/// preds[v] and truths[v] are aligned per-video relation vectors.
MetricsReport compute_chain_metrics(
    const std::vector<std::vector<int>>& preds,
    const std::vector<std::vector<int>>& truths,
    const std::vector<std::string>& video_ids);

/// Adds SHD of (pred, truth) graph pairs into an existing report.
void add_graph_metrics(MetricsReport& report,
                       const std::vector<std::pair<CausalGraph, CausalGraph>>&
                           graph_pairs_by_video,
                       const std::vector<std::string>& video_ids);

enum class BaselineKind { all_causal, all_noncausal, seeded_random };

BaselineKind baseline_from_name(const std::string& name);

/// Constant or seeded-Bernoulli chain predictor.
std::function<std::vector<int>(const EventSequence&)> baseline_predictor(
    BaselineKind kind, double p = 0.5, uint64_t seed = 0);

/// Stress-set evaluation: the corpus must be causality-free; reports the
/// accuracy (equal to Neg there) and its signed delta against the main-set
/// accuracy.
struct StressReport {
  MetricsReport metrics;
  double accuracy = 0.0;  // percent
  double change = 0.0;    // accuracy - main_acc, signed
};
StressReport illusory_stress_eval(
    const std::vector<std::vector<int>>& preds,
    const std::vector<std::vector<int>>& truths,
    const std::vector<std::string>& video_ids, double main_acc);

/// Bankers rounding to two decimals, as used in all emitted tables.
double round2(double value);
/// "71.28" style fixed two-decimal text; "n/a" for missing values.
std::string format2(std::optional<double> value);

/// Table-style text mirroring the paper's column order (SHD, Neg, Pos, Acc).
std::string report_table(const MetricsReport& report,
                         const std::string& row_label,
                         std::optional<double> change = std::nullopt);

/// JSON form of the report; parse-back round-trips exactly.
std::string report_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// Writes the report in "json" or "table" format. Throws on an empty report.
void emit_report(const MetricsReport& report, const std::string& format,
                 const std::filesystem::path& path,
                 const std::string& row_label = "model");

}  // namespace vgcm
