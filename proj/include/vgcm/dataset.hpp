#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vgcm/core_types.hpp"

namespace vgcm {

/// One parsed annotation entry in the MECD file layout.
struct AnnotationRecord {
  std::string video_id;
  double duration = 0.0;
  std::vector<std::pair<double, double>> timestamps;
  std::vector<std::string> sentences;
  std::vector<int> causality;
  std::optional<CompleteCausalityList> complete_causality;
  std::optional<std::vector<std::pair<int, int>>> planted_graph;  // 1-based
  std::optional<std::string> features_path;
};

/// Source of per-event visual feature matrices; stands in for a pretrained
/// video backbone. Implementations must be deterministic for a given
/// (video_id, event index).
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual bool has(const std::string& video_id, int event_index) const = 0;
  virtual Mat features(const std::string& video_id, int event_index) const = 0;
};

class ZeroFeatureProvider final : public FeatureProvider {
 public:
  ZeroFeatureProvider(int frames, int feature_dim)
      : frames_(frames), feature_dim_(feature_dim) {}
  bool has(const std::string&, int) const override { return true; }
  Mat features(const std::string&, int) const override {
    return Mat::Zero(frames_, feature_dim_);
  }

 private:
  int frames_;
  int feature_dim_;
};

/// Deterministic pseudo-random features keyed by (seed, video_id, index).
class SeededFeatureProvider final : public FeatureProvider {
 public:
  SeededFeatureProvider(int frames, int feature_dim, uint64_t seed)
      : frames_(frames), feature_dim_(feature_dim), seed_(seed) {}
  bool has(const std::string&, int) const override { return true; }
  Mat features(const std::string& video_id, int event_index) const override;

 private:
  int frames_;
  int feature_dim_;
  uint64_t seed_;
};

/// Serves features from binary container files referenced by a manifest.
class ContainerFeatureProvider final : public FeatureProvider {
 public:
  /// video_id -> container path
  explicit ContainerFeatureProvider(
      std::vector<std::pair<std::string, std::filesystem::path>> files);
  bool has(const std::string& video_id, int event_index) const override;
  Mat features(const std::string& video_id, int event_index) const override;

 private:
  struct PerVideo {
    std::vector<Mat> events;
  };
  std::map<std::string, PerVideo> videos_;
};

/// Configuration of the synthetic planted-causal-graph world.
struct SyntheticWorldConfig {
  int n_videos = 10;
  int n_events_min = 4;
  int n_events_max = 11;
  int feature_dim = 64;
  int frames = 8;
  double cause_strength = 2.0;
  double noise_std = 0.1;
  double edge_prob = 0.45;          // edges into the result event
  double context_edge_prob = 0.15;  // edges among premise events
  double confounder_rate = 0.0;  // chance of inserting a relay chain a->b->c
  double illusory_rate = 0.0;    // chance of adjacent / shared-object decoys
  bool stress_only = false;      // emit only causality-free illusory videos
  uint64_t seed = 0;
  std::string id_prefix = "synth";

  void validate() const;
};

/// Generates seeded linear-Gaussian sequences with planted causal graphs.
/// Every edge (i, j) makes event j's features carry a cause_strength-weighted
/// contribution of event i's latent vector; non-edges share nothing but noise.
std::vector<EventSequence> generate_synthetic_corpus(
    const SyntheticWorldConfig& cfg);

/// Parses an MECD-format annotation file (top-level map video_id -> record).
/// Non-fatal oddities (e.g. a "causality" that disagrees with the last item
/// of "complete causality") are appended to `warnings` when provided.
std::vector<AnnotationRecord> load_annotations(
    const std::filesystem::path& path,
    std::vector<std::string>* warnings = nullptr);

/// Serializes records in the same file layout; stable byte-for-byte.
void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records);

/// Converts records to event sequences, pulling visual features from the
/// provider. Throws IoError naming the (video_id, index) of a missing event.
std::vector<EventSequence> attach_features(
    const std::vector<AnnotationRecord>& records,
    const FeatureProvider& provider);

/// Binary feature container, one file per video.
void write_feature_container(const std::filesystem::path& path,
                             const std::vector<Mat>& event_features);
std::vector<Mat> read_feature_container(const std::filesystem::path& path);

/// Writes a corpus as manifest + feature containers under `dir`.
/// The manifest is `<dir>/manifest.json`; features go to `<dir>/features/`.
void save_corpus(const std::filesystem::path& dir,
                 const std::vector<EventSequence>& corpus);

/// Loads a corpus written by save_corpus (or any manifest whose records
/// carry features_path entries).
std::vector<EventSequence> load_corpus(const std::filesystem::path& manifest);

/// Caption of an event as a token sequence rendered back to text.
std::string caption_text(const Event& e);

/// Record view of a sequence (captions decoded, graph re-serialized).
AnnotationRecord record_from_sequence(const EventSequence& seq);

}  // namespace vgcm
