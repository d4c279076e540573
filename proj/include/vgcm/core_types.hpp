#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vgcm {

using Mat = Eigen::MatrixXd;

/// Malformed file or record (bad shape, bad field, inconsistent lengths).
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem / serialization failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kPadToken = 0;
constexpr int kMaskToken = 1;
constexpr int kUnkToken = 2;

/// One sub-event of a video: visual features, caption tokens and time span.
/// Indices are 0-based internally; file formats and reports are 1-based.
struct Event {
  int index = 0;                    // 0-based position within the video
  Mat visual;                       // frames x feature_dim
  std::vector<int> caption;         // token ids, non-empty unless masked
  double start_sec = 0.0;
  double end_sec = 0.0;
  bool masked = false;

  int frames() const { return static_cast<int>(visual.rows()); }
  int feature_dim() const { return static_cast<int>(visual.cols()); }
};

/// Relations of {e_1..e_{k+1}} to e_{k+2}, one item per later event.
/// Item k (0-based) has length k+1; the list has N-1 items in total.
struct CompleteCausalityList {
  std::vector<std::vector<int>> items;

  int n_events() const { return static_cast<int>(items.size()) + 1; }
};

/// Directed causal graph over the events of one video. Edges always point
/// forward in time: (i, j) with i < j, 0-based.
class CausalGraph {
 public:
  CausalGraph() = default;
  explicit CausalGraph(int n_events) : n_events_(n_events) {}

  int n_events() const { return n_events_; }
  const std::set<std::pair<int, int>>& edges() const { return edges_; }

  void add_edge(int i, int j) {
    if (i < 0 || j >= n_events_ || i >= j)
      throw SchemaError("causal graph edge must satisfy 0 <= i < j < n");
    edges_.insert({i, j});
  }
  bool has_edge(int i, int j) const { return edges_.count({i, j}) > 0; }
  int edge_count() const { return static_cast<int>(edges_.size()); }

  /// Relations of all earlier events to event `target` (0-based); length = target.
  std::vector<int> row_into(int target) const {
    std::vector<int> r(target, 0);
    for (int i = 0; i < target; ++i) r[i] = has_edge(i, target) ? 1 : 0;
    return r;
  }

 private:
  int n_events_ = 0;
  std::set<std::pair<int, int>> edges_;
};

enum class SequenceRole { train, test, stress };

/// All events of one video plus its annotation.
struct EventSequence {
  std::string video_id;
  std::vector<Event> events;
  std::vector<int> chain_labels;  // length N-1, relation of e_k to e_N
  std::optional<CompleteCausalityList> complete_labels;
  std::optional<CausalGraph> planted_graph;  // synthetic ground truth

  int n_events() const { return static_cast<int>(events.size()); }
};

/// Auxiliary texts for causal inference: a reasoning chain and an
/// existence-only object description, both token sequences.
struct AuxiliaryTexts {
  std::vector<int> cot;
  std::vector<int> existence;
};

/// Trade-off weights of the composite training objective.
struct LossWeights {
  double lambda_c = 1.0;
  double lambda_r = 4.0;
  double lambda_v = 0.25;
  double lambda_s = 0.05;
};

/// Decoder outputs of the three paths compared by the relation head.
struct PathOutputs {
  Mat o_p;                                   // unmasked path output
  std::map<std::set<int>, Mat> o_m;          // mask set -> masked path output
  Mat o_result;                              // result event output
  Mat f_p_result;                            // encoded result feature, unmasked path
};

/// Checks every EventSequence invariant; returns human-readable violations,
/// one per broken rule, empty when the sequence is valid. The "at least two
/// causal premises" rule applies to training sequences only.
std::vector<std::string> validate_sequence(const EventSequence& seq,
                                           SequenceRole role = SequenceRole::test);

/// Validates the shape of a complete-causality list (N-1 items, item k of
/// length k+1). Throws SchemaError on violation.
void validate_complete(const CompleteCausalityList& c);

/// The last item of the list: relations of all premises to e_N.
std::vector<int> chain_labels_from_complete(const CompleteCausalityList& c);

/// Expands the nested list into an edge set: item k position i (0-based) set
/// means e_{i+1} causes e_{k+2} in 1-based terms.
CausalGraph graph_from_complete(const CompleteCausalityList& c);

/// Inverse of graph_from_complete for a graph over n events.
CompleteCausalityList complete_from_graph(const CausalGraph& g);

}  // namespace vgcm
