#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "vgcm/core_types.hpp"
#include "vgcm/model.hpp"
#include "vgcm/refinement.hpp"

namespace vgcm {

struct InferenceOptions {
  double threshold = 0.5;
  RefinementOptions refinement;
  const AuxiliaryTextProvider* texts = nullptr;  // required when refining
};

struct ChainResult {
  std::vector<int> decisions;         // length N-1
  std::vector<double> probabilities;  // length N-1
};

struct GraphResult {
  CausalGraph graph;
  // (i, j, probability), 0-based, every scored pair
  std::vector<std::tuple<int, int, double>> probabilities;
};

/// Relations of every premise to the result event. Uses N-1 masked passes,
/// one unmasked pass and one result-event pass (plus conditional passes when
/// refinement is on).
ChainResult infer_chain(Vgcm& model, const EventSequence& seq,
                        const InferenceOptions& opts = {},
                        InferenceBudget* budget = nullptr);

/// Complete causal graph from the already-computed masked/unmasked decoder
/// slices: no masked passes beyond the chain's, only N-2 extra result-event
/// encodings. Row j = N equals infer_chain bit-exactly.
GraphResult infer_complete_graph(Vgcm& model, const EventSequence& seq,
                                 const InferenceOptions& opts = {},
                                 InferenceBudget* budget = nullptr);

/// Straightforward baseline that truncates the video at each j from 3 to N
/// and re-runs chain inference on the prefix; kept as an oracle. The pair
/// (e_1, e_2) is outside its reach and reported unscored.
GraphResult infer_complete_graph_regressive(Vgcm& model,
                                            const EventSequence& seq,
                                            const InferenceOptions& opts = {},
                                            InferenceBudget* budget = nullptr);

/// Masked-pass cost of the regressive approach for an N-event video when
/// every interior result is re-derived: (N-1)(N-2)/2.
long regressive_extra_pass_count(int n_events);

/// Fraction of pairs scored by both methods on which they agree.
double graph_agreement(const GraphResult& a, const GraphResult& b);

std::string graph_to_json(const GraphResult& result,
                          const std::string& video_id);
std::string graph_to_dot(const GraphResult& result,
                         const std::string& video_id);

}  // namespace vgcm
