#include "vgcm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace vgcm {

using ad::Graph;
using ad::Var;

namespace {

/// Builds every pass of one video lazily inside a single graph, so that
/// chain and complete-graph inference share identical computations.
class VideoScorer {
 public:
  VideoScorer(Vgcm& model, const EventSequence& seq,
              const InferenceOptions& opts, InferenceBudget* budget)
      : model_(model), seq_(seq), opts_(opts), budget_(budget) {
    if (opts_.refinement.enabled && !opts_.texts)
      throw ConfigError("refinement-enabled inference needs a text provider");
  }

  double probability(int i, int target) {
    Var o_m = ad::slice_rows(masked_outputs(i), target, 1);
    Var o_p = ad::slice_rows(unmasked().outputs, target, 1);
    Var o_t = result_output(target);
    if (opts_.refinement.enabled)
      o_m = build_refined_output(g_, model_, seq_, i, target, o_m,
                                 unmasked().encoded, *opts_.texts,
                                 opts_.refinement, budget_, &cond_cache_);
    Var logit = model_.build_relation_logit(g_, o_m, o_p, o_t);
    double z = g_.value(logit)(0, 0);
    return 1.0 / (1.0 + std::exp(-z));
  }

 private:
  const SeqVars& unmasked() {
    if (!unmasked_) {
      SequenceView view{&seq_, {}, {}};
      unmasked_ = model_.build_sequence(g_, view, PassKind::unmasked, budget_);
    }
    return *unmasked_;
  }

  Var masked_outputs(int i) {
    auto it = masked_.find(i);
    if (it != masked_.end()) return it->second;
    SequenceView view{&seq_, {i}, {}};
    SeqVars vars = model_.build_sequence(g_, view, PassKind::masked, budget_);
    masked_.emplace(i, vars.outputs);
    return vars.outputs;
  }

  Var result_output(int target) {
    auto it = results_.find(target);
    if (it != results_.end()) return it->second;
    SeqVars vars = model_.build_single_event(g_, seq_.events[target], budget_);
    results_.emplace(target, vars.outputs);
    return vars.outputs;
  }

  Vgcm& model_;
  const EventSequence& seq_;
  InferenceOptions opts_;
  InferenceBudget* budget_;
  Graph g_;
  std::optional<SeqVars> unmasked_;
  std::map<int, Var> masked_;
  std::map<int, Var> results_;
  ConditionalCache cond_cache_;
};

}  // namespace

ChainResult infer_chain(Vgcm& model, const EventSequence& seq,
                        const InferenceOptions& opts,
                        InferenceBudget* budget) {
  const int n = seq.n_events();
  VideoScorer scorer(model, seq, opts, budget);
  ChainResult out;
  for (int i = 0; i < n - 1; ++i) {
    double p = scorer.probability(i, n - 1);
    out.probabilities.push_back(p);
    out.decisions.push_back(p > opts.threshold ? 1 : 0);
  }
  return out;
}

GraphResult infer_complete_graph(Vgcm& model, const EventSequence& seq,
                                 const InferenceOptions& opts,
                                 InferenceBudget* budget) {
  const int n = seq.n_events();
  VideoScorer scorer(model, seq, opts, budget);
  GraphResult out;
  out.graph = CausalGraph(n);
  // chain phase first, in the exact order of infer_chain
  for (int i = 0; i < n - 1; ++i) {
    double p = scorer.probability(i, n - 1);
    out.probabilities.emplace_back(i, n - 1, p);
    if (p > opts.threshold) out.graph.add_edge(i, n - 1);
  }
  // interior targets reuse the cached masked/unmasked slices
  for (int j = 1; j < n - 1; ++j) {
    for (int i = 0; i < j; ++i) {
      double p = scorer.probability(i, j);
      out.probabilities.emplace_back(i, j, p);
      if (p > opts.threshold) out.graph.add_edge(i, j);
    }
  }
  std::sort(out.probabilities.begin(), out.probabilities.end());
  return out;
}

GraphResult infer_complete_graph_regressive(Vgcm& model,
                                            const EventSequence& seq,
                                            const InferenceOptions& opts,
                                            InferenceBudget* budget) {
  const int n = seq.n_events();
  GraphResult out;
  out.graph = CausalGraph(n);
  for (int j = 3; j <= n; ++j) {  // prefix length, 1-based result index j
    EventSequence prefix;
    prefix.video_id = seq.video_id;
    prefix.events.assign(seq.events.begin(), seq.events.begin() + j);
    prefix.chain_labels.assign(j - 1, 0);
    ChainResult chain = infer_chain(model, prefix, opts, budget);
    for (int i = 0; i < j - 1; ++i) {
      out.probabilities.emplace_back(i, j - 1, chain.probabilities[i]);
      if (chain.decisions[i]) out.graph.add_edge(i, j - 1);
    }
  }
  std::sort(out.probabilities.begin(), out.probabilities.end());
  return out;
}

long regressive_extra_pass_count(int n_events) {
  return static_cast<long>(n_events - 1) * (n_events - 2) / 2;
}

double graph_agreement(const GraphResult& a, const GraphResult& b) {
  std::map<std::pair<int, int>, double> pa;
  for (auto [i, j, p] : a.probabilities) pa[{i, j}] = p;
  long both = 0, agree = 0;
  for (auto [i, j, p] : b.probabilities) {
    auto it = pa.find({i, j});
    if (it == pa.end()) continue;
    ++both;
    bool ea = a.graph.has_edge(i, j);
    bool eb = b.graph.has_edge(i, j);
    if (ea == eb) ++agree;
  }
  return both == 0 ? 1.0 : static_cast<double>(agree) / both;
}

std::string graph_to_json(const GraphResult& result,
                          const std::string& video_id) {
  std::ostringstream os;
  os << "{\"video_id\": \"" << video_id << "\", \"n_events\": "
     << result.graph.n_events() << ", \"edges\": [";
  bool first = true;
  for (auto [i, j] : result.graph.edges()) {
    if (!first) os << ", ";
    first = false;
    os << "[" << (i + 1) << ", " << (j + 1) << "]";
  }
  os << "], \"probabilities\": [";
  first = true;
  os.setf(std::ios::fixed);
  os.precision(6);
  for (auto [i, j, p] : result.probabilities) {
    if (!first) os << ", ";
    first = false;
    os << "[" << (i + 1) << ", " << (j + 1) << ", " << p << "]";
  }
  os << "]}\n";
  return os.str();
}

std::string graph_to_dot(const GraphResult& result,
                         const std::string& video_id) {
  std::ostringstream os;
  os << "digraph \"" << video_id << "\" {\n  rankdir=LR;\n";
  for (int i = 0; i < result.graph.n_events(); ++i)
    os << "  e" << (i + 1) << " [label=\"e" << (i + 1) << "\"];\n";
  for (auto [i, j] : result.graph.edges())
    os << "  e" << (i + 1) << " -> e" << (j + 1) << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace vgcm
