#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vgcm/core_types.hpp"
#include "vgcm/model.hpp"

namespace vgcm {

/// The two causal-confounding corrections around a masked event: the effect
/// lost through its predecessor (to compensate) and the effect left over
/// through its successor (to remove).
struct EffectPair {
  Mat f_comp;  // F^C
  Mat f_rem;   // F^R
};

/// Source of auxiliary reasoning texts: a step-by-step chain from the masked
/// event's predecessor to the target, and an existence-only description that
/// keeps the masked event's objects without its semantics.
class AuxiliaryTextProvider {
 public:
  virtual ~AuxiliaryTextProvider() = default;
  /// T_cot from e_{k-1} to the target event; k and target are 0-based.
  virtual std::vector<int> chain_of_thought(const EventSequence& seq, int k,
                                            int target) const = 0;
  /// c_k^0: "there are objects A and B" for the objects of event k's caption.
  virtual std::vector<int> existence_only(const EventSequence& seq,
                                          int k) const = 0;
};

/// Deterministic template-based texts built from the captions themselves.
class TemplateTextProvider final : public AuxiliaryTextProvider {
 public:
  std::vector<int> chain_of_thought(const EventSequence& seq, int k,
                                    int target) const override;
  std::vector<int> existence_only(const EventSequence& seq,
                                  int k) const override;
};

/// Texts served from an on-disk cache keyed by (video_id, k); lets an
/// externally generated set of texts be replayed offline. Entries missing
/// from the cache fall back to the template provider.
class CachedTextProvider final : public AuxiliaryTextProvider {
 public:
  explicit CachedTextProvider(const std::filesystem::path& cache_file);
  std::vector<int> chain_of_thought(const EventSequence& seq, int k,
                                    int target) const override;
  std::vector<int> existence_only(const EventSequence& seq,
                                  int k) const override;

 private:
  struct Entry {
    std::vector<int> cot;
    std::vector<int> existence;
  };
  const Entry* find(const std::string& video_id, int k) const;
  std::map<std::string, Entry> entries_;  // key "<video_id>:<k+1>"
  TemplateTextProvider fallback_;
};

/// Writes a cache file with one entry per (video, premise index).
void write_text_cache(const std::filesystem::path& path,
                      const std::vector<EventSequence>& corpus,
                      const AuxiliaryTextProvider& provider);

struct RefinementOptions {
  bool enabled = true;
  bool frontdoor = true;       // compensation of the predecessor effect
  bool counterfactual = true;  // removal of the successor effect
  bool extended = false;       // average over all predecessors/successors
};

/// The existence-only stand-in event for premise k: zero visual features,
/// caption replaced by the existence description.
Event existence_event(const EventSequence& seq, int k,
                      const AuxiliaryTextProvider& texts);

/// Decoder output for `target` when conditioning on exactly `condition`
/// (every other premise masked). Realizes P(target | condition).
Mat predictive_feature(Vgcm& model, const EventSequence& seq,
                       const std::set<int>& condition, int target,
                       InferenceBudget* budget = nullptr,
                       const std::map<int, Event>& replaced = {});

/// Front-door estimate of P(target | do(e_k)): e_k queries its successor,
/// attends to itself, and is fused with the encoded reasoning chain.
Mat front_door_adjust(Vgcm& model, const EventSequence& seq, int k, int target,
                      const AuxiliaryTextProvider& texts,
                      InferenceBudget* budget = nullptr);

/// Counterfactual estimate of P(target | do(e_{k+1})): the prediction through
/// the successor, gated by how much replacing e_k with its existence-only
/// description changes the successor's prediction.
Mat counterfactual_remove(Vgcm& model, const EventSequence& seq, int k,
                          int target, const AuxiliaryTextProvider& texts,
                          InferenceBudget* budget = nullptr);

/// Both corrections for masking premise k when predicting `target`; terms
/// whose neighbors fall outside the premise range are zero.
EffectPair compute_effects(Vgcm& model, const EventSequence& seq, int k,
                           int target, const AuxiliaryTextProvider& texts,
                           const RefinementOptions& opt = {},
                           InferenceBudget* budget = nullptr);

/// O' = O - Dec(F^C) + Dec(F^R), evaluated as O + (Dec(F^R) - Dec(F^C)) so
/// equal effect vectors leave the feature bit-identical.
Mat refine_masked_feature(Vgcm& model, const Mat& o_m,
                          const EffectPair& effects);

/// Within-graph cache of single-condition passes, keyed by (premise index,
/// existence-variant). Lets complete-graph inference reuse one conditional
/// pass per premise across all targets. Only valid for one Graph.
struct ConditionalCache {
  std::map<std::pair<int, bool>, ad::Var> slots;
};

/// Graph-building version used inside the training objective and inference:
/// returns the refined masked-path output for (masked premise k, target).
/// `f_unmasked` are the encoder rows of the unmasked pass. With refinement
/// disabled (or at boundaries with both corrections inactive) this returns
/// `o_m` itself, bit-exact.
ad::Var build_refined_output(ad::Graph& g, Vgcm& model,
                             const EventSequence& seq, int k, int target,
                             ad::Var o_m, ad::Var f_unmasked,
                             const AuxiliaryTextProvider& texts,
                             const RefinementOptions& opt,
                             InferenceBudget* budget = nullptr,
                             ConditionalCache* cache = nullptr);

}  // namespace vgcm
