#include "vgcm/refinement.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "vgcm/vocab.hpp"

namespace vgcm {

using ad::Graph;
using ad::Var;

namespace {

std::vector<int> truncated(std::vector<int> ids, int max_len) {
  if (static_cast<int>(ids.size()) > max_len) ids.resize(max_len);
  return ids;
}

}  // namespace

std::vector<int> TemplateTextProvider::chain_of_thought(
    const EventSequence& seq, int k, int target) const {
  // "because <predecessor caption> then <target caption>"
  std::vector<int> out;
  out.push_back(vocab::word_id("because"));
  if (k >= 1) {
    const auto& c = seq.events[k - 1].caption;
    out.insert(out.end(), c.begin(), c.end());
  }
  out.push_back(vocab::word_id("then"));
  const auto& ct = seq.events[target].caption;
  out.insert(out.end(), ct.begin(), ct.end());
  return out;
}

std::vector<int> TemplateTextProvider::existence_only(const EventSequence& seq,
                                                      int k) const {
  std::vector<int> out = {vocab::word_id("there"), vocab::word_id("are"),
                          vocab::word_id("objects")};
  const int obj0 = vocab::object_id(0);
  const int obj_end = obj0 + vocab::n_objects();
  std::vector<int> objs;
  for (int id : seq.events[k].caption)
    if (id >= obj0 && id < obj_end &&
        std::find(objs.begin(), objs.end(), id) == objs.end())
      objs.push_back(id);
  for (size_t i = 0; i < objs.size(); ++i) {
    if (i > 0) out.push_back(vocab::word_id("and"));
    out.push_back(objs[i]);
  }
  return out;
}

CachedTextProvider::CachedTextProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open auxiliary text cache: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("text cache parse error: " + std::string(e.what()));
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw SchemaError("text cache must declare version 1");
  for (auto it = j.at("entries").begin(); it != j.at("entries").end(); ++it) {
    Entry e;
    e.cot = vocab::encode(it.value().at("cot").get<std::string>());
    e.existence = vocab::encode(it.value().at("existence").get<std::string>());
    entries_[it.key()] = std::move(e);
  }
}

const CachedTextProvider::Entry* CachedTextProvider::find(
    const std::string& video_id, int k) const {
  auto it = entries_.find(video_id + ":" + std::to_string(k + 1));
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<int> CachedTextProvider::chain_of_thought(const EventSequence& seq,
                                                      int k,
                                                      int target) const {
  const Entry* e = find(seq.video_id, k);
  return e ? e->cot : fallback_.chain_of_thought(seq, k, target);
}

std::vector<int> CachedTextProvider::existence_only(const EventSequence& seq,
                                                    int k) const {
  const Entry* e = find(seq.video_id, k);
  return e ? e->existence : fallback_.existence_only(seq, k);
}

void write_text_cache(const std::filesystem::path& path,
                      const std::vector<EventSequence>& corpus,
                      const AuxiliaryTextProvider& provider) {
  nlohmann::ordered_json entries;
  for (const auto& seq : corpus) {
    const int n = seq.n_events();
    for (int k = 0; k < n - 1; ++k) {
      nlohmann::ordered_json e;
      e["cot"] = vocab::decode(provider.chain_of_thought(seq, k, n - 1));
      e["existence"] = vocab::decode(provider.existence_only(seq, k));
      entries[seq.video_id + ":" + std::to_string(k + 1)] = std::move(e);
    }
  }
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write text cache: " + path.string());
  out << j.dump(2) << '\n';
}

Event existence_event(const EventSequence& seq, int k,
                      const AuxiliaryTextProvider& texts) {
  // No counterfactual clip is synthesized: only the caption is replaced, so
  // the bracketed difference of the counterfactual isolates what the
  // existence-only description strips from the caption semantics.
  Event e = seq.events[k];
  e.caption = texts.existence_only(seq, k);
  return e;
}

namespace {

std::set<int> all_premises_except(const EventSequence& seq,
                                  const std::set<int>& keep) {
  std::set<int> masked;
  for (int i = 0; i < seq.n_events() - 1; ++i)
    if (!keep.count(i)) masked.insert(i);
  return masked;
}

/// All decoder output slots under single-event conditioning, optionally with
/// the condition replaced by its existence-only stand-in. With a cache,
/// repeated conditions reuse the pass already in the graph.
Var conditional_slots(Graph& g, Vgcm& model, const EventSequence& seq, int k,
                      bool existence_variant,
                      const AuxiliaryTextProvider& texts,
                      InferenceBudget* budget, ConditionalCache* cache) {
  if (cache) {
    auto it = cache->slots.find({k, existence_variant});
    if (it != cache->slots.end()) return it->second;
  }
  SequenceView view{&seq, all_premises_except(seq, {k}), {}};
  if (existence_variant) view.replaced[k] = existence_event(seq, k, texts);
  SeqVars vars = model.build_sequence(g, view, PassKind::conditional, budget);
  if (cache) cache->slots[{k, existence_variant}] = vars.outputs;
  return vars.outputs;
}

struct EffectVars {
  Var comp;
  Var rem;
  bool active = false;
};

/// Eqs. 4-6 for masked premise k and prediction target (both 0-based).
/// Successor-dependent terms vanish when no premise lies between k and the
/// target; the compensation additionally needs a predecessor for the
/// reasoning chain.
EffectVars build_effects(Graph& g, Vgcm& model, const EventSequence& seq,
                         int k, int target, Var f_unmasked,
                         const AuxiliaryTextProvider& texts,
                         const RefinementOptions& opt, InferenceBudget* budget,
                         ConditionalCache* cache) {
  const int d = model.config().model_dim;
  const bool has_succ = (k + 1) < target;
  const bool can_comp = opt.frontdoor && k >= 1 && has_succ;
  const bool can_rem = opt.counterfactual && has_succ;
  EffectVars out;
  out.comp = g.constant(Mat::Zero(1, d));
  out.rem = g.constant(Mat::Zero(1, d));
  if (!can_comp && !can_rem) return out;
  out.active = true;

  std::vector<int> succs = {k + 1};
  if (opt.extended)
    for (int m = k + 2; m < target; ++m) succs.push_back(m);

  Var cond_k = conditional_slots(g, model, seq, k, false, texts, budget, cache);
  Var p_target_k = ad::slice_rows(cond_k, target, 1);

  if (can_comp) {
    Var f_k = ad::slice_rows(f_unmasked, k, 1);
    Var cot = model.build_text(g, texts.chain_of_thought(seq, k, target), k);
    std::vector<Var> terms;
    for (int m : succs) {
      Var f_m = ad::slice_rows(f_unmasked, m, 1);
      Var cross = model.build_cross_attention(g, f_k, f_m);
      Var self = model.build_self_attention(g, f_k);
      Var fused = ad::hstack({cross, self, cot});
      terms.push_back(
          ad::linear(fused, model.frontdoor_w(), model.frontdoor_b()));
    }
    Var do_k = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) do_k = ad::add(do_k, terms[i]);
    if (terms.size() > 1) do_k = ad::scale(do_k, 1.0 / terms.size());
    out.comp = ad::sub(p_target_k, do_k);
  }

  if (can_rem) {
    Var cond_k0 =
        conditional_slots(g, model, seq, k, true, texts, budget, cache);
    Var gate_w = g.param(model.counterfactual_gate());
    Var half = g.constant(Mat::Constant(1, d, 0.5));
    std::vector<Var> terms;
    for (int m : succs) {
      Var cond_m =
          conditional_slots(g, model, seq, m, false, texts, budget, cache);
      Var p_target_m = ad::slice_rows(cond_m, target, 1);
      Var p_m_k = ad::slice_rows(cond_k, m, 1);
      Var p_m_k0 = ad::slice_rows(cond_k0, m, 1);
      Var gate =
          ad::sub(ad::sigmoid(ad::hadamard(gate_w, ad::sub(p_m_k, p_m_k0))),
                  half);
      Var do_m = ad::hadamard(p_target_m, gate);
      terms.push_back(ad::sub(p_target_m, do_m));
    }
    Var rem = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) rem = ad::add(rem, terms[i]);
    if (terms.size() > 1) rem = ad::scale(rem, 1.0 / terms.size());
    out.rem = rem;
  }
  return out;
}

}  // namespace

Mat predictive_feature(Vgcm& model, const EventSequence& seq,
                       const std::set<int>& condition, int target,
                       InferenceBudget* budget,
                       const std::map<int, Event>& replaced) {
  if (condition.empty())
    throw ConfigError("predictive_feature needs a conditioning event");
  for (int c : condition)
    if (c >= target)
      throw ConfigError("conditioning event must precede the target");
  if (target < 1 || target > seq.n_events() - 1)
    throw std::out_of_range("target outside [1, N-1]");
  Graph g;
  SequenceView view{&seq, all_premises_except(seq, condition), replaced};
  SeqVars vars = model.build_sequence(g, view, PassKind::conditional, budget);
  return g.value(vars.outputs).row(target);
}

Mat front_door_adjust(Vgcm& model, const EventSequence& seq, int k, int target,
                      const AuxiliaryTextProvider& texts,
                      InferenceBudget* budget) {
  const int n = seq.n_events();
  if (k < 1) throw std::out_of_range("front-door needs a predecessor event");
  if (k + 1 >= target || k + 1 > n - 2)
    throw std::out_of_range("front-door needs a subsequent premise event");
  Graph g;
  SequenceView unmasked{&seq, {}, {}};
  SeqVars up = model.build_sequence(g, unmasked, PassKind::unmasked, budget);
  Var f_k = ad::slice_rows(up.encoded, k, 1);
  Var f_m = ad::slice_rows(up.encoded, k + 1, 1);
  Var cot = model.build_text(g, texts.chain_of_thought(seq, k, target), k);
  Var cross = model.build_cross_attention(g, f_k, f_m);
  Var self = model.build_self_attention(g, f_k);
  Var out = ad::linear(ad::hstack({cross, self, cot}), model.frontdoor_w(),
                       model.frontdoor_b());
  return g.value(out);
}

Mat counterfactual_remove(Vgcm& model, const EventSequence& seq, int k,
                          int target, const AuxiliaryTextProvider& texts,
                          InferenceBudget* budget) {
  if (k + 1 >= target)
    throw std::out_of_range("counterfactual needs a successor before target");
  Graph g;
  ConditionalCache cache;
  Var cond_k = conditional_slots(g, model, seq, k, false, texts, budget, &cache);
  Var cond_k0 = conditional_slots(g, model, seq, k, true, texts, budget, &cache);
  Var cond_m =
      conditional_slots(g, model, seq, k + 1, false, texts, budget, &cache);
  const int d = model.config().model_dim;
  Var p_target_m = ad::slice_rows(cond_m, target, 1);
  Var p_m_k = ad::slice_rows(cond_k, k + 1, 1);
  Var p_m_k0 = ad::slice_rows(cond_k0, k + 1, 1);
  Var gate = ad::sub(
      ad::sigmoid(ad::hadamard(g.param(model.counterfactual_gate()),
                               ad::sub(p_m_k, p_m_k0))),
      g.constant(Mat::Constant(1, d, 0.5)));
  return g.value(ad::hadamard(p_target_m, gate));
}

EffectPair compute_effects(Vgcm& model, const EventSequence& seq, int k,
                           int target, const AuxiliaryTextProvider& texts,
                           const RefinementOptions& opt,
                           InferenceBudget* budget) {
  Graph g;
  SequenceView unmasked{&seq, {}, {}};
  SeqVars up = model.build_sequence(g, unmasked, PassKind::unmasked, budget);
  ConditionalCache cache;
  EffectVars ev = build_effects(g, model, seq, k, target, up.encoded, texts,
                                opt, budget, &cache);
  return EffectPair{g.value(ev.comp), g.value(ev.rem)};
}

Mat refine_masked_feature(Vgcm& model, const Mat& o_m,
                          const EffectPair& effects) {
  const int d = model.config().model_dim;
  if (o_m.cols() != d || effects.f_comp.cols() != d || effects.f_rem.cols() != d)
    throw ConfigError("refine_masked_feature inputs must be 1 x model_dim");
  Graph g;
  Var dec_comp = model.build_decode_single_slot(g, g.constant(effects.f_comp));
  Var dec_rem = model.build_decode_single_slot(g, g.constant(effects.f_rem));
  Var delta = ad::sub(dec_rem, dec_comp);
  Var out = ad::add(g.constant(o_m), delta);
  return g.value(out);
}

ad::Var build_refined_output(Graph& g, Vgcm& model, const EventSequence& seq,
                             int k, int target, Var o_m, Var f_unmasked,
                             const AuxiliaryTextProvider& texts,
                             const RefinementOptions& opt,
                             InferenceBudget* budget, ConditionalCache* cache) {
  if (!opt.enabled) return o_m;
  EffectVars ev = build_effects(g, model, seq, k, target, f_unmasked, texts,
                                opt, budget, cache);
  if (!ev.active) return o_m;
  Var dec_comp = model.build_decode_single_slot(g, ev.comp);
  Var dec_rem = model.build_decode_single_slot(g, ev.rem);
  return ad::add(o_m, ad::sub(dec_rem, dec_comp));
}

}  // namespace vgcm
