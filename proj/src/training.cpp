#include "vgcm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "vgcm/inference.hpp"

namespace vgcm {

using ad::Graph;
using ad::Var;

namespace {

constexpr double kLabelSmoothing = 0.1;
constexpr double kInfoNceTemperature = 0.07;

int effective_gate(int r_k, SimilarityGate gate) {
  return gate == SimilarityGate::causal ? (r_k != 0) : (r_k == 0);
}

}  // namespace

LossBreakdown combine_losses(double l_c, double l_r, double l_v, double l_s,
                             const LossWeights& w, int r_k,
                             SimilarityGate gate) {
  if (r_k != 0 && r_k != 1)
    throw ConfigError("relation label must be 0 or 1");
  LossBreakdown b;
  b.l_c = l_c;
  b.l_r = l_r;
  b.l_v = l_v;
  b.l_s = l_s;
  b.sign_gate = effective_gate(r_k, gate);
  b.total = w.lambda_c * l_c + w.lambda_r * l_r + w.lambda_v * l_v +
            w.lambda_s * b.sign_gate * l_s;
  return b;
}

void ContextMaskSchedule::validate() const {
  if (multi_mask_prob < 0.0 || multi_mask_prob > 1.0)
    throw ConfigError("multi_mask_prob must lie in [0,1]");
  if (mask_count_min < 2 || mask_count_max < mask_count_min)
    throw ConfigError("mask count range must satisfy 2 <= min <= max");
}

int combined_label(const std::vector<int>& labels,
                   const std::set<int>& indices) {
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(labels.size()))
      throw ConfigError("mask index outside label range");
    if (labels[i] != 0) return 1;
  }
  return 0;
}

std::pair<MaskSpec, int> sample_mask(const EventSequence& seq,
                                     const ContextMaskSchedule& schedule,
                                     std::mt19937_64& rng, int n_premises,
                                     const std::vector<int>& labels) {
  schedule.validate();
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  MaskSpec mask;
  const int cap = std::min(schedule.mask_count_max, n_premises - 1);
  const bool multi =
      cap >= schedule.mask_count_min && uni(rng) < schedule.multi_mask_prob;
  if (!multi) {
    std::uniform_int_distribution<int> pick(0, n_premises - 1);
    mask.masked_indices.insert(pick(rng));
  } else {
    std::uniform_int_distribution<int> count_pick(schedule.mask_count_min, cap);
    const int m = count_pick(rng);
    std::vector<int> idx(n_premises);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m; ++i) {  // partial Fisher-Yates
      std::uniform_int_distribution<int> pick(i, n_premises - 1);
      std::swap(idx[i], idx[pick(rng)]);
      mask.masked_indices.insert(idx[i]);
    }
  }
  (void)seq;
  return {mask, combined_label(labels, mask.masked_indices)};
}

std::pair<MaskSpec, int> sample_mask(const EventSequence& seq,
                                     const ContextMaskSchedule& schedule) {
  std::mt19937_64 rng(schedule.seed);
  return sample_mask(seq, schedule, rng, seq.n_events() - 1, seq.chain_labels);
}

void OptimizerConfig::validate() const {
  if (lr < 0.0) throw ConfigError("lr must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0,1)");
  if (eps <= 0.0) throw ConfigError("adam eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (lr_min_ratio < 0.0 || lr_min_ratio > 1.0)
    throw ConfigError("lr_min_ratio must lie in [0,1]");
}

void TrainerConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("val_fraction must lie in [0,1)");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (early_stop_patience < 1)
    throw ConfigError("early_stop_patience must be >= 1");
  if (checkpoint_every_epochs < 1)
    throw ConfigError("checkpoint_every_epochs must be >= 1");
  if (interior_target_prob < 0.0 || interior_target_prob > 1.0)
    throw ConfigError("interior_target_prob must lie in [0,1]");
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("threshold must lie in (0,1)");
}

namespace {

struct ExampleVars {
  Var o_m;  // refined masked output
  Var o_p;
  Var l_r;
  std::optional<Var> l_c;
  std::optional<Var> l_v;
  int label = 0;
};

std::vector<int> padded_caption(const std::vector<int>& caption, int len,
                                std::vector<int>* valid) {
  std::vector<int> out(len, kPadToken);
  valid->assign(len, 0);
  for (int t = 0; t < len && t < static_cast<int>(caption.size()); ++t) {
    out[t] = caption[t];
    (*valid)[t] = 1;
  }
  return out;
}

}  // namespace

BatchLoss build_batch_loss(Graph& g, Vgcm& model,
                           const std::vector<EventSequence>& corpus,
                           const std::vector<TrainExample>& batch,
                           const LossWeights& weights,
                           const TrainerConfig& trainer,
                           const AuxiliaryTextProvider& texts) {
  if (batch.empty()) throw ConfigError("empty training batch");
  std::vector<ExampleVars> ex;
  ex.reserve(batch.size());

  for (const TrainExample& e : batch) {
    const EventSequence& seq = corpus.at(e.seq_index);
    const int n = seq.n_events();
    if (e.target < 1 || e.target > n - 1)
      throw ConfigError("train example target outside [1, N-1]");
    SequenceView unmasked_view{&seq, {}, {}};
    SeqVars unmasked = model.build_sequence(g, unmasked_view);
    SequenceView masked_view{&seq, e.mask, {}};
    SeqVars masked = model.build_sequence(g, masked_view, PassKind::masked);
    SeqVars result = model.build_single_event(g, seq.events[e.target]);

    ExampleVars v;
    v.label = e.label;
    v.o_p = ad::slice_rows(unmasked.outputs, e.target, 1);
    v.o_m = ad::slice_rows(masked.outputs, e.target, 1);
    if (trainer.refinement.enabled && e.mask.size() == 1) {
      int k = *e.mask.begin();
      v.o_m = build_refined_output(g, model, seq, k, e.target, v.o_m,
                                   unmasked.encoded, texts, trainer.refinement);
    }
    Var logit = model.build_relation_logit(g, v.o_m, v.o_p, result.outputs);
    v.l_r = ad::bce_with_logits(logit, e.label);

    if (e.target == n - 1) {
      Var cap_logits = model.build_caption_logits(g, v.o_p);
      std::vector<int> valid;
      std::vector<int> targets = padded_caption(
          seq.events[n - 1].caption, model.config().max_caption_len, &valid);
      v.l_c = ad::label_smoothed_ce(cap_logits, targets, valid, kLabelSmoothing);
      v.l_v = ad::mse(ad::slice_rows(unmasked.encoded, n - 1, 1),
                      result.encoded);
    }
    ex.push_back(std::move(v));
  }

  std::vector<Var> keys;
  keys.reserve(ex.size());
  for (const auto& v : ex) keys.push_back(v.o_p);
  Var key_matrix = ad::vstack(keys);

  Var batch_total;
  LossBreakdown mean;
  for (size_t i = 0; i < ex.size(); ++i) {
    Var sims = ad::cosine_similarities(ex[i].o_m, key_matrix);
    Var l_s = ad::softmax_xent_row(
        ad::scale(sims, 1.0 / kInfoNceTemperature), static_cast<int>(i));
    const int gate = effective_gate(ex[i].label, trainer.similarity_gate);

    Var total = ad::scale(ex[i].l_r, weights.lambda_r);
    double l_c_val = 0.0, l_v_val = 0.0;
    if (ex[i].l_c) {
      total = ad::add(total, ad::scale(*ex[i].l_c, weights.lambda_c));
      l_c_val = g.value(*ex[i].l_c)(0, 0);
    }
    if (ex[i].l_v) {
      total = ad::add(total, ad::scale(*ex[i].l_v, weights.lambda_v));
      l_v_val = g.value(*ex[i].l_v)(0, 0);
    }
    total = ad::add(total, ad::scale(l_s, weights.lambda_s * gate));

    mean.l_c += l_c_val;
    mean.l_r += g.value(ex[i].l_r)(0, 0);
    mean.l_v += l_v_val;
    mean.l_s += gate * g.value(l_s)(0, 0);
    batch_total = (i == 0) ? total : ad::add(batch_total, total);
  }
  batch_total = ad::scale(batch_total, 1.0 / ex.size());
  mean.l_c /= ex.size();
  mean.l_r /= ex.size();
  mean.l_v /= ex.size();
  mean.l_s /= ex.size();
  mean.total = g.value(batch_total)(0, 0);
  mean.sign_gate = 1;
  return {batch_total, mean};
}

namespace {

struct AdamW {
  const OptimizerConfig& cfg;
  long total_steps;

  double lr_at(long step) const {
    double base = cfg.lr;
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
      return base * static_cast<double>(step + 1) / cfg.warmup_steps;
    double lr_min = base * cfg.lr_min_ratio;
    long decay_span = std::max<long>(1, total_steps - cfg.warmup_steps);
    double progress =
        std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / decay_span);
    return lr_min + 0.5 * (base - lr_min) * (1.0 + std::cos(M_PI * progress));
  }

  void step(std::vector<ad::Tensor*>& params, long t_step) {
    double norm_sq = 0.0;
    for (auto* p : params) norm_sq += p->grad.squaredNorm();
    double norm = std::sqrt(norm_sq);
    double scale = 1.0;
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm)
      scale = cfg.clip_norm / norm;
    const double lr = lr_at(t_step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t_step + 1);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t_step + 1);
    for (auto* p : params) {
      Mat grad = p->grad * scale;
      p->adam_m = cfg.beta1 * p->adam_m + (1.0 - cfg.beta1) * grad;
      p->adam_v = (cfg.beta2 * p->adam_v.array() +
                   (1.0 - cfg.beta2) * grad.array().square())
                      .matrix();
      Mat update = ((p->adam_m / bc1).array() /
                    ((p->adam_v / bc2).array().sqrt() + cfg.eps))
                       .matrix();
      p->value -= lr * (update + cfg.weight_decay * p->value);
    }
  }
};

double chain_accuracy(Vgcm& model, const std::vector<EventSequence>& corpus,
                      const std::vector<int>& indices,
                      const TrainerConfig& trainer,
                      const AuxiliaryTextProvider& texts) {
  if (indices.empty()) return 0.0;
  InferenceOptions opts;
  opts.threshold = trainer.threshold;
  opts.refinement = trainer.refinement;
  opts.texts = &texts;
  long correct = 0, total = 0;
  for (int idx : indices) {
    const EventSequence& seq = corpus[idx];
    ChainResult r = infer_chain(model, seq, opts);
    for (size_t k = 0; k < r.decisions.size(); ++k) {
      correct += (r.decisions[k] == (seq.chain_labels[k] != 0 ? 1 : 0));
      ++total;
    }
  }
  return total == 0 ? 0.0 : 100.0 * correct / total;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
}

TrainerState snapshot_state(Vgcm& model, long step,
                            const std::mt19937_64& rng) {
  TrainerState st;
  st.step = step;
  st.rng_state = rng_to_string(rng);
  for (const auto& name : model.tensor_names()) {
    ad::Tensor& t = model.tensor(name);
    st.adam[name] = {t.adam_m, t.adam_v};
  }
  return st;
}

TrainExample make_example(const std::vector<EventSequence>& corpus,
                          int seq_index, const ContextMaskSchedule& schedule,
                          const TrainerConfig& trainer, std::mt19937_64& rng) {
  const EventSequence& seq = corpus[seq_index];
  const int n = seq.n_events();
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  int target = n - 1;
  const bool has_graph =
      seq.planted_graph.has_value() || seq.complete_labels.has_value();
  if (has_graph && n >= 5 && uni(rng) < trainer.interior_target_prob) {
    std::uniform_int_distribution<int> pick(2, n - 2);
    target = pick(rng);
  }
  std::vector<int> labels;
  if (target == n - 1) {
    labels = seq.chain_labels;
  } else if (seq.planted_graph) {
    labels = seq.planted_graph->row_into(target);
  } else {
    labels = seq.complete_labels->items[target - 1];
  }

  ContextMaskSchedule eff = schedule;
  if (!trainer.context_chain) eff.multi_mask_prob = 0.0;
  auto [mask, label] = sample_mask(seq, eff, rng, target, labels);
  return TrainExample{seq_index, target, mask.masked_indices, label};
}

}  // namespace

TrainResult train(const std::vector<EventSequence>& corpus,
                  const ModelConfig& model_cfg, const LossWeights& weights,
                  const ContextMaskSchedule& schedule,
                  const OptimizerConfig& opt_cfg, const TrainerConfig& trainer,
                  const AuxiliaryTextProvider& texts, std::ostream* log_stream,
                  const CheckpointSink& sink, const Checkpoint* resume) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  schedule.validate();
  opt_cfg.validate();
  trainer.validate();

  TrainResult result;
  if (resume) {
    result.model = std::make_unique<Vgcm>(resume->config);
    for (const auto& name : result.model->tensor_names())
      result.model->tensor(name).value =
          const_cast<Vgcm&>(*resume->model).tensor(name).value;
  } else {
    result.model = std::make_unique<Vgcm>(model_cfg);
  }
  Vgcm& model = *result.model;
  auto params = model.parameters();

  // deterministic split, independent of the training rng state
  std::mt19937_64 split_rng(trainer.seed ^ 0x5DEECE66Dull);
  std::vector<int> indices(corpus.size());
  std::iota(indices.begin(), indices.end(), 0);
  std::shuffle(indices.begin(), indices.end(), split_rng);
  const int n_val = static_cast<int>(corpus.size() * trainer.val_fraction);
  std::vector<int> val_idx(indices.begin(), indices.begin() + n_val);
  std::vector<int> train_idx(indices.begin() + n_val, indices.end());
  if (train_idx.empty()) throw ConfigError("no training sequences after split");

  const long steps_per_epoch =
      (static_cast<long>(train_idx.size()) + trainer.batch_size - 1) /
      trainer.batch_size;
  const long total_steps = steps_per_epoch * trainer.epochs;
  AdamW optimizer{opt_cfg, total_steps};

  std::mt19937_64 rng(trainer.seed);
  long step = 0;
  if (resume && resume->state) {
    step = resume->state->step;
    rng_from_string(rng, resume->state->rng_state);
    for (const auto& [name, mv] : resume->state->adam) {
      ad::Tensor& t = model.tensor(name);
      t.adam_m = mv.first;
      t.adam_v = mv.second;
    }
  }
  const long start_epoch = step / steps_per_epoch;

  double best_val = -1.0;
  int evals_since_best = 0;
  bool stop = false;

  for (long epoch = start_epoch; epoch < trainer.epochs && !stop; ++epoch) {
    std::vector<int> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t at = 0; at < order.size() && !stop;
         at += trainer.batch_size) {
      std::vector<TrainExample> batch;
      for (size_t b = at; b < order.size() &&
                          b < at + static_cast<size_t>(trainer.batch_size);
           ++b)
        batch.push_back(make_example(corpus, order[b], schedule, trainer, rng));

      Graph g;
      BatchLoss loss = build_batch_loss(g, model, corpus, batch, weights,
                                        trainer, texts);
      if (!std::isfinite(loss.mean.total)) throw DivergenceError(step);
      model.zero_grads();
      g.backward(loss.total);
      optimizer.step(params, step);
      ++step;

      LogRecord rec{step,          loss.mean.l_c, loss.mean.l_r,
                    loss.mean.l_v, loss.mean.l_s, loss.mean.total,
                    std::nullopt};
      if (!val_idx.empty() && step % trainer.eval_every == 0) {
        double acc = chain_accuracy(model, corpus, val_idx, trainer, texts);
        rec.val_acc = acc;
        if (acc > best_val + 1e-9) {
          best_val = acc;
          evals_since_best = 0;
        } else if (++evals_since_best >= trainer.early_stop_patience) {
          stop = true;
        }
        result.best_val_acc = std::max(result.best_val_acc, acc);
      }
      result.log.push_back(rec);
      if (log_stream) {
        nlohmann::ordered_json j;
        j["step"] = rec.step;
        j["l_c"] = rec.l_c;
        j["l_r"] = rec.l_r;
        j["l_v"] = rec.l_v;
        j["l_s"] = rec.l_s;
        j["total"] = rec.total;
        if (rec.val_acc) j["val_acc"] = *rec.val_acc;
        (*log_stream) << j.dump() << '\n';
      }
    }
    if (sink && (epoch + 1) % trainer.checkpoint_every_epochs == 0 &&
        epoch + 1 < trainer.epochs)
      sink(model, snapshot_state(model, step, rng), step);
  }

  result.state = snapshot_state(model, step, rng);
  result.steps = step;
  return result;
}

double gradient_check(Vgcm& model, const std::vector<EventSequence>& corpus,
                      const LossWeights& weights, const TrainerConfig& trainer,
                      const AuxiliaryTextProvider& texts, int n_params,
                      double h, uint64_t seed) {
  if (corpus.empty()) throw ConfigError("gradient check needs sequences");
  std::mt19937_64 rng(seed);

  // fixed example set: one per sequence (up to three sequences); prefer a
  // causal premise so the similarity term participates
  std::vector<TrainExample> batch;
  for (int s = 0; s < static_cast<int>(corpus.size()) && s < 3; ++s) {
    const EventSequence& seq = corpus[s];
    int k = 0;
    for (size_t i = 0; i < seq.chain_labels.size(); ++i)
      if (seq.chain_labels[i] != 0) {
        k = static_cast<int>(i);
        break;
      }
    batch.push_back(TrainExample{s, seq.n_events() - 1, {k},
                                 seq.chain_labels[k] != 0 ? 1 : 0});
  }

  auto eval_loss = [&]() {
    Graph g;
    BatchLoss l = build_batch_loss(g, model, corpus, batch, weights, trainer,
                                   texts);
    return g.value(l.total)(0, 0);
  };

  model.zero_grads();
  {
    Graph g;
    BatchLoss l =
        build_batch_loss(g, model, corpus, batch, weights, trainer, texts);
    g.backward(l.total);
  }

  auto params = model.parameters();
  std::vector<std::pair<int, int>> coords;  // (param idx, flat element)
  long total_elems = 0;
  for (auto* p : params) total_elems += p->value.size();
  std::uniform_int_distribution<long> pick(0, total_elems - 1);
  std::set<long> chosen;
  while (static_cast<int>(chosen.size()) < std::min<long>(n_params, total_elems))
    chosen.insert(pick(rng));
  for (long flat : chosen) {
    long off = flat;
    for (size_t pi = 0; pi < params.size(); ++pi) {
      if (off < params[pi]->value.size()) {
        coords.emplace_back(static_cast<int>(pi), static_cast<int>(off));
        break;
      }
      off -= params[pi]->value.size();
    }
  }

  double worst = 0.0;
  for (auto [pi, off] : coords) {
    ad::Tensor* t = params[pi];
    const double keep = t->value(off);
    t->value(off) = keep + h;
    double up = eval_loss();
    t->value(off) = keep - h;
    double dn = eval_loss();
    t->value(off) = keep;
    double fd = (up - dn) / (2.0 * h);
    double an = t->grad(off);
    double rel =
        std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
    worst = std::max(worst, rel);
  }
  return worst;
}

TrainingFileConfig parse_training_config(const KvConfig& kv) {
  TrainingFileConfig c;
  c.model.model_dim = static_cast<int>(kv.get_int("model_dim", c.model.model_dim));
  c.model.n_encoder_layers =
      static_cast<int>(kv.get_int("n_encoder_layers", c.model.n_encoder_layers));
  c.model.n_decoder_layers =
      static_cast<int>(kv.get_int("n_decoder_layers", c.model.n_decoder_layers));
  c.model.n_heads = static_cast<int>(kv.get_int("n_heads", c.model.n_heads));
  c.model.vocab_size = static_cast<int>(kv.get_int("vocab_size", 0));
  c.model.max_caption_len =
      static_cast<int>(kv.get_int("max_caption_len", c.model.max_caption_len));
  c.model.max_aux_len =
      static_cast<int>(kv.get_int("max_aux_len", c.model.max_aux_len));
  c.model.dropout = kv.get_double("dropout", c.model.dropout);
  c.model.feature_dim =
      static_cast<int>(kv.get_int("feature_dim", c.model.feature_dim));
  c.model.ffn_mult = static_cast<int>(kv.get_int("ffn_mult", c.model.ffn_mult));

  c.weights.lambda_c = kv.get_double("lambda_c", c.weights.lambda_c);
  c.weights.lambda_r = kv.get_double("lambda_r", c.weights.lambda_r);
  c.weights.lambda_v = kv.get_double("lambda_v", c.weights.lambda_v);
  c.weights.lambda_s = kv.get_double("lambda_s", c.weights.lambda_s);
  if (c.weights.lambda_c < 0 || c.weights.lambda_r < 0 ||
      c.weights.lambda_v < 0 || c.weights.lambda_s < 0)
    throw ConfigError("loss weights must be >= 0");

  c.schedule.multi_mask_prob =
      kv.get_double("multi_mask_prob", c.schedule.multi_mask_prob);
  c.schedule.mask_count_min =
      static_cast<int>(kv.get_int("mask_count_min", c.schedule.mask_count_min));
  c.schedule.mask_count_max =
      static_cast<int>(kv.get_int("mask_count_max", c.schedule.mask_count_max));

  c.optimizer.lr = kv.get_double("lr", c.optimizer.lr);
  c.optimizer.beta1 = kv.get_double("beta1", c.optimizer.beta1);
  c.optimizer.beta2 = kv.get_double("beta2", c.optimizer.beta2);
  c.optimizer.eps = kv.get_double("adam_eps", c.optimizer.eps);
  c.optimizer.weight_decay =
      kv.get_double("weight_decay", c.optimizer.weight_decay);
  c.optimizer.clip_norm = kv.get_double("clip_norm", c.optimizer.clip_norm);
  c.optimizer.warmup_steps =
      static_cast<int>(kv.get_int("warmup_steps", c.optimizer.warmup_steps));
  c.optimizer.lr_min_ratio =
      kv.get_double("lr_min_ratio", c.optimizer.lr_min_ratio);

  c.trainer.epochs = static_cast<int>(kv.get_int("epochs", c.trainer.epochs));
  c.trainer.batch_size =
      static_cast<int>(kv.get_int("batch_size", c.trainer.batch_size));
  c.trainer.val_fraction = kv.get_double("val_fraction", c.trainer.val_fraction);
  c.trainer.eval_every =
      static_cast<int>(kv.get_int("eval_every", c.trainer.eval_every));
  c.trainer.early_stop_patience = static_cast<int>(
      kv.get_int("early_stop_patience", c.trainer.early_stop_patience));
  c.trainer.checkpoint_every_epochs = static_cast<int>(
      kv.get_int("checkpoint_every_epochs", c.trainer.checkpoint_every_epochs));
  c.trainer.interior_target_prob =
      kv.get_double("interior_target_prob", c.trainer.interior_target_prob);
  std::string gate = kv.get_string("similarity_gate", "causal");
  if (gate == "causal")
    c.trainer.similarity_gate = SimilarityGate::causal;
  else if (gate == "noncausal")
    c.trainer.similarity_gate = SimilarityGate::noncausal;
  else
    throw ConfigError("similarity_gate must be causal or noncausal");
  c.trainer.refinement.enabled = kv.get_bool("refinement", true);
  c.trainer.refinement.frontdoor = kv.get_bool("frontdoor", true);
  c.trainer.refinement.counterfactual = kv.get_bool("counterfactual", true);
  c.trainer.refinement.extended = kv.get_bool("extended_refinement", false);
  c.trainer.context_chain = kv.get_bool("context_chain", true);
  c.trainer.threshold = kv.get_double("threshold", c.trainer.threshold);

  uint64_t seed = static_cast<uint64_t>(kv.get_int("seed", 1));
  c.model.seed = static_cast<uint64_t>(kv.get_int("model_seed", seed));
  c.schedule.seed = seed;
  c.trainer.seed = seed;
  return c;
}

SyntheticWorldConfig parse_world_config(const KvConfig& kv) {
  SyntheticWorldConfig c;
  c.n_videos = static_cast<int>(kv.get_int("n_videos", c.n_videos));
  c.n_events_min =
      static_cast<int>(kv.get_int("n_events_min", c.n_events_min));
  c.n_events_max =
      static_cast<int>(kv.get_int("n_events_max", c.n_events_max));
  c.feature_dim = static_cast<int>(kv.get_int("feature_dim", c.feature_dim));
  c.frames = static_cast<int>(kv.get_int("frames", c.frames));
  c.cause_strength = kv.get_double("cause_strength", c.cause_strength);
  c.noise_std = kv.get_double("noise_std", c.noise_std);
  c.edge_prob = kv.get_double("edge_prob", c.edge_prob);
  c.context_edge_prob = kv.get_double("context_edge_prob", c.context_edge_prob);
  c.confounder_rate = kv.get_double("confounder_rate", c.confounder_rate);
  c.illusory_rate = kv.get_double("illusory_rate", c.illusory_rate);
  c.stress_only = kv.get_bool("stress_only", c.stress_only);
  c.seed = static_cast<uint64_t>(kv.get_int("seed", 0));
  c.id_prefix = kv.get_string("id_prefix", c.id_prefix);
  c.validate();
  return c;
}

}  // namespace vgcm
