#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "vgcm/dataset.hpp"
#include "vgcm/kv.hpp"
#include "vgcm/model.hpp"
#include "vgcm/refinement.hpp"

namespace vgcm {

/// Per-example components of the composite objective. The invariant
/// total = lambda_c*l_c + lambda_r*l_r + lambda_v*l_v + lambda_s*sign_gate*l_s
/// holds by construction.
struct LossBreakdown {
  double l_c = 0.0;
  double l_r = 0.0;
  double l_v = 0.0;
  double l_s = 0.0;
  int sign_gate = 0;
  double total = 0.0;
};

/// Which relation label activates the similarity term. `causal` is the
/// formula as written (active when r_k = 1); `noncausal` is the reading of
/// the surrounding prose (active when r_k = 0), kept for ablations.
enum class SimilarityGate { causal, noncausal };

LossBreakdown combine_losses(double l_c, double l_r, double l_v, double l_s,
                             const LossWeights& w, int r_k,
                             SimilarityGate gate = SimilarityGate::causal);

/// Training-time masking schedule: occasionally mask several premise events
/// at once and supervise with the OR of their labels.
struct ContextMaskSchedule {
  double multi_mask_prob = 0.3;
  int mask_count_min = 2;
  int mask_count_max = 2;  // clamped to the premise count minus one
  uint64_t seed = 0;

  void validate() const;
};

/// OR of the chain labels over an index subset.
int combined_label(const std::vector<int>& labels, const std::set<int>& indices);

/// Draws a mask over the first `n_premises` events (single index with
/// probability 1 - multi_mask_prob) and the OR-combined label.
std::pair<MaskSpec, int> sample_mask(const EventSequence& seq,
                                     const ContextMaskSchedule& schedule,
                                     std::mt19937_64& rng, int n_premises,
                                     const std::vector<int>& labels);
/// Schedule-seeded convenience form over all premises and the chain labels.
std::pair<MaskSpec, int> sample_mask(const EventSequence& seq,
                                     const ContextMaskSchedule& schedule);

struct OptimizerConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int warmup_steps = 50;
  double lr_min_ratio = 0.1;  // cosine decay floor as a fraction of lr

  void validate() const;
};

struct TrainerConfig {
  int epochs = 10;
  int batch_size = 8;
  double val_fraction = 0.1;
  int eval_every = 100;          // steps between validation passes
  int early_stop_patience = 10;  // evaluations without improvement
  int checkpoint_every_epochs = 5;
  double interior_target_prob = 0.35;  // supervise interior targets sometimes
  SimilarityGate similarity_gate = SimilarityGate::causal;
  RefinementOptions refinement;
  bool context_chain = true;
  double threshold = 0.5;
  uint64_t seed = 1;

  void validate() const;
};

/// Training aborted because the objective became non-finite.
struct DivergenceError : std::runtime_error {
  long step;
  explicit DivergenceError(long s)
      : std::runtime_error("non-finite training loss at step " +
                           std::to_string(s)),
        step(s) {}
};

struct LogRecord {
  long step = 0;
  double l_c = 0, l_r = 0, l_v = 0, l_s = 0, total = 0;
  std::optional<double> val_acc;
};

struct TrainResult {
  std::unique_ptr<Vgcm> model;
  std::vector<LogRecord> log;
  TrainerState state;
  double best_val_acc = 0.0;
  long steps = 0;
};

/// One fully specified training example: which sequence, which prediction
/// target (0-based event index) and which premises to mask.
struct TrainExample {
  int seq_index = 0;
  int target = 0;
  std::set<int> mask;
  int label = 0;
};

/// Builds the composite loss for a batch of examples in one graph and
/// returns the mean breakdown plus the scalar node to differentiate.
struct BatchLoss {
  ad::Var total;
  LossBreakdown mean;
};
BatchLoss build_batch_loss(ad::Graph& g, Vgcm& model,
                           const std::vector<EventSequence>& corpus,
                           const std::vector<TrainExample>& batch,
                           const LossWeights& weights,
                           const TrainerConfig& trainer,
                           const AuxiliaryTextProvider& texts);

using CheckpointSink =
    std::function<void(const Vgcm&, const TrainerState&, long step)>;

/// Optimizes the model on the corpus. Writes line-delimited log records to
/// `log_stream` when given; periodic checkpoints go through `sink`. Resuming
/// from a saved TrainerState continues the exact run.
TrainResult train(const std::vector<EventSequence>& corpus,
                  const ModelConfig& model_cfg, const LossWeights& weights,
                  const ContextMaskSchedule& schedule,
                  const OptimizerConfig& opt_cfg, const TrainerConfig& trainer,
                  const AuxiliaryTextProvider& texts,
                  std::ostream* log_stream = nullptr,
                  const CheckpointSink& sink = {},
                  const Checkpoint* resume = nullptr);

/// Central finite differences (step h) of the full composite objective
/// against analytic gradients on `n_params` sampled parameters; returns the
/// largest relative error.
double gradient_check(Vgcm& model, const std::vector<EventSequence>& corpus,
                      const LossWeights& weights, const TrainerConfig& trainer,
                      const AuxiliaryTextProvider& texts, int n_params = 64,
                      double h = 1e-5, uint64_t seed = 12345);

/// All trainer-facing settings parsed from one flat key-value file.
struct TrainingFileConfig {
  ModelConfig model;
  LossWeights weights;
  ContextMaskSchedule schedule;
  OptimizerConfig optimizer;
  TrainerConfig trainer;
};
TrainingFileConfig parse_training_config(const KvConfig& kv);

SyntheticWorldConfig parse_world_config(const KvConfig& kv);

}  // namespace vgcm
