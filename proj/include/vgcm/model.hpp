#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "vgcm/autodiff.hpp"
#include "vgcm/core_types.hpp"

namespace vgcm {

struct ModelConfig {
  int model_dim = 128;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int n_heads = 4;
  int vocab_size = 0;  // 0 = use the built-in vocabulary size
  int max_caption_len = 50;
  int max_aux_len = 50;
  double dropout = 0.0;
  uint64_t seed = 1;
  int feature_dim = 64;
  int ffn_mult = 2;

  void validate() const;
};

/// Premise events to mask, 0-based. Never contains the result index.
struct MaskSpec {
  std::set<int> masked_indices;

  static MaskSpec single(int k) { return MaskSpec{{k}}; }
  void validate(int n_events) const;
};

struct RelationLogit {
  double logit = 0.0;
  double probability() const { return 1.0 / (1.0 + std::exp(-logit)); }
  /// Ties at the threshold resolve to "no causal relation".
  bool decide(double threshold = 0.5) const {
    return probability() > threshold;
  }
};

/// Decoder forward-pass counters, grouped by the role of the pass.
struct InferenceBudget {
  long unmasked_passes = 0;
  long masked_passes = 0;
  long result_passes = 0;
  long conditional_passes = 0;  // single-condition passes of the refinement

  long total() const {
    return unmasked_passes + masked_passes + result_passes + conditional_passes;
  }
  void reset() { *this = InferenceBudget{}; }
};

enum class PassKind { unmasked, masked, conditional, result };

/// Replaces an event by its masked form: all-zero visual features and a
/// constant mask-token caption of the original length. Idempotent.
Event mask_event(const Event& e);

/// A view of a sequence for one forward pass: which premises are masked and
/// which are replaced by an alternative event (e.g. an existence-only stub).
struct SequenceView {
  const EventSequence* seq = nullptr;
  std::set<int> masked;
  std::map<int, Event> replaced;
};

/// Pair of graph nodes produced by a full-sequence pass.
struct SeqVars {
  ad::Var encoded;  // visual-encoder output, n_events x model_dim
  ad::Var outputs;  // decoder output slots, n_events x model_dim
};

/// The dual-path masked prediction network: visual encoder, caption encoder,
/// shared multi-modal decoder, relation head and caption head.
class Vgcm {
 public:
  explicit Vgcm(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ad::Tensor*> parameters();
  long parameter_count() const;
  void zero_grads();

  // ---- graph builders (shared by training and inference) ----

  /// Full-sequence pass. The decoder consumes one query slot per event;
  /// slot t is aligned with event index t, so reading slot t yields the
  /// prediction output for target event t (valid targets are 1..N-1).
  SeqVars build_sequence(ad::Graph& g, const SequenceView& view,
                         PassKind kind = PassKind::unmasked,
                         InferenceBudget* budget = nullptr);

  /// Single-event pass, used for result events and for decoding effect
  /// vectors. Returns {encoded feature, decoder output}, each 1 x model_dim.
  SeqVars build_single_event(ad::Graph& g, const Event& e,
                             InferenceBudget* budget = nullptr);

  /// Shared caption encoder applied to a raw token sequence (auxiliary
  /// texts use this too); pooled to 1 x model_dim.
  ad::Var build_text(ad::Graph& g, const std::vector<int>& tokens,
                     int position_slot);

  /// Relation head: cross-attention of [o_m;o_res] over [o_p;o_res],
  /// self-attention of [o_m;o_res], concatenated and mapped to one logit.
  ad::Var build_relation_logit(ad::Graph& g, ad::Var o_m, ad::Var o_p,
                               ad::Var o_result);

  /// Token logits of the predicted result caption, max_caption_len x vocab.
  ad::Var build_caption_logits(ad::Graph& g, ad::Var o_p);

  // Shared attention blocks of the relation head, reused by the causal
  // refinement ops.
  ad::Var build_cross_attention(ad::Graph& g, ad::Var q, ad::Var kv);
  ad::Var build_self_attention(ad::Graph& g, ad::Var x);

  /// Decoder applied to a single memory slot (used on effect vectors).
  ad::Var build_decode_single_slot(ad::Graph& g, ad::Var slot);

  // Refinement parameters (owned here so checkpoints stay self-contained).
  ad::Tensor& frontdoor_w() { return *fd_w_; }
  ad::Tensor& frontdoor_b() { return *fd_b_; }
  ad::Tensor& counterfactual_gate() { return *cf_gate_; }

  // ---- plain-value convenience wrappers (no gradients kept) ----

  /// Output feature of the decoder query slot `slice_index` (0-based, valid
  /// range [1, N-1]; slot N-1 is the result-query slot).
  Mat forward_path(const EventSequence& seq, const MaskSpec* mask,
                   int slice_index, InferenceBudget* budget = nullptr);

  /// Encoded feature and decoder output of a lone event: {F_e, O_e}.
  std::pair<Mat, Mat> encode_result_event(const Event& e,
                                          InferenceBudget* budget = nullptr);

  RelationLogit relation_head(const Mat& o_m, const Mat& o_p,
                              const Mat& o_result);

  Mat caption_head(const Mat& o_p);

  // ---- persistence ----
  ad::Tensor& tensor(const std::string& name);
  const std::vector<std::string>& tensor_names() const { return order_; }
  bool has_tensor(const std::string& name) const {
    return params_.count(name) > 0;
  }

 private:
  struct LayerNormW {
    ad::Tensor* g;
    ad::Tensor* b;
  };
  struct FfnW {
    ad::Tensor* w1;
    ad::Tensor* b1;
    ad::Tensor* w2;
    ad::Tensor* b2;
  };
  struct EncoderLayerW {
    ad::AttnWeights attn;
    LayerNormW ln1, ln2;
    FfnW ffn;
  };
  struct DecoderLayerW {
    ad::AttnWeights self_attn;
    ad::AttnWeights cross_attn;
    LayerNormW ln1, ln2, ln3;
    FfnW ffn;
  };

  ad::Tensor& create(const std::string& name, int rows, int cols);
  void init_params();
  ad::AttnWeights make_attn(const std::string& prefix);
  EncoderLayerW make_encoder_layer(const std::string& prefix);
  DecoderLayerW make_decoder_layer(const std::string& prefix);

  ad::Var encode_stack(ad::Graph& g, ad::Var x,
                       const std::vector<EncoderLayerW>& layers,
                       const LayerNormW& final_ln);
  ad::Var decode_stack(ad::Graph& g, ad::Var queries, ad::Var memory);
  ad::Var caption_feature(ad::Graph& g, const std::vector<int>& tokens,
                          int position_slot);

  ModelConfig cfg_;
  std::map<std::string, std::unique_ptr<ad::Tensor>> params_;
  std::vector<std::string> order_;

  ad::Tensor* tok_embed_ = nullptr;
  ad::Tensor* vis_w_ = nullptr;
  ad::Tensor* vis_b_ = nullptr;
  ad::Tensor* result_token_ = nullptr;
  ad::Tensor* premise_query_ = nullptr;
  ad::Tensor* result_query_ = nullptr;
  std::vector<EncoderLayerW> enc_v_layers_;
  LayerNormW enc_v_final_{};
  std::vector<EncoderLayerW> enc_c_layers_;
  LayerNormW enc_c_final_{};
  std::vector<DecoderLayerW> dec_layers_;
  LayerNormW dec_final_{};
  ad::AttnWeights rel_cross_{};
  ad::AttnWeights rel_self_{};
  ad::Tensor* rel_w_ = nullptr;
  ad::Tensor* rel_b_ = nullptr;
  ad::Tensor* cap_u_w_ = nullptr;
  ad::Tensor* cap_u_b_ = nullptr;
  ad::Tensor* cap_pos_ = nullptr;
  ad::Tensor* cap_out_w_ = nullptr;
  ad::Tensor* cap_out_b_ = nullptr;
  ad::Tensor* fd_w_ = nullptr;
  ad::Tensor* fd_b_ = nullptr;
  ad::Tensor* cf_gate_ = nullptr;
};

/// Sinusoidal positional encoding row.
Eigen::RowVectorXd positional_encoding(int position, int dim);

/// Optimizer / trainer state stored alongside checkpoints for exact resume.
struct TrainerState {
  long step = 0;
  std::string rng_state;
  std::map<std::string, std::pair<Mat, Mat>> adam;  // name -> (m, v)
};

void save_checkpoint(const std::filesystem::path& path, const Vgcm& model,
                     const std::map<std::string, std::string>& metadata = {},
                     const TrainerState* state = nullptr);

struct Checkpoint {
  ModelConfig config;
  std::map<std::string, std::string> metadata;
  std::unique_ptr<Vgcm> model;
  std::optional<TrainerState> state;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vgcm
