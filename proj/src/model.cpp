#include "vgcm/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vgcm/vocab.hpp"

namespace vgcm {

using ad::Graph;
using ad::Var;

void ModelConfig::validate() const {
  if (model_dim < 1 || n_heads < 1 || model_dim % n_heads != 0)
    throw ConfigError("model_dim must be a positive multiple of n_heads");
  if (n_encoder_layers < 0 || n_decoder_layers < 0)
    throw ConfigError("layer counts must be >= 0");
  if (max_caption_len < 1 || max_aux_len < 1)
    throw ConfigError("maximum text lengths must be >= 1");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must lie in [0,1)");
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
}

void MaskSpec::validate(int n_events) const {
  if (masked_indices.empty())
    throw ConfigError("mask spec must name at least one premise event");
  for (int k : masked_indices)
    if (k < 0 || k >= n_events - 1)
      throw ConfigError("mask spec index outside premise range");
}

Event mask_event(const Event& e) {
  Event m = e;
  m.visual.setZero();
  m.caption.assign(e.caption.size(), kMaskToken);
  m.masked = true;
  return m;
}

Eigen::RowVectorXd positional_encoding(int position, int dim) {
  Eigen::RowVectorXd pe(dim);
  for (int i = 0; i < dim; i += 2) {
    double div = std::exp(-(std::log(10000.0)) * i / dim);
    pe(i) = std::sin(position * div);
    if (i + 1 < dim) pe(i + 1) = std::cos(position * div);
  }
  return pe;
}

namespace {

Mat position_matrix(int n_rows, int dim, int first_position = 0) {
  Mat m(n_rows, dim);
  for (int r = 0; r < n_rows; ++r)
    m.row(r) = positional_encoding(first_position + r, dim);
  return m;
}

}  // namespace

Vgcm::Vgcm(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab::size();
  cfg_.validate();
  init_params();
}

ad::Tensor& Vgcm::create(const std::string& name, int rows, int cols) {
  auto t = std::make_unique<ad::Tensor>(name, rows, cols);
  ad::Tensor* raw = t.get();
  params_.emplace(name, std::move(t));
  order_.push_back(name);
  return *raw;
}

ad::AttnWeights Vgcm::make_attn(const std::string& p) {
  const int d = cfg_.model_dim;
  return ad::AttnWeights{&create(p + ".wq", d, d), &create(p + ".bq", 1, d),
                         &create(p + ".wk", d, d), &create(p + ".bk", 1, d),
                         &create(p + ".wv", d, d), &create(p + ".bv", 1, d),
                         &create(p + ".wo", d, d), &create(p + ".bo", 1, d)};
}

Vgcm::EncoderLayerW Vgcm::make_encoder_layer(const std::string& p) {
  const int d = cfg_.model_dim;
  const int h = d * cfg_.ffn_mult;
  EncoderLayerW l;
  l.attn = make_attn(p + ".attn");
  l.ln1 = {&create(p + ".ln1.g", 1, d), &create(p + ".ln1.b", 1, d)};
  l.ln2 = {&create(p + ".ln2.g", 1, d), &create(p + ".ln2.b", 1, d)};
  l.ffn = {&create(p + ".ffn.w1", d, h), &create(p + ".ffn.b1", 1, h),
           &create(p + ".ffn.w2", h, d), &create(p + ".ffn.b2", 1, d)};
  return l;
}

Vgcm::DecoderLayerW Vgcm::make_decoder_layer(const std::string& p) {
  const int d = cfg_.model_dim;
  const int h = d * cfg_.ffn_mult;
  DecoderLayerW l;
  l.self_attn = make_attn(p + ".self");
  l.cross_attn = make_attn(p + ".cross");
  l.ln1 = {&create(p + ".ln1.g", 1, d), &create(p + ".ln1.b", 1, d)};
  l.ln2 = {&create(p + ".ln2.g", 1, d), &create(p + ".ln2.b", 1, d)};
  l.ln3 = {&create(p + ".ln3.g", 1, d), &create(p + ".ln3.b", 1, d)};
  l.ffn = {&create(p + ".ffn.w1", d, h), &create(p + ".ffn.b1", 1, h),
           &create(p + ".ffn.w2", h, d), &create(p + ".ffn.b2", 1, d)};
  return l;
}

void Vgcm::init_params() {
  const int d = cfg_.model_dim;
  tok_embed_ = &create("embed.token", cfg_.vocab_size, d);
  vis_w_ = &create("enc_v.proj.w", cfg_.feature_dim, d);
  vis_b_ = &create("enc_v.proj.b", 1, d);
  result_token_ = &create("enc_v.result_token", 1, d);
  premise_query_ = &create("dec.premise_query", 1, d);
  result_query_ = &create("dec.result_query", 1, d);
  for (int i = 0; i < cfg_.n_encoder_layers; ++i) {
    enc_v_layers_.push_back(make_encoder_layer("enc_v.l" + std::to_string(i)));
    enc_c_layers_.push_back(make_encoder_layer("enc_c.l" + std::to_string(i)));
  }
  enc_v_final_ = {&create("enc_v.final_ln.g", 1, d),
                  &create("enc_v.final_ln.b", 1, d)};
  enc_c_final_ = {&create("enc_c.final_ln.g", 1, d),
                  &create("enc_c.final_ln.b", 1, d)};
  for (int i = 0; i < cfg_.n_decoder_layers; ++i)
    dec_layers_.push_back(make_decoder_layer("dec.l" + std::to_string(i)));
  dec_final_ = {&create("dec.final_ln.g", 1, d),
                &create("dec.final_ln.b", 1, d)};
  rel_cross_ = make_attn("rel.cross");
  rel_self_ = make_attn("rel.self");
  rel_w_ = &create("rel.out.w", 4 * d, 1);
  rel_b_ = &create("rel.out.b", 1, 1);
  cap_u_w_ = &create("cap.u.w", d, d);
  cap_u_b_ = &create("cap.u.b", 1, d);
  cap_pos_ = &create("cap.pos", cfg_.max_caption_len, d);
  cap_out_w_ = &create("cap.out.w", d, cfg_.vocab_size);
  cap_out_b_ = &create("cap.out.b", 1, cfg_.vocab_size);
  fd_w_ = &create("fd.out.w", 3 * d, d);
  fd_b_ = &create("fd.out.b", 1, d);
  cf_gate_ = &create("cf.gate_w", 1, d);

  // Glorot-normal weights, zero biases, unit layer-norm gains. Creation and
  // initialization order is fixed so a seed pins every parameter bit.
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (const std::string& name : order_) {
    ad::Tensor& t = *params_[name];
    const bool is_gain = name.ends_with("ln.g") || name.ends_with("ln1.g") ||
                         name.ends_with("ln2.g") || name.ends_with("ln3.g");
    const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") ||
                         name.ends_with(".b2") || name.ends_with(".bq") ||
                         name.ends_with(".bk") || name.ends_with(".bv") ||
                         name.ends_with(".bo");
    if (is_gain) {
      t.value.setOnes();
      continue;
    }
    if (is_bias) {
      t.value.setZero();
      continue;
    }
    if (name == "embed.token" || name == "cap.pos" ||
        name.ends_with("_token") || name.ends_with("_query") ||
        name == "cf.gate_w") {
      for (int i = 0; i < t.value.size(); ++i) t.value(i) = 0.02 * nd(rng);
      continue;
    }
    double std_dev =
        std::sqrt(2.0 / static_cast<double>(t.value.rows() + t.value.cols()));
    for (int i = 0; i < t.value.size(); ++i) t.value(i) = std_dev * nd(rng);
  }
}

std::vector<ad::Tensor*> Vgcm::parameters() {
  std::vector<ad::Tensor*> out;
  out.reserve(order_.size());
  for (const std::string& name : order_) out.push_back(params_[name].get());
  return out;
}

long Vgcm::parameter_count() const {
  long n = 0;
  for (const auto& [name, t] : params_) n += t->value.size();
  return n;
}

void Vgcm::zero_grads() {
  for (auto& [name, t] : params_) t->zero_grad();
}

ad::Tensor& Vgcm::tensor(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::logic_error("no such tensor: " + name);
  return *it->second;
}

Var Vgcm::encode_stack(Graph& g, Var x,
                       const std::vector<EncoderLayerW>& layers,
                       const LayerNormW& final_ln) {
  for (const auto& l : layers) {
    Var n1 = ad::layer_norm(x, g.param(*l.ln1.g), g.param(*l.ln1.b));
    x = ad::add(x, ad::multihead_attention(l.attn, n1, n1, cfg_.n_heads));
    Var n2 = ad::layer_norm(x, g.param(*l.ln2.g), g.param(*l.ln2.b));
    Var f = ad::linear(ad::gelu(ad::linear(n2, *l.ffn.w1, *l.ffn.b1)),
                       *l.ffn.w2, *l.ffn.b2);
    x = ad::add(x, f);
  }
  return ad::layer_norm(x, g.param(*final_ln.g), g.param(*final_ln.b));
}

Var Vgcm::decode_stack(Graph& g, Var queries, Var memory) {
  Var x = queries;
  for (const auto& l : dec_layers_) {
    Var n1 = ad::layer_norm(x, g.param(*l.ln1.g), g.param(*l.ln1.b));
    x = ad::add(x, ad::multihead_attention(l.self_attn, n1, n1, cfg_.n_heads));
    Var n2 = ad::layer_norm(x, g.param(*l.ln2.g), g.param(*l.ln2.b));
    x = ad::add(x,
                ad::multihead_attention(l.cross_attn, n2, memory, cfg_.n_heads));
    Var n3 = ad::layer_norm(x, g.param(*l.ln3.g), g.param(*l.ln3.b));
    Var f = ad::linear(ad::gelu(ad::linear(n3, *l.ffn.w1, *l.ffn.b1)),
                       *l.ffn.w2, *l.ffn.b2);
    x = ad::add(x, f);
  }
  return ad::layer_norm(x, g.param(*dec_final_.g), g.param(*dec_final_.b));
}

Var Vgcm::caption_feature(Graph& g, const std::vector<int>& tokens,
                          int position_slot) {
  std::vector<int> ids = tokens;
  if (static_cast<int>(ids.size()) > cfg_.max_caption_len)
    ids.resize(cfg_.max_caption_len);
  if (ids.empty()) ids.push_back(kPadToken);
  Var e = ad::embedding(g, *tok_embed_, ids);
  int t = static_cast<int>(ids.size());
  e = ad::add(e, g.constant(position_matrix(t, cfg_.model_dim)));
  Var h = encode_stack(g, e, enc_c_layers_, enc_c_final_);
  Eigen::VectorXd w(t);
  for (int i = 0; i < t; ++i) w(i) = (ids[i] != kPadToken) ? 1.0 : 0.0;
  if (w.sum() == 0.0) w.setOnes();
  Var pooled = ad::mean_rows_weighted(h, w);
  return ad::add(pooled, g.constant(positional_encoding(
                             position_slot, cfg_.model_dim)));
}

Var Vgcm::build_text(Graph& g, const std::vector<int>& tokens,
                     int position_slot) {
  std::vector<int> ids = tokens;
  if (static_cast<int>(ids.size()) > cfg_.max_aux_len)
    ids.resize(cfg_.max_aux_len);
  return caption_feature(g, ids, position_slot);
}

SeqVars Vgcm::build_sequence(Graph& g, const SequenceView& view, PassKind kind,
                             InferenceBudget* budget) {
  const EventSequence& seq = *view.seq;
  const int n = seq.n_events();
  const int d = cfg_.model_dim;
  if (budget) {
    switch (kind) {
      case PassKind::unmasked: ++budget->unmasked_passes; break;
      case PassKind::masked: ++budget->masked_passes; break;
      case PassKind::conditional: ++budget->conditional_passes; break;
      case PassKind::result: ++budget->result_passes; break;
    }
  }

  // Premise slots 0..n-2 plus the learned result slot at position n-1.
  Mat pooled = Mat::Zero(n - 1, cfg_.feature_dim);
  for (int i = 0; i < n - 1; ++i) {
    if (view.masked.count(i)) continue;  // masked: all-zero visual slot
    auto rep = view.replaced.find(i);
    const Event& e = (rep != view.replaced.end()) ? rep->second : seq.events[i];
    pooled.row(i) = e.visual.colwise().mean();
  }
  Var vis = ad::linear(g.constant(pooled), *vis_w_, *vis_b_);
  Var enc_in = ad::vstack({vis, g.param(*result_token_)});
  enc_in = ad::add(enc_in, g.constant(position_matrix(n, d)));
  Var f = encode_stack(g, enc_in, enc_v_layers_, enc_v_final_);

  std::vector<Var> caps;
  caps.reserve(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    const Event* e = &seq.events[i];
    auto rep = view.replaced.find(i);
    if (rep != view.replaced.end()) e = &rep->second;
    if (view.masked.count(i)) {
      std::vector<int> masked_ids(e->caption.size(), kMaskToken);
      if (masked_ids.empty()) masked_ids.push_back(kMaskToken);
      caps.push_back(caption_feature(g, masked_ids, i));
    } else {
      caps.push_back(caption_feature(g, e->caption, i));
    }
  }
  Var memory = ad::vstack({f, ad::vstack(caps)});

  std::vector<Var> qrows;
  qrows.reserve(n);
  for (int t = 0; t < n - 1; ++t) qrows.push_back(g.param(*premise_query_));
  qrows.push_back(g.param(*result_query_));
  Var queries = ad::add(ad::vstack(qrows), g.constant(position_matrix(n, d)));
  Var o = decode_stack(g, queries, memory);
  return {f, o};
}

SeqVars Vgcm::build_single_event(Graph& g, const Event& e,
                                 InferenceBudget* budget) {
  if (budget) ++budget->result_passes;
  const int d = cfg_.model_dim;
  Mat pooled = e.visual.colwise().mean();
  Var vis = ad::linear(g.constant(pooled), *vis_w_, *vis_b_);
  vis = ad::add(vis, g.constant(positional_encoding(e.index, d)));
  Var f = encode_stack(g, vis, enc_v_layers_, enc_v_final_);
  Var cap = caption_feature(g, e.caption, e.index);
  Var memory = ad::vstack({f, cap});
  Var queries = ad::add(g.param(*result_query_),
                        g.constant(positional_encoding(e.index, d)));
  Var o = decode_stack(g, queries, memory);
  return {f, o};
}

Var Vgcm::build_cross_attention(Graph& g, Var q, Var kv) {
  (void)g;
  return ad::multihead_attention(rel_cross_, q, kv, cfg_.n_heads);
}

Var Vgcm::build_self_attention(Graph& g, Var x) {
  (void)g;
  return ad::multihead_attention(rel_self_, x, x, cfg_.n_heads);
}

Var Vgcm::build_relation_logit(Graph& g, Var o_m, Var o_p, Var o_result) {
  Var q_seq = ad::vstack({o_m, o_result});
  Var kv_seq = ad::vstack({o_p, o_result});
  Var cross = build_cross_attention(g, q_seq, kv_seq);
  Var self = build_self_attention(g, q_seq);
  Var feat = ad::hstack({ad::flatten_row(cross), ad::flatten_row(self)});
  return ad::linear(feat, *rel_w_, *rel_b_);
}

Var Vgcm::build_caption_logits(Graph& g, Var o_p) {
  const int t = cfg_.max_caption_len;
  Var base = ad::linear(o_p, *cap_u_w_, *cap_u_b_);
  std::vector<Var> rows(t, base);
  Var h = ad::add(ad::vstack(rows), g.param(*cap_pos_));
  return ad::linear(ad::gelu(h), *cap_out_w_, *cap_out_b_);
}

Var Vgcm::build_decode_single_slot(Graph& g, Var slot) {
  Var queries = ad::add(g.param(*result_query_),
                        g.constant(positional_encoding(0, cfg_.model_dim)));
  return decode_stack(g, queries, slot);
}

Mat Vgcm::forward_path(const EventSequence& seq, const MaskSpec* mask,
                       int slice_index, InferenceBudget* budget) {
  const int n = seq.n_events();
  if (slice_index < 1 || slice_index > n - 1)
    throw std::out_of_range("slice_index must lie in [1, N-1]");
  SequenceView view{&seq, {}, {}};
  PassKind kind = PassKind::unmasked;
  if (mask) {
    mask->validate(n);
    view.masked = mask->masked_indices;
    kind = PassKind::masked;
  }
  Graph g;
  SeqVars vars = build_sequence(g, view, kind, budget);
  return g.value(vars.outputs).row(slice_index);
}

std::pair<Mat, Mat> Vgcm::encode_result_event(const Event& e,
                                              InferenceBudget* budget) {
  Graph g;
  SeqVars vars = build_single_event(g, e, budget);
  return {g.value(vars.encoded), g.value(vars.outputs)};
}

RelationLogit Vgcm::relation_head(const Mat& o_m, const Mat& o_p,
                                  const Mat& o_result) {
  if (o_m.cols() != cfg_.model_dim || o_p.cols() != cfg_.model_dim ||
      o_result.cols() != cfg_.model_dim)
    throw ConfigError("relation head inputs must be 1 x model_dim");
  Graph g;
  Var logit = build_relation_logit(g, g.constant(o_m), g.constant(o_p),
                                   g.constant(o_result));
  return RelationLogit{g.value(logit)(0, 0)};
}

Mat Vgcm::caption_head(const Mat& o_p) {
  Graph g;
  Var logits = build_caption_logits(g, g.constant(o_p));
  return g.value(logits);
}

// ---- checkpoint io ----

namespace {

using ojson = nlohmann::ordered_json;

ojson config_to_json(const ModelConfig& c) {
  ojson j;
  j["model_dim"] = c.model_dim;
  j["n_encoder_layers"] = c.n_encoder_layers;
  j["n_decoder_layers"] = c.n_decoder_layers;
  j["n_heads"] = c.n_heads;
  j["vocab_size"] = c.vocab_size;
  j["max_caption_len"] = c.max_caption_len;
  j["max_aux_len"] = c.max_aux_len;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  j["feature_dim"] = c.feature_dim;
  j["ffn_mult"] = c.ffn_mult;
  return j;
}

ModelConfig config_from_json(const ojson& j) {
  ModelConfig c;
  c.model_dim = j.at("model_dim").get<int>();
  c.n_encoder_layers = j.at("n_encoder_layers").get<int>();
  c.n_decoder_layers = j.at("n_decoder_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_caption_len = j.at("max_caption_len").get<int>();
  c.max_aux_len = j.at("max_aux_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  return c;
}

void write_mat(std::ostream& out, const Mat& m) {
  uint32_t rows = static_cast<uint32_t>(m.rows());
  uint32_t cols = static_cast<uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

Mat read_mat(std::istream& in) {
  uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  Mat m(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(r, c) = v;
    }
  return m;
}

void write_string(std::ostream& out, const std::string& s) {
  uint64_t len = s.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(s.data(), static_cast<std::streamsize>(len));
}

std::string read_string(std::istream& in) {
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Vgcm& model,
                     const std::map<std::string, std::string>& metadata,
                     const TrainerState* state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  ojson j;
  j["config"] = config_to_json(model.config());
  j["metadata"] = metadata;
  out.write("VGCK", 4);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  write_string(out, j.dump());

  Vgcm& m = const_cast<Vgcm&>(model);
  const auto& names = model.tensor_names();
  uint64_t count = names.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& name : names) {
    write_string(out, name);
    write_mat(out, m.tensor(name).value);
  }
  uint8_t has_state = state ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&has_state), sizeof(has_state));
  if (state) {
    uint64_t step = static_cast<uint64_t>(state->step);
    out.write(reinterpret_cast<const char*>(&step), sizeof(step));
    write_string(out, state->rng_state);
    uint64_t n = state->adam.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& [name, mv] : state->adam) {
      write_string(out, name);
      write_mat(out, mv.first);
      write_mat(out, mv.second);
    }
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || std::string(magic, 4) != "VGCK" || version != 1)
    throw SchemaError("bad checkpoint header in " + path.string());
  ojson j = ojson::parse(read_string(in));

  Checkpoint ck;
  ck.config = config_from_json(j.at("config"));
  for (auto it = j.at("metadata").begin(); it != j.at("metadata").end(); ++it)
    ck.metadata[it.key()] = it.value().get<std::string>();
  ck.model = std::make_unique<Vgcm>(ck.config);

  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(in);
    Mat value = read_mat(in);
    if (!ck.model->has_tensor(name))
      throw SchemaError("checkpoint tensor not in model: " + name);
    ad::Tensor& t = ck.model->tensor(name);
    if (t.value.rows() != value.rows() || t.value.cols() != value.cols())
      throw SchemaError("checkpoint tensor shape mismatch for " + name);
    t.value = std::move(value);
  }
  uint8_t has_state = 0;
  in.read(reinterpret_cast<char*>(&has_state), sizeof(has_state));
  if (has_state) {
    TrainerState st;
    uint64_t step = 0;
    in.read(reinterpret_cast<char*>(&step), sizeof(step));
    st.step = static_cast<long>(step);
    st.rng_state = read_string(in);
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    for (uint64_t i = 0; i < n; ++i) {
      std::string name = read_string(in);
      Mat m = read_mat(in);
      Mat v = read_mat(in);
      st.adam[name] = {std::move(m), std::move(v)};
    }
    ck.state = std::move(st);
  }
  if (!in) throw SchemaError("checkpoint truncated: " + path.string());
  return ck;
}

}  // namespace vgcm
