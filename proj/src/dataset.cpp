#include "vgcm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vgcm/vocab.hpp"

namespace vgcm {

namespace {

using ojson = nlohmann::ordered_json;

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_missing(const std::string& vid, int index) {
  std::ostringstream os;
  os << "feature provider missing event (" << vid << "," << index << ")";
  return os.str();
}

}  // namespace

Mat SeededFeatureProvider::features(const std::string& video_id,
                                    int event_index) const {
  uint64_t h = fnv1a(&seed_, sizeof(seed_));
  h = fnv1a(video_id.data(), video_id.size(), h);
  h = fnv1a(&event_index, sizeof(event_index), h);
  std::mt19937_64 rng(h);
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(frames_, feature_dim_);
  for (int i = 0; i < m.size(); ++i) m(i) = nd(rng);
  return m;
}

ContainerFeatureProvider::ContainerFeatureProvider(
    std::vector<std::pair<std::string, std::filesystem::path>> files) {
  for (auto& [vid, path] : files)
    videos_[vid] = PerVideo{read_feature_container(path)};
}

bool ContainerFeatureProvider::has(const std::string& video_id,
                                   int event_index) const {
  auto it = videos_.find(video_id);
  return it != videos_.end() && event_index >= 0 &&
         event_index < static_cast<int>(it->second.events.size());
}

Mat ContainerFeatureProvider::features(const std::string& video_id,
                                       int event_index) const {
  if (!has(video_id, event_index))
    throw IoError(format_missing(video_id, event_index));
  return videos_.at(video_id).events[event_index];
}

void SyntheticWorldConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (n_videos < 1) fail("n_videos must be >= 1");
  if (n_events_min < 4) fail("n_events_min must be >= 4");
  if (n_events_max < n_events_min || n_events_max > 11)
    fail("n_events range must lie within [4,11]");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (frames < 1) fail("frames must be >= 1");
  if (cause_strength < 0.0) fail("cause_strength must be >= 0");
  if (noise_std < 0.0) fail("noise_std must be >= 0");
  for (auto [name, rate] :
       {std::pair<const char*, double>{"edge_prob", edge_prob},
        {"context_edge_prob", context_edge_prob},
        {"confounder_rate", confounder_rate},
        {"illusory_rate", illusory_rate}}) {
    if (rate < 0.0 || rate > 1.0)
      fail(std::string(name) + " must lie in [0,1]");
  }
}

std::vector<EventSequence> generate_synthetic_corpus(
    const SyntheticWorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);

  std::vector<EventSequence> corpus;
  corpus.reserve(cfg.n_videos);

  for (int v = 0; v < cfg.n_videos; ++v) {
    std::uniform_int_distribution<int> nd_events(cfg.n_events_min,
                                                 cfg.n_events_max);
    const int n = nd_events(rng);
    const int result = n - 1;

    CausalGraph graph(n);
    if (!cfg.stress_only) {
      for (int j = 1; j < n; ++j) {
        double p = (j == n - 1) ? cfg.edge_prob : cfg.context_edge_prob;
        for (int i = 0; i < j; ++i)
          if (uni(rng) < p) graph.add_edge(i, j);
      }

      // relay chain a->b->c with the shortcut removed: a confounder that the
      // masking test must see through
      if (uni(rng) < cfg.confounder_rate && n >= 4) {
        std::uniform_int_distribution<int> pick(0, n - 3);
        int a = pick(rng);
        std::uniform_int_distribution<int> pick_b(a + 1, n - 2);
        int b = pick_b(rng);
        std::uniform_int_distribution<int> pick_c(b + 1, n - 1);
        int c = pick_c(rng);
        CausalGraph pruned(n);
        for (auto [x, y] : graph.edges())
          if (!(x == a && y == c)) pruned.add_edge(x, y);
        pruned.add_edge(a, b);
        pruned.add_edge(b, c);
        graph = pruned;
      }

      // dataset guarantee: at least two causal premises of the result event
      std::vector<int> non_parents;
      for (int i = 0; i < result; ++i)
        if (!graph.has_edge(i, result)) non_parents.push_back(i);
      int have = result - static_cast<int>(non_parents.size());
      while (have < 2 && !non_parents.empty()) {
        std::uniform_int_distribution<int> pick(
            0, static_cast<int>(non_parents.size()) - 1);
        int at = pick(rng);
        graph.add_edge(non_parents[at], result);
        non_parents.erase(non_parents.begin() + at);
        ++have;
      }
    }

    // illusory decoys, always over non-edges so their label stays 0
    std::set<int> tight_gap_after;          // index i: gap between i and i+1 tiny
    std::set<std::pair<int, int>> share_obj;  // j copies an object of i
    auto add_temporal_decoy = [&] {
      std::vector<int> cands;
      for (int i = 0; i + 1 < n; ++i)
        if (!graph.has_edge(i, i + 1)) cands.push_back(i);
      if (cands.empty()) return;
      std::uniform_int_distribution<int> pick(0, static_cast<int>(cands.size()) - 1);
      tight_gap_after.insert(cands[pick(rng)]);
    };
    auto add_existence_decoy = [&] {
      std::vector<std::pair<int, int>> cands;
      for (int j = 1; j < n; ++j)
        for (int i = 0; i < j; ++i)
          if (!graph.has_edge(i, j)) cands.emplace_back(i, j);
      if (cands.empty()) return;
      std::uniform_int_distribution<int> pick(0, static_cast<int>(cands.size()) - 1);
      share_obj.insert(cands[pick(rng)]);
    };
    if (cfg.stress_only) {
      for (int i = 0; i + 1 < n; ++i)
        if (uni(rng) < 0.5) tight_gap_after.insert(i);
      for (int j = 1; j < n; ++j)
        if (uni(rng) < 0.5) {
          std::uniform_int_distribution<int> pick(0, j - 1);
          share_obj.insert({pick(rng), j});
        }
    } else {
      if (uni(rng) < cfg.illusory_rate) add_temporal_decoy();
      if (uni(rng) < cfg.illusory_rate) add_existence_decoy();
    }

    // linear-Gaussian latents: z_j mixes its own latent with cause_strength-
    // weighted latents of its direct causes, normalized to unit-ish variance
    Mat latents(n, cfg.feature_dim);
    for (int i = 0; i < latents.size(); ++i) latents(i) = nd(rng);
    Mat z(n, cfg.feature_dim);
    std::vector<int> n_parents(n, 0);
    for (int j = 0; j < n; ++j) {
      Eigen::RowVectorXd acc = latents.row(j);
      int np = 0;
      for (int i = 0; i < j; ++i)
        if (graph.has_edge(i, j)) {
          acc += cfg.cause_strength * latents.row(i);
          ++np;
        }
      n_parents[j] = np;
      z.row(j) = acc / std::sqrt(1.0 + cfg.cause_strength * cfg.cause_strength * np);
    }

    // caption structure: an effect carries one object from each of its causes
    // (up to three) and the action of its last cause; existence decoys copy
    // an object without any edge, so shared tokens alone never prove causality
    std::vector<int> action(n), obj1(n), obj2(n);
    std::vector<std::vector<int>> extra_objs(n);
    std::uniform_int_distribution<int> pick_action(0, vocab::n_actions() - 1);
    std::uniform_int_distribution<int> pick_object(0, vocab::n_objects() - 1);
    for (int j = 0; j < n; ++j) {
      action[j] = pick_action(rng);
      obj1[j] = pick_object(rng);
      obj2[j] = pick_object(rng);
      std::vector<int> parents;
      for (int i = 0; i < j; ++i)
        if (graph.has_edge(i, j)) parents.push_back(i);
      if (!parents.empty()) {
        obj1[j] = obj1[parents.front()];
        action[j] = action[parents.back()];
        for (size_t p = 1; p < parents.size() && p < 3; ++p)
          extra_objs[j].push_back(obj1[parents[p]]);
      }
    }
    for (auto [i, j] : share_obj) {
      if (extra_objs[j].size() < 3)
        extra_objs[j].push_back(obj1[i]);
      else
        obj1[j] = obj1[i];
    }

    EventSequence seq;
    {
      std::ostringstream os;
      os << cfg.id_prefix << "-" << std::setw(5) << std::setfill('0') << v;
      seq.video_id = os.str();
    }
    double t = 0.5 + uni(rng);
    for (int j = 0; j < n; ++j) {
      Event e;
      e.index = j;
      e.start_sec = t;
      e.end_sec = t + 3.0 + 5.0 * uni(rng);
      double gap = tight_gap_after.count(j) ? 0.05 + 0.25 * uni(rng)
                                            : 1.5 + 4.5 * uni(rng);
      t = e.end_sec + gap;
      e.visual = Mat(cfg.frames, cfg.feature_dim);
      for (int f = 0; f < cfg.frames; ++f)
        for (int d = 0; d < cfg.feature_dim; ++d)
          e.visual(f, d) = z(j, d) + cfg.noise_std * nd(rng);
      e.caption = {vocab::word_id("the"),  vocab::word_id("person"),
                   vocab::action_id(action[j]), vocab::word_id("the"),
                   vocab::object_id(obj1[j])};
      for (int extra : extra_objs[j]) {
        e.caption.push_back(vocab::word_id("and"));
        e.caption.push_back(vocab::object_id(extra));
      }
      e.caption.push_back(vocab::word_id("near"));
      e.caption.push_back(vocab::word_id("the"));
      e.caption.push_back(vocab::object_id(obj2[j]));
      seq.events.push_back(std::move(e));
    }
    seq.chain_labels = graph.row_into(result);
    seq.complete_labels = complete_from_graph(graph);
    seq.planted_graph = graph;
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

namespace {

AnnotationRecord parse_record(const std::string& vid, const ojson& j,
                              std::vector<std::string>* warnings) {
  auto fail = [&](const std::string& what) {
    throw SchemaError("video " + vid + ": " + what);
  };
  AnnotationRecord r;
  r.video_id = vid;
  if (!j.is_object()) fail("record is not an object");
  if (!j.contains("duration") || !j["duration"].is_number())
    fail("missing numeric 'duration'");
  r.duration = j["duration"].get<double>();
  if (!j.contains("timestamps") || !j["timestamps"].is_array())
    fail("missing 'timestamps' array");
  for (const auto& ts : j["timestamps"]) {
    if (!ts.is_array() || ts.size() != 2) fail("timestamp entry is not [s,e]");
    r.timestamps.emplace_back(ts[0].get<double>(), ts[1].get<double>());
  }
  if (!j.contains("sentences") || !j["sentences"].is_array())
    fail("missing 'sentences' array");
  for (const auto& s : j["sentences"]) r.sentences.push_back(s.get<std::string>());

  const size_t n = r.sentences.size();
  if (r.timestamps.size() != n)
    fail("timestamps count " + std::to_string(r.timestamps.size()) +
         " != sentences count " + std::to_string(n));
  for (size_t i = 0; i < r.timestamps.size(); ++i) {
    auto [s, e] = r.timestamps[i];
    if (!(s < e)) fail("timestamp " + std::to_string(i + 1) + " has start >= end");
    if (i > 0 && r.timestamps[i - 1].second > s)
      fail("timestamps overlap at entry " + std::to_string(i + 1));
  }

  if (!j.contains("causality") || !j["causality"].is_array())
    fail("missing 'causality' array");
  for (const auto& c : j["causality"]) r.causality.push_back(c.get<int>());
  if (r.causality.size() + 1 != n)
    fail("causality length " + std::to_string(r.causality.size()) +
         " != N-1 = " + std::to_string(n - 1));

  if (j.contains("complete causality")) {
    CompleteCausalityList cc;
    for (const auto& item : j["complete causality"]) {
      std::vector<int> row;
      for (const auto& v : item) row.push_back(v.get<int>());
      cc.items.push_back(std::move(row));
    }
    try {
      validate_complete(cc);
    } catch (const SchemaError& e) {
      fail(e.what());
    }
    if (cc.n_events() != static_cast<int>(n))
      fail("complete causality implies N=" + std::to_string(cc.n_events()) +
           ", record has N=" + std::to_string(n));
    if (warnings && cc.items.back() != r.causality)
      warnings->push_back("video " + vid +
                          ": 'causality' differs from the last item of "
                          "'complete causality'");
    r.complete_causality = std::move(cc);
  }
  if (j.contains("planted_graph")) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j["planted_graph"])
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    r.planted_graph = std::move(edges);
  }
  if (j.contains("features_path"))
    r.features_path = j["features_path"].get<std::string>();
  return r;
}

ojson record_to_json(const AnnotationRecord& r) {
  ojson j;
  j["duration"] = r.duration;
  j["timestamps"] = ojson::array();
  for (auto [s, e] : r.timestamps) j["timestamps"].push_back({s, e});
  j["sentences"] = r.sentences;
  j["causality"] = r.causality;
  if (r.complete_causality) j["complete causality"] = r.complete_causality->items;
  if (r.planted_graph) {
    ojson edges = ojson::array();
    for (auto [i, jj] : *r.planted_graph) edges.push_back({i, jj});
    j["planted_graph"] = edges;
  }
  if (r.features_path) j["features_path"] = *r.features_path;
  return j;
}

}  // namespace

std::vector<AnnotationRecord> load_annotations(
    const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("annotation parse error in " + path.string() + ": " +
                      e.what());
  }
  if (!j.is_object())
    throw SchemaError("annotation file must be a map video_id -> record");
  std::vector<AnnotationRecord> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out.push_back(parse_record(it.key(), it.value(), warnings));
  return out;
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<AnnotationRecord>& records) {
  ojson j;
  for (const auto& r : records) j[r.video_id] = record_to_json(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write annotation file: " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<EventSequence> attach_features(
    const std::vector<AnnotationRecord>& records,
    const FeatureProvider& provider) {
  std::vector<EventSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    EventSequence seq;
    seq.video_id = r.video_id;
    const int n = static_cast<int>(r.sentences.size());
    for (int i = 0; i < n; ++i) {
      if (!provider.has(r.video_id, i))
        throw IoError(format_missing(r.video_id, i));
      Event e;
      e.index = i;
      e.start_sec = r.timestamps[i].first;
      e.end_sec = r.timestamps[i].second;
      e.caption = vocab::encode(r.sentences[i]);
      e.visual = provider.features(r.video_id, i);
      seq.events.push_back(std::move(e));
    }
    seq.chain_labels = r.causality;
    if (r.complete_causality) seq.complete_labels = r.complete_causality;
    if (r.planted_graph) {
      CausalGraph g(n);
      for (auto [i, j] : *r.planted_graph) g.add_edge(i - 1, j - 1);
      seq.planted_graph = std::move(g);
    }
    auto violations = validate_sequence(seq, SequenceRole::test);
    if (!violations.empty())
      throw SchemaError("video " + r.video_id + ": " + violations.front());
    out.push_back(std::move(seq));
  }
  return out;
}

void write_feature_container(const std::filesystem::path& path,
                             const std::vector<Mat>& event_features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature container: " + path.string());
  if (event_features.empty())
    throw IoError("feature container needs at least one event");
  const uint32_t n = static_cast<uint32_t>(event_features.size());
  const uint32_t frames = static_cast<uint32_t>(event_features[0].rows());
  const uint32_t dim = static_cast<uint32_t>(event_features[0].cols());
  const uint32_t version = 1, dtype = 0;  // 0 = float32
  out.write("VGFC", 4);
  for (uint32_t v : {version, n, frames, dim, dtype})
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  for (const Mat& m : event_features) {
    if (m.rows() != frames || m.cols() != dim)
      throw IoError("feature container events must share one shape");
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) {
        float f = static_cast<float>(m(r, c));
        out.write(reinterpret_cast<const char*>(&f), sizeof(f));
      }
  }
}

std::vector<Mat> read_feature_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature container: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "VGFC")
    throw SchemaError("bad feature container magic in " + path.string());
  uint32_t version, n, frames, dim, dtype;
  for (uint32_t* v : {&version, &n, &frames, &dim, &dtype})
    in.read(reinterpret_cast<char*>(v), sizeof(*v));
  if (!in || version != 1 || dtype != 0)
    throw SchemaError("unsupported feature container header in " + path.string());
  std::vector<Mat> out;
  out.reserve(n);
  for (uint32_t e = 0; e < n; ++e) {
    Mat m(frames, dim);
    for (uint32_t r = 0; r < frames; ++r)
      for (uint32_t c = 0; c < dim; ++c) {
        float f;
        in.read(reinterpret_cast<char*>(&f), sizeof(f));
        m(r, c) = static_cast<double>(f);
      }
    out.push_back(std::move(m));
  }
  if (!in) throw SchemaError("feature container truncated: " + path.string());
  return out;
}

std::string caption_text(const Event& e) { return vocab::decode(e.caption); }

AnnotationRecord record_from_sequence(const EventSequence& seq) {
  AnnotationRecord r;
  r.video_id = seq.video_id;
  for (const Event& e : seq.events) {
    r.timestamps.emplace_back(e.start_sec, e.end_sec);
    r.sentences.push_back(caption_text(e));
  }
  r.duration = seq.events.empty() ? 0.0 : seq.events.back().end_sec + 1.0;
  r.causality = seq.chain_labels;
  if (seq.complete_labels) r.complete_causality = seq.complete_labels;
  if (seq.planted_graph) {
    std::vector<std::pair<int, int>> edges;
    for (auto [i, j] : seq.planted_graph->edges())
      edges.emplace_back(i + 1, j + 1);
    r.planted_graph = std::move(edges);
  }
  return r;
}

void save_corpus(const std::filesystem::path& dir,
                 const std::vector<EventSequence>& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  std::vector<AnnotationRecord> records;
  records.reserve(corpus.size());
  for (const auto& seq : corpus) {
    AnnotationRecord r = record_from_sequence(seq);
    std::string rel = "features/" + seq.video_id + ".vgfc";
    std::vector<Mat> feats;
    for (const Event& e : seq.events) feats.push_back(e.visual);
    write_feature_container(dir / rel, feats);
    r.features_path = rel;
    records.push_back(std::move(r));
  }
  save_annotations(dir / "manifest.json", records);
}

std::vector<EventSequence> load_corpus(const std::filesystem::path& manifest) {
  auto records = load_annotations(manifest);
  std::vector<std::pair<std::string, std::filesystem::path>> files;
  for (const auto& r : records) {
    if (!r.features_path)
      throw SchemaError("video " + r.video_id + ": manifest lacks features_path");
    files.emplace_back(r.video_id, manifest.parent_path() / *r.features_path);
  }
  ContainerFeatureProvider provider(std::move(files));
  return attach_features(records, provider);
}

}  // namespace vgcm
