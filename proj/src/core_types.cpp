#include "vgcm/core_types.hpp"

#include <sstream>

namespace vgcm {

std::vector<std::string> validate_sequence(const EventSequence& seq,
                                           SequenceRole role) {
  std::vector<std::string> out;
  std::ostringstream os;
  const int n = seq.n_events();
  if (n < 4) {
    os << "N=" << n << " < 4";
    out.push_back(os.str());
    os.str("");
  }
  if (static_cast<int>(seq.chain_labels.size()) != n - 1) {
    os << "chain_labels length " << seq.chain_labels.size() << " != N-1="
       << (n - 1);
    out.push_back(os.str());
    os.str("");
  }
  for (int i = 0; i < n; ++i) {
    const Event& e = seq.events[i];
    if (e.frames() < 1) {
      os << "event " << (i + 1) << ": frames < 1";
      out.push_back(os.str());
      os.str("");
    }
    if (!(e.start_sec >= 0.0 && e.start_sec < e.end_sec)) {
      os << "event " << (i + 1) << ": span requires 0 <= start < end";
      out.push_back(os.str());
      os.str("");
    }
    if (e.caption.empty() && !e.masked) {
      os << "event " << (i + 1) << ": caption empty on unmasked event";
      out.push_back(os.str());
      os.str("");
    }
    if (i > 0 && seq.events[i - 1].start_sec >= e.start_sec) {
      os << "event " << (i + 1) << ": spans not strictly ordered by start";
      out.push_back(os.str());
      os.str("");
    }
  }
  for (size_t k = 0; k < seq.chain_labels.size(); ++k) {
    int v = seq.chain_labels[k];
    if (v != 0 && v != 1) {
      os << "chain_labels[" << k << "] not in {0,1}";
      out.push_back(os.str());
      os.str("");
    }
  }
  if (role == SequenceRole::train) {
    int pos = 0;
    for (int v : seq.chain_labels) pos += (v == 1);
    if (pos < 2) {
      os << "training sequence has " << pos << " causal premises, needs >= 2";
      out.push_back(os.str());
      os.str("");
    }
  }
  return out;
}

void validate_complete(const CompleteCausalityList& c) {
  if (c.items.empty())
    throw SchemaError("complete causality list is empty");
  for (size_t k = 0; k < c.items.size(); ++k) {
    if (c.items[k].size() != k + 1) {
      std::ostringstream os;
      os << "complete causality item " << k << " has length "
         << c.items[k].size() << ", expected " << (k + 1);
      throw SchemaError(os.str());
    }
    for (int v : c.items[k])
      if (v != 0 && v != 1)
        throw SchemaError("complete causality entries must be 0 or 1");
  }
}

std::vector<int> chain_labels_from_complete(const CompleteCausalityList& c) {
  validate_complete(c);
  return c.items.back();
}

CausalGraph graph_from_complete(const CompleteCausalityList& c) {
  validate_complete(c);
  CausalGraph g(c.n_events());
  for (size_t k = 0; k < c.items.size(); ++k) {
    for (size_t i = 0; i < c.items[k].size(); ++i) {
      if (c.items[k][i]) g.add_edge(static_cast<int>(i), static_cast<int>(k) + 1);
    }
  }
  return g;
}

CompleteCausalityList complete_from_graph(const CausalGraph& g) {
  CompleteCausalityList c;
  for (int target = 1; target < g.n_events(); ++target)
    c.items.push_back(g.row_into(target));
  return c;
}

}  // namespace vgcm
