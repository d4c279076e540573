#include "vgcm/vocab.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "vgcm/core_types.hpp"

namespace vgcm::vocab {

namespace {

const std::vector<std::string> kFiller = {
    "the", "a", "person", "and", "then", "because",
    "there", "are", "objects", "to", "near", "while",
};

const std::vector<std::string> kActions = {
    "lifts",    "pours",    "cuts",     "opens",    "closes",   "throws",
    "catches",  "pushes",   "pulls",    "carries",  "drops",    "stacks",
    "washes",   "dries",    "folds",    "paints",   "sweeps",   "wipes",
    "fills",    "empties",  "mixes",    "stirs",    "kicks",    "rolls",
    "ties",     "unties",   "hangs",    "lowers",   "raises",   "spins",
    "shakes",   "presses",  "turns",    "slides",   "grabs",    "releases",
    "measures", "attaches", "detaches", "inspects", "cleans",   "breaks",
    "repairs",  "wraps",    "unwraps",  "flips",    "holds",    "places",
};

const std::vector<std::string> kObjects = {
    "cup",      "bottle",   "tray",     "ladder",   "rope",     "bucket",
    "broom",    "towel",    "jacket",   "hat",      "glove",    "shoe",
    "ball",     "bat",      "racket",   "net",      "board",    "box",
    "crate",    "basket",   "knife",    "spoon",    "fork",     "plate",
    "bowl",     "pan",      "pot",      "kettle",   "oven",     "stove",
    "table",    "chair",    "bench",    "stool",    "shelf",    "cabinet",
    "door",     "window",   "curtain",  "rug",      "lamp",     "candle",
    "book",     "paper",    "pen",      "pencil",   "brush",    "canvas",
    "camera",   "phone",    "laptop",   "screen",   "cable",    "battery",
    "hammer",   "nail",     "screw",    "wrench",   "drill",    "saw",
    "plank",    "brick",    "tile",     "pipe",     "hose",     "valve",
    "wheel",    "tire",     "pump",     "chain",    "gear",     "engine",
    "bicycle",  "scooter",  "helmet",   "cone",     "flag",     "whistle",
    "guitar",   "drum",     "violin",   "piano",    "flute",    "speaker",
    "apple",    "orange",   "banana",   "carrot",   "potato",   "onion",
    "tomato",   "lettuce",  "bread",    "cheese",   "egg",      "flour",
    "sugar",    "salt",     "pepper",   "oil",      "vinegar",  "sauce",
    "dough",    "cake",     "cookie",   "pie",      "pizza",    "salad",
    "leash",    "collar",   "kennel",   "bone",     "feeder",   "cage",
    "tent",     "backpack", "compass",  "map",      "lantern",  "stake",
    "kayak",    "paddle",   "lifevest", "anchor",   "sail",     "oar",
    "shovel",   "rake",     "seed",     "plant",    "flower",   "vase",
    "soap",     "sponge",   "mop",      "duster",   "vacuum",   "bin",
    "mirror",
};

struct Table {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;
  int action0 = 0;
  int object0 = 0;

  Table() {
    words = {"<pad>", "<mask>", "<unk>"};
    for (const auto& w : kFiller) words.push_back(w);
    action0 = static_cast<int>(words.size());
    for (const auto& w : kActions) words.push_back(w);
    object0 = static_cast<int>(words.size());
    for (const auto& w : kObjects) words.push_back(w);
    for (size_t i = 0; i < words.size(); ++i)
      index.emplace(words[i], static_cast<int>(i));
  }
};

const Table& table() {
  static const Table t;
  return t;
}

}  // namespace

int size() { return static_cast<int>(table().words.size()); }

const std::vector<std::string>& words() { return table().words; }

int id(const std::string& word) {
  auto it = table().index.find(word);
  return it == table().index.end() ? kUnkToken : it->second;
}

std::vector<int> encode(const std::string& text) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::string decode(const std::vector<int>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kPadToken) continue;
    if (!out.empty()) out += ' ';
    int v = ids[i];
    if (v < 0 || v >= size()) v = kUnkToken;
    out += table().words[v];
  }
  return out;
}

int n_actions() { return static_cast<int>(kActions.size()); }
int n_objects() { return static_cast<int>(kObjects.size()); }

int action_id(int k) { return table().action0 + k % n_actions(); }
int object_id(int k) { return table().object0 + k % n_objects(); }

int word_id(const std::string& word) {
  auto it = table().index.find(word);
  if (it == table().index.end())
    throw std::logic_error("word not in fixed vocabulary: " + word);
  return it->second;
}

}  // namespace vgcm::vocab
