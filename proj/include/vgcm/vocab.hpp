#pragma once

#include <string>
#include <vector>

namespace vgcm::vocab {

// Closed vocabulary for synthetic captions and auxiliary texts.
// Ids 0..2 are reserved: <pad>, <mask>, <unk>. Whitespace tokenization;
// anything outside the vocabulary maps to <unk>.

int size();
const std::vector<std::string>& words();
int id(const std::string& word);
std::vector<int> encode(const std::string& text);
std::string decode(const std::vector<int>& ids);

int n_actions();
int n_objects();
int action_id(int k);  // token id of the k-th action word
int object_id(int k);  // token id of the k-th object word

// Frequently used template words; throws if the word is not in the vocabulary.
int word_id(const std::string& word);

}  // namespace vgcm::vocab
