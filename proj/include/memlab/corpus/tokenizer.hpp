#pragma once

// Character-level tokenizer over a closed symbol table. Every domain
// generator emits only these symbols, so encode never needs a fallback.

#include <array>
#include <string>
#include <vector>

#include "memlab/common.hpp"

namespace memlab::corpus {

class CharTokenizer {
 public:
  static const std::string& charset() {
    static const std::string cs =
        " abcdefghijklmnopqrstuvwxyz0123456789()+-*/;=.:,|[]_@#%!?<>";
    return cs;
  }

  CharTokenizer() {
    lut_.fill(-1);
    const std::string& cs = charset();
    for (size_t i = 0; i < cs.size(); ++i)
      lut_[static_cast<unsigned char>(cs[i])] = static_cast<int>(i);
  }

  int vocab_size() const { return static_cast<int>(charset().size()); }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) {
      int id = lut_[static_cast<unsigned char>(c)];
      if (id < 0) throw Error(std::string("tokenizer: character not in closed vocabulary: '") + c + "'");
      out.push_back(id);
    }
    return out;
  }

  std::string decode(const std::vector<int>& ids) const {
    const std::string& cs = charset();
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
      if (id < 0 || id >= vocab_size()) throw Error("tokenizer: id out of range");
      out.push_back(cs[static_cast<size_t>(id)]);
    }
    return out;
  }

 private:
  std::array<int, 256> lut_;
};

}  // namespace memlab::corpus
