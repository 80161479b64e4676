#pragma once

// Synthetic domain generators, three per category plus two high-entropy
// extras. Structural domains sample small grammars, semi-structural ones fill
// fixed record skeletons, free-text ones walk seeded Markov chains over word
// lists. Everything is a pure function of (domain seed, line rng).

#include <string>
#include <vector>

#include "memlab/tensor/rng.hpp"

namespace memlab::corpus {

enum class DomainCategory { structural, semi_structural, free_text };

inline const char* to_string(DomainCategory c) {
  switch (c) {
    case DomainCategory::structural: return "structural";
    case DomainCategory::semi_structural: return "semi_structural";
    default: return "free_text";
  }
}

inline DomainCategory category_from(const std::string& s) {
  if (s == "structural") return DomainCategory::structural;
  if (s == "semi_structural") return DomainCategory::semi_structural;
  if (s == "free_text") return DomainCategory::free_text;
  throw ConfigError("unknown domain category: " + s);
}

struct DomainSpec {
  std::string name;
  DomainCategory category = DomainCategory::free_text;
  uint64_t grammar_seed = 0;
};

namespace detail {

inline const std::vector<std::string>& common_words() {
  static const std::vector<std::string> w = {
      "the",    "river",  "stone",  "light",  "morning", "garden", "walked", "slowly",
      "under",  "bright", "winter", "window", "voice",   "quiet",  "road",   "between",
      "field",  "old",    "house",  "smoke",  "dark",    "water",  "early",  "evening",
      "letter", "small",  "yellow", "bird",   "forest",  "turned", "toward", "distant",
      "sound",  "memory", "circle", "paper",  "lantern", "bridge", "north",  "wind",
      "carried","dust",   "shadow", "long",   "summer",  "rain",   "green",  "door",
      "opened", "again",  "waited", "years",  "silver",  "clock",  "spoke",  "softly"};
  return w;
}

inline const std::vector<std::string>& tech_words() {
  static const std::vector<std::string> w = {
      "packet",  "buffer",  "thread",  "kernel", "socket", "index",   "cache",   "queue",
      "worker",  "shard",   "replica", "commit", "branch", "handler", "timeout", "retry",
      "stream",  "batch",   "tensor",  "layer",  "token",  "vector",  "server",  "client",
      "request", "payload", "schema",  "table",  "column", "cursor",  "driver",  "signal",
      "mutex",   "atomic",  "region",  "page",   "block",  "frame",   "stack",   "heap",
      "daemon",  "config",  "module",  "parser", "lexer",  "probe",   "metric",  "trace"};
  return w;
}

inline const std::vector<std::string>& soup_words() {
  static const std::vector<std::string> w = {
      "vortex", "ember",  "quill",   "fathom", "zephyr", "cobalt", "tundra", "prism",
      "falcon", "umbra",  "krill",   "onyx",   "jasper", "nimbus", "quartz", "vellum",
      "wisp",   "yonder", "zeal",    "brine",  "cinder", "dapple", "eddy",   "flint",
      "gossam", "helix",  "ingot",   "jetsam", "kelp",   "lumen",  "murmur", "nectar",
      "opal",   "pumice", "quiver",  "russet", "sable",  "tempo",  "updraft","verdant",
      "willow", "xenon",  "yarrow",  "zenith", "arbor",  "bramble","crag",   "dune",
      "estuary","fjord",  "grotto",  "heather","islet",  "juniper","knoll",  "lagoon",
      "mesa",   "nook",   "oxbow",   "pebble", "quarry", "ridge",  "swale",  "thicket"};
  return w;
}

inline char variable_char(RngStream& rng) {
  return static_cast<char>('a' + rng.next_below(26));
}

// --- structural -----------------------------------------------------------

inline std::string gen_expr(RngStream& rng, int depth) {
  if (depth <= 0 || rng.next_double() < 0.35) {
    if (rng.next_double() < 0.5) return std::string(1, variable_char(rng));
    return std::to_string(rng.next_below(100));
  }
  static const char* ops = "+-*/";
  std::string op(1, ops[rng.next_below(4)]);
  return "(" + gen_expr(rng, depth - 1) + op + gen_expr(rng, depth - 1) + ")";
}

inline std::string line_brackets(RngStream& rng, int min_len, int max_len) {
  std::string out;
  while (static_cast<int>(out.size()) < min_len) {
    std::string e = gen_expr(rng, 3);
    std::string piece = out.empty() ? e : ";" + e;
    if (static_cast<int>(out.size() + piece.size()) > max_len) {
      piece = out.empty() ? "(a+b)" : ";(a+b)";
      if (static_cast<int>(out.size() + piece.size()) > max_len) break;
    }
    out += piece;
  }
  return out;
}

inline std::string gen_sexpr(RngStream& rng, int depth) {
  static const std::vector<std::string> ops = {"add", "mul", "sub", "div", "min", "max", "neg"};
  if (depth <= 0 || rng.next_double() < 0.3) return std::to_string(rng.next_below(50));
  const std::string& op = ops[rng.next_below(ops.size())];
  int arity = op == "neg" ? 1 : 2;
  std::string out = "(" + op;
  for (int i = 0; i < arity; ++i) out += " " + gen_sexpr(rng, depth - 1);
  return out + ")";
}

inline std::string line_sexpr(RngStream& rng, int min_len, int max_len) {
  std::string out;
  while (static_cast<int>(out.size()) < min_len) {
    std::string e = gen_sexpr(rng, 3);
    std::string piece = out.empty() ? e : " " + e;
    if (static_cast<int>(out.size() + piece.size()) > max_len) {
      piece = out.empty() ? "(neg 1)" : " (neg 1)";
      if (static_cast<int>(out.size() + piece.size()) > max_len) break;
    }
    out += piece;
  }
  return out;
}

inline std::string line_assign(RngStream& rng, int min_len, int max_len) {
  static const std::vector<std::string> fns = {"fma", "dot", "mix", "pow", "abs", "mod"};
  static const char* ops = "+-*";
  std::string out;
  while (static_cast<int>(out.size()) < min_len) {
    std::string stmt = "let ";
    stmt += variable_char(rng);
    stmt += std::to_string(rng.next_below(10));
    stmt += "=";
    stmt += fns[rng.next_below(fns.size())];
    stmt += "(";
    stmt += variable_char(rng);
    stmt += ",";
    stmt += std::to_string(rng.next_below(100));
    stmt += ")";
    if (rng.next_double() < 0.5) {
      stmt += ops[rng.next_below(3)];
      stmt += variable_char(rng);
    }
    stmt += ";";
    if (static_cast<int>(out.size() + stmt.size()) > max_len) {
      stmt = "let z=a;";
      if (static_cast<int>(out.size() + stmt.size()) > max_len) break;
    }
    out += stmt;
  }
  return out;
}

inline std::string line_hexblob(RngStream& rng, int min_len, int max_len) {
  static const char* hexd = "0123456789abcdef";
  std::string out;
  while (static_cast<int>(out.size()) + 7 <= max_len && static_cast<int>(out.size()) < min_len) {
    if (!out.empty()) out += " ";
    out += "0x";
    for (int i = 0; i < 4; ++i) out += hexd[rng.next_below(16)];
  }
  return out;
}

// --- semi-structural -------------------------------------------------------

inline std::string line_records(RngStream& rng, int min_len, int max_len) {
  static const std::vector<std::string> depts = {"sales", "legal", "intake", "audit", "fleet", "labs"};
  const auto& words = common_words();
  std::string out = "id:";
  out += std::to_string(10000 + rng.next_below(90000));
  out += "|name:" + words[rng.next_below(words.size())] + " " + words[rng.next_below(words.size())];
  out += "|dept:" + depts[rng.next_below(depts.size())];
  out += "|score:" + std::to_string(rng.next_below(100));
  out += "|tag:" + std::string(1, variable_char(rng)) + std::to_string(rng.next_below(10));
  out += "|note:";
  while (static_cast<int>(out.size()) < min_len) {
    std::string piece = " " + words[rng.next_below(words.size())];
    if (static_cast<int>(out.size() + piece.size()) > max_len) break;
    out += piece;
  }
  return out;
}

inline std::string line_logline(RngStream& rng, int min_len, int max_len) {
  static const std::vector<std::string> lvls = {"info", "warn", "error", "debug"};
  static const std::vector<std::string> svcs = {"auth", "billing", "search", "mailer", "gateway", "jobs"};
  static const std::vector<std::string> ops = {"login", "refund", "query", "send", "route", "retry"};
  std::string out = "[2031-";
  out += (rng.next_below(9) < 5 ? "0" : "1");
  out += std::to_string(rng.next_below(3));
  out += "-" + std::to_string(10 + rng.next_below(19));
  out += " " + std::to_string(10 + rng.next_below(14)) + ":" + std::to_string(10 + rng.next_below(50)) +
         ":" + std::to_string(10 + rng.next_below(50)) + "]";
  out += " " + lvls[rng.next_below(lvls.size())];
  out += " svc=" + svcs[rng.next_below(svcs.size())];
  out += " op=" + ops[rng.next_below(ops.size())];
  out += " user=u" + std::to_string(1000 + rng.next_below(9000));
  out += " lat=" + std::to_string(rng.next_below(900)) + "ms";
  out += " code=" + std::to_string(200 + 100 * rng.next_below(4));
  while (static_cast<int>(out.size()) < min_len && static_cast<int>(out.size()) + 8 <= max_len)
    out += " ref=" + std::to_string(rng.next_below(999));
  return out;
}

inline std::string line_invoice(RngStream& rng, int min_len, int max_len) {
  static const std::vector<std::string> items = {"valve", "gasket", "rotor", "spool", "flange", "washer"};
  std::string out = "inv-" + std::to_string(10000 + rng.next_below(90000)) + ":";
  while (static_cast<int>(out.size()) < min_len) {
    std::string piece = " " + items[rng.next_below(items.size())] + " x" +
                        std::to_string(1 + rng.next_below(40)) + " @" +
                        std::to_string(1 + rng.next_below(90)) + "." +
                        std::to_string(10 + rng.next_below(90)) + ",";
    if (static_cast<int>(out.size() + piece.size()) > max_len) break;
    out += piece;
  }
  if (!out.empty() && out.back() == ',') out.back() = ';';
  return out;
}

// --- free text -------------------------------------------------------------

// Order-1 Markov chain; each word gets `fan` candidate successors fixed by
// the domain seed, and generation picks among them with a skewed draw.
inline std::string line_markov(RngStream& rng, uint64_t grammar_seed,
                               const std::vector<std::string>& words, int fan, int min_len,
                               int max_len) {
  RngStream topo(grammar_seed, 0x6d61726b6f76ull);
  size_t n = words.size();
  size_t cur = rng.next_below(n);
  std::string out;
  while (static_cast<int>(out.size()) < min_len) {
    const std::string& w = words[cur];
    std::string piece = out.empty() ? w : " " + w;
    if (static_cast<int>(out.size() + piece.size()) > max_len) break;
    out += piece;
    // Successor set for `cur` is a pure function of the grammar seed.
    RngStream succ = topo.substream(cur);
    double u = rng.next_double();
    int pick = u < 0.45 ? 0 : u < 0.7 ? 1 : u < 0.85 ? 2 : static_cast<int>(3 + rng.next_below(static_cast<uint64_t>(fan - 3)));
    size_t next = 0;
    for (int i = 0; i <= pick; ++i) next = succ.next_below(n);
    cur = next;
  }
  return out;
}

inline std::string line_wordsoup(RngStream& rng, int min_len, int max_len) {
  const auto& words = soup_words();
  std::string out;
  while (static_cast<int>(out.size()) < min_len) {
    std::string w = rng.next_double() < 0.15 ? std::to_string(rng.next_below(100))
                                             : words[rng.next_below(words.size())];
    std::string piece = out.empty() ? w : " " + w;
    if (static_cast<int>(out.size() + piece.size()) > max_len) break;
    out += piece;
  }
  return out;
}

inline std::string line_glyphs(RngStream& rng, int min_len, int max_len) {
  static const std::string alpha = "abcdefghijklmnopqrstuvwxyz0123456789";
  int len = min_len + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_len - min_len + 1)));
  std::string out;
  out.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) out += alpha[rng.next_below(alpha.size())];
  return out;
}

}  // namespace detail

// One line of domain text with length in [min_len, max_len] characters.
inline std::string generate_line(const DomainSpec& spec, RngStream& rng, int min_len, int max_len) {
  using namespace detail;
  if (spec.name == "brackets") return line_brackets(rng, min_len, max_len);
  if (spec.name == "sexpr") return line_sexpr(rng, min_len, max_len);
  if (spec.name == "assign") return line_assign(rng, min_len, max_len);
  if (spec.name == "hexblob") return line_hexblob(rng, min_len, max_len);
  if (spec.name == "records") return line_records(rng, min_len, max_len);
  if (spec.name == "logline") return line_logline(rng, min_len, max_len);
  if (spec.name == "invoice") return line_invoice(rng, min_len, max_len);
  if (spec.name == "prose") return line_markov(rng, spec.grammar_seed, common_words(), 6, min_len, max_len);
  if (spec.name == "techprose") return line_markov(rng, spec.grammar_seed, tech_words(), 6, min_len, max_len);
  if (spec.name == "wordsoup") return line_wordsoup(rng, min_len, max_len);
  if (spec.name == "glyphs") return line_glyphs(rng, min_len, max_len);
  throw ConfigError("unknown domain: " + spec.name);
}

inline std::vector<DomainSpec> default_domains(uint64_t seed = 7) {
  using C = DomainCategory;
  return {
      {"brackets", C::structural, seed + 1}, {"sexpr", C::structural, seed + 2},
      {"assign", C::structural, seed + 3},   {"hexblob", C::structural, seed + 4},
      {"records", C::semi_structural, seed + 5}, {"logline", C::semi_structural, seed + 6},
      {"invoice", C::semi_structural, seed + 7}, {"prose", C::free_text, seed + 8},
      {"techprose", C::free_text, seed + 9}, {"wordsoup", C::free_text, seed + 10},
      {"glyphs", C::free_text, seed + 11},
  };
}

}  // namespace memlab::corpus
