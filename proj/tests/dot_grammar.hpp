#pragma once

#include <cctype>
#include <stdexcept>
#include <string>
#include <vector>

// Recursive-descent recognizer for the Graphviz DOT language (ports and
// HTML strings omitted). Throws std::runtime_error on the first violation.
namespace motioncode::testing {

class DotChecker {
 public:
  explicit DotChecker(const std::string& text) { tokenize(text); }

  void check() {
    if (keyword("strict")) ++pos_;
    if (keyword("digraph")) {
      directed_ = true;
    } else if (!keyword("graph")) {
      fail("expected graph or digraph");
    }
    ++pos_;
    if (is_id()) ++pos_;
    expect("{");
    stmt_list();
    expect("}");
    if (pos_ != toks_.size()) fail("trailing tokens");
  }

 private:
  struct Tok {
    enum Kind { Id, Punct } kind;
    std::string text;
  };

  void tokenize(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
      const char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '"') {
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '"') j += s[j] == '\\' ? 2 : 1;
        if (j >= s.size()) throw std::runtime_error("unterminated string");
        toks_.push_back({Tok::Id, s.substr(i, j - i + 1)});
        i = j + 1;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
        toks_.push_back({Tok::Id, s.substr(i, j - i)});
        i = j;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                 (c == '-' && i + 1 < s.size() && (std::isdigit(static_cast<unsigned char>(s[i + 1])) || s[i + 1] == '.'))) {
        std::size_t j = i + (c == '-' ? 1 : 0);
        bool dot = false, digits = false;
        while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || (s[j] == '.' && !dot))) {
          if (s[j] == '.') dot = true; else digits = true;
          ++j;
        }
        if (!digits) throw std::runtime_error("malformed numeral");
        toks_.push_back({Tok::Id, s.substr(i, j - i)});
        i = j;
      } else if (s.compare(i, 2, "->") == 0 || s.compare(i, 2, "--") == 0) {
        toks_.push_back({Tok::Punct, s.substr(i, 2)});
        i += 2;
      } else if (std::string("{}[];,=:").find(c) != std::string::npos) {
        toks_.push_back({Tok::Punct, std::string(1, c)});
        ++i;
      } else {
        throw std::runtime_error(std::string("unexpected character '") + c + "'");
      }
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(what + " at token " + std::to_string(pos_) +
                             (pos_ < toks_.size() ? " '" + toks_[pos_].text + "'" : " <end>"));
  }
  bool at(const std::string& p) const {
    return pos_ < toks_.size() && toks_[pos_].kind == Tok::Punct && toks_[pos_].text == p;
  }
  bool keyword(const std::string& k) const {
    return pos_ < toks_.size() && toks_[pos_].kind == Tok::Id && toks_[pos_].text == k;
  }
  bool is_id() const {
    if (pos_ >= toks_.size() || toks_[pos_].kind != Tok::Id) return false;
    for (const char* kw : {"node", "edge", "graph", "digraph", "subgraph", "strict"}) {
      if (toks_[pos_].text == kw) return false;
    }
    return true;
  }
  void expect(const std::string& p) {
    if (!at(p)) fail("expected '" + p + "'");
    ++pos_;
  }
  void id() {
    if (!is_id()) fail("expected ID");
    ++pos_;
  }

  void stmt_list() {
    while (!at("}")) {
      if (pos_ >= toks_.size()) fail("unterminated statement list");
      stmt();
      if (at(";")) ++pos_;
    }
  }

  void stmt() {
    if (keyword("graph") || keyword("node") || keyword("edge")) {
      ++pos_;
      attr_list();
      return;
    }
    if (keyword("subgraph") || at("{")) {
      subgraph();
      edge_rhs_opt();
      return;
    }
    id();
    if (at("=")) {
      ++pos_;
      id();
      return;
    }
    edge_rhs_opt();
    if (at("[")) attr_list();
  }

  void edge_rhs_opt() {
    while (at("->") || at("--")) {
      if ((toks_[pos_].text == "->") != directed_) fail("edge operator does not match graph type");
      ++pos_;
      if (keyword("subgraph") || at("{")) subgraph(); else id();
    }
    if (at("[")) attr_list();
  }

  void subgraph() {
    if (keyword("subgraph")) {
      ++pos_;
      if (is_id()) ++pos_;
    }
    expect("{");
    stmt_list();
    expect("}");
  }

  void attr_list() {
    if (!at("[")) fail("expected attribute list");
    while (at("[")) {
      ++pos_;
      while (!at("]")) {
        id();
        expect("=");
        id();
        if (at(",") || at(";")) ++pos_;
      }
      ++pos_;
    }
  }

  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
  bool directed_ = false;
};

inline void check_dot(const std::string& text) { DotChecker(text).check(); }

}  // namespace motioncode::testing
