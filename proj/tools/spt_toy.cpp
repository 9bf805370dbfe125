// Copyright 2026 The SPT Workbench Authors
// SPDX-License-Identifier: Apache-2.0

// Toy transformers for tests and demos. Reads a Python program on stdin and
// writes the transformed program to stdout.
//
//   spt-toy identity
//   spt-toy comment TAG     append "# TAG<n>", n counting earlier TAG lines
//   spt-toy toggle TAG      add "# TAG" as the last line, or remove it
//   spt-toy append LINE     append LINE verbatim
//   spt-toy mangle SUFFIX   rename assigned variables to name_SUFFIX
//   spt-toy break           emit a syntax error
//   spt-toy crash           exit 1
//   spt-toy sleep MS        sleep, then echo
//   spt-toy constant        print a fixed unrelated program
//   spt-toy random          append a comment derived from SPT_SEED
//   spt-toy flood BYTES     emit BYTES bytes of comments

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

std::string with_newline(std::string s) {
  if (!s.empty() && s.back() != '\n') s += '\n';
  return s;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

const std::set<std::string>& keywords() {
  static const std::set<std::string> k = {
      "False", "None",   "True",    "and",      "as",       "assert", "async",  "await",
      "break", "class",  "continue", "def",     "del",      "elif",   "else",   "except",
      "finally", "for",  "from",    "global",   "if",       "import", "in",     "is",
      "lambda", "nonlocal", "not",  "or",       "pass",     "raise",  "return", "try",
      "while", "with",   "yield",   "print",    "input",    "range",  "len",    "int",
      "str",   "list",   "map",     "sys"};
  return k;
}

struct Token {
  enum Kind { ident, other, string, comment } kind;
  std::string text;
};

/// End of the string literal whose opening quote is at q.
std::size_t string_end(const std::string& s, std::size_t q) {
  const char c = s[q];
  const bool triple = s.compare(q, 3, std::string(3, c)) == 0;
  const std::size_t width = triple ? 3 : 1;
  std::size_t j = q + width;
  while (j < s.size() && s.compare(j, width, std::string(width, c)) != 0) {
    if (s[j] == '\\') ++j;
    if (!triple && j < s.size() && s[j] == '\n') return j;
    ++j;
  }
  return std::min(s.size(), j + width);
}

bool string_prefix(const std::string& p) {
  return p.size() <= 2 && p.find_first_not_of("rRbBfFuU") == std::string::npos;
}

/// Splits source into identifiers, strings, comments and everything else.
std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '#') {
      const std::size_t end = s.find('\n', i);
      const std::size_t stop = end == std::string::npos ? s.size() : end;
      out.push_back({Token::comment, s.substr(i, stop - i)});
      i = stop;
    } else if (c == '"' || c == '\'') {
      const std::size_t j = string_end(s, i);
      out.push_back({Token::string, s.substr(i, j - i)});
      i = j;
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < s.size() && ident_char(s[j])) ++j;
      if (j < s.size() && (s[j] == '"' || s[j] == '\'') && string_prefix(s.substr(i, j - i))) {
        const std::size_t k = string_end(s, j);
        out.push_back({Token::string, s.substr(i, k - i)});
        i = k;
        continue;
      }
      out.push_back({Token::ident, s.substr(i, j - i)});
      i = j;
    } else {
      if (!out.empty() && out.back().kind == Token::other) {
        out.back().text += c;
      } else {
        out.push_back({Token::other, std::string(1, c)});
      }
      ++i;
    }
  }
  return out;
}

std::string first_nonspace(const std::string& s) {
  const std::size_t p = s.find_first_not_of(" \t");
  return p == std::string::npos ? std::string{} : s.substr(p);
}

/// Names bound by statement-level assignment or a for target.
std::set<std::string> assigned_names(const std::vector<Token>& tokens) {
  std::set<std::string> names;
  bool line_start = true;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind == Token::other) {
      if (t.text.find('\n') != std::string::npos) {
        line_start = first_nonspace(t.text.substr(t.text.rfind('\n') + 1)).empty();
      } else if (!first_nonspace(t.text).empty()) {
        line_start = false;
      }
      continue;
    }
    if (t.kind != Token::ident) {
      line_start = false;
      continue;
    }
    if (t.text == "for" && i + 2 < tokens.size() && tokens[i + 2].kind == Token::ident &&
        tokens[i + 1].kind == Token::other && first_nonspace(tokens[i + 1].text).empty()) {
      if (!keywords().count(tokens[i + 2].text)) names.insert(tokens[i + 2].text);
    }
    if (line_start) {
      // name [, name]* followed by = or an augmented operator
      std::vector<std::string> targets;
      std::size_t j = i;
      while (j < tokens.size() && tokens[j].kind == Token::ident) {
        targets.push_back(tokens[j].text);
        if (j + 1 >= tokens.size() || tokens[j + 1].kind != Token::other) break;
        const std::string sep = first_nonspace(tokens[j + 1].text);
        if (sep.rfind(',', 0) == 0 && first_nonspace(sep.substr(1)).empty()) {
          j += 2;
          continue;
        }
        const bool assign = (sep.size() >= 1 && sep[0] == '=' && (sep.size() < 2 || sep[1] != '=')) ||
                            (sep.size() >= 2 && sep[1] == '=' && std::string("+-*/%").find(sep[0]) != std::string::npos);
        if (assign) {
          for (const std::string& n : targets) {
            if (!keywords().count(n)) names.insert(n);
          }
        }
        break;
      }
    }
    line_start = false;
  }
  return names;
}

std::string mangle(const std::string& source, const std::string& suffix) {
  const std::vector<Token> tokens = tokenize(source);
  const std::set<std::string> names = assigned_names(tokens);
  std::string out;
  int depth = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind == Token::other) {
      for (char c : t.text) {
        if (c == '(' || c == '[' || c == '{') ++depth;
        if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
      }
      out += t.text;
      continue;
    }
    if (t.kind != Token::ident || !names.count(t.text)) {
      out += t.text;
      continue;
    }
    const bool attribute = i > 0 && tokens[i - 1].kind == Token::other &&
                           !tokens[i - 1].text.empty() && tokens[i - 1].text.back() == '.';
    bool keyword_arg = false;
    if (depth > 0 && i + 1 < tokens.size() && tokens[i + 1].kind == Token::other) {
      const std::string next = first_nonspace(tokens[i + 1].text);
      keyword_arg = !next.empty() && next[0] == '=' && (next.size() < 2 || next[1] != '=');
    }
    out += (attribute || keyword_arg) ? t.text : t.text + "_" + suffix;
  }
  return out;
}

std::string comment(const std::string& source, const std::string& tag) {
  std::istringstream lines(source);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("# " + tag, 0) == 0) ++count;
  }
  return with_newline(source) + "# " + tag + std::to_string(count + 1) + "\n";
}

std::string toggle(const std::string& source, const std::string& tag) {
  const std::string marker = "# " + tag + "\n";
  std::string base = with_newline(source);
  if (base.size() >= marker.size() &&
      base.compare(base.size() - marker.size(), marker.size(), marker) == 0) {
    return base.substr(0, base.size() - marker.size());
  }
  return base + marker;
}

int usage() {
  std::cerr << "usage: spt-toy MODE [ARG]\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  const std::string mode = argv[1];
  const std::string arg = argc > 2 ? argv[2] : "";
  const std::string source{std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};

  if (mode == "identity") {
    std::cout << source;
  } else if (mode == "comment" && !arg.empty()) {
    std::cout << comment(source, arg);
  } else if (mode == "toggle" && !arg.empty()) {
    std::cout << toggle(source, arg);
  } else if (mode == "append" && !arg.empty()) {
    std::cout << with_newline(source) << arg << "\n";
  } else if (mode == "mangle" && !arg.empty()) {
    std::cout << mangle(source, arg);
  } else if (mode == "break") {
    std::cout << with_newline(source) << "def (:\n";
  } else if (mode == "crash") {
    std::cerr << "spt-toy: deliberate crash\n";
    return 1;
  } else if (mode == "sleep" && !arg.empty()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(std::stoll(arg)));
    std::cout << source;
  } else if (mode == "constant") {
    std::cout << "print(0)\n";
  } else if (mode == "random") {
    const char* seed = std::getenv("SPT_SEED");
    const unsigned long long v = seed ? std::strtoull(seed, nullptr, 10) : 0;
    std::cout << with_newline(source) << "# r" << (v % 100000) << "\n";
  } else if (mode == "flood" && !arg.empty()) {
    std::cout << with_newline(source) << "#" << std::string(std::stoull(arg), 'x') << "\n";
  } else {
    return usage();
  }
  return 0;
}
