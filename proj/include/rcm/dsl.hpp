#ifndef RCM_DSL_HPP
#define RCM_DSL_HPP

// Text format for models. Line-oriented; '#' starts a comment.
//
//   domain S = {auto, chem, stock}     # named constants
//   domain B = 5                       # anonymous constants 0..4
//   atom Market(S)
//   atom Gain(S excluding {auto}, B)
//   var Recession                      # sugar for a 0-ary atom
//   factor rn(Gain(s, b), Market(s); sigma2=2, d=0.5)
//   factor rn(Market(s), 0.3; sigma2=1)
//   observe Market(chem) = 0.3
//   query Recession
//
// Parsing is total: every malformed line produces a positioned diagnostic and
// parsing continues with the next line. serialize_model emits a canonical
// form (shortest round-tripping numbers, 0-ary atoms as `var`, `d=` omitted
// when zero) such that parse . serialize is the identity on models.

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rcm/model.hpp"

namespace rcm {

struct Diagnostic {
  std::string file;
  int line = 0;
  int col = 0;
  std::string message;
};

inline std::string format_diagnostic(const Diagnostic& d) {
  return d.file + ":" + std::to_string(d.line) + ":" + std::to_string(d.col) + ": " + d.message;
}

struct ParseResult {
  Model model;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

namespace detail {

struct Token {
  enum class Kind { Ident, Number, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  double number = 0.0;
  int col = 0;
};

// Splits one line into tokens; returns false (with a diagnostic message and
// column) on a malformed token.
inline bool lex_line(std::string_view s, std::vector<Token>& out, std::string& err, int& errcol) {
  std::size_t i = 0;
  auto is_ident = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  };
  while (i < s.size()) {
    char c = s[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '#') break;
    int col = static_cast<int>(i) + 1;
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_') {
      std::size_t j = i;
      while (j < s.size() && is_ident(s[j])) ++j;
      out.push_back({Token::Kind::Ident, std::string(s.substr(i, j - i)), 0.0, col});
      i = j;
      continue;
    }
    if ((c >= '0' && c <= '9') || c == '.' ||
        ((c == '-' || c == '+') && i + 1 < s.size() &&
         ((s[i + 1] >= '0' && s[i + 1] <= '9') || s[i + 1] == '.'))) {
      std::size_t j = i + 1;
      while (j < s.size() && ((s[j] >= '0' && s[j] <= '9') || s[j] == '.' || s[j] == 'e' ||
                              s[j] == 'E' ||
                              ((s[j] == '-' || s[j] == '+') && (s[j - 1] == 'e' || s[j - 1] == 'E'))))
        ++j;
      std::string text(s.substr(i, j - i));
      double v = 0.0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || p != text.data() + text.size()) {
        err = "malformed number '" + text + "'";
        errcol = col;
        return false;
      }
      out.push_back({Token::Kind::Number, std::move(text), v, col});
      i = j;
      continue;
    }
    if (c == '(' || c == ')' || c == '{' || c == '}' || c == ',' || c == ';' || c == '=') {
      out.push_back({Token::Kind::Punct, std::string(1, c), 0.0, col});
      ++i;
      continue;
    }
    err = std::string("unexpected character '") + c + "'";
    errcol = col;
    return false;
  }
  out.push_back({Token::Kind::End, "", 0.0, static_cast<int>(s.size()) + 1});
  return true;
}

// Cursor over one line's tokens. parse failures throw LineError, which the
// per-line driver converts into a diagnostic.
struct LineError {
  int col;
  std::string message;
};

struct Cursor {
  const std::vector<Token>* toks;
  std::size_t at = 0;

  const Token& peek() const { return (*toks)[at]; }
  const Token& next() { return (*toks)[at < toks->size() - 1 ? at++ : at]; }
  bool is_punct(const char* p) const {
    return peek().kind == Token::Kind::Punct && peek().text == p;
  }
  bool eat_punct(const char* p) {
    if (!is_punct(p)) return false;
    ++at;
    return true;
  }
  void expect_punct(const char* p) {
    if (!eat_punct(p)) throw LineError{peek().col, std::string("expected '") + p + "'"};
  }
  std::string expect_ident(const char* what) {
    if (peek().kind != Token::Kind::Ident)
      throw LineError{peek().col, std::string("expected ") + what};
    return next().text;
  }
  const Token& expect_number() {
    if (peek().kind != Token::Kind::Number) throw LineError{peek().col, "expected a number"};
    return next();
  }
  void expect_end() {
    if (peek().kind != Token::Kind::End)
      throw LineError{peek().col, "unexpected trailing input '" + peek().text + "'"};
  }
};

}  // namespace detail

inline ParseResult parse_model(std::string_view text, std::string filename = "<input>") {
  ParseResult res;
  Model& m = res.model;
  std::set<GroundRef> observed, queried;

  auto domain_of = [&](const std::string& name, int col) {
    int d = m.domain_index(name);
    if (d < 0) throw detail::LineError{col, "unknown domain '" + name + "'"};
    return d;
  };
  auto atom_of = [&](const std::string& name, int col) {
    int a = m.atom_index(name);
    if (a < 0) throw detail::LineError{col, "unknown atom '" + name + "'"};
    return a;
  };
  // A constant of a named domain is an identifier; of an anonymous domain, an
  // integer in range.
  auto parse_constant = [&](detail::Cursor& c, int domain) -> std::int64_t {
    const LogicalDomain& dom = m.domains[static_cast<std::size_t>(domain)];
    if (!dom.constant_names.empty()) {
      int col = c.peek().col;
      std::string id = c.expect_ident("a constant name");
      for (std::size_t i = 0; i < dom.constant_names.size(); ++i)
        if (dom.constant_names[i] == id) return static_cast<std::int64_t>(i);
      throw detail::LineError{col, "'" + id + "' is not a constant of domain " + dom.name};
    }
    const detail::Token& t = c.expect_number();
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size())
      throw detail::LineError{t.col, "expected an integer constant"};
    if (v < 0 || v >= dom.size)
      throw detail::LineError{t.col, "constant " + t.text + " out of range for domain " + dom.name};
    return v;
  };
  auto parse_ground = [&](detail::Cursor& c) -> GroundRef {
    int col = c.peek().col;
    std::string name = c.expect_ident("an atom name");
    int a = atom_of(name, col);
    const AtomDecl& ad = m.atoms[static_cast<std::size_t>(a)];
    GroundRef g{a, {}};
    if (c.eat_punct("(")) {
      if (!c.eat_punct(")")) {
        do {
          if (static_cast<int>(g.binding.size()) >= ad.arity())
            throw detail::LineError{c.peek().col, "too many constants for atom " + name};
          g.binding.push_back(parse_constant(c, ad.domains[g.binding.size()]));
        } while (c.eat_punct(","));
        c.expect_punct(")");
      }
    }
    if (static_cast<int>(g.binding.size()) != ad.arity())
      throw detail::LineError{col, "atom " + name + " takes " + std::to_string(ad.arity()) +
                                       " constants, got " + std::to_string(g.binding.size())};
    if (!ground_exists(m, g))
      throw detail::LineError{col, "no such ground variable (constant excluded for this atom)"};
    return g;
  };
  auto parse_term = [&](detail::Cursor& c) -> Term {
    if (c.peek().kind == detail::Token::Kind::Number) return Term::constant(c.next().number);
    int col = c.peek().col;
    std::string name = c.expect_ident("an atom or a number");
    int a = atom_of(name, col);
    const AtomDecl& ad = m.atoms[static_cast<std::size_t>(a)];
    std::vector<std::string> vars;
    if (c.eat_punct("(")) {
      if (!c.eat_punct(")")) {
        do {
          vars.push_back(c.expect_ident("a logical variable"));
        } while (c.eat_punct(","));
        c.expect_punct(")");
      }
    }
    if (static_cast<int>(vars.size()) != ad.arity())
      throw detail::LineError{col, "atom " + name + " takes " + std::to_string(ad.arity()) +
                                       " variables, got " + std::to_string(vars.size())};
    return Term::atom_ref(a, std::move(vars));
  };

  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;

    std::vector<detail::Token> toks;
    std::string lex_err;
    int lex_col = 0;
    if (!detail::lex_line(line, toks, lex_err, lex_col)) {
      res.diagnostics.push_back({filename, lineno, lex_col, lex_err});
      continue;
    }
    detail::Cursor c{&toks, 0};
    if (c.peek().kind == detail::Token::Kind::End) continue;
    try {
      int kwcol = c.peek().col;
      std::string kw = c.expect_ident("a directive");
      if (kw == "domain") {
        int ncol = c.peek().col;
        std::string name = c.expect_ident("a domain name");
        if (m.domain_index(name) >= 0)
          throw detail::LineError{ncol, "duplicate domain '" + name + "'"};
        c.expect_punct("=");
        LogicalDomain dom;
        dom.name = name;
        if (c.eat_punct("{")) {
          if (!c.eat_punct("}")) {
            do {
              int ccol = c.peek().col;
              std::string id = c.expect_ident("a constant name");
              for (const auto& prev : dom.constant_names)
                if (prev == id) throw detail::LineError{ccol, "duplicate constant '" + id + "'"};
              dom.constant_names.push_back(id);
            } while (c.eat_punct(","));
            c.expect_punct("}");
          }
          dom.size = static_cast<std::int64_t>(dom.constant_names.size());
        } else {
          const detail::Token& t = c.expect_number();
          std::int64_t v = 0;
          auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
          if (ec != std::errc{} || p != t.text.data() + t.text.size() || v < 0)
            throw detail::LineError{t.col, "domain size must be a non-negative integer"};
          dom.size = v;
        }
        if (dom.size <= 0) throw detail::LineError{ncol, "domain '" + name + "' is empty"};
        c.expect_end();
        m.domains.push_back(std::move(dom));
      } else if (kw == "atom" || kw == "var") {
        int ncol = c.peek().col;
        std::string name = c.expect_ident("an atom name");
        if (m.atom_index(name) >= 0) throw detail::LineError{ncol, "duplicate atom '" + name + "'"};
        AtomDecl ad;
        ad.name = name;
        if (kw == "atom" && c.eat_punct("(")) {
          if (!c.eat_punct(")")) {
            do {
              int dcol = c.peek().col;
              std::string dn = c.expect_ident("a domain name");
              int d = domain_of(dn, dcol);
              ad.domains.push_back(d);
              std::set<std::int64_t> excl;
              if (c.peek().kind == detail::Token::Kind::Ident && c.peek().text == "excluding") {
                c.next();
                c.expect_punct("{");
                if (!c.eat_punct("}")) {
                  do {
                    int ccol = c.peek().col;
                    std::int64_t v = parse_constant(c, d);
                    if (!excl.insert(v).second)
                      throw detail::LineError{ccol, "constant excluded twice"};
                  } while (c.eat_punct(","));
                  c.expect_punct("}");
                }
                if (static_cast<std::int64_t>(excl.size()) >=
                    m.domains[static_cast<std::size_t>(d)].size)
                  throw detail::LineError{dcol, "exclusion empties domain '" + dn + "'"};
              }
              ad.excluded.push_back(std::move(excl));
            } while (c.eat_punct(","));
            c.expect_punct(")");
          }
        }
        c.expect_end();
        m.atoms.push_back(std::move(ad));
      } else if (kw == "factor") {
        int fcol = c.peek().col;
        std::string fn = c.expect_ident("'rn'");
        if (fn != "rn") throw detail::LineError{fcol, "unknown potential '" + fn + "'"};
        c.expect_punct("(");
        RnFactor f;
        f.lhs = parse_term(c);
        c.expect_punct(",");
        f.rhs = parse_term(c);
        c.expect_punct(";");
        bool have_sigma = false, have_d = false;
        do {
          int kcol = c.peek().col;
          std::string key = c.expect_ident("'sigma2' or 'd'");
          c.expect_punct("=");
          const detail::Token& t = c.expect_number();
          if (key == "sigma2") {
            if (have_sigma) throw detail::LineError{kcol, "duplicate sigma2"};
            if (!(t.number > 0.0)) throw detail::LineError{t.col, "sigma2 must be positive"};
            f.sigma2 = t.number;
            have_sigma = true;
          } else if (key == "d") {
            if (have_d) throw detail::LineError{kcol, "duplicate d"};
            f.offset = t.number;
            have_d = true;
          } else {
            throw detail::LineError{kcol, "unknown parameter '" + key + "'"};
          }
        } while (c.eat_punct(","));
        c.expect_punct(")");
        c.expect_end();
        if (!have_sigma) throw detail::LineError{kwcol, "factor is missing sigma2"};
        if (f.lhs.kind == Term::Kind::Constant && f.rhs.kind == Term::Kind::Constant)
          throw detail::LineError{kwcol, "factor relates two constants"};
        if (f.lhs.kind == Term::Kind::Atom && f.rhs.kind == Term::Kind::Atom &&
            f.lhs.atom == f.rhs.atom && f.lhs.vars == f.rhs.vars)
          throw detail::LineError{kwcol, "factor pairs every variable with itself"};
        for (const Term* t : {&f.lhs, &f.rhs})
          if (t->kind == Term::Kind::Atom)
            for (std::size_t i = 0; i < t->vars.size(); ++i)
              for (std::size_t j = i + 1; j < t->vars.size(); ++j)
                if (t->vars[i] == t->vars[j])
                  throw detail::LineError{kwcol,
                                          "variable '" + t->vars[i] + "' repeats within a term"};
        // Shared variables must agree on their domain.
        if (f.lhs.kind == Term::Kind::Atom && f.rhs.kind == Term::Kind::Atom) {
          const AtomDecl& la = m.atoms[static_cast<std::size_t>(f.lhs.atom)];
          const AtomDecl& ra = m.atoms[static_cast<std::size_t>(f.rhs.atom)];
          for (std::size_t i = 0; i < f.lhs.vars.size(); ++i)
            for (std::size_t j = 0; j < f.rhs.vars.size(); ++j)
              if (f.lhs.vars[i] == f.rhs.vars[j] && la.domains[i] != ra.domains[j])
                throw detail::LineError{
                    kwcol, "variable '" + f.lhs.vars[i] + "' is used with two different domains"};
        }
        m.factors.push_back(std::move(f));
      } else if (kw == "observe") {
        GroundRef g = parse_ground(c);
        c.expect_punct("=");
        double v = c.expect_number().number;
        c.expect_end();
        if (!observed.insert(g).second)
          throw detail::LineError{kwcol, "variable observed twice"};
        if (queried.count(g)) throw detail::LineError{kwcol, "variable is already queried"};
        m.observations.push_back({g, v});
      } else if (kw == "query") {
        GroundRef g = parse_ground(c);
        c.expect_end();
        if (!queried.insert(g).second) throw detail::LineError{kwcol, "variable queried twice"};
        if (observed.count(g)) throw detail::LineError{kwcol, "variable is already observed"};
        m.queries.push_back(g);
      } else {
        throw detail::LineError{kwcol, "unknown directive '" + kw + "'"};
      }
    } catch (const detail::LineError& e) {
      res.diagnostics.push_back({filename, lineno, e.col, e.message});
    }
  }
  return res;
}

namespace detail {

// Shortest decimal that round-trips to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::string format_constant(const Model& m, int domain, std::int64_t c) {
  const LogicalDomain& d = m.domains[static_cast<std::size_t>(domain)];
  if (!d.constant_names.empty()) return d.constant_names[static_cast<std::size_t>(c)];
  return std::to_string(c);
}

}  // namespace detail

inline std::string serialize_model(const Model& m) {
  std::string out;
  for (const auto& d : m.domains) {
    out += "domain " + d.name + " = ";
    if (d.constant_names.empty()) {
      out += std::to_string(d.size);
    } else {
      out += '{';
      for (std::size_t i = 0; i < d.constant_names.size(); ++i) {
        if (i) out += ", ";
        out += d.constant_names[i];
      }
      out += '}';
    }
    out += '\n';
  }
  for (const auto& a : m.atoms) {
    if (a.arity() == 0) {
      out += "var " + a.name + '\n';
      continue;
    }
    out += "atom " + a.name + '(';
    for (int i = 0; i < a.arity(); ++i) {
      if (i) out += ", ";
      out += m.domains[static_cast<std::size_t>(a.domains[i])].name;
      if (i < static_cast<int>(a.excluded.size()) && !a.excluded[static_cast<std::size_t>(i)].empty()) {
        out += " excluding {";
        bool first = true;
        for (std::int64_t c : a.excluded[static_cast<std::size_t>(i)]) {
          if (!first) out += ", ";
          first = false;
          out += detail::format_constant(m, a.domains[i], c);
        }
        out += '}';
      }
    }
    out += ")\n";
  }
  auto term = [&](const Term& t) {
    if (t.kind == Term::Kind::Constant) return detail::format_number(t.value);
    const AtomDecl& a = m.atoms[static_cast<std::size_t>(t.atom)];
    std::string s = a.name;
    if (a.arity() > 0) {
      s += '(';
      for (std::size_t i = 0; i < t.vars.size(); ++i) {
        if (i) s += ", ";
        s += t.vars[i];
      }
      s += ')';
    }
    return s;
  };
  for (const auto& f : m.factors) {
    out += "factor rn(" + term(f.lhs) + ", " + term(f.rhs) + "; sigma2=" +
           detail::format_number(f.sigma2);
    if (f.offset != 0.0) out += ", d=" + detail::format_number(f.offset);
    out += ")\n";
  }
  auto ground = [&](const GroundRef& g) {
    const AtomDecl& a = m.atoms[static_cast<std::size_t>(g.atom)];
    std::string s = a.name;
    if (a.arity() > 0) {
      s += '(';
      for (std::size_t i = 0; i < g.binding.size(); ++i) {
        if (i) s += ", ";
        s += detail::format_constant(m, a.domains[i], g.binding[i]);
      }
      s += ')';
    }
    return s;
  };
  for (const auto& o : m.observations)
    out += "observe " + ground(o.var) + " = " + detail::format_number(o.value) + '\n';
  for (const auto& q : m.queries) out += "query " + ground(q) + '\n';
  return out;
}

}  // namespace rcm

#endif  // RCM_DSL_HPP
