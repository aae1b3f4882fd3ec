#include "sem/syntax.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "sem/errors.hpp"

namespace sem {

const char* op_symbol(Op op) {
  switch (op) {
    case Op::Regress: return "~";
    case Op::Covary: return "~~";
    case Op::Measure: return "=~";
    case Op::RfCovary: return "~RF~";
    case Op::RfCovaryK: return "~RFk~";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_number(const std::string& s, double& out) {
  std::string t = trim(s);
  if (t.empty()) return false;
  const char* b = t.data();
  const char* e = t.data() + t.size();
  if (*b == '+') ++b;
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e;
}

std::string fmt_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEin") == std::string::npos) s += ".0";
  return s;
}

// Split on '+' but keep exponents such as 1e+3 intact.
std::vector<std::string> split_plus(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '+') {
      bool exponent = !cur.empty() && (cur.back() == 'e' || cur.back() == 'E') && cur.size() >= 2 &&
                      (std::isdigit(static_cast<unsigned char>(cur[cur.size() - 2])) ||
                       cur[cur.size() - 2] == '.');
      if (exponent) {
        std::string head = trim(cur);
        double dummy;
        exponent = parse_number(head.substr(0, head.size() - 1), dummy) &&
                   head.find('*') == std::string::npos;
      }
      if (!exponent) {
        out.push_back(cur);
        cur.clear();
        continue;
      }
    }
    cur += c;
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Term parse_term(const std::string& raw, int line) {
  auto parts = split(raw, '*');
  auto bad = [&](const std::string& why) {
    return SemError(ErrorCode::MalformedTerm, "line " + std::to_string(line) + ": " + why);
  };
  Term t;
  if (parts.size() == 1) {
    t.name = trim(parts[0]);
  } else if (parts.size() == 2) {
    std::string m = trim(parts[0]);
    t.name = trim(parts[1]);
    double v;
    if (parse_number(m, v)) {
      t.mult = Term::Mult::Fixed;
      t.value = v;
    } else if (is_identifier(m)) {
      t.mult = Term::Mult::Named;
      t.param = m;
    } else {
      throw bad("bad multiplier '" + m + "'");
    }
  } else {
    throw bad("more than one multiplier in '" + trim(raw) + "'");
  }
  if (t.name.empty()) throw bad("empty variable name");
  if (t.name != "1" && !is_identifier(t.name)) throw bad("bad variable name '" + t.name + "'");
  return t;
}

Command parse_command(const std::string& line, int lineno) {
  size_t lp = line.find('(');
  Command c;
  c.name = trim(line.substr(0, lp));
  int depth = 0;
  size_t rp = std::string::npos;
  for (size_t i = lp; i < line.size(); ++i) {
    if (line[i] == '(') ++depth;
    if (line[i] == ')') {
      --depth;
      if (depth == 0) {
        rp = i;
        break;
      }
      if (depth < 0) break;
    }
  }
  if (rp == std::string::npos)
    throw SemError(ErrorCode::UnbalancedParens, "line " + std::to_string(lineno));
  std::string inside = line.substr(lp + 1, rp - lp - 1);
  std::string rest = trim(line.substr(rp + 1));
  int extra = 0;
  for (char ch : rest) {
    if (ch == '(') ++extra;
    if (ch == ')') --extra;
  }
  if (extra != 0 || rest.find(')') != std::string::npos || rest.find('(') != std::string::npos) {
    if (extra != 0)
      throw SemError(ErrorCode::UnbalancedParens, "line " + std::to_string(lineno));
  }
  auto arity = [&](const std::string& why) {
    return SemError(ErrorCode::BadCommandArity, "line " + std::to_string(lineno) + ": " + why);
  };
  if (c.name == "CONSTRAINT") {
    c.expr = trim(inside);
    if (c.expr.empty()) throw arity("CONSTRAINT needs an expression");
    if (!rest.empty()) throw arity("CONSTRAINT takes no operands");
    return c;
  }
  for (auto& a : split(inside, ',')) {
    std::string t = trim(a);
    if (!t.empty()) c.args.push_back(t);
  }
  std::string ops = rest;
  for (char& ch : ops)
    if (ch == ',') ch = ' ';
  std::istringstream ss(ops);
  std::string name;
  while (ss >> name) {
    if (!is_identifier(name))
      throw SemError(ErrorCode::MalformedTerm, "line " + std::to_string(lineno) + ": '" + name + "'");
    c.operands.push_back(name);
  }
  auto numeric_or_open = [](const std::string& s) {
    double v;
    return parse_number(s, v) || s == "None" || s == "inf" || s == "-inf";
  };
  if (c.name == "DEFINE") {
    if (c.args.size() != 1 || (c.args[0] != "latent" && c.args[0] != "ordinal"))
      throw arity("DEFINE takes one argument: latent or ordinal");
  } else if (c.name == "START") {
    double v;
    if (c.args.size() != 1 || !parse_number(c.args[0], v)) throw arity("START takes one number");
  } else if (c.name == "BOUND") {
    if (c.args.size() != 2 || !numeric_or_open(c.args[0]) || !numeric_or_open(c.args[1]))
      throw arity("BOUND takes two numbers");
  }
  if (c.operands.empty()) throw arity(c.name + " needs operands");
  return c;
}

bool looks_like_command(const std::string& line) {
  size_t lp = line.find('(');
  if (lp == std::string::npos) return false;
  std::string head = trim(line.substr(0, lp));
  if (!is_identifier(head)) return false;
  size_t tilde = line.find('~');
  return tilde == std::string::npos || tilde > lp;
}

Relation parse_relation(const std::string& line, int lineno) {
  size_t p = line.find('~');
  if (p == std::string::npos)
    throw SemError(ErrorCode::UnknownOperator, "line " + std::to_string(lineno) + ": '" + line + "'");
  Relation r;
  size_t lhs_end = p, rhs_begin;
  if (p > 0 && line[p - 1] == '=') {
    r.op = Op::Measure;
    lhs_end = p - 1;
    rhs_begin = p + 1;
  } else if (p + 1 < line.size() && line[p + 1] == '~') {
    r.op = Op::Covary;
    rhs_begin = p + 2;
  } else if (line.compare(p + 1, 2, "RF") == 0) {
    size_t q = p + 3;
    std::string digits;
    while (q < line.size() && std::isdigit(static_cast<unsigned char>(line[q]))) digits += line[q++];
    if (q >= line.size() || line[q] != '~')
      throw SemError(ErrorCode::UnknownOperator, "line " + std::to_string(lineno) + ": bad ~RF~ operator");
    if (digits.empty()) {
      r.op = Op::RfCovary;
    } else {
      r.op = Op::RfCovaryK;
      r.k = std::stoi(digits);
      if (r.k <= 0)
        throw SemError(ErrorCode::UnknownOperator, "line " + std::to_string(lineno) + ": effect index must be positive");
    }
    rhs_begin = q + 1;
  } else {
    r.op = Op::Regress;
    rhs_begin = p + 1;
  }
  std::string lhs = line.substr(0, lhs_end);
  std::string rhs = line.substr(rhs_begin);
  for (auto& a : split(lhs, ',')) {
    std::string t = trim(a);
    if (t.empty() || !is_identifier(t))
      throw SemError(ErrorCode::MalformedTerm, "line " + std::to_string(lineno) + ": bad left-hand side '" + trim(lhs) + "'");
    r.lhs.push_back(t);
  }
  if (trim(rhs).empty())
    throw SemError(ErrorCode::MalformedTerm, "line " + std::to_string(lineno) + ": empty right-hand side");
  for (auto& t : split_plus(rhs)) r.rhs.push_back(parse_term(t, lineno));
  return r;
}

}  // namespace

bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
  return true;
}

ModelAst parse(const std::string& text) {
  ModelAst ast;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    for (auto& piece : split(raw, ';')) {
      std::string line = trim(piece);
      if (line.empty()) continue;
      if (looks_like_command(line)) {
        Command c = parse_command(line, lineno);
        if (c.name != "DEFINE" && c.name != "START" && c.name != "BOUND" && c.name != "CONSTRAINT")
          throw SemError(ErrorCode::UnknownOperator, "line " + std::to_string(lineno) + ": unknown command " + c.name);
        ast.statements.emplace_back(std::move(c));
      } else {
        int depth = 0;
        for (char ch : line) {
          if (ch == '(') ++depth;
          if (ch == ')') --depth;
        }
        if (depth != 0) throw SemError(ErrorCode::UnbalancedParens, "line " + std::to_string(lineno));
        ast.statements.emplace_back(parse_relation(line, lineno));
      }
    }
  }
  return ast;
}

std::string serialize(const ModelAst& ast) {
  std::ostringstream out;
  for (const auto& st : ast.statements) {
    if (const auto* r = std::get_if<Relation>(&st)) {
      for (size_t i = 0; i < r->lhs.size(); ++i) out << (i ? ", " : "") << r->lhs[i];
      if (r->op == Op::RfCovaryK)
        out << " ~RF" << r->k << "~ ";
      else
        out << ' ' << op_symbol(r->op) << ' ';
      for (size_t i = 0; i < r->rhs.size(); ++i) {
        const Term& t = r->rhs[i];
        if (i) out << " + ";
        if (t.mult == Term::Mult::Fixed) out << fmt_number(t.value) << '*';
        if (t.mult == Term::Mult::Named) out << t.param << '*';
        out << t.name;
      }
    } else {
      const auto& c = std::get<Command>(st);
      out << c.name << '(';
      if (c.name == "CONSTRAINT") {
        out << c.expr << ')';
      } else {
        for (size_t i = 0; i < c.args.size(); ++i) out << (i ? ", " : "") << c.args[i];
        out << ')';
        for (const auto& o : c.operands) out << ' ' << o;
      }
    }
    out << '\n';
  }
  return out.str();
}

ModelAst expand(const ModelAst& ast) {
  ModelAst out;
  for (const auto& st : ast.statements) {
    if (const auto* r = std::get_if<Relation>(&st)) {
      for (const auto& l : r->lhs) {
        Relation e = *r;
        e.lhs = {l};
        out.statements.emplace_back(std::move(e));
      }
    } else {
      out.statements.push_back(st);
    }
  }
  return out;
}

}  // namespace sem
