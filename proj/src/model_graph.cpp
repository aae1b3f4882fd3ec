#include "sem/model_graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <set>

#include "sem/errors.hpp"

namespace sem {

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Model: return "Model";
    case ModelKind::Means: return "ModelMeans";
    case ModelKind::Effects: return "ModelEffects";
    case ModelKind::Generalized: return "ModelGeneralizedEffects";
  }
  return "?";
}

DMode parse_d_mode(const std::string& s) {
  if (s == "full") return DMode::Full;
  if (s == "diag") return DMode::Diag;
  if (s == "scale") return DMode::Scale;
  throw SemError(ErrorCode::ParseError, "unknown d_mode '" + s + "'");
}

const char* mat_name(int m) {
  switch (m) {
    case kB: return "Beta";
    case kLambda: return "Lambda";
    case kPsi: return "Psi";
    case kTheta: return "Theta";
    case kGamma1: return "Gamma1";
    case kGamma2: return "Gamma2";
    default: return "D";
  }
}

int ParameterSpace::index(const std::string& name) const {
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int>(i);
  return -1;
}

Eigen::VectorXd ParameterSpace::start() const {
  Eigen::VectorXd v(params.size());
  for (size_t i = 0; i < params.size(); ++i) v[i] = params[i].start;
  return v;
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

int pos(const std::vector<std::string>& v, const std::string& s) {
  auto it = std::find(v.begin(), v.end(), s);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

std::vector<std::string> sorted(const std::set<std::string>& s) { return {s.begin(), s.end()}; }

std::vector<std::string> identifiers_in(const std::string& expr) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i <= expr.size(); ++i) {
    char c = i < expr.size() ? expr[i] : ' ';
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      cur += c;
    } else {
      if (!cur.empty() && (std::isalpha(static_cast<unsigned char>(cur[0])) || cur[0] == '_')) {
        out.push_back(cur);
      }
      cur.clear();
    }
  }
  return out;
}

}  // namespace

VariableClassification classify_variables(const ModelAst& ast_in, bool mimic_lavaan) {
  ModelAst ast = expand(ast_in);
  std::map<std::string, int> in, out;
  std::set<std::string> mentioned, latents, indicators, covaried, ordinal;
  for (const auto& st : ast.statements) {
    if (const auto* r = std::get_if<Relation>(&st)) {
      const std::string& l = r->lhs[0];
      mentioned.insert(l);
      for (const auto& t : r->rhs) {
        if (t.name == "1") continue;
        mentioned.insert(t.name);
        switch (r->op) {
          case Op::Regress:
            in[l]++;
            out[t.name]++;
            break;
          case Op::Measure:
            latents.insert(l);
            indicators.insert(t.name);
            in[t.name]++;
            out[l]++;
            break;
          case Op::Covary:
            covaried.insert(l);
            covaried.insert(t.name);
            break;
          default:
            break;
        }
      }
    } else {
      const auto& c = std::get<Command>(st);
      if (c.name == "DEFINE") {
        for (const auto& o : c.operands) {
          if (c.args[0] == "latent") {
            latents.insert(o);
            mentioned.insert(o);
          } else {
            ordinal.insert(o);
          }
        }
      }
    }
  }
  VariableClassification cls;
  std::set<std::string> y, x1, x2, fixed_exo, lat_exo, free_out;
  for (const auto& v : mentioned) {
    if (latents.count(v)) {
      if (!in[v]) lat_exo.insert(v);
      continue;
    }
    bool is_output = in[v] > 0 && out[v] == 0;
    if (is_output && mimic_lavaan && !indicators.count(v)) {
      x1.insert(v);
      free_out.insert(v);
    } else if (is_output) {
      y.insert(v);
    } else if (in[v] == 0 && out[v] > 0 && !covaried.count(v)) {
      x2.insert(v);
    } else {
      x1.insert(v);
      if (in[v] == 0) fixed_exo.insert(v);
    }
  }
  for (const auto& v : ordinal)
    if (latents.count(v)) throw SemError(ErrorCode::ConflictingClass, v + " is both latent and ordinal");
  cls.latent = sorted(latents);
  cls.endogenous = sorted(x1);
  cls.exogenous = sorted(x2);
  cls.output = sorted(y);
  cls.indicators = sorted(indicators);
  cls.ordinal = sorted(ordinal);
  cls.fixed_exogenous = sorted(fixed_exo);
  cls.exogenous_latent = sorted(lat_exo);
  cls.free_outputs = sorted(free_out);
  cls.omega_order = cls.latent;
  cls.omega_order.insert(cls.omega_order.end(), cls.endogenous.begin(), cls.endogenous.end());
  cls.z_order = cls.output;
  cls.z_order.insert(cls.z_order.end(), cls.endogenous.begin(), cls.endogenous.end());
  return cls;
}

namespace {

struct Builder {
  ModelStructure m;
  std::map<std::tuple<int, int, int>, int> assigned;  // cell -> entry index
  int auto_count = 0;
  std::map<std::string, int> omega_idx, z_idx, g_idx;

  int new_param(const std::string& name, double start, double lo) {
    Parameter p;
    p.name = name;
    p.start = start;
    p.lo = lo;
    m.ps.params.push_back(p);
    return static_cast<int>(m.ps.params.size()) - 1;
  }

  // Attach a cell to a named, auto or fixed parameter. A later statement on the
  // same cell replaces the earlier one.
  void assign(int mat, int r, int c, const Term& t, bool symmetric, const std::string& lval,
              const std::string& op, const std::string& rval, int order, double start, double lo,
              const std::string& variance_of = "", const std::string& intercept_of = "",
              bool override_existing = true) {
    auto key = symmetric ? std::make_tuple(mat, std::min(r, c), std::max(r, c)) : std::make_tuple(mat, r, c);
    auto it = assigned.find(key);
    if (it != assigned.end()) {
      if (!override_existing) return;
      TableEntry& old = m.entries[it->second];
      if (old.param < 0 && t.mult == Term::Mult::Fixed && old.fixed != t.value)
        throw SemError(ErrorCode::DuplicateFixedLoading,
                       lval + " " + op + " " + rval + " fixed to two different values");
      detach(it->second, mat, r, c, symmetric);
    }
    TableEntry e;
    e.lval = lval;
    e.op = op;
    e.rval = rval;
    e.order = order;
    e.loc = {mat, r, c};
    if (t.mult == Term::Mult::Fixed) {
      e.param = -1;
      e.fixed = t.value;
      m.tpl.base[mat](r, c) = t.value;
      if (symmetric) m.tpl.base[mat](c, r) = t.value;
    } else {
      int idx;
      if (t.mult == Term::Mult::Named) {
        idx = m.ps.index(t.param);
        if (idx < 0) idx = new_param(t.param, start, lo);
      } else {
        idx = new_param("_p" + std::to_string(++auto_count), start, lo);
      }
      Parameter& p = m.ps.params[idx];
      if (p.variance_of.empty() && !variance_of.empty()) p.variance_of = variance_of;
      if (p.intercept_of.empty() && !intercept_of.empty()) p.intercept_of = intercept_of;
      p.locs.push_back({mat, r, c});
      if (symmetric && r != c) p.locs.push_back({mat, c, r});
      e.param = idx;
    }
    assigned[key] = static_cast<int>(m.entries.size());
    m.entries.push_back(e);
  }

  void detach(int entry, int mat, int r, int c, bool symmetric) {
    TableEntry& old = m.entries[entry];
    if (old.param >= 0) {
      auto& locs = m.ps.params[old.param].locs;
      locs.erase(std::remove_if(locs.begin(), locs.end(),
                                [&](const Loc& l) {
                                  return l.mat == mat && ((l.row == r && l.col == c) ||
                                                          (symmetric && l.row == c && l.col == r));
                                }),
                 locs.end());
    }
    m.tpl.base[mat](r, c) = 0.0;
    if (symmetric) m.tpl.base[mat](c, r) = 0.0;
    old.op = "";  // tombstone
  }

  void data_cell(int mat, int r, int c, const std::string& a, const std::string& b) {
    auto key = std::make_tuple(mat, std::min(r, c), std::max(r, c));
    if (assigned.count(key)) return;
    assigned[key] = -1;
    m.tpl.data_cells.push_back({{mat, r, c}, a, b});
  }

  bool is_assigned(int mat, int r, int c, bool symmetric) const {
    auto key = symmetric ? std::make_tuple(mat, std::min(r, c), std::max(r, c)) : std::make_tuple(mat, r, c);
    return assigned.count(key) > 0;
  }
};

}  // namespace

ModelStructure build_parameter_space(const ModelAst& ast_in, const VariableClassification& cls,
                                     ModelKind kind, const BuildOptions& opt) {
  ModelAst ast = expand(ast_in);
  Builder b;
  ModelStructure& m = b.m;
  m.kind = kind;
  m.options = opt;
  m.cls = cls;
  const bool means = kind != ModelKind::Model;
  std::vector<std::string> inner_obs = cls.endogenous;
  std::vector<std::string> fixed_exo = cls.fixed_exogenous;
  if (!means) {
    inner_obs.insert(inner_obs.end(), cls.exogenous.begin(), cls.exogenous.end());
    std::sort(inner_obs.begin(), inner_obs.end());
    fixed_exo.insert(fixed_exo.end(), cls.exogenous.begin(), cls.exogenous.end());
    std::sort(fixed_exo.begin(), fixed_exo.end());
  }
  auto& tpl = m.tpl;
  tpl.kind = kind;
  tpl.omega = cls.latent;
  tpl.omega.insert(tpl.omega.end(), inner_obs.begin(), inner_obs.end());
  tpl.z = cls.output;
  tpl.z.insert(tpl.z.end(), inner_obs.begin(), inner_obs.end());
  if (means) {
    tpl.g = cls.exogenous;
    bool explicit_one = false;
    for (const auto& st : ast.statements)
      if (const auto* r = std::get_if<Relation>(&st))
        if (r->op == Op::Regress)
          for (const auto& t : r->rhs)
            if (t.name == "1") explicit_one = true;
    if (opt.intercepts || explicit_one) tpl.g.push_back("1");
  }
  tpl.n_effects = kind == ModelKind::Effects ? 1 : (kind == ModelKind::Generalized ? std::max(0, opt.n_effects) : 0);
  const int no = static_cast<int>(tpl.omega.size()), nz = static_cast<int>(tpl.z.size()),
            ng = static_cast<int>(tpl.g.size());
  tpl.base.assign(kD0 + tpl.n_effects, Eigen::MatrixXd());
  tpl.base[kB] = Eigen::MatrixXd::Zero(no, no);
  tpl.base[kLambda] = Eigen::MatrixXd::Zero(nz, no);
  tpl.base[kPsi] = Eigen::MatrixXd::Zero(no, no);
  tpl.base[kTheta] = Eigen::MatrixXd::Zero(nz, nz);
  tpl.base[kGamma1] = Eigen::MatrixXd::Zero(no, ng);
  tpl.base[kGamma2] = Eigen::MatrixXd::Zero(nz, ng);
  for (int k = 0; k < tpl.n_effects; ++k) tpl.base[kD0 + k] = Eigen::MatrixXd::Zero(nz, nz);
  for (int i = 0; i < no; ++i) b.omega_idx[tpl.omega[i]] = i;
  for (int i = 0; i < nz; ++i) b.z_idx[tpl.z[i]] = i;
  for (int i = 0; i < ng; ++i) b.g_idx[tpl.g[i]] = i;
  for (int i = 0; i < nz; ++i) {
    auto it = b.omega_idx.find(tpl.z[i]);
    if (it != b.omega_idx.end()) tpl.base[kLambda](i, it->second) = 1.0;
  }
  auto in_omega = [&](const std::string& v) { return b.omega_idx.count(v) > 0; };
  auto in_z = [&](const std::string& v) { return b.z_idx.count(v) > 0; };
  auto is_latent = [&](const std::string& v) { return contains(cls.latent, v); };
  const double inf = std::numeric_limits<double>::infinity();

  // Which latent gets its first loading fixed.
  std::map<std::string, bool> has_fixed;
  for (const auto& st : ast.statements)
    if (const auto* r = std::get_if<Relation>(&st))
      if (r->op == Op::Measure)
        for (const auto& t : r->rhs)
          if (t.mult == Term::Mult::Fixed) has_fixed[r->lhs[0]] = true;

  auto regression_cell = [&](const std::string& lhs, const std::string& rhs, Term t, double start) {
    const std::string& L = lhs;
    const std::string& R = rhs;
    if (R == "1") {
      if (!means) return;
      if (in_omega(L))
        b.assign(kGamma1, b.omega_idx[L], b.g_idx["1"], t, false, L, "~", "1", 1, start, -inf, "", L);
      else
        b.assign(kGamma2, b.z_idx[L], b.g_idx["1"], t, false, L, "~", "1", 1, start, -inf, "", L);
      return;
    }
    if (means && b.g_idx.count(R)) {
      if (in_omega(L))
        b.assign(kGamma1, b.omega_idx[L], b.g_idx[R], t, false, L, "~", R, 0, start, -inf);
      else
        b.assign(kGamma2, b.z_idx[L], b.g_idx[R], t, false, L, "~", R, 0, start, -inf);
      return;
    }
    if (!in_omega(R))
      throw SemError(ErrorCode::ConflictingClass, "'" + R + "' cannot be a regressor of '" + L + "'");
    if (in_omega(L))
      b.assign(kB, b.omega_idx[L], b.omega_idx[R], t, false, L, "~", R, 0, start, -inf);
    else
      b.assign(kLambda, b.z_idx[L], b.omega_idx[R], t, false, L, "~", R, 0, start, -inf);
  };

  auto covariance_cell = [&](const std::string& a, const std::string& c, const Term& t) {
    int mat, r, q;
    if (in_omega(a) && in_omega(c)) {
      mat = kPsi;
      r = b.omega_idx[a];
      q = b.omega_idx[c];
    } else if (in_z(a) && in_z(c)) {
      mat = kTheta;
      r = b.z_idx[a];
      q = b.z_idx[c];
    } else {
      throw SemError(ErrorCode::ConflictingClass, "cannot set covariance between '" + a + "' and '" + c + "'");
    }
    bool diag = a == c;
    std::string var_of = diag && !is_latent(a) ? a : "";
    b.assign(mat, r, q, t, true, a, "~~", c, 2, diag ? 0.05 : 0.0, diag ? 0.0 : -inf, var_of);
  };

  std::map<std::string, bool> first_fixed_done;
  for (const auto& st : ast.statements) {
    const auto* r = std::get_if<Relation>(&st);
    if (!r) continue;
    const std::string& L = r->lhs[0];
    switch (r->op) {
      case Op::Regress:
        for (const auto& t : r->rhs) regression_cell(L, t.name, t, 0.0);
        break;
      case Op::Measure:
        for (const auto& t0 : r->rhs) {
          Term t = t0;
          if (!has_fixed[L] && !first_fixed_done[L] && t.mult == Term::Mult::None) {
            t.mult = Term::Mult::Fixed;
            t.value = 1.0;
            first_fixed_done[L] = true;
          }
          regression_cell(t.name, L, t, 1.0);
        }
        break;
      case Op::Covary:
        for (const auto& t : r->rhs) covariance_cell(L, t.name, t);
        break;
      case Op::RfCovary:
      case Op::RfCovaryK: {
        if (tpl.n_effects == 0) break;
        int k0 = 0, k1 = tpl.n_effects;
        if (r->op == Op::RfCovaryK) {
          if (r->k > tpl.n_effects)
            throw SemError(ErrorCode::DimensionMismatch, "~RF" + std::to_string(r->k) + "~ refers to a missing effect");
          k0 = r->k - 1;
          k1 = r->k;
        }
        for (const auto& t : r->rhs) {
          if (!in_z(L) || !in_z(t.name))
            throw SemError(ErrorCode::ConflictingClass, "random effect covariance needs observed variables");
          bool diag = L == t.name;
          for (int k = k0; k < k1; ++k) {
            std::string op = tpl.n_effects > 1 ? "~RF" + std::to_string(k + 1) + "~" : "~RF~";
            b.assign(kD0 + k, b.z_idx[L], b.z_idx[t.name], t, true, L, op, t.name, 3, diag ? 0.05 : 0.0,
                     diag ? 0.0 : -inf);
          }
        }
        break;
      }
    }
  }

  // Default variances and covariances.
  Term free;
  for (const auto& v : tpl.omega) {
    int i = b.omega_idx[v];
    if (contains(fixed_exo, v)) continue;
    if (!b.is_assigned(kPsi, i, i, true))
      b.assign(kPsi, i, i, free, true, v, "~~", v, 2, 0.05, 0.0, is_latent(v) ? "" : v);
  }
  for (size_t a = 0; a < fixed_exo.size(); ++a)
    for (size_t c = a; c < fixed_exo.size(); ++c) {
      int i = b.omega_idx[fixed_exo[a]], j = b.omega_idx[fixed_exo[c]];
      b.data_cell(kPsi, i, j, fixed_exo[a], fixed_exo[c]);
    }
  for (const auto& v : cls.output) {
    int i = b.z_idx[v];
    if (!b.is_assigned(kTheta, i, i, true)) b.assign(kTheta, i, i, free, true, v, "~~", v, 2, 0.05, 0.0, v);
  }
  if (!opt.cov_diag) {
    std::vector<std::string> pairs_of = cls.exogenous_latent;
    for (size_t a = 0; a < pairs_of.size(); ++a)
      for (size_t c = a + 1; c < pairs_of.size(); ++c) {
        int i = b.omega_idx[pairs_of[a]], j = b.omega_idx[pairs_of[c]];
        if (!b.is_assigned(kPsi, i, j, true))
          b.assign(kPsi, i, j, free, true, pairs_of[a], "~~", pairs_of[c], 2, 0.0, -inf);
      }
    for (size_t a = 0; a < cls.free_outputs.size(); ++a)
      for (size_t c = a + 1; c < cls.free_outputs.size(); ++c) {
        int i = b.omega_idx[cls.free_outputs[a]], j = b.omega_idx[cls.free_outputs[c]];
        if (!b.is_assigned(kPsi, i, j, true))
          b.assign(kPsi, i, j, free, true, cls.free_outputs[a], "~~", cls.free_outputs[c], 2, 0.0, -inf);
      }
  }
  if (means && opt.intercepts) {
    for (const auto& v : tpl.z) {
      Term t;
      if (in_omega(v)) {
        if (!b.is_assigned(kGamma1, b.omega_idx[v], b.g_idx["1"], false))
          b.assign(kGamma1, b.omega_idx[v], b.g_idx["1"], t, false, v, "~", "1", 1, 0.0, -inf, "", v);
      } else if (!b.is_assigned(kGamma2, b.z_idx[v], b.g_idx["1"], false)) {
        b.assign(kGamma2, b.z_idx[v], b.g_idx["1"], t, false, v, "~", "1", 1, 0.0, -inf, "", v);
      }
    }
  }
  for (int k = 0; k < tpl.n_effects; ++k) {
    std::string op = tpl.n_effects > 1 ? "~RF" + std::to_string(k + 1) + "~" : "~RF~";
    int mat = kD0 + k;
    if (opt.d_mode == DMode::Scale) {
      Term t;
      t.mult = Term::Mult::Named;
      t.param = "_d" + std::to_string(k + 1);
      for (int i = 0; i < nz; ++i)
        if (!b.is_assigned(mat, i, i, true)) b.assign(mat, i, i, t, true, tpl.z[i], op, tpl.z[i], 3, 0.05, 0.0);
    } else {
      for (int i = 0; i < nz; ++i)
        if (!b.is_assigned(mat, i, i, true)) b.assign(mat, i, i, free, true, tpl.z[i], op, tpl.z[i], 3, 0.05, 0.0);
      if (opt.d_mode == DMode::Full)
        for (int i = 0; i < nz; ++i)
          for (int j = i + 1; j < nz; ++j)
            if (!b.is_assigned(mat, i, j, true))
              b.assign(mat, i, j, free, true, tpl.z[i], op, tpl.z[j], 3, 0.0, -inf);
    }
  }

  // Operations.
  for (const auto& st : ast.statements) {
    const auto* c = std::get_if<Command>(&st);
    if (!c) continue;
    if (c->name == "START" || c->name == "BOUND") {
      for (const auto& o : c->operands) {
        int idx = m.ps.index(o);
        if (idx < 0)
          throw SemError(ErrorCode::UnknownParameterName, "parameter '" + o + "' must be named before " + c->name);
        Parameter& p = m.ps.params[idx];
        if (c->name == "START") {
          p.start = std::stod(c->args[0]);
          p.user_start = true;
        } else {
          auto val = [&](const std::string& s, double dflt) {
            if (s == "None") return dflt;
            if (s == "inf") return inf;
            if (s == "-inf") return -inf;
            return std::stod(s);
          };
          p.lo = val(c->args[0], -inf);
          p.hi = val(c->args[1], inf);
        }
      }
    } else if (c->name == "CONSTRAINT") {
      static const std::set<std::string> funcs = {"exp", "ln", "log", "sin", "cos"};
      for (const auto& id : identifiers_in(c->expr))
        if (!funcs.count(id) && m.ps.index(id) < 0)
          throw SemError(ErrorCode::UnknownParameterName, "parameter '" + id + "' in CONSTRAINT is not named");
      m.ps.constraints.push_back(c->expr);
    }
  }

  // Drop overridden entries, order rows, drop parameters left without cells.
  std::vector<TableEntry> kept;
  for (auto& e : m.entries)
    if (!e.op.empty()) kept.push_back(e);
  std::stable_sort(kept.begin(), kept.end(), [](const TableEntry& a, const TableEntry& c) { return a.order < c.order; });
  std::vector<int> remap(m.ps.params.size(), -1);
  std::vector<Parameter> ps;
  for (size_t i = 0; i < m.ps.params.size(); ++i) {
    if (m.ps.params[i].locs.empty()) continue;
    remap[i] = static_cast<int>(ps.size());
    ps.push_back(m.ps.params[i]);
  }
  for (auto& e : kept)
    if (e.param >= 0) e.param = remap[e.param];
  m.ps.params = std::move(ps);
  m.entries = std::move(kept);
  for (auto& p : m.ps.params)
    if (p.start < p.lo || p.start > p.hi) p.start = std::isfinite(p.lo) ? (std::isfinite(p.hi) ? 0.5 * (p.lo + p.hi) : p.lo + 0.05) : p.hi - 0.05;
  return m;
}

void apply_sample_stats(ModelStructure& m, const std::vector<std::string>& names, const Eigen::MatrixXd& cov,
                        const Eigen::VectorXd& means) {
  auto idx = [&](const std::string& v) {
    int i = pos(names, v);
    if (i < 0) throw SemError(ErrorCode::MissingColumn, "variable '" + v + "' not in data");
    return i;
  };
  for (const auto& c : m.tpl.data_cells) {
    double v = cov(idx(c.a), idx(c.b));
    m.tpl.base[c.loc.mat](c.loc.row, c.loc.col) = v;
    m.tpl.base[c.loc.mat](c.loc.col, c.loc.row) = v;
  }
  for (auto& p : m.ps.params) {
    if (p.user_start) continue;
    if (!p.variance_of.empty() && pos(names, p.variance_of) >= 0) {
      int i = idx(p.variance_of);
      p.start = 0.05 + 0.5 * cov(i, i);
    }
    if (!p.intercept_of.empty() && pos(names, p.intercept_of) >= 0 && means.size())
      p.start = means[idx(p.intercept_of)];
    // loading on a latent with a fixed reference indicator: cov(y, ref) / var(ref)
    const Loc& l = p.locs.front();
    if (l.mat == kLambda && pos(m.cls.latent, m.tpl.omega[l.col]) >= 0) {
      const auto& lam = m.tpl.base[kLambda];
      for (Eigen::Index r = 0; r < lam.rows(); ++r) {
        if (lam(r, l.col) == 0.0 || r == l.row) continue;
        const int a = pos(names, m.tpl.z[l.row]), f = pos(names, m.tpl.z[r]);
        if (a >= 0 && f >= 0 && cov(f, f) > 0) p.start = cov(a, f) / (cov(f, f) * lam(r, l.col));
        break;
      }
    }
    if (p.start < p.lo) p.start = p.lo;
    if (p.start > p.hi) p.start = p.hi;
  }
}

void fill_matrices(const MatrixTemplates& tpl, const ParameterSpace& ps, const Eigen::VectorXd& theta,
                   std::vector<Eigen::MatrixXd>& mats) {
  mats = tpl.base;
  for (size_t i = 0; i < ps.params.size(); ++i)
    for (const auto& l : ps.params[i].locs) mats[l.mat](l.row, l.col) = theta[static_cast<Eigen::Index>(i)];
}

}  // namespace sem
