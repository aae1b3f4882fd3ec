#include "sem/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

#include "sem/errors.hpp"

namespace sem {

// ---------------------------------------------------------------- expressions

struct ExprNode {
  enum Kind { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Sin, Cos } kind;
  double value = 0.0;
  int var = -1;
  std::shared_ptr<const ExprNode> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr node(ExprNode::Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

class ExprParser {
 public:
  ExprParser(const std::string& s, const std::vector<std::string>& names) : s_(s), names_(names) {}

  NodePtr parse_all() {
    NodePtr e = expr();
    skip();
    if (i_ != s_.size()) fail("unexpected '" + s_.substr(i_) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw SemError(ErrorCode::ParseError, msg + " in '" + s_ + "'"); }
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool eat(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  NodePtr expr() {
    NodePtr l = term();
    for (;;) {
      if (eat('+')) l = node(ExprNode::Add, l, term());
      else if (eat('-')) l = node(ExprNode::Sub, l, term());
      else return l;
    }
  }
  NodePtr term() {
    NodePtr l = unary();
    for (;;) {
      skip();
      if (i_ + 1 < s_.size() && s_[i_] == '*' && s_[i_ + 1] == '*') return l;
      if (eat('*')) l = node(ExprNode::Mul, l, unary());
      else if (eat('/')) l = node(ExprNode::Div, l, unary());
      else return l;
    }
  }
  NodePtr unary() {
    if (eat('-')) return node(ExprNode::Neg, unary());
    if (eat('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    skip();
    if (i_ + 1 < s_.size() && s_[i_] == '*' && s_[i_ + 1] == '*') {
      i_ += 2;
      return node(ExprNode::Pow, base, unary());
    }
    if (eat('^')) return node(ExprNode::Pow, base, unary());
    return base;
  }
  NodePtr primary() {
    skip();
    if (i_ >= s_.size()) fail("unexpected end");
    char c = s_[i_];
    if (c == '(') {
      ++i_;
      NodePtr e = expr();
      if (!eat(')')) fail("missing ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t used = 0;
      double v = std::stod(s_.substr(i_), &used);
      i_ += used;
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprNode::Const;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i_;
      while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_' || s_[j] == '.')) ++j;
      std::string id = s_.substr(i_, j - i_);
      i_ = j;
      if (eat('(')) {
        ExprNode::Kind k;
        if (id == "exp") k = ExprNode::Exp;
        else if (id == "ln" || id == "log") k = ExprNode::Log;
        else if (id == "sin") k = ExprNode::Sin;
        else if (id == "cos") k = ExprNode::Cos;
        else fail("unsupported function '" + id + "'");
        NodePtr arg = expr();
        if (!eat(')')) fail("missing ')'");
        return node(k, arg);
      }
      auto it = std::find(names_.begin(), names_.end(), id);
      if (it == names_.end()) throw SemError(ErrorCode::UnknownParameterName, "unknown parameter '" + id + "'");
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprNode::Var;
      n->var = static_cast<int>(it - names_.begin());
      return n;
    }
    fail(std::string("unexpected '") + c + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& names_;
  size_t i_ = 0;
};

// Forward-mode evaluation: value and gradient.
double eval(const ExprNode& n, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  const Eigen::Index d = x.size();
  g.setZero(d);
  Eigen::VectorXd ga(d), gb(d);
  switch (n.kind) {
    case ExprNode::Const:
      return n.value;
    case ExprNode::Var:
      g[n.var] = 1.0;
      return x[n.var];
    case ExprNode::Add: {
      double a = eval(*n.a, x, ga), b = eval(*n.b, x, gb);
      g = ga + gb;
      return a + b;
    }
    case ExprNode::Sub: {
      double a = eval(*n.a, x, ga), b = eval(*n.b, x, gb);
      g = ga - gb;
      return a - b;
    }
    case ExprNode::Mul: {
      double a = eval(*n.a, x, ga), b = eval(*n.b, x, gb);
      g = b * ga + a * gb;
      return a * b;
    }
    case ExprNode::Div: {
      double a = eval(*n.a, x, ga), b = eval(*n.b, x, gb);
      if (b == 0) throw SemError(ErrorCode::DomainError, "division by zero");
      g = ga / b - a / (b * b) * gb;
      return a / b;
    }
    case ExprNode::Pow: {
      double a = eval(*n.a, x, ga), b = eval(*n.b, x, gb);
      double v = std::pow(a, b);
      if (!std::isfinite(v)) throw SemError(ErrorCode::DomainError, "invalid power");
      g = (a == 0 && b == 0) ? Eigen::VectorXd::Zero(d) : Eigen::VectorXd(b * std::pow(a, b - 1) * ga);
      if (gb.cwiseAbs().maxCoeff() > 0) {
        if (a <= 0) throw SemError(ErrorCode::DomainError, "power with nonpositive base and variable exponent");
        g += v * std::log(a) * gb;
      }
      return v;
    }
    case ExprNode::Neg: {
      double a = eval(*n.a, x, ga);
      g = -ga;
      return -a;
    }
    case ExprNode::Exp: {
      double v = std::exp(eval(*n.a, x, ga));
      g = v * ga;
      return v;
    }
    case ExprNode::Log: {
      double a = eval(*n.a, x, ga);
      if (a <= 0) throw SemError(ErrorCode::DomainError, "ln of a nonpositive value");
      g = ga / a;
      return std::log(a);
    }
    case ExprNode::Sin: {
      double a = eval(*n.a, x, ga);
      g = std::cos(a) * ga;
      return std::sin(a);
    }
    case ExprNode::Cos: {
      double a = eval(*n.a, x, ga);
      g = -std::sin(a) * ga;
      return std::cos(a);
    }
  }
  return 0.0;
}

}  // namespace

ConstraintExpr parse_constraint(const std::string& text, const std::vector<std::string>& names) {
  int depth = 0;
  size_t pos = std::string::npos, len = 0;
  ConstraintRel rel = ConstraintRel::Eq;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '(') ++depth;
    else if (c == ')') --depth;
    else if (depth == 0 && (c == '=' || c == '<' || c == '>')) {
      pos = i;
      len = (i + 1 < text.size() && text[i + 1] == '=') ? 2 : 1;
      rel = c == '<' ? ConstraintRel::Less : (c == '>' ? ConstraintRel::Greater : ConstraintRel::Eq);
      break;
    }
  }
  if (pos == std::string::npos) throw SemError(ErrorCode::ParseError, "constraint has no relation: '" + text + "'");
  ConstraintExpr c;
  c.text = text;
  c.rel = rel;
  std::string l = text.substr(0, pos), r = text.substr(pos + len);
  c.lhs = ExprParser(l, names).parse_all();
  c.rhs = ExprParser(r, names).parse_all();
  return c;
}

std::pair<double, Eigen::VectorXd> eval_constraint(const ConstraintExpr& c, const Eigen::VectorXd& theta) {
  Eigen::VectorXd gl, gr;
  double l = eval(*c.lhs, theta, gl), r = eval(*c.rhs, theta, gr);
  if (c.rel == ConstraintRel::Less) return {r - l, gr - gl};
  return {l - r, gl - gr};
}

Constraint to_constraint(const ConstraintExpr& c) {
  Constraint out;
  out.equality = c.rel == ConstraintRel::Eq;
  out.g = [c](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    auto [v, g] = eval_constraint(c, x);
    if (grad) *grad = g;
    return v;
  };
  return out;
}

Solver parse_solver(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), ::tolower);
  if (l == "sqp" || l == "slsqp") return Solver::SQP;
  if (l == "de") return Solver::DE;
  throw SemError(ErrorCode::ParseError, "unknown solver '" + s + "'");
}

// ---------------------------------------------------------------- dual QP

namespace {

inline double hypot2(double a, double b) { return std::hypot(a, b); }

bool add_constraint(Eigen::MatrixXd& R, Eigen::MatrixXd& J, Eigen::VectorXd& d, int& iq, double& r_norm) {
  const int n = static_cast<int>(J.rows());
  for (int j = n - 1; j >= iq + 1; --j) {
    double cc = d[j - 1], ss = d[j];
    double h = hypot2(cc, ss);
    if (h == 0.0) continue;
    d[j] = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d[j - 1] = -h;
    } else {
      d[j - 1] = h;
    }
    double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      double t1 = J(k, j - 1), t2 = J(k, j);
      J(k, j - 1) = t1 * cc + t2 * ss;
      J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
    }
  }
  ++iq;
  R.col(iq - 1).head(iq) = d.head(iq);
  if (std::abs(d[iq - 1]) <= std::numeric_limits<double>::epsilon() * r_norm) return false;
  r_norm = std::max(r_norm, std::abs(d[iq - 1]));
  return true;
}

void delete_constraint(Eigen::MatrixXd& R, Eigen::MatrixXd& J, Eigen::VectorXi& A, Eigen::VectorXd& u, int meq, int& iq,
                       int l) {
  const int n = static_cast<int>(J.rows());
  int qq = -1;
  for (int i = meq; i < iq; ++i)
    if (A[i] == l) {
      qq = i;
      break;
    }
  if (qq < 0) return;
  for (int i = qq; i < iq - 1; ++i) {
    A[i] = A[i + 1];
    u[i] = u[i + 1];
    R.col(i) = R.col(i + 1);
  }
  A[iq - 1] = A[iq];
  u[iq - 1] = u[iq];
  A[iq] = 0;
  u[iq] = 0.0;
  R.col(iq - 1).setZero();
  --iq;
  if (iq == 0) return;
  for (int j = qq; j < iq; ++j) {
    double cc = R(j, j), ss = R(j + 1, j);
    double h = hypot2(cc, ss);
    if (h == 0.0) continue;
    cc /= h;
    ss /= h;
    R(j + 1, j) = 0.0;
    if (cc < 0.0) {
      R(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      R(j, j) = h;
    }
    double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq; ++k) {
      double t1 = R(j, k), t2 = R(j + 1, k);
      R(j, k) = t1 * cc + t2 * ss;
      R(j + 1, k) = xny * (t1 + R(j, k)) - t2;
    }
    for (int k = 0; k < n; ++k) {
      double t1 = J(k, j), t2 = J(k, j + 1);
      J(k, j) = t1 * cc + t2 * ss;
      J(k, j + 1) = xny * (J(k, j) + t1) - t2;
    }
  }
}

}  // namespace

double solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& g0, const Eigen::MatrixXd& CE,
                const Eigen::VectorXd& ce0, const Eigen::MatrixXd& CI, const Eigen::VectorXd& ci0, Eigen::VectorXd& x,
                Eigen::VectorXd* multipliers) {
  const double inf = std::numeric_limits<double>::infinity();
  const double eps = std::numeric_limits<double>::epsilon();
  const int n = static_cast<int>(G.rows()), me = static_cast<int>(CE.cols()), mi = static_cast<int>(CI.cols());
  const int m = me + mi;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) return inf;
  Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd J = L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd s(mi), z(n), r(m + 1), d(n), np(n), u = Eigen::VectorXd::Zero(m + 1), x_old(n),
      u_old = Eigen::VectorXd::Zero(m + 1);
  Eigen::VectorXi A = Eigen::VectorXi::Zero(m + 1), A_old = Eigen::VectorXi::Zero(m + 1), iai(mi), iaexcl(mi);
  const double c1 = G.trace(), c2 = J.trace();
  double r_norm = 1.0;
  x = -llt.solve(g0);
  double f = 0.5 * g0.dot(x);
  int iq = 0;

  auto update_z = [&]() { z = J.rightCols(n - iq) * d.tail(n - iq); };
  auto update_r = [&]() {
    r.head(iq) = R.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
  };

  for (int i = 0; i < me; ++i) {
    np = CE.col(i);
    d = J.transpose() * np;
    update_z();
    update_r();
    double t2 = 0.0;
    if (std::abs(z.dot(z)) > eps) t2 = (-np.dot(x) - ce0[i]) / z.dot(np);
    x += t2 * z;
    u[iq] = t2;
    u.head(iq) -= t2 * r.head(iq);
    f += 0.5 * t2 * t2 * z.dot(np);
    A[i] = -i - 1;
    if (!add_constraint(R, J, d, iq, r_norm)) return inf;
  }
  for (int i = 0; i < mi; ++i) iai[i] = i;

  int ip = 0;
  int guard = 0;
  const int max_guard = 50 * (m + n + 10);
  for (;;) {
    // step 1: pick a violated constraint
    if (++guard > max_guard) return inf;
    for (int i = me; i < iq; ++i) iai[A[i]] = -1;
    double psi = 0.0;
    for (int i = 0; i < mi; ++i) {
      iaexcl[i] = 1;
      s[i] = CI.col(i).dot(x) + ci0[i];
      psi += std::min(0.0, s[i]);
    }
    if (std::abs(psi) <= mi * eps * c1 * c2 * 100.0) break;
    u_old.head(iq) = u.head(iq);
    A_old.head(iq) = A.head(iq);
    x_old = x;

    bool restart = false;
    for (;;) {  // l2
      double ss = 0.0;
      for (int i = 0; i < mi; ++i)
        if (s[i] < ss && iai[i] != -1 && iaexcl[i]) {
          ss = s[i];
          ip = i;
        }
      if (ss >= 0.0) {
        restart = false;
        goto done;
      }
      np = CI.col(ip);
      u[iq] = 0.0;
      A[iq] = ip;
      for (;;) {  // l2a
        if (++guard > max_guard) return inf;
        d = J.transpose() * np;
        update_z();
        update_r();
        int l = 0;
        double t1 = inf;
        for (int k = me; k < iq; ++k)
          if (r[k] > 0.0) {
            double tmp = u[k] / r[k];
            if (tmp < t1) {
              t1 = tmp;
              l = A[k];
            }
          }
        double t2 = std::abs(z.dot(z)) > eps ? -s[ip] / z.dot(np) : inf;
        double t = std::min(t1, t2);
        if (t >= inf) return inf;
        if (t2 >= inf) {
          u.head(iq) -= t * r.head(iq);
          u[iq] += t;
          iai[l] = l;
          delete_constraint(R, J, A, u, me, iq, l);
          continue;
        }
        x += t * z;
        f += t * z.dot(np) * (0.5 * t + u[iq]);
        u.head(iq) -= t * r.head(iq);
        u[iq] += t;
        if (t == t2) {
          if (!add_constraint(R, J, d, iq, r_norm)) {
            iaexcl[ip] = 0;
            delete_constraint(R, J, A, u, me, iq, ip);
            for (int i = 0; i < mi; ++i) iai[i] = i;
            for (int i = 0; i < iq; ++i) {
              A[i] = A_old[i];
              if (A[i] >= 0) iai[A[i]] = -1;
              u[i] = u_old[i];
            }
            x = x_old;
            break;  // back to l2
          }
          iai[ip] = -1;
          restart = true;
          break;
        }
        iai[l] = l;
        delete_constraint(R, J, A, u, me, iq, l);
        s[ip] = CI.col(ip).dot(x) + ci0[ip];
      }
      if (restart) break;
    }
  }
done:
  if (multipliers) {
    multipliers->setZero(m);
    for (int i = 0; i < iq; ++i) {
      if (A[i] < 0) (*multipliers)[-A[i] - 1] = u[i];
      else (*multipliers)[me + A[i]] = u[i];
    }
  }
  return f;
}

// ---------------------------------------------------------------- SQP

namespace {

struct Eval {
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd g;
  Eigen::VectorXd ce, ci;
  Eigen::MatrixXd Je, Ji;  // rows are constraint gradients
  bool ok = false;
};

Eval evaluate(const SolveRequest& req, const Eigen::VectorXd& x, bool grads) {
  Eval e;
  try {
    e.f = req.objective(x, grads ? &e.g : nullptr);
    if (!std::isfinite(e.f) || (grads && !e.g.allFinite())) return e;
    int me = 0, mi = 0;
    for (const auto& c : req.constraints) (c.equality ? me : mi)++;
    e.ce.resize(me);
    e.ci.resize(mi);
    e.Je.resize(me, x.size());
    e.Ji.resize(mi, x.size());
    int ie = 0, ii = 0;
    for (const auto& c : req.constraints) {
      Eigen::VectorXd g;
      double v = c.g(x, grads ? &g : nullptr);
      if (c.equality) {
        e.ce[ie] = v;
        if (grads) e.Je.row(ie) = g.transpose();
        ++ie;
      } else {
        e.ci[ii] = v;
        if (grads) e.Ji.row(ii) = g.transpose();
        ++ii;
      }
    }
    e.ok = true;
  } catch (const SemError&) {
    e.ok = false;
  }
  return e;
}

double violation(const Eval& e) {
  double v = 0;
  for (Eigen::Index i = 0; i < e.ce.size(); ++i) v += std::abs(e.ce[i]);
  for (Eigen::Index i = 0; i < e.ci.size(); ++i) v += std::max(0.0, -e.ci[i]);
  return v;
}

Eigen::VectorXd clip(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd y = x;
  if (lo.size()) y = y.cwiseMax(lo);
  if (hi.size()) y = y.cwiseMin(hi);
  return y;
}

FitResult sqp(const SolveRequest& req, const Eigen::VectorXd& start) {
  const double inf = std::numeric_limits<double>::infinity();
  const Eigen::Index n = start.size();
  Eigen::VectorXd lo = req.lo.size() ? req.lo : Eigen::VectorXd::Constant(n, -inf);
  Eigen::VectorXd hi = req.hi.size() ? req.hi : Eigen::VectorXd::Constant(n, inf);
  FitResult res;
  res.method = "SLSQP";
  Eigen::VectorXd x = clip(start, lo, hi);
  Eval cur = evaluate(req, x, true);
  if (!cur.ok) throw SemError(ErrorCode::ObjectiveError, "objective cannot be evaluated at the starting point");
  if (n == 0) {
    res.success = true;
    res.value = cur.f;
    res.x = x;
    return res;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  double mu = 1.0;
  Eigen::VectorXd lam_e = Eigen::VectorXd::Zero(cur.ce.size()), lam_i = Eigen::VectorXd::Zero(cur.ci.size());
  int stall = 0;
  for (int it = 1; it <= req.max_iter; ++it) {
    res.iterations = it;
    const Eigen::Index me = cur.ce.size(), mi = cur.ci.size();
    // Bounds as extra inequality rows on the step.
    std::vector<Eigen::Index> lb, ub;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isfinite(lo[i])) lb.push_back(i);
      if (std::isfinite(hi[i])) ub.push_back(i);
    }
    const Eigen::Index nb = static_cast<Eigen::Index>(lb.size() + ub.size());
    Eigen::MatrixXd CE = cur.Je.transpose();
    Eigen::MatrixXd CI = Eigen::MatrixXd::Zero(n, mi + nb);
    Eigen::VectorXd ci0(mi + nb);
    CI.leftCols(mi) = cur.Ji.transpose();
    for (size_t k = 0; k < lb.size(); ++k) {
      CI(lb[k], mi + static_cast<Eigen::Index>(k)) = 1.0;
      ci0[mi + static_cast<Eigen::Index>(k)] = x[lb[k]] - lo[lb[k]];
    }
    for (size_t k = 0; k < ub.size(); ++k) {
      Eigen::Index c = mi + static_cast<Eigen::Index>(lb.size() + k);
      CI(ub[k], c) = -1.0;
      ci0[c] = hi[ub[k]] - x[ub[k]];
    }
    Eigen::VectorXd d, mult;
    double qp = inf;
    for (double tau : {1.0, 0.5, 0.1, 0.0}) {
      Eigen::VectorXd ce0 = tau * cur.ce;
      ci0.head(mi) = cur.ci.unaryExpr([&](double v) { return v < 0 ? tau * v : v; });
      qp = solve_qp(H, cur.g, CE, ce0, CI, ci0, d, &mult);
      if (std::isfinite(qp)) break;
    }
    if (!std::isfinite(qp)) {
      res.message = "QP subproblem infeasible";
      break;
    }
    Eigen::VectorXd new_le = mult.head(me), new_li = mult.segment(me, mi);
    double lmax = 0;
    if (me) lmax = std::max(lmax, new_le.cwiseAbs().maxCoeff());
    if (mi) lmax = std::max(lmax, new_li.cwiseAbs().maxCoeff());
    mu = std::max(mu, 1.5 * lmax);
    const double viol0 = violation(cur);
    const double merit0 = cur.f + mu * viol0;
    const double dphi = cur.g.dot(d) - mu * viol0;
    if (d.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + x.lpNorm<Eigen::Infinity>()) && viol0 < 1e-8) {
      res.success = true;
      res.message = "Optimization terminated successfully";
      break;
    }
    double alpha = 1.0;
    Eval next;
    Eigen::VectorXd xn;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = clip(x + alpha * d, lo, hi);
      next = evaluate(req, xn, true);
      if (next.ok) {
        double merit = next.f + mu * violation(next);
        if (merit <= merit0 + 1e-4 * alpha * std::min(dphi, 0.0) || (ls == 0 && merit <= merit0)) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Reset curvature and try again from the same point once.
      if (stall++ < 2) {
        H.setIdentity();
        continue;
      }
      res.message = "Positive directional derivative for linesearch";
      res.success = violation(cur) < 1e-6 && d.lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + x.lpNorm<Eigen::Infinity>());
      break;
    }
    stall = 0;
    // Damped BFGS on the Lagrangian.
    Eigen::VectorXd s = xn - x;
    Eigen::VectorXd gl_old = cur.g, gl_new = next.g;
    if (me) {
      gl_old -= cur.Je.transpose() * new_le;
      gl_new -= next.Je.transpose() * new_le;
    }
    if (mi) {
      gl_old -= cur.Ji.transpose() * new_li;
      gl_new -= next.Ji.transpose() * new_li;
    }
    Eigen::VectorXd y = gl_new - gl_old;
    const double fprev = cur.f;
    x = xn;
    cur = std::move(next);
    lam_e = new_le;
    lam_i = new_li;
    if (s.squaredNorm() > 0) {
      if (it == 1 && y.dot(s) > 0) H *= y.dot(y) / y.dot(s);
      Eigen::VectorXd hs = H * s;
      double shs = s.dot(hs), sy = s.dot(y);
      double theta = sy >= 0.2 * shs ? 1.0 : 0.8 * shs / (shs - sy);
      Eigen::VectorXd rr = theta * y + (1 - theta) * hs;
      double srr = s.dot(rr);
      if (shs > 0 && srr > 0) {
        H += rr * rr.transpose() / srr - hs * hs.transpose() / shs;
        H = 0.5 * (H + H.transpose());
      }
    }
    const double viol = violation(cur);
    const double df = std::abs(fprev - cur.f);
    if (viol < 1e-8 && df <= req.tol * std::max(1.0, std::abs(cur.f)) &&
        s.lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      res.success = true;
      res.message = "Optimization terminated successfully";
      break;
    }
  }
  if (res.message.empty()) res.message = "Iteration limit reached";
  res.x = x;
  res.value = cur.f;
  if (violation(cur) > 1e-6) res.success = false;
  return res;
}

// ---------------------------------------------------------------- DE

FitResult differential_evolution(const SolveRequest& req) {
  const Eigen::Index n = req.theta0.size();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double l = req.lo.size() ? req.lo[i] : -inf, h = req.hi.size() ? req.hi[i] : inf;
    if (!std::isfinite(l) && !std::isfinite(h)) {
      l = -req.b_max;
      h = req.b_max;
    } else if (!std::isfinite(l)) {
      l = h - req.b_max;
    } else if (!std::isfinite(h)) {
      h = l + req.b_max;
    }
    lo[i] = l;
    hi[i] = h;
  }
  const int np = std::max<int>(5, static_cast<int>(15 * n));
  std::mt19937_64 rng(req.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto penalized = [&](const Eigen::VectorXd& x) {
    try {
      double f = req.objective(x, nullptr);
      double v = 0;
      for (const auto& c : req.constraints) {
        double g = c.g(x, nullptr);
        v += c.equality ? std::abs(g) : std::max(0.0, -g);
      }
      double r = f + 1e4 * v;
      return std::isfinite(r) ? r : inf;
    } catch (const SemError&) {
      return inf;
    }
  };
  std::vector<Eigen::VectorXd> pop(np), trial(np);
  Eigen::VectorXd fit(np), tfit(np);
  for (int k = 0; k < np; ++k) {
    pop[k].resize(n);
    for (Eigen::Index i = 0; i < n; ++i) pop[k][i] = lo[i] + unif(rng) * (hi[i] - lo[i]);
  }
  pop[0] = req.theta0.cwiseMax(lo).cwiseMin(hi);
  auto eval_all = [&](std::vector<Eigen::VectorXd>& xs, Eigen::VectorXd& fs) {
    if (req.parallel) {
#pragma omp parallel for schedule(dynamic)
      for (int k = 0; k < np; ++k) fs[k] = penalized(xs[k]);
    } else {
      for (int k = 0; k < np; ++k) fs[k] = penalized(xs[k]);
    }
  };
  eval_all(pop, fit);
  int gen = 0;
  for (; gen < req.de_generations; ++gen) {
    for (int k = 0; k < np; ++k) {
      int a, b, c;
      do a = static_cast<int>(unif(rng) * np) % np; while (a == k);
      do b = static_cast<int>(unif(rng) * np) % np; while (b == k || b == a);
      do c = static_cast<int>(unif(rng) * np) % np; while (c == k || c == a || c == b);
      Eigen::Index jr = static_cast<Eigen::Index>(unif(rng) * n) % n;
      trial[k] = pop[k];
      for (Eigen::Index i = 0; i < n; ++i)
        if (unif(rng) < 0.9 || i == jr) {
          double v = pop[a][i] + 0.8 * (pop[b][i] - pop[c][i]);
          if (v < lo[i] || v > hi[i]) v = lo[i] + unif(rng) * (hi[i] - lo[i]);
          trial[k][i] = v;
        }
    }
    eval_all(trial, tfit);
    for (int k = 0; k < np; ++k)
      if (tfit[k] <= fit[k]) {
        pop[k] = trial[k];
        fit[k] = tfit[k];
      }
    Eigen::Index best;
    double fb = fit.minCoeff(&best);
    double mean = 0, var = 0;
    int finite = 0;
    for (int k = 0; k < np; ++k)
      if (std::isfinite(fit[k])) mean += fit[k], ++finite;
    if (finite == np) {
      mean /= np;
      for (int k = 0; k < np; ++k) var += (fit[k] - mean) * (fit[k] - mean);
      if (std::sqrt(var / np) <= 1e-8 * std::abs(mean) + 1e-10) break;
    }
    (void)fb;
  }
  Eigen::Index best;
  fit.minCoeff(&best);
  SolveRequest polish = req;
  polish.method = Solver::SQP;
  FitResult res;
  try {
    res = sqp(polish, pop[best]);
  } catch (const SemError&) {
    res.x = pop[best];
    res.value = fit[best];
    res.success = false;
    res.message = "polish failed";
  }
  res.method = "DE";
  res.iterations += gen;
  return res;
}

}  // namespace

FitResult minimize(const SolveRequest& req) {
  if (req.method == Solver::DE) return differential_evolution(req);
  return sqp(req, req.theta0);
}

}  // namespace sem
