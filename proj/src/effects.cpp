#include "sem/effects.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "sem/errors.hpp"

namespace sem {

Eigen::MatrixXd zkz(const std::vector<std::string>& labels, const LabelledMatrix* v) {
  const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd k(n, n);
  if (!v) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
    return k;
  }
  std::map<std::string, int> pos;
  for (size_t i = 0; i < v->labels.size(); ++i) pos[v->labels[i]] = static_cast<int>(i);
  std::vector<int> g(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = pos.find(labels[i]);
    if (it == pos.end()) throw SemError(ErrorCode::UnknownGroupLabel, "group '" + labels[i] + "' not in K");
    g[i] = it->second;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = v->m(g[i], g[j]);
  return k;
}

namespace {
double ma_coef(const Eigen::VectorXd& alpha, int i) { return i == 0 ? 1.0 : alpha[i - 1]; }
}  // namespace

double autocorrelation_ma(const Eigen::VectorXd& alpha, int lag) {
  const int p = static_cast<int>(alpha.size());
  if (lag == 0) return 1.0;
  if (lag < 0 || lag > p) return 0.0;
  double num = 0, den = 0;
  for (int i = 0; i <= p; ++i) den += ma_coef(alpha, i) * ma_coef(alpha, i);
  for (int i = 0; i <= p - lag; ++i) num += ma_coef(alpha, i) * ma_coef(alpha, i + lag);
  return num / den;
}

Eigen::VectorXd autocorrelation_ma_grad(const Eigen::VectorXd& alpha, int lag) {
  const int p = static_cast<int>(alpha.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  if (lag <= 0 || lag > p) return g;
  double num = 0, den = 0;
  for (int i = 0; i <= p; ++i) den += ma_coef(alpha, i) * ma_coef(alpha, i);
  for (int i = 0; i <= p - lag; ++i) num += ma_coef(alpha, i) * ma_coef(alpha, i + lag);
  for (int j = 1; j <= p; ++j) {
    double dnum = 0;
    if (j + lag <= p) dnum += ma_coef(alpha, j + lag);
    if (j - lag >= 0) dnum += ma_coef(alpha, j - lag);
    double dden = 2 * alpha[j - 1];
    g[j - 1] = (dnum * den - num * dden) / (den * den);
  }
  return g;
}

double autocorrelation_ar(double alpha, int lag) { return lag < 0 ? 0.0 : std::pow(alpha, lag); }

std::vector<Interval> default_dt_bounds(int order) {
  std::vector<Interval> b;
  for (int i = 0; i <= order; ++i) b.emplace_back(i, i + 1);
  return b;
}

std::optional<int> lag_of(double dt, const std::vector<Interval>& bounds) {
  if (dt < 0) throw SemError(ErrorCode::NegativeDt, "negative time difference");
  for (size_t i = 0; i < bounds.size(); ++i)
    if (dt >= bounds[i].first && dt < bounds[i].second) return static_cast<int>(i);
  return std::nullopt;
}

double matern_cov(double d, double nu, double rho) {
  if (d == 0) return 1.0;
  if (std::isinf(nu)) return std::exp(-d * d / (2 * rho * rho));
  if (nu == 0.5) return std::exp(-d / rho);
  const double x = std::sqrt(2 * nu) * d / rho;
  return std::exp((1 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x)) * std::cyl_bessel_k(nu, x);
}

double matern_cov_drho(double d, double nu, double rho) {
  if (d == 0) return 0.0;
  if (std::isinf(nu)) return std::exp(-d * d / (2 * rho * rho)) * d * d / (rho * rho * rho);
  if (nu == 0.5) return std::exp(-d / rho) * d / (rho * rho);
  const double x = std::sqrt(2 * nu) * d / rho;
  // d/dx [x^nu K_nu(x)] = -x^nu K_{nu-1}(x), dx/drho = -x/rho
  return std::exp((1 - nu) * std::log(2.0) - std::lgamma(nu) + (nu + 1) * std::log(x)) *
         std::cyl_bessel_k(std::abs(nu - 1), x) / rho;
}

std::vector<Eigen::MatrixXd> EffectKernel::grad_k(const Eigen::VectorXd&) const { return {}; }

std::vector<Interval> EffectKernel::get_bounds() const {
  const double inf = std::numeric_limits<double>::infinity();
  return std::vector<Interval>(n_params(), {-inf, inf});
}

std::vector<std::string> EffectKernel::param_names() const {
  std::vector<std::string> n;
  for (int i = 0; i < n_params(); ++i) n.push_back(name() + "_" + std::to_string(i + 1));
  return n;
}

namespace {
void require(const DataTable& data, const std::string& c) {
  if (!data.has(c)) throw SemError(ErrorCode::MissingColumn, "column '" + c + "' not in data");
}

std::vector<std::string> distinct(const std::vector<std::string>& labels, std::vector<int>& assign) {
  std::vector<std::string> g;
  std::map<std::string, int> pos;
  assign.resize(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = pos.find(labels[i]);
    if (it == pos.end()) {
      it = pos.emplace(labels[i], static_cast<int>(g.size())).first;
      g.push_back(labels[i]);
    }
    assign[i] = it->second;
  }
  return g;
}

// Pairwise lag matrix from a time column; -1 marks "beyond" or different groups.
Eigen::MatrixXi time_lags(const DataTable& data, const std::string& time, const std::string& group,
                          const std::function<int(double)>& lag) {
  require(data, time);
  Eigen::VectorXd t = data.column(time);
  std::vector<std::string> g;
  if (!group.empty()) {
    require(data, group);
    g = data.labels(group);
  }
  const Eigen::Index n = t.size();
  Eigen::MatrixXi l(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      l(i, j) = (!g.empty() && g[i] != g[j]) ? -1 : lag(std::abs(t[i] - t[j]));
  return l;
}
}  // namespace

StaticKernel::StaticKernel(std::string group, std::optional<LabelledMatrix> k) : v_(std::move(k)) {
  columns = {std::move(group)};
}

void StaticKernel::load(const DataTable& data) {
  require(data, columns[0]);
  auto labels = data.labels(columns[0]);
  if (v_ && v_->m.rows() != v_->m.cols())
    throw SemError(ErrorCode::DimensionMismatch, "K must be square");
  k_ = zkz(labels, v_ ? &*v_ : nullptr);
  if ((k_ - k_.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, k_.cwiseAbs().maxCoeff()))
    throw SemError(ErrorCode::AsymmetricK, "K is not symmetric");
}

FreeKernel::FreeKernel(std::string group, bool diagonal, bool correlation)
    : diagonal_(diagonal), correlation_(correlation) {
  columns = {std::move(group)};
}

void FreeKernel::load(const DataTable& data) {
  require(data, columns[0]);
  groups_ = distinct(data.labels(columns[0]), assign_);
  cells_.clear();
  const int g = static_cast<int>(groups_.size());
  for (int i = 0; i < g; ++i)
    for (int j = i; j < g; ++j) {
      if (i == j && correlation_) continue;
      if (i != j && diagonal_) continue;
      cells_.emplace_back(i, j);
    }
}

Eigen::MatrixXd FreeKernel::v_of(const Eigen::VectorXd& params) const {
  const int g = static_cast<int>(groups_.size());
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(g, g);
  if (correlation_) v.setIdentity();
  for (size_t c = 0; c < cells_.size(); ++c) {
    v(cells_[c].first, cells_[c].second) = params[static_cast<Eigen::Index>(c)];
    v(cells_[c].second, cells_[c].first) = params[static_cast<Eigen::Index>(c)];
  }
  return v;
}

Eigen::MatrixXd FreeKernel::calc_k(const Eigen::VectorXd& params) const {
  Eigen::MatrixXd v = v_of(params);
  const Eigen::Index n = static_cast<Eigen::Index>(assign_.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = v(assign_[i], assign_[j]);
  return k;
}

std::vector<Eigen::MatrixXd> FreeKernel::grad_k(const Eigen::VectorXd&) const {
  const Eigen::Index n = static_cast<Eigen::Index>(assign_.size());
  std::vector<Eigen::MatrixXd> out;
  for (const auto& [a, b] : cells_) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if ((assign_[i] == a && assign_[j] == b) || (assign_[i] == b && assign_[j] == a)) d(i, j) = 1.0;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Interval> FreeKernel::get_bounds() const {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Interval> b;
  for (const auto& [i, j] : cells_) {
    if (i == j) b.emplace_back(0.0, inf);
    else if (correlation_) b.emplace_back(-1.0, 1.0);
    else b.emplace_back(-inf, inf);
  }
  return b;
}

Eigen::VectorXd FreeKernel::start() const {
  Eigen::VectorXd s(cells_.size());
  for (size_t c = 0; c < cells_.size(); ++c)
    s[static_cast<Eigen::Index>(c)] = cells_[c].first == cells_[c].second ? 1.0 : 0.0;
  return s;
}

MaKernel::MaKernel(std::string time, int order, std::vector<Interval> dt_bounds, std::optional<Eigen::VectorXd> fixed,
                   std::string group)
    : order_(order), bounds_(std::move(dt_bounds)), fixed_(std::move(fixed)), group_(std::move(group)) {
  if (bounds_.empty()) bounds_ = default_dt_bounds(order);
  columns = {std::move(time)};
  if (!group_.empty()) columns.push_back(group_);
}

void MaKernel::load(const DataTable& data) {
  lags_ = time_lags(data, columns[0], group_, [&](double dt) {
    auto l = lag_of(dt, bounds_);
    return l ? *l : -1;
  });
}

Eigen::MatrixXd MaKernel::calc_k(const Eigen::VectorXd& params) const {
  Eigen::VectorXd a = fixed_ ? *fixed_ : params;
  std::vector<double> acf(order_ + 1);
  for (int l = 0; l <= order_; ++l) acf[l] = autocorrelation_ma(a, l);
  Eigen::MatrixXd k(lags_.rows(), lags_.cols());
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      int l = lags_(i, j);
      k(i, j) = (l < 0 || l > order_) ? 0.0 : acf[l];
    }
  return k;
}

std::vector<Eigen::MatrixXd> MaKernel::grad_k(const Eigen::VectorXd& params) const {
  if (fixed_) return {};
  std::vector<Eigen::VectorXd> g(order_ + 1);
  for (int l = 0; l <= order_; ++l) g[l] = autocorrelation_ma_grad(params, l);
  std::vector<Eigen::MatrixXd> out(order_, Eigen::MatrixXd::Zero(lags_.rows(), lags_.cols()));
  for (Eigen::Index i = 0; i < lags_.rows(); ++i)
    for (Eigen::Index j = 0; j < lags_.cols(); ++j) {
      int l = lags_(i, j);
      if (l <= 0 || l > order_) continue;
      for (int q = 0; q < order_; ++q) out[q](i, j) = g[l][q];
    }
  return out;
}

ArKernel::ArKernel(std::string time, double dt, std::optional<double> fixed, std::string group)
    : dt_(dt), fixed_(fixed), group_(std::move(group)) {
  columns = {std::move(time)};
  if (!group_.empty()) columns.push_back(group_);
}

void ArKernel::load(const DataTable& data) {
  lags_ = time_lags(data, columns[0], group_, [&](double d) { return static_cast<int>(std::floor(d / dt_ + 1e-12)); });
}

Eigen::MatrixXd ArKernel::calc_k(const Eigen::VectorXd& params) const {
  double a = fixed_ ? *fixed_ : params[0];
  Eigen::MatrixXd k(lags_.rows(), lags_.cols());
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j) k(i, j) = autocorrelation_ar(a, lags_(i, j));
  return k;
}

std::vector<Eigen::MatrixXd> ArKernel::grad_k(const Eigen::VectorXd& params) const {
  if (fixed_) return {};
  double a = params[0];
  Eigen::MatrixXd d(lags_.rows(), lags_.cols());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      int l = lags_(i, j);
      d(i, j) = l <= 0 ? 0.0 : l * std::pow(a, l - 1);
    }
  return {d};
}

std::vector<Interval> ArKernel::get_bounds() const {
  return std::vector<Interval>(n_params(), {-1.0 + 1e-6, 1.0 - 1e-6});
}

MaternKernel::MaternKernel(std::vector<std::string> coords, double nu, double rho, bool active, double minkowski_p)
    : nu_(nu), rho_(rho), active_(active), p_(minkowski_p) {
  columns = std::move(coords);
}

void MaternKernel::load(const DataTable& data) {
  for (const auto& c : columns) require(data, c);
  Eigen::MatrixXd x = data.select(columns);
  const Eigen::Index n = x.rows();
  dist_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      dist_(i, j) = std::pow((x.row(i) - x.row(j)).cwiseAbs().array().pow(p_).sum(), 1.0 / p_);
}

Eigen::MatrixXd MaternKernel::calc_k(const Eigen::VectorXd& params) const {
  double rho = active_ ? params[0] : rho_;
  return dist_.unaryExpr([&](double d) { return matern_cov(d, nu_, rho); });
}

std::vector<Eigen::MatrixXd> MaternKernel::grad_k(const Eigen::VectorXd& params) const {
  if (!active_) return {};
  double rho = params[0];
  return {dist_.unaryExpr([&](double d) { return matern_cov_drho(d, nu_, rho); })};
}

std::vector<Interval> MaternKernel::get_bounds() const {
  return std::vector<Interval>(n_params(), {1e-6, std::numeric_limits<double>::infinity()});
}

namespace {
std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::map<std::string, std::string> options(const std::vector<std::string>& parts, size_t from) {
  std::map<std::string, std::string> o;
  for (size_t i = from; i < parts.size(); ++i)
    for (const auto& kv : split(parts[i], ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) o[kv] = "1";
      else o[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  return o;
}

double number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return std::stod(s);
}
}  // namespace

KernelPtr parse_effect_spec(const std::string& spec) {
  auto parts = split(spec, ':');
  if (parts.size() < 2) throw SemError(ErrorCode::ParseError, "bad effect spec '" + spec + "'");
  const std::string& kind = parts[0];
  if (kind == "static") {
    std::optional<LabelledMatrix> k;
    if (parts.size() > 2) k = read_labelled_matrix(parts[2]);
    return std::make_shared<StaticKernel>(parts[1], k);
  }
  if (kind == "free") {
    auto o = options(parts, 2);
    return std::make_shared<FreeKernel>(parts[1], o.count("diag") > 0, o.count("corr") > 0);
  }
  if (kind == "ma") {
    auto o = options(parts, 2);
    int order = o.count("order") ? std::stoi(o["order"]) : 1;
    return std::make_shared<MaKernel>(parts[1], order, std::vector<Interval>{}, std::nullopt,
                                      o.count("group") ? o["group"] : "");
  }
  if (kind == "ar") {
    auto o = options(parts, 2);
    return std::make_shared<ArKernel>(parts[1], o.count("dt") ? number(o["dt"]) : 1.0, std::nullopt,
                                      o.count("group") ? o["group"] : "");
  }
  if (kind == "matern") {
    auto o = options(parts, 2);
    return std::make_shared<MaternKernel>(split(parts[1], ','), o.count("nu") ? number(o["nu"]) : 0.5,
                                          o.count("rho") ? number(o["rho"]) : 1.0,
                                          !o.count("active") || o["active"] != "0",
                                          o.count("p") ? number(o["p"]) : 2.0);
  }
  throw SemError(ErrorCode::ParseError, "unknown effect kind '" + kind + "'");
}

}  // namespace sem
