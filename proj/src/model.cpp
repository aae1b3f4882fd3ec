#include "sem/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "sem/errors.hpp"
#include "sem/log.hpp"

namespace sem {

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), ::toupper);
  return s;
}

Eigen::VectorXd nanmean(const Eigen::MatrixXd& x) {
  Eigen::VectorXd m(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double s = 0;
    int c = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isnan(x(i, j))) s += x(i, j), ++c;
    m[j] = c ? s / c : 0.0;
  }
  return m;
}

}  // namespace

SemModel::SemModel(ModelKind kind, const std::string& description, BuildOptions options)
    : kind_(kind), ast_(parse(description)), bopt_(options) {
  if (kind_ == ModelKind::Effects) bopt_.n_effects = 1;
  st_ = build_parameter_space(ast_, classify_variables(ast_, bopt_.mimic_lavaan), kind_, bopt_);
  theta_ = st_.ps.start();
}

int SemModel::n_theta() const {
  int n = n_model_params();
  for (const auto& k : fs_.kernels) n += k->n_params();
  return n;
}

std::vector<std::string> SemModel::param_names() const {
  std::vector<std::string> n;
  for (const auto& p : st_.ps.params) n.push_back(p.name);
  for (size_t k = 0; k < fs_.kernels.size(); ++k)
    for (const auto& nm : fs_.kernels[k]->param_names())
      n.push_back(fs_.kernels.size() > 1 ? nm + "_" + std::to_string(k + 1) : nm);
  return n;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> SemModel::bounds() const {
  const int nt = n_theta();
  Eigen::VectorXd lo(nt), hi(nt);
  for (int i = 0; i < n_model_params(); ++i) {
    lo[i] = st_.ps.params[i].lo;
    hi[i] = st_.ps.params[i].hi;
  }
  for (size_t k = 0; k < fs_.kernels.size(); ++k) {
    auto b = fs_.kernels[k]->get_bounds();
    for (size_t j = 0; j < b.size(); ++j) {
      lo[fs_.kernel_offset[k] + static_cast<int>(j)] = b[j].first;
      hi[fs_.kernel_offset[k] + static_cast<int>(j)] = b[j].second;
    }
  }
  return {lo, hi};
}

Eigen::VectorXd SemModel::start() const {
  Eigen::VectorXd s(n_theta());
  s.head(n_model_params()) = st_.ps.start();
  for (size_t k = 0; k < fs_.kernels.size(); ++k) {
    Eigen::VectorXd ks = fs_.kernels[k]->start();
    s.segment(fs_.kernel_offset[k], ks.size()) = ks;
  }
  return s;
}

ImpliedMoments SemModel::implied(const Eigen::VectorXd& theta, bool derivatives) const {
  return implied_moments(st_.tpl, st_.ps, theta.head(n_model_params()), derivatives);
}

std::vector<EffectTerm> SemModel::effect_terms(const Eigen::VectorXd& theta, bool derivatives) const {
  std::vector<EffectTerm> out;
  for (size_t k = 0; k < fs_.kernels.size(); ++k) {
    const auto& ker = fs_.kernels[k];
    EffectTerm t;
    t.offset = fs_.kernel_offset[k];
    Eigen::VectorXd p = theta.segment(t.offset, ker->n_params());
    t.K = ker->calc_k(p);
    if (derivatives) t.dK = ker->grad_k(p);
    out.push_back(std::move(t));
  }
  return out;
}

MatvarInput SemModel::matvar_input(const Eigen::VectorXd& theta, bool derivatives) const {
  if (fs_.mv.whitened) return fs_.mv;
  MatvarInput in = fs_.mv;
  in.effects = effect_terms(theta, derivatives);
  return in;
}

double SemModel::loglik_scale() const {
  const std::string& m = fs_.method;
  if (m == "FIML" || kind_ == ModelKind::Effects || kind_ == ModelKind::Generalized) return 0.5;
  return 0.5 * fs_.n;
}

double SemModel::objective(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
  const std::string& m = fs_.method;
  ImpliedMoments im = implied(theta, grad != nullptr);
  if (kind_ == ModelKind::Effects || kind_ == ModelKind::Generalized)
    return matvar_ml(im, matvar_input(theta, grad != nullptr), grad, n_theta());
  if (m == "MLW") return wishart_ml(im, fs_.moments.S, grad);
  if (m == "FIML") return fiml(im, fs_.fiml, grad);
  if (m == "ULS") return least_squares(LsKind::ULS, im, fs_.moments.S, nullptr, nullptr, grad);
  if (m == "GLS") return least_squares(LsKind::GLS, im, fs_.moments.S, &fs_.s_inv, nullptr, grad);
  if (m == "WLS") return least_squares(LsKind::WLS, im, fs_.moments.S, nullptr, &fs_.w_inv, grad);
  if (m == "DWLS") return least_squares(LsKind::DWLS, im, fs_.moments.S, nullptr, &fs_.w_inv, grad);
  // ML and REML on the means kind: complete-data likelihood
  return means_ml(im, fs_.data.transpose(), fs_.X2, grad);
}

void SemModel::prepare(const DataTable& data, const FitOptions& opt) {
  fs_ = FitState{};
  if (kind_ == ModelKind::Generalized && static_cast<int>(opt.effects.size()) != bopt_.n_effects) {
    bopt_.n_effects = static_cast<int>(opt.effects.size());
    st_ = build_parameter_space(ast_, classify_variables(ast_, bopt_.mimic_lavaan), kind_, bopt_);
  } else {
    st_ = build_parameter_space(ast_, st_.cls, kind_, bopt_);
  }
  fs_.z_names = st_.tpl.z;
  for (const auto& g : st_.tpl.g)
    if (g != "1") fs_.x2_names.push_back(g);
  fs_.data = data.select(fs_.z_names);
  const Eigen::Index n = fs_.data.rows();
  fs_.n = static_cast<int>(n);
  fs_.X2.resize(static_cast<Eigen::Index>(st_.tpl.g.size()), n);
  for (size_t i = 0; i < st_.tpl.g.size(); ++i) {
    const auto& g = st_.tpl.g[i];
    if (g == "1") {
      fs_.X2.row(static_cast<Eigen::Index>(i)).setOnes();
    } else {
      Eigen::VectorXd c = data.select({g}).col(0);
      if (c.array().isNaN().any())
        throw SemError(ErrorCode::ExogenousTarget, "exogenous variable '" + g + "' has missing values");
      fs_.X2.row(static_cast<Eigen::Index>(i)) = c.transpose();
    }
  }
  if (!opt.group.empty() && (kind_ == ModelKind::Model || kind_ == ModelKind::Means)) {
    auto labels = data.labels(opt.group);
    std::map<std::string, std::vector<int>> rows;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) rows[labels[i]].push_back(i);
    for (const auto& [g, idx] : rows) {
      Eigen::MatrixXd block = fs_.data(idx, Eigen::all);
      Eigen::VectorXd m = nanmean(block);
      for (int i : idx) fs_.data.row(i) -= m.transpose();
    }
  }
  const bool missing = fs_.data.array().isNaN().any();
  fs_.col_means = nanmean(fs_.data);
  fs_.centered = fs_.data.rowwise() - fs_.col_means.transpose();
  if (opt.cov) {
    fs_.moments.S = *opt.cov;
    fs_.moments.means = fs_.col_means;
    fs_.moments.n = static_cast<int>(n);
  } else {
    fs_.moments = sample_cov(fs_.data, opt.biased, opt.pairwise || missing);
    fs_.moments.n = static_cast<int>(n);
  }
  fs_.moments.X2 = fs_.X2;
  apply_sample_stats(st_, fs_.z_names, fs_.moments.S, fs_.col_means);

  if (kind_ == ModelKind::Effects || kind_ == ModelKind::Generalized) {
    if (missing) throw SemError(ErrorCode::Unsupported, "effects models need complete data");
    if (kind_ == ModelKind::Effects) {
      if (!opt.effects.empty()) fs_.kernels = {opt.effects[0]};
      else {
        if (opt.group.empty()) throw SemError(ErrorCode::MissingColumn, "ModelEffects needs a group column");
        fs_.kernels = {std::make_shared<StaticKernel>(opt.group, opt.k)};
      }
    } else {
      fs_.kernels = opt.effects;
    }
    int off = n_model_params();
    for (auto& k : fs_.kernels) {
      k->load(data);
      fs_.kernel_offset.push_back(off);
      off += k->n_params();
    }
    Eigen::MatrixXd Z = fs_.data.transpose();
    if (fs_.kernels.size() == 1 && fs_.kernels[0]->n_params() == 0) {
      Eigen::MatrixXd K = fs_.kernels[0]->calc_k(Eigen::VectorXd());
      fs_.mv = whitened_input(Z, fs_.X2, K);
      fs_.Q = whiten(Eigen::MatrixXd(0, K.rows()), K).Q;
    } else {
      fs_.mv.Z = Z;
      fs_.mv.X2 = fs_.X2;
    }
  }
}

FitResult SemModel::run(const Objective& f, const Eigen::VectorXd& x0, const std::vector<int>& free,
                        const FitOptions& opt, const std::string& name) {
  auto [lo, hi] = bounds();
  const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
  auto expand = [x0, free](const Eigen::VectorXd& sub) {
    Eigen::VectorXd full = x0;
    for (size_t i = 0; i < free.size(); ++i) full[free[i]] = sub[static_cast<Eigen::Index>(i)];
    return full;
  };
  auto restrict_grad = [free](const Eigen::VectorXd& g) {
    Eigen::VectorXd r(free.size());
    for (size_t i = 0; i < free.size(); ++i) r[static_cast<Eigen::Index>(i)] = g[free[i]];
    return r;
  };
  SolveRequest req;
  req.objective = [=](const Eigen::VectorXd& sub, Eigen::VectorXd* grad) {
    Eigen::VectorXd g;
    double v = f(expand(sub), grad ? &g : nullptr);
    if (grad) *grad = restrict_grad(g);
    return v;
  };
  req.theta0.resize(nf);
  req.lo.resize(nf);
  req.hi.resize(nf);
  for (Eigen::Index i = 0; i < nf; ++i) {
    req.theta0[i] = x0[free[i]];
    req.lo[i] = lo[free[i]];
    req.hi[i] = hi[free[i]];
  }
  auto names = param_names();
  for (const auto& text : st_.ps.constraints) {
    Constraint c = to_constraint(parse_constraint(text, names));
    Constraint sub;
    sub.equality = c.equality;
    sub.g = [=](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
      Eigen::VectorXd g;
      double v = c.g(expand(x), grad ? &g : nullptr);
      if (grad) *grad = restrict_grad(g);
      return v;
    };
    req.constraints.push_back(sub);
  }
  req.method = opt.solver;
  req.b_max = opt.b_max;
  req.seed = opt.seed;
  req.max_iter = opt.max_iter;
  req.parallel = opt.parallel;
  FitResult r = minimize(req);
  r.x = expand(r.x);
  r.objective = name;
  return r;
}

FitResult SemModel::fit(const DataTable& data, const FitOptions& opt) {
  WarningCapture capture;
  warnings_.clear();
  fitted_ = false;
  fit_opts_ = opt;
  prepare(data, opt);
  std::string method = upper(opt.method);
  const bool effects = kind_ == ModelKind::Effects || kind_ == ModelKind::Generalized;
  if (method.empty()) method = kind_ == ModelKind::Model ? "MLW" : (kind_ == ModelKind::Means ? "FIML" : "ML");
  if (kind_ == ModelKind::Model && method == "ML") method = "MLW";
  const bool missing = fs_.data.array().isNaN().any();
  if (kind_ == ModelKind::Means && method == "ML" && missing) method = "FIML";
  static const std::vector<std::string> model_methods = {"MLW", "FIML", "ULS", "GLS", "WLS", "DWLS"};
  static const std::vector<std::string> means_methods = {"FIML", "ML", "REML"};
  static const std::vector<std::string> effects_methods = {"ML", "REML"};
  const auto& allowed = kind_ == ModelKind::Model ? model_methods : (effects ? effects_methods : means_methods);
  if (std::find(allowed.begin(), allowed.end(), method) == allowed.end())
    throw SemError(ErrorCode::MethodMismatch,
                   "method " + method + " is not available for " + std::string(kind_name(kind_)));
  fs_.method = method;
  if (method == "FIML") {
    fs_.fiml = kind_ == ModelKind::Model ? prepare_fiml(fs_.centered, Eigen::MatrixXd())
                                         : prepare_fiml(fs_.data, fs_.X2);
  }
  if (method == "GLS") {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(fs_.moments.S);
    if (!lu.isInvertible()) throw SemError(ErrorCode::SingularS, "sample covariance is singular");
    fs_.s_inv = lu.inverse();
  }
  if (method == "WLS" || method == "DWLS") {
    if (missing) throw SemError(ErrorCode::Unsupported, "WLS needs complete data");
    Eigen::MatrixXd w = wls_weight(fs_.data);
    if (method == "WLS") fs_.w_inv = w.inverse();
    else fs_.w_inv = w.diagonal().cwiseInverse().asDiagonal();
  }
  penalties_ = opt.penalties;
  for (auto& p : penalties_) resolve_penalty(p, st_.ps);

  Eigen::VectorXd x0 = start();
  const double n = fs_.n;
  std::vector<int> all(n_theta());
  for (int i = 0; i < n_theta(); ++i) all[i] = i;

  if (method == "REML") {
    ImpliedMoments im0 = implied(x0, true);
    std::vector<int> cov_params, mean_params;
    for (int i = 0; i < n_model_params(); ++i) {
      if (im0.touches_sigma[i] || im0.touches_d[i]) cov_params.push_back(i);
      else if (im0.touches_mean[i]) mean_params.push_back(i);
    }
    for (int i = n_model_params(); i < n_theta(); ++i) cov_params.push_back(i);
    RemlProjector proj = reml_projector(fs_.X2);
    const double r = proj.r;
    FitResult s1, s2;
    Eigen::MatrixXd Z = fs_.data.transpose();
    if (!effects) {
      Eigen::MatrixXd zp = Z * proj.P1;
      Eigen::MatrixXd shat = zp * zp.transpose() / r;
      auto f1 = [this, shat](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
        double v = 0.5 * wishart_ml(implied(t, g != nullptr), shat, g);
        if (g) *g *= 0.5;
        return v;
      };
      s1 = run(f1, x0, cov_params, opt, "REML");
      ImpliedMoments im = implied(s1.x, false);
      Eigen::MatrixXd w = im.Sigma.inverse();
      reml_linv_ = w;
      reml_tinv_.resize(0, 0);
      auto f2 = [this, w, Z, n](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
        double v = mean_gls(implied(t, g != nullptr), w, Eigen::MatrixXd(), Z, fs_.X2, g) / (2 * n);
        if (g) *g /= 2 * n;
        return v;
      };
      s2 = mean_params.empty() ? s1 : run(f2, s1.x, mean_params, opt, "REML");
    } else {
      MatvarInput stage;
      stage.Z = Z * proj.P1;
      stage.X2.resize(0, proj.r);
      auto make_input = [this, proj, stage](const Eigen::VectorXd& t, bool d) {
        MatvarInput in = stage;
        for (auto term : effect_terms(t, d)) {
          term.K = proj.P1.transpose() * term.K * proj.P1;
          for (auto& dk : term.dK) dk = proj.P1.transpose() * dk * proj.P1;
          in.effects.push_back(std::move(term));
        }
        return in;
      };
      const double scale = 0.5 / r;
      auto f1 = [this, make_input, scale](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
        double v = matvar_ml(implied(t, g != nullptr), make_input(t, g != nullptr), g, n_theta()) * scale;
        if (g) *g *= scale;
        return v;
      };
      s1 = run(f1, x0, cov_params, opt, "REML");
      ImpliedMoments im = implied(s1.x, false);
      MatvarInput in = matvar_input(s1.x, false);
      MatvarCovariances cv = matvar_covariances(im, in);
      reml_linv_ = cv.L.inverse();
      reml_tinv_ = in.whitened ? Eigen::MatrixXd(cv.t.cwiseInverse().asDiagonal()) : Eigen::MatrixXd(cv.T.inverse());
      const double tl = cv.L.trace();
      Eigen::MatrixXd linv = reml_linv_ * tl, tinv = reml_tinv_;
      auto f2 = [this, linv, tinv, in, n](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
        double v = mean_gls(implied(t, g != nullptr), linv, tinv, in.Z, in.X2, g) / (2 * n);
        if (g) *g /= 2 * n;
        return v;
      };
      s2 = mean_params.empty() ? s1 : run(f2, s1.x, mean_params, opt, "REML");
    }
    result_ = s2;
    result_.stages = {s1, s2};
    result_.success = s1.success && s2.success;
    result_.iterations = s1.iterations + (mean_params.empty() ? 0 : s2.iterations);
    result_.value = s1.value;
  } else {
    auto f = [this, n](const Eigen::VectorXd& t, Eigen::VectorXd* g) {
      const double scale = loglik_scale() / n;
      double v = objective(t, g) * scale;
      if (g) *g *= scale;
      for (const auto& p : penalties_) v += penalty_value(p, t, g);
      return v;
    };
    result_ = run(f, x0, all, opt, method);
    double raw = objective(result_.x, nullptr);
    if (method == "MLW") {
      Eigen::LLT<Eigen::MatrixXd> llt(fs_.moments.S);
      double lds = 0;
      for (Eigen::Index i = 0; i < fs_.moments.S.rows(); ++i) lds += 2 * std::log(llt.matrixL()(i, i));
      raw -= static_cast<double>(fs_.moments.S.rows()) + lds;
    }
    result_.value = raw;
  }
  result_.objective = method;
  theta_ = result_.x;
  fitted_ = true;
  warnings_ = capture.messages();
  result_.warnings = warnings_;
  return result_;
}

std::string format_table(const std::vector<ParameterRow>& rows, char sep, int precision) {
  std::ostringstream os;
  os << "lval" << sep << "op" << sep << "rval" << sep << "Estimate" << sep << "Std. Err" << sep << "z-value" << sep
     << "p-value\n";
  auto num = [&](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << r.lval << sep << r.op << sep << r.rval << sep << num(r.estimate) << sep
       << (r.std_err ? num(*r.std_err) : "-") << sep << (r.z_value ? num(*r.z_value) : "-") << sep
       << (r.p_value ? num(*r.p_value) : "-") << "\n";
  }
  return os.str();
}

}  // namespace sem
