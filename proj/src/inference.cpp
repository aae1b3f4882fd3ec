#include "sem/inference.hpp"

#include <cmath>

#include "sem/errors.hpp"
#include "sem/log.hpp"

namespace sem {

FimResult invert_fim(const Eigen::MatrixXd& fim) {
  FimResult r;
  r.matrix = 0.5 * (fim + fim.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(r.matrix);
  bool ok = llt.info() == Eigen::Success && r.matrix.allFinite();
  if (ok) {
    const auto& l = llt.matrixL();
    double mx = 0, mn = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      mx = std::max(mx, std::abs(l(i, i)));
      mn = std::min(mn, std::abs(l(i, i)));
    }
    // squared diagonal ratio approximates the condition number
    ok = r.matrix.rows() == 0 || (mn > 0 && mn * mn > 1e-12 * mx * mx);
  }
  if (ok) {
    r.inverted = llt.solve(Eigen::MatrixXd::Identity(fim.rows(), fim.cols()));
    return r;
  }
  log_warning(
      "Fisher Information Matrix is not PD. Moore-Penrose inverse will be used instead of Cholesky "
      "decomposition. See 10.1109/TSP.2012.2208105.");
  r.pseudo_inverse_used = true;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = 1e-10 * (s.size() ? s.maxCoeff() : 0.0);
  Eigen::VectorXd inv = s.unaryExpr([&](double v) { return v > tol ? 1.0 / v : 0.0; });
  r.inverted = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  r.inverted = 0.5 * (r.inverted + r.inverted.transpose());
  return r;
}

namespace {

struct MatvarDerivs {
  Eigen::MatrixXd dL;
  Eigen::MatrixXd dT;   // dense
  Eigen::VectorXd dt;   // whitened diagonal
  Eigen::MatrixXd dM;   // m x n
  bool any = false;
};

std::vector<MatvarDerivs> matvar_derivs(const ImpliedMoments& im, const MatvarInput& in, int n_theta) {
  const Eigen::Index n = in.Z.cols(), m = in.Z.rows();
  std::vector<MatvarDerivs> out(n_theta);
  const size_t ne = in.effects.size();
  std::vector<double> trk(ne);
  for (size_t k = 0; k < ne; ++k) trk[k] = in.whitened ? in.s.sum() : in.effects[k].K.trace();
  auto init = [&](MatvarDerivs& d) {
    if (d.any) return;
    d.any = true;
    d.dL = Eigen::MatrixXd::Zero(m, m);
    if (in.whitened) d.dt = Eigen::VectorXd::Zero(n);
    else d.dT = Eigen::MatrixXd::Zero(n, n);
    d.dM = Eigen::MatrixXd::Zero(m, n);
  };
  for (size_t i = 0; i < im.dSigma.size(); ++i) {
    auto& d = out[i];
    if (im.touches_sigma[i]) {
      init(d);
      const double tr = im.dSigma[i].trace();
      d.dL += static_cast<double>(n) * im.dSigma[i];
      if (in.whitened) d.dt.array() += tr;
      else d.dT.diagonal().array() += tr;
    }
    if (im.touches_d[i])
      for (size_t k = 0; k < ne; ++k) {
        const auto& dd = im.dD[i][k];
        if (dd.size() == 0) continue;
        init(d);
        d.dL += trk[k] * dd;
        if (in.whitened) d.dt += dd.trace() * in.s;
        else d.dT += dd.trace() * in.effects[k].K;
      }
    if (im.touches_mean[i] && in.X2.rows()) {
      init(d);
      d.dM = im.dMcoef[i] * in.X2;
    }
  }
  for (size_t k = 0; k < ne; ++k) {
    const auto& e = in.effects[k];
    const auto& D = im.D(static_cast<int>(k));
    for (size_t j = 0; j < e.dK.size(); ++j) {
      auto& d = out[e.offset + j];
      init(d);
      d.dL = e.dK[j].trace() * D;
      d.dT = D.trace() * e.dK[j];
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd matvar_fim(const ImpliedMoments& im, const MatvarInput& in, int n_theta) {
  const double n = static_cast<double>(in.Z.cols()), m = static_cast<double>(in.Z.rows());
  MatvarCovariances cv = matvar_covariances(im, in);
  Eigen::MatrixXd li = cv.L.inverse();
  const double tau = cv.L.trace();
  Eigen::MatrixXd ti;
  Eigen::VectorXd tinv;
  if (in.whitened) tinv = cv.t.cwiseInverse();
  else ti = cv.T.inverse();
  auto ds = matvar_derivs(im, in, n_theta);
  std::vector<Eigen::MatrixXd> A(n_theta), B(n_theta), LMT(n_theta);
  std::vector<Eigen::VectorXd> Ad(n_theta);
  Eigen::VectorXd trA = Eigen::VectorXd::Zero(n_theta), trB = Eigen::VectorXd::Zero(n_theta),
                  alpha = Eigen::VectorXd::Zero(n_theta);
  for (int i = 0; i < n_theta; ++i) {
    if (!ds[i].any) continue;
    B[i] = li * ds[i].dL;
    trB[i] = B[i].trace();
    if (in.whitened) {
      Ad[i] = ds[i].dt.cwiseProduct(tinv);
      trA[i] = Ad[i].sum();
      alpha[i] = ds[i].dt.sum() / tau;
      LMT[i] = li * ds[i].dM * tinv.asDiagonal();
    } else {
      A[i] = ti * ds[i].dT;
      trA[i] = A[i].trace();
      alpha[i] = ds[i].dT.trace() / tau;
      LMT[i] = li * ds[i].dM * ti;
    }
  }
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n_theta, n_theta);
  for (int i = 0; i < n_theta; ++i) {
    if (!ds[i].any) continue;
    for (int k = i; k < n_theta; ++k) {
      if (!ds[k].any) continue;
      const double trAA = in.whitened ? Ad[i].dot(Ad[k]) : A[i].cwiseProduct(A[k].transpose()).sum();
      const double trBB = B[i].cwiseProduct(B[k].transpose()).sum();
      double v = tau * ds[i].dM.cwiseProduct(LMT[k]).sum();
      v += 0.5 * (m * trAA + n * trBB + trA[i] * trB[k] + trA[k] * trB[i] + n * m * alpha[i] * alpha[k] -
                  m * alpha[k] * trA[i] - n * alpha[k] * trB[i] - m * alpha[i] * trA[k] - n * alpha[i] * trB[k]);
      f(i, k) = f(k, i) = v;
    }
  }
  return f;
}

namespace {
Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd r(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return r;
}
Eigen::VectorXd vec(const Eigen::MatrixXd& a) { return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()); }
}  // namespace

Eigen::MatrixXd matvar_fim_bruteforce(const ImpliedMoments& im, const MatvarInput& in, int n_theta) {
  MatvarCovariances cv = matvar_covariances(im, in);
  Eigen::MatrixXd T = in.whitened ? Eigen::MatrixXd(cv.t.asDiagonal()) : cv.T;
  const double tau = T.trace();
  Eigen::MatrixXd V = kron(T, cv.L) / tau;
  Eigen::MatrixXd vi = V.inverse();
  auto ds = matvar_derivs(im, in, n_theta);
  std::vector<Eigen::MatrixXd> dV(n_theta);
  std::vector<Eigen::VectorXd> dmu(n_theta);
  for (int i = 0; i < n_theta; ++i) {
    if (!ds[i].any) {
      dV[i] = Eigen::MatrixXd::Zero(V.rows(), V.cols());
      dmu[i] = Eigen::VectorXd::Zero(V.rows());
      continue;
    }
    Eigen::MatrixXd dT = in.whitened ? Eigen::MatrixXd(ds[i].dt.asDiagonal()) : ds[i].dT;
    const double dtau = dT.trace();
    dV[i] = (kron(dT, cv.L) + kron(T, ds[i].dL)) / tau - dtau / tau * V;
    dmu[i] = vec(ds[i].dM);
  }
  Eigen::MatrixXd f(n_theta, n_theta);
  for (int i = 0; i < n_theta; ++i)
    for (int k = 0; k < n_theta; ++k)
      f(i, k) = dmu[i].dot(vi * dmu[k]) + 0.5 * (vi * dV[i] * vi * dV[k]).trace();
  return f;
}

Eigen::MatrixXd expected_fim_matrix(const SemModel& m, const Eigen::VectorXd& theta) {
  const int nt = m.n_theta();
  ImpliedMoments im = m.implied(theta, true);
  if (m.kind() == ModelKind::Effects || m.kind() == ModelKind::Generalized)
    return matvar_fim(im, m.matvar_input(theta, true), nt);
  const double n = m.state().n;
  Eigen::MatrixXd si = im.Sigma.inverse();
  std::vector<Eigen::MatrixXd> P(nt);
  for (int i = 0; i < nt; ++i)
    if (im.touches_sigma[i]) P[i] = si * im.dSigma[i];
  Eigen::MatrixXd xx;
  const bool means = m.kind() == ModelKind::Means && im.Mcoef.cols() > 0;
  if (means) xx = m.state().X2 * m.state().X2.transpose();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(nt, nt);
  for (int i = 0; i < nt; ++i)
    for (int k = i; k < nt; ++k) {
      double v = 0;
      if (im.touches_sigma[i] && im.touches_sigma[k]) v += 0.5 * n * P[i].cwiseProduct(P[k].transpose()).sum();
      if (means && im.touches_mean[i] && im.touches_mean[k])
        v += (im.dMcoef[i].transpose() * si * im.dMcoef[k]).cwiseProduct(xx).sum();
      f(i, k) = f(k, i) = v;
    }
  return f;
}

FimResult expected_fim(const SemModel& m, const Eigen::VectorXd& theta) {
  return invert_fim(expected_fim_matrix(m, theta));
}

FimResult observed_fim(const SemModel& m, const Eigen::VectorXd& theta) {
  const int nt = m.n_theta();
  const double c = m.loglik_scale();
  Eigen::MatrixXd h(nt, nt);
  try {
    for (int j = 0; j < nt; ++j) {
      const double step = 1e-5 * (1.0 + std::abs(theta[j]));
      Eigen::VectorXd tp = theta, tm = theta, gp, gm;
      tp[j] += step;
      tm[j] -= step;
      m.objective(tp, &gp);
      m.objective(tm, &gm);
      h.col(j) = c * (gp - gm) / (2 * step);
    }
  } catch (const SemError& e) {
    throw SemError(ErrorCode::ObjectiveError, std::string("observed information unavailable: ") + e.what());
  }
  return invert_fim(0.5 * (h + h.transpose()));
}

double p_value(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

Eigen::MatrixXd SemModel::scores(const Eigen::VectorXd& theta) const {
  if (kind_ == ModelKind::Effects || kind_ == ModelKind::Generalized)
    throw SemError(ErrorCode::Unsupported, "robust standard errors are available for Model and ModelMeans");
  ImpliedMoments im = implied(theta, true);
  const int nt = n_theta();
  const Eigen::MatrixXd& data = kind_ == ModelKind::Model ? fs_.centered : fs_.data;
  const bool means = kind_ == ModelKind::Means && im.Mcoef.cols() > 0;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(data.rows(), nt);
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    std::vector<int> obs;
    for (Eigen::Index j = 0; j < data.cols(); ++j)
      if (!std::isnan(data(r, j))) obs.push_back(static_cast<int>(j));
    Eigen::MatrixXd so = im.Sigma(obs, obs);
    Eigen::MatrixXd si = so.inverse();
    Eigen::VectorXd e = data(r, obs).transpose();
    if (means) e -= im.Mcoef(obs, Eigen::all) * fs_.X2.col(r);
    Eigen::VectorXd se = si * e;
    Eigen::MatrixXd a = 0.5 * (si - se * se.transpose());
    for (int i = 0; i < nt; ++i) {
      double v = 0;
      if (im.touches_sigma[i]) v += a.cwiseProduct(im.dSigma[i](obs, obs)).sum();
      if (means && im.touches_mean[i]) v -= se.dot(im.dMcoef[i](obs, Eigen::all) * fs_.X2.col(r));
      s(r, i) = v;
    }
  }
  return s;
}

std::vector<ParameterRow> parameter_table(const SemModel& m, const Eigen::VectorXd& theta, const FimResult& fim,
                                          bool robust) {
  Eigen::MatrixXd cov = fim.inverted;
  if (robust) {
    Eigen::MatrixXd s = m.scores(theta);
    Eigen::MatrixXd b = s.transpose() * s;
    cov = fim.inverted * b * fim.inverted;
  }
  auto row_for = [&](int idx, double est, ParameterRow& r) {
    r.estimate = est;
    if (idx < 0) return;
    double v = cov(idx, idx);
    double se = v > 0 ? std::sqrt(v) : 0.0;
    r.std_err = se;
    if (se > 0) {
      r.z_value = est / se;
      r.p_value = p_value(*r.z_value);
    } else {
      r.z_value = std::numeric_limits<double>::quiet_NaN();
      r.p_value = std::numeric_limits<double>::quiet_NaN();
    }
  };
  std::vector<ParameterRow> rows;
  for (const auto& e : m.structure().entries) {
    ParameterRow r;
    r.lval = e.lval;
    r.op = e.op;
    r.rval = e.rval;
    row_for(e.param, e.param >= 0 ? theta[e.param] : e.fixed, r);
    rows.push_back(r);
  }
  auto names = m.param_names();
  const auto& ks = m.state().kernels;
  for (size_t k = 0; k < ks.size(); ++k)
    for (int j = 0; j < ks[k]->n_params(); ++j) {
      const int idx = m.state().kernel_offset[k] + j;
      ParameterRow r;
      r.lval = names[idx];
      r.op = "~K~";
      r.rval = ks[k]->name();
      row_for(idx, theta[idx], r);
      rows.push_back(r);
    }
  return rows;
}

std::vector<ParameterRow> SemModel::inspect(bool robust, Information info) const {
  if (!fitted_) throw SemError(ErrorCode::NotFitted, "model is not fitted");
  WarningCapture capture;
  FimResult fim;
  if (info == Information::Observed) {
    try {
      fim = observed_fim(*this, theta_);
    } catch (const SemError&) {
      log_warning("observed information failed; expected information is used");
      fim = expected_fim(*this, theta_);
    }
  } else {
    fim = expected_fim(*this, theta_);
  }
  auto rows = parameter_table(*this, theta_, fim, robust);
  auto& w = const_cast<std::vector<std::string>&>(warnings_);
  for (const auto& msg : capture.messages()) w.push_back(msg);
  return rows;
}

}  // namespace sem
