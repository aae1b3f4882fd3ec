#include "sem/objectives.hpp"

#include <cmath>
#include <map>

#include "sem/errors.hpp"

namespace sem {

double logdet_pd(const Eigen::MatrixXd& a, Eigen::MatrixXd* inverse, ErrorCode code) {
  if (a.size() == 0) {
    if (inverse) inverse->resize(0, 0);
    return 0.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !a.allFinite())
    throw SemError(code, "matrix is not positive definite");
  const auto& l = llt.matrixLLT();
  double ld = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!(l(i, i) > 0)) throw SemError(code, "matrix is not positive definite");
    ld += 2 * std::log(l(i, i));
  }
  if (inverse) *inverse = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  return ld;
}

namespace {
inline double dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return a.cwiseProduct(b).sum(); }

void init_grad(Eigen::VectorXd* grad, const ImpliedMoments& im) {
  if (grad) grad->setZero(static_cast<Eigen::Index>(im.dSigma.size()));
}
}  // namespace

double wishart_ml(const ImpliedMoments& im, const Eigen::MatrixXd& S, Eigen::VectorXd* grad) {
  Eigen::MatrixXd si;
  double ld = logdet_pd(im.Sigma, &si, ErrorCode::SigmaNotPD);
  double f = dot(S, si) + ld;
  init_grad(grad, im);
  if (grad) {
    Eigen::MatrixXd a = si - si * S * si;
    for (size_t i = 0; i < im.dSigma.size(); ++i)
      if (im.touches_sigma[i]) (*grad)[i] = dot(a, im.dSigma[i]);
  }
  return f;
}

double least_squares(LsKind kind, const ImpliedMoments& im, const Eigen::MatrixXd& S, const Eigen::MatrixXd* s_inv,
                     const Eigen::MatrixXd* winv, Eigen::VectorXd* grad) {
  init_grad(grad, im);
  const Eigen::MatrixXd r = im.Sigma - S;
  switch (kind) {
    case LsKind::ULS: {
      if (grad)
        for (size_t i = 0; i < im.dSigma.size(); ++i)
          if (im.touches_sigma[i]) (*grad)[i] = 2 * dot(r, im.dSigma[i]);
      return dot(r, r);
    }
    case LsKind::GLS: {
      if (!s_inv) throw SemError(ErrorCode::SingularS, "GLS needs an invertible S");
      Eigen::MatrixXd q = Eigen::MatrixXd::Identity(S.rows(), S.cols()) - im.Sigma * *s_inv;
      if (grad) {
        Eigen::MatrixXd a = *s_inv * q;
        for (size_t i = 0; i < im.dSigma.size(); ++i)
          if (im.touches_sigma[i]) (*grad)[i] = -2 * dot(a, im.dSigma[i]);
      }
      return dot(q, q.transpose());
    }
    case LsKind::WLS:
    case LsKind::DWLS: {
      if (!winv || winv->size() == 0) throw SemError(ErrorCode::MissingWeightMatrix, "weight matrix is missing");
      Eigen::VectorXd v = vech(r);
      Eigen::VectorXd wv = *winv * v;
      if (grad)
        for (size_t i = 0; i < im.dSigma.size(); ++i)
          if (im.touches_sigma[i]) (*grad)[i] = 2 * wv.dot(vech(im.dSigma[i]));
      return v.dot(wv);
    }
  }
  return 0.0;
}

FimlData prepare_fiml(const Eigen::MatrixXd& data, const Eigen::MatrixXd& x2) {
  const int n = static_cast<int>(data.rows()), p = static_cast<int>(data.cols());
  std::map<std::vector<char>, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) {
    std::vector<char> mask(p);
    bool any = false;
    for (int j = 0; j < p; ++j) {
      mask[j] = !std::isnan(data(i, j));
      any = any || mask[j];
    }
    if (!any) throw SemError(ErrorCode::EmptyRow, "row " + std::to_string(i) + " has no observed values");
    groups[mask].push_back(i);
  }
  FimlData d;
  d.n = n;
  for (const auto& [mask, rows] : groups) {
    FimlData::Pattern pat;
    for (int j = 0; j < p; ++j)
      if (mask[j]) pat.obs.push_back(j);
    pat.z = data(rows, pat.obs);
    if (x2.size()) pat.x2 = x2(Eigen::all, rows);
    else pat.x2.resize(0, static_cast<Eigen::Index>(rows.size()));
    d.patterns.push_back(std::move(pat));
  }
  return d;
}

double fiml(const ImpliedMoments& im, const FimlData& d, Eigen::VectorXd* grad) {
  init_grad(grad, im);
  double f = 0;
  const bool has_mean = im.Mcoef.cols() > 0;
  for (const auto& pat : d.patterns) {
    Eigen::MatrixXd so = im.Sigma(pat.obs, pat.obs);
    Eigen::MatrixXd si;
    double ld = logdet_pd(so, &si, ErrorCode::SigmaNotPD);
    const double rows = static_cast<double>(pat.z.rows());
    Eigen::MatrixXd e = pat.z;
    Eigen::MatrixXd mc;
    if (has_mean && pat.x2.rows()) {
      mc = im.Mcoef(pat.obs, Eigen::all);
      e -= (mc * pat.x2).transpose();
    }
    Eigen::MatrixXd es = e * si;
    f += dot(es, e) + rows * ld;
    if (!grad) continue;
    Eigen::MatrixXd a = rows * si - es.transpose() * es;
    Eigen::MatrixXd ex;
    if (mc.size()) ex = es.transpose() * pat.x2.transpose();
    for (size_t i = 0; i < im.dSigma.size(); ++i) {
      if (im.touches_sigma[i]) (*grad)[i] += dot(a, im.dSigma[i](pat.obs, pat.obs));
      if (mc.size() && im.touches_mean[i]) (*grad)[i] -= 2 * dot(ex, im.dMcoef[i](pat.obs, Eigen::all));
    }
  }
  return f;
}

double means_ml(const ImpliedMoments& im, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X2, Eigen::VectorXd* grad) {
  const double n = static_cast<double>(Z.cols());
  Eigen::MatrixXd zh = Z - implied_mean(im, X2);
  Eigen::MatrixXd s = zh * zh.transpose() / n;
  Eigen::MatrixXd si;
  double ld = logdet_pd(im.Sigma, &si, ErrorCode::SigmaNotPD);
  init_grad(grad, im);
  if (grad) {
    Eigen::MatrixXd a = si - si * s * si;
    Eigen::MatrixXd b;
    if (X2.rows() && im.Mcoef.cols()) b = si * zh * X2.transpose() / n;
    for (size_t i = 0; i < im.dSigma.size(); ++i) {
      if (im.touches_sigma[i]) (*grad)[i] += dot(a, im.dSigma[i]);
      if (b.size() && im.touches_mean[i]) (*grad)[i] -= 2 * dot(b, im.dMcoef[i]);
    }
  }
  return dot(s, si) + ld;
}

double mean_gls(const ImpliedMoments& im, const Eigen::MatrixXd& W, const Eigen::MatrixXd& T, const Eigen::MatrixXd& Z,
                const Eigen::MatrixXd& X2, Eigen::VectorXd* grad) {
  Eigen::MatrixXd zh = Z - implied_mean(im, X2);
  Eigen::MatrixXd wz = W * zh;
  if (T.size()) wz = wz * T;
  init_grad(grad, im);
  if (grad && X2.rows() && im.Mcoef.cols()) {
    Eigen::MatrixXd b = wz * X2.transpose();
    for (size_t i = 0; i < im.dSigma.size(); ++i)
      if (im.touches_mean[i]) (*grad)[i] = -2 * dot(b, im.dMcoef[i]);
  }
  return dot(wz, zh);
}

RemlProjector reml_projector(const Eigen::MatrixXd& X2) {
  const Eigen::Index g = X2.rows(), n = X2.cols();
  RemlProjector r;
  if (g == 0) {
    r.P1 = Eigen::MatrixXd::Identity(n, n);
    r.r = static_cast<int>(n);
    return r;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X2.transpose());
  if (qr.rank() < g) throw SemError(ErrorCode::RankDeficientX2, "rows of X2 are linearly dependent");
  Eigen::MatrixXd p0 = Eigen::MatrixXd::Identity(n, n) -
                       X2.transpose() * (X2 * X2.transpose()).ldlt().solve(X2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (p0 + p0.transpose()));
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (es.eigenvalues()[i] >= 0.5) keep.push_back(i);
  r.P1 = es.eigenvectors()(Eigen::all, keep);
  r.r = static_cast<int>(keep.size());
  return r;
}

Whitening whiten(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& K) {
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, K.cwiseAbs().maxCoeff()))
    throw SemError(ErrorCode::AsymmetricK, "K is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (K + K.transpose()));
  Whitening w;
  w.Q = es.eigenvectors();
  w.s = es.eigenvalues();
  w.ZQ = Z * w.Q;
  return w;
}

MatvarInput whitened_input(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X2, const Eigen::MatrixXd& K) {
  Whitening w = whiten(Z, K);
  MatvarInput in;
  in.Z = w.ZQ;
  in.X2 = X2.rows() ? Eigen::MatrixXd(X2 * w.Q) : Eigen::MatrixXd(0, Z.cols());
  in.whitened = true;
  in.s = w.s;
  EffectTerm t;
  t.K = w.s.asDiagonal();
  in.effects.push_back(std::move(t));
  return in;
}

MatvarCovariances matvar_covariances(const ImpliedMoments& im, const MatvarInput& in) {
  const double n = static_cast<double>(in.Z.cols());
  MatvarCovariances c;
  c.L = n * im.Sigma;
  const double trs = im.Sigma.trace();
  if (in.whitened) {
    const double trd = im.D(0).trace();
    c.L += in.s.sum() * im.D(0);
    c.t = Eigen::VectorXd::Constant(in.Z.cols(), trs) + trd * in.s;
  } else {
    c.T = trs * Eigen::MatrixXd::Identity(in.Z.cols(), in.Z.cols());
    for (size_t k = 0; k < in.effects.size(); ++k) {
      const auto& d = im.D(static_cast<int>(k));
      c.L += in.effects[k].K.trace() * d;
      c.T += d.trace() * in.effects[k].K;
    }
  }
  return c;
}

double matvar_ml(const ImpliedMoments& im, const MatvarInput& in, Eigen::VectorXd* grad, int n_theta) {
  const double n = static_cast<double>(in.Z.cols()), m = static_cast<double>(in.Z.rows());
  const size_t ne = in.effects.size();
  MatvarCovariances cov = matvar_covariances(im, in);
  Eigen::MatrixXd li;
  const double ldl = logdet_pd(cov.L, &li, ErrorCode::LNotPD);
  const Eigen::MatrixXd zh = in.Z - implied_mean(im, in.X2);
  const Eigen::MatrixXd w = li * zh;  // L^-1 Zh
  const double trl = cov.L.trace();
  double ldt, trc1;
  Eigen::MatrixXd ti, p, q2, x2c0;
  Eigen::VectorXd tinv, pdiag;
  if (in.whitened) {
    if (!(cov.t.minCoeff() > 0)) throw SemError(ErrorCode::TNotPD, "T is not positive definite");
    tinv = cov.t.cwiseInverse();
    ldt = cov.t.array().log().sum();
    Eigen::VectorXd q = zh.cwiseProduct(w).colwise().sum().transpose();  // diag(Zh' L^-1 Zh)
    trc1 = q.dot(tinv);
    if (grad) {
      pdiag = q.cwiseProduct(tinv).cwiseProduct(tinv);
      Eigen::MatrixXd wt = w * tinv.asDiagonal();
      q2 = wt * w.transpose();
      if (in.X2.rows()) x2c0 = in.X2 * wt.transpose();
    }
  } else {
    ldt = logdet_pd(cov.T, &ti, ErrorCode::TNotPD);
    Eigen::MatrixXd g = zh.transpose() * w;  // Zh' L^-1 Zh
    trc1 = dot(ti, g);
    if (grad) {
      p = ti * g * ti;
      Eigen::MatrixXd wt = w * ti;
      q2 = wt * w.transpose();
      if (in.X2.rows()) x2c0 = in.X2 * wt.transpose();
    }
  }
  const double f = trl * trc1 + n * ldl + m * ldt - n * m * std::log(trl);
  if (!grad) return f;
  grad->setZero(n_theta);

  // Per-effect scalars: tr{K}, sum(K o P), tr{T^-1 K}
  std::vector<double> trk(ne), kp(ne), tk(ne);
  for (size_t k = 0; k < ne; ++k) {
    if (in.whitened) {
      trk[k] = in.s.sum();
      kp[k] = in.s.dot(pdiag);
      tk[k] = in.s.dot(tinv);
    } else {
      trk[k] = in.effects[k].K.trace();
      kp[k] = dot(in.effects[k].K, p);
      tk[k] = dot(ti, in.effects[k].K);
    }
  }
  const double trp = in.whitened ? pdiag.sum() : p.trace();
  const double trti = in.whitened ? tinv.sum() : ti.trace();

  auto combine = [&](double trdl, double trac1, double tra, double trbc2, double trb, double trc0dz) {
    return trdl * trc1 + 2 * trl * trc0dz - trl * (trac1 + trbc2) + m * tra + n * trb - n * m * trdl / trl;
  };

  const size_t np = im.dSigma.size();
  for (size_t i = 0; i < np; ++i) {
    if (!im.touches_sigma[i] && !im.touches_d[i] && !im.touches_mean[i]) continue;
    Eigen::MatrixXd dl = Eigen::MatrixXd::Zero(cov.L.rows(), cov.L.cols());
    double trds = 0, trac1 = 0, tra = 0;
    if (im.touches_sigma[i]) {
      trds = im.dSigma[i].trace();
      dl += n * im.dSigma[i];
      trac1 += trds * trp;
      tra += trds * trti;
    }
    if (im.touches_d[i])
      for (size_t k = 0; k < ne; ++k) {
        const auto& dd = im.dD[i][k];
        if (dd.size() == 0) continue;
        const double trdd = dd.trace();
        dl += trk[k] * dd;
        trac1 += trdd * kp[k];
        tra += trdd * tk[k];
      }
    double trc0dz = 0;
    if (im.touches_mean[i] && x2c0.size()) trc0dz = -dot(x2c0.transpose(), im.dMcoef[i]);
    (*grad)[i] = combine(dl.trace(), trac1, tra, dot(dl, q2), dot(dl, li), trc0dz);
  }
  for (size_t k = 0; k < ne; ++k) {
    const auto& e = in.effects[k];
    if (e.dK.empty()) continue;
    const auto& d = im.D(static_cast<int>(k));
    const double trd = d.trace(), dq2 = dot(d, q2), dli = dot(d, li);
    for (size_t j = 0; j < e.dK.size(); ++j) {
      const auto& dk = e.dK[j];
      const double trdk = dk.trace();
      (*grad)[e.offset + static_cast<Eigen::Index>(j)] =
          combine(trdk * trd, trd * dot(dk, p), trd * dot(ti, dk), trdk * dq2, trdk * dli, 0.0);
    }
  }
  return f;
}

double matvar_mean_gls(const ImpliedMoments& im, const MatvarInput& in, const Eigen::MatrixXd& Linv,
                       const Eigen::MatrixXd& Tinv, Eigen::VectorXd* grad) {
  return mean_gls(im, Linv, Tinv, in.Z, in.X2, grad);
}

}  // namespace sem
