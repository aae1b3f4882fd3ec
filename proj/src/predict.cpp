#include "sem/predict.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>

#include "sem/errors.hpp"

namespace sem {

using Eigen::Index;

Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& C) {
  using CM = Eigen::MatrixXcd;
  Eigen::ComplexSchur<CM> sa(A.cast<std::complex<double>>());
  Eigen::ComplexSchur<CM> sb(B.cast<std::complex<double>>());
  const CM& R = sa.matrixT();
  const CM& S = sb.matrixT();
  CM F = sa.matrixU().adjoint() * C.cast<std::complex<double>>() * sb.matrixU();
  const Index m = A.rows(), n = B.rows();
  CM Y(m, n);
  CM I = CM::Identity(m, m);
  double scale = std::max(R.cwiseAbs().maxCoeff(), S.cwiseAbs().maxCoeff());
  for (Index k = 0; k < n; ++k) {
    Eigen::VectorXcd rhs = F.col(k);
    if (k > 0) rhs -= Y.leftCols(k) * S.col(k).head(k);
    CM sys = R + S(k, k) * I;
    for (Index i = 0; i < m; ++i)
      if (std::abs(sys(i, i)) <= 1e-14 * std::max(1.0, scale))
        throw SemError(ErrorCode::SingularSystem, "Sylvester system is singular");
    Y.col(k) = sys.triangularView<Eigen::Upper>().solve(rhs);
  }
  return (sa.matrixU() * Y * sb.matrixU().adjoint()).real();
}

namespace {

bool has_effects(const SemModel& m) { return m.kind() == ModelKind::Effects || m.kind() == ModelKind::Generalized; }

Eigen::MatrixXd exo_rows(const SemModel& m, const DataTable& x) {
  const auto& g = m.structure().tpl.g;
  Eigen::MatrixXd X2(static_cast<Index>(g.size()), x.rows());
  for (size_t i = 0; i < g.size(); ++i) {
    if (g[i] == "1") {
      X2.row(static_cast<Index>(i)).setOnes();
      continue;
    }
    if (!x.has(g[i])) throw SemError(ErrorCode::ExogenousTarget, "exogenous variable '" + g[i] + "' is missing");
    Eigen::VectorXd c = x.column(g[i]);
    if (c.array().isNaN().any())
      throw SemError(ErrorCode::ExogenousTarget,
                     "exogenous variable '" + g[i] + "' can't be imputed; it can't be used as a prediction target");
    X2.row(static_cast<Index>(i)) = c.transpose();
  }
  return X2;
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a, ErrorCode code, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SemError(code, std::string(what) + " is not positive definite");
  return llt;
}

}  // namespace

DataTable impute(const SemModel& m, const Eigen::VectorXd& theta, const DataTable& x) {
  if (!m.fitted()) throw SemError(ErrorCode::NotFitted, "model is not fitted");
  const auto& fs = m.state();
  const auto& names = fs.z_names;
  const Index nz = static_cast<Index>(names.size()), n = x.rows();
  Eigen::MatrixXd Z(n, nz);
  for (Index j = 0; j < nz; ++j)
    Z.col(j) = x.has(names[j]) ? x.column(names[j])
                               : Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  if (!Z.array().isNaN().any()) return x;

  ImpliedMoments im = m.implied(theta, false);
  Eigen::MatrixXd sigma = im.Sigma;
  if (has_effects(m)) {
    auto terms = m.effect_terms(theta, false);
    for (size_t k = 0; k < terms.size(); ++k) sigma += terms[k].K.diagonal().mean() * im.D(static_cast<int>(k));
  }
  Eigen::MatrixXd mu(n, nz);
  if (m.kind() == ModelKind::Model) {
    mu = fs.col_means.transpose().replicate(n, 1);
  } else {
    for (const auto& g : fs.x2_names)
      if (std::find(names.begin(), names.end(), g) != names.end())
        throw SemError(ErrorCode::ExogenousTarget, "exogenous variable '" + g + "' can't be imputed");
    Eigen::MatrixXd X2 = exo_rows(m, x);
    mu = (im.Mcoef.cols() ? Eigen::MatrixXd(im.Mcoef * X2) : Eigen::MatrixXd::Zero(nz, n)).transpose();
  }

  DataTable out = x;
  for (Index j = 0; j < nz; ++j)
    if (!out.has(names[j])) out.add_column(names[j], Z.col(j));
  for (Index r = 0; r < n; ++r) {
    std::vector<int> obs, mis;
    for (Index j = 0; j < nz; ++j) (std::isnan(Z(r, j)) ? mis : obs).push_back(static_cast<int>(j));
    if (mis.empty()) continue;
    Eigen::VectorXd fill = mu(r, mis).transpose();
    if (!obs.empty()) {
      Eigen::LDLT<Eigen::MatrixXd> s22(sigma(obs, obs));
      if (s22.info() != Eigen::Success || !s22.isPositive() ||
          s22.vectorD().minCoeff() <= 1e-12 * std::max(1.0, s22.vectorD().maxCoeff()))
        throw SemError(ErrorCode::SingularSigma22, "covariance of the observed block is singular");
      Eigen::VectorXd d = Z(r, obs).transpose() - mu(r, obs).transpose();
      fill += sigma(mis, obs) * s22.solve(d);
    }
    for (size_t i = 0; i < mis.size(); ++i) out.values(r, out.col(names[mis[i]])) = fill[static_cast<Index>(i)];
  }
  return out;
}

FactorScores factor_scores(const SemModel& m, const Eigen::VectorXd& theta, const DataTable& x,
                           bool force_sylvester) {
  if (!m.fitted()) throw SemError(ErrorCode::NotFitted, "model is not fitted");
  const auto& st = m.structure();
  const auto& fs = m.state();
  const auto& omega = st.tpl.omega;
  const auto& lat = st.cls.latent;
  std::vector<int> hi, xi;
  for (int i = 0; i < static_cast<int>(omega.size()); ++i)
    (std::find(lat.begin(), lat.end(), omega[i]) != lat.end() ? hi : xi).push_back(i);
  FactorScores out;
  if (hi.empty()) return out;

  const Index n = x.rows();
  Eigen::MatrixXd Z = x.select(fs.z_names).transpose();
  if (Z.array().isNaN().any())
    throw SemError(ErrorCode::Unsupported, "factor scores need complete data; impute missing values first");
  if (m.kind() == ModelKind::Model) Z.colwise() -= fs.col_means;

  ImpliedMoments im = m.implied(theta, false);
  const Eigen::MatrixXd& C = im.C;
  const Eigen::MatrixXd& lambda = im.mats[kLambda];
  const Eigen::MatrixXd& psi = im.mats[kPsi];
  const Eigen::MatrixXd& th = im.mats[kTheta];
  Eigen::MatrixXd F1C = C(hi, Eigen::all), F2C = C(xi, Eigen::all);
  Eigen::MatrixXd LH = lambda(Eigen::all, hi), LX = lambda(Eigen::all, xi);
  Eigen::MatrixXd sx = LX * F2C * psi * F2C.transpose() * LX.transpose();

  std::vector<EffectTerm> terms;
  if (has_effects(m)) {
    if (n != fs.n) throw SemError(ErrorCode::DimensionMismatch, "effects models score the fit data only");
    terms = m.effect_terms(theta, false);
  }
  const double nd = static_cast<double>(n);
  Eigen::MatrixXd L = nd * (sx + th);
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n, n) * (sx.trace() + th.trace());
  for (size_t k = 0; k < terms.size(); ++k) {
    const auto& D = im.D(static_cast<int>(k));
    L += terms[k].K.trace() * D;
    T += D.trace() * terms[k].K;
  }

  Eigen::MatrixXd MH = Z;
  Eigen::MatrixXd muH = Eigen::MatrixXd::Zero(static_cast<Index>(hi.size()), n);
  if (im.Mcoef.cols() > 0) {
    Eigen::MatrixXd G = exo_rows(m, x);
    const Eigen::MatrixXd& g1 = im.mats[kGamma1];
    const Eigen::MatrixXd& g2 = im.mats[kGamma2];
    MH -= (g2 + LX * F2C * g1) * G;
    muH = F1C * g1 * G;
  }
  Eigen::MatrixXd lh = F1C * psi * F1C.transpose();
  auto lchol = checked_llt(L, ErrorCode::SingularSystem, "conditional covariance L");
  const double trl = L.trace();
  Eigen::MatrixXd A0 = trl * LH.transpose() * lchol.solve(LH);
  Eigen::MatrixXd R = trl * LH.transpose() * lchol.solve(MH);

  const bool sylvester = force_sylvester || !terms.empty();
  Eigen::MatrixXd H;
  if (!sylvester) {
    auto lhc = checked_llt(lh, ErrorCode::SingularSystem, "latent covariance");
    const double tau = T(0, 0);
    Eigen::MatrixXd lhi = lhc.solve(Eigen::MatrixXd::Identity(lh.rows(), lh.cols()));
    Eigen::MatrixXd sys = A0 / tau + lhi;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (!lu.isInvertible()) throw SemError(ErrorCode::SingularSystem, "factor score system is singular");
    H = lu.solve(R / tau + lhi * muH);
    out.path = ScorePath::Linear;
  } else {
    out.rhs = lh * R + muH * T;
    H = solve_sylvester(lh * A0, T, out.rhs);
    out.path = ScorePath::Sylvester;
  }
  out.LH = lh;
  out.A0 = A0;
  out.T = T;

  std::vector<int> order(hi.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return omega[hi[a]] < omega[hi[b]]; });
  out.H.resize(n, static_cast<Index>(hi.size()));
  for (size_t i = 0; i < order.size(); ++i) {
    out.names.push_back(omega[hi[order[i]]]);
    out.H.col(static_cast<Index>(i)) = H.row(order[i]).transpose();
  }
  return out;
}

Eigen::MatrixXd blup(const SemModel& m, const Eigen::VectorXd& theta, int effect) {
  if (!m.fitted()) throw SemError(ErrorCode::NotFitted, "model is not fitted");
  if (!has_effects(m)) throw SemError(ErrorCode::MethodMismatch, "BLUP needs an effects model");
  const auto& fs = m.state();
  auto terms = m.effect_terms(theta, false);
  if (effect < 0 || effect >= static_cast<int>(terms.size()))
    throw SemError(ErrorCode::DomainError, "effect index out of range");
  ImpliedMoments im = m.implied(theta, false);
  Eigen::MatrixXd Z = fs.data.transpose();
  if (im.Mcoef.cols() > 0) Z -= im.Mcoef * fs.X2;
  const Index n = Z.cols();
  Eigen::MatrixXd L = static_cast<double>(n) * im.Sigma;
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n, n) * im.Sigma.trace();
  for (size_t k = 0; k < terms.size(); ++k) {
    if (static_cast<int>(k) == effect) continue;
    const auto& D = im.D(static_cast<int>(k));
    L += terms[k].K.trace() * D;
    T += D.trace() * terms[k].K;
  }
  const auto& Di = im.D(effect);
  const auto& Ki = terms[effect].K;
  const double trd = Di.trace(), trk = Ki.trace();
  if (!(std::abs(trd) > 0) || !(std::abs(trk) > 0))
    throw SemError(ErrorCode::SingularTi, "effect covariance is zero; the effect is not estimable");
  Eigen::MatrixXd Li = trk * Di, Ti = trd * Ki;
  // Simultaneous diagonalization: W' L W = I, W' Li W = diag(l); the same for T.
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> el(Li, L);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> et(Ti, T);
  if (el.info() != Eigen::Success) throw SemError(ErrorCode::LNotPD, "L is not positive definite");
  if (et.info() != Eigen::Success) throw SemError(ErrorCode::TNotPD, "T is not positive definite");
  const Eigen::MatrixXd& W = el.eigenvectors();
  const Eigen::MatrixXd& V = et.eigenvectors();
  const Eigen::VectorXd lam = el.eigenvalues().cwiseMax(0.0), sig = et.eigenvalues().cwiseMax(0.0);
  const double a = T.trace(), b = Ti.trace();
  Eigen::MatrixXd F = W.transpose() * Z * V;
  for (Index j = 0; j < F.rows(); ++j)
    for (Index k = 0; k < F.cols(); ++k) {
      const double w = a * lam[j] * sig[k];
      F(j, k) *= w / (w + b);
    }
  return L * W * F * V.transpose() * T;
}

DataTable SemModel::predict(const DataTable& x) const { return impute(*this, theta_, x); }

DataTable SemModel::predict_factors(const DataTable& x) const {
  FactorScores s = factor_scores(*this, theta_, x);
  return make_table(s.names, s.H);
}

Eigen::MatrixXd SemModel::blup(int effect) const { return sem::blup(*this, theta_, effect); }

}  // namespace sem
