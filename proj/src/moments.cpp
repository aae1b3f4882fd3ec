#include "sem/moments.hpp"

#include <cmath>

#include "sem/errors.hpp"
#include "sem/log.hpp"

namespace sem {

SampleMoments sample_cov(const Eigen::MatrixXd& data, bool biased, bool pairwise) {
  const int n = static_cast<int>(data.rows()), p = static_cast<int>(data.cols());
  if (n < 2) throw SemError(ErrorCode::TooFewRows, "at least 2 rows are required");
  for (int j = 0; j < p; ++j) {
    bool any = false;
    for (int i = 0; i < n && !any; ++i) any = !std::isnan(data(i, j));
    if (!any) throw SemError(ErrorCode::AllMissingColumn, "column " + std::to_string(j) + " has no values");
  }
  SampleMoments m;
  m.S.resize(p, p);
  m.means.resize(p);
  if (pairwise) {
    for (int j = 0; j < p; ++j) {
      double s = 0;
      int c = 0;
      for (int i = 0; i < n; ++i)
        if (!std::isnan(data(i, j))) s += data(i, j), ++c;
      m.means[j] = s / c;
    }
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) {
        double sa = 0, sb = 0;
        int c = 0;
        for (int i = 0; i < n; ++i)
          if (!std::isnan(data(i, a)) && !std::isnan(data(i, b))) sa += data(i, a), sb += data(i, b), ++c;
        if (c < 2) throw SemError(ErrorCode::TooFewRows, "fewer than 2 joint observations for a variable pair");
        sa /= c;
        sb /= c;
        double s = 0;
        for (int i = 0; i < n; ++i)
          if (!std::isnan(data(i, a)) && !std::isnan(data(i, b))) s += (data(i, a) - sa) * (data(i, b) - sb);
        m.S(a, b) = m.S(b, a) = s / (biased ? c : c - 1);
      }
    m.n = n;
  } else {
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
      if (!data.row(i).array().isNaN().any()) keep.push_back(i);
    const int k = static_cast<int>(keep.size());
    if (k < 2) throw SemError(ErrorCode::TooFewRows, "fewer than 2 complete rows");
    Eigen::MatrixXd x = data(keep, Eigen::all);
    m.means = x.colwise().mean();
    Eigen::MatrixXd c = x.rowwise() - m.means.transpose();
    m.S = c.transpose() * c / (biased ? k : k - 1);
    m.n = k;
  }
  bool changed = false;
  Eigen::MatrixXd fixed = nearest_pd(m.S, &changed);
  if (changed) {
    log_warning("sample covariance matrix is not positive definite; nearest positive-definite matrix is used");
    m.S = fixed;
    m.repaired = true;
  }
  return m;
}

std::vector<std::pair<int, int>> vech_index(int p) {
  std::vector<std::pair<int, int>> idx;
  idx.reserve(static_cast<size_t>(p) * (p + 1) / 2);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) idx.emplace_back(i, j);
  return idx;
}

Eigen::VectorXd vech(const Eigen::MatrixXd& a) {
  auto idx = vech_index(static_cast<int>(a.rows()));
  Eigen::VectorXd v(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) v[static_cast<Eigen::Index>(k)] = a(idx[k].first, idx[k].second);
  return v;
}

Eigen::MatrixXd wls_weight(const Eigen::MatrixXd& data, bool* repaired) {
  const int n = static_cast<int>(data.rows()), p = static_cast<int>(data.cols());
  if (n < 3) throw SemError(ErrorCode::TooFewRows, "WLS weight matrix needs at least 3 rows");
  Eigen::MatrixXd c = data.rowwise() - data.colwise().mean();
  auto idx = vech_index(p);
  Eigen::MatrixXd prod(n, idx.size());
  for (size_t k = 0; k < idx.size(); ++k)
    prod.col(static_cast<Eigen::Index>(k)) = c.col(idx[k].first).cwiseProduct(c.col(idx[k].second));
  Eigen::MatrixXd pc = prod.rowwise() - prod.colwise().mean();
  Eigen::MatrixXd w = pc.transpose() * pc / n;
  bool changed = false;
  Eigen::MatrixXd fixed = nearest_pd(w, &changed);
  if (changed) {
    log_warning("WLS weight matrix is singular; nearest positive-definite matrix is used");
    w = fixed;
  }
  if (repaired) *repaired = changed;
  return w;
}

Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& a, bool* changed) {
  const double eps = 1e-10 * std::max(1.0, a.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.eigenvalues().size() == 0 || es.eigenvalues().minCoeff() >= eps) {
    if (changed) *changed = false;
    return a;
  }
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eps);
  Eigen::MatrixXd r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  if (changed) *changed = true;
  return 0.5 * (r + r.transpose());
}

ImpliedMoments implied_moments(const MatrixTemplates& tpl, const ParameterSpace& ps, const Eigen::VectorXd& theta,
                               bool derivatives) {
  ImpliedMoments im;
  fill_matrices(tpl, ps, theta, im.mats);
  const auto& B = im.mats[kB];
  const auto& Lambda = im.mats[kLambda];
  const auto& Psi = im.mats[kPsi];
  const auto& Theta = im.mats[kTheta];
  const auto& G1 = im.mats[kGamma1];
  const auto& G2 = im.mats[kGamma2];
  const Eigen::Index no = B.rows();
  if (no > 0) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(no, no) - B);
    im.C = lu.inverse();
    if (!im.C.allFinite() || std::abs(lu.determinant()) < 1e-12)
      throw SemError(ErrorCode::SingularResolvent, "I - B is not invertible");
  } else {
    im.C.resize(0, 0);
  }
  im.LC = Lambda * im.C;
  Eigen::MatrixXd G = im.C * Psi * im.LC.transpose();  // C Psi C' Lambda'
  im.Sigma = im.LC * Psi * im.LC.transpose() + Theta;
  im.Sigma = 0.5 * (im.Sigma + im.Sigma.transpose());
  Eigen::MatrixXd CG1 = im.C * G1;
  im.Mcoef = G2 + Lambda * CG1;
  if (!derivatives) return im;

  const size_t np = ps.size();
  const Eigen::Index nz = im.Sigma.rows(), ng = im.Mcoef.cols();
  const int ne = im.n_effects();
  im.dSigma.assign(np, Eigen::MatrixXd());
  im.dMcoef.assign(np, Eigen::MatrixXd());
  im.dD.assign(np, std::vector<Eigen::MatrixXd>(ne));
  im.touches_sigma.assign(np, 0);
  im.touches_mean.assign(np, 0);
  im.touches_d.assign(np, 0);
  for (size_t i = 0; i < np; ++i) {
    Eigen::MatrixXd ds, dm;
    auto sig = [&]() -> Eigen::MatrixXd& {
      if (!im.touches_sigma[i]) ds = Eigen::MatrixXd::Zero(nz, nz), im.touches_sigma[i] = 1;
      return ds;
    };
    auto mean = [&]() -> Eigen::MatrixXd& {
      if (!im.touches_mean[i]) dm = Eigen::MatrixXd::Zero(nz, ng), im.touches_mean[i] = 1;
      return dm;
    };
    for (const auto& l : ps.params[i].locs) {
      const int r = l.row, c = l.col;
      switch (l.mat) {
        case kB: {
          Eigen::MatrixXd t = im.LC.col(r) * G.row(c);
          sig() += t + t.transpose();
          if (ng) mean() += im.LC.col(r) * CG1.row(c);
          break;
        }
        case kLambda: {
          Eigen::MatrixXd t = Eigen::MatrixXd::Zero(nz, nz);
          t.row(r) = G.row(c);
          sig() += t + t.transpose();
          if (ng) mean().row(r) += CG1.row(c);
          break;
        }
        case kPsi:
          sig() += im.LC.col(r) * im.LC.col(c).transpose();
          break;
        case kTheta:
          sig()(r, c) += 1.0;
          break;
        case kGamma1:
          mean().col(c) += im.LC.col(r);
          break;
        case kGamma2:
          mean()(r, c) += 1.0;
          break;
        default: {
          auto& d = im.dD[i][l.mat - kD0];
          if (d.size() == 0) d = Eigen::MatrixXd::Zero(nz, nz);
          d(r, c) += 1.0;
          im.touches_d[i] = 1;
        }
      }
    }
    if (im.touches_sigma[i]) im.dSigma[i] = std::move(ds);
    if (im.touches_mean[i]) im.dMcoef[i] = std::move(dm);
  }
  return im;
}

Eigen::MatrixXd implied_mean(const ImpliedMoments& im, const Eigen::MatrixXd& X2) {
  if (im.Mcoef.cols() == 0) return Eigen::MatrixXd::Zero(im.Sigma.rows(), X2.cols());
  return im.Mcoef * X2;
}

}  // namespace sem
