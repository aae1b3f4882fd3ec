#include "sem/extras.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "sem/errors.hpp"
#include "sem/inference.hpp"
#include "sem/log.hpp"

namespace sem {

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

Eigen::MatrixXd chol_factor(const Eigen::MatrixXd& a, ErrorCode code) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SemError(code, "covariance is not positive definite");
  return llt.matrixL();
}

}  // namespace

DataTable simulate_like(const SemModel& model, const Eigen::VectorXd& theta, const DataTable& data,
                        std::mt19937_64& rng) {
  const auto& fs = model.state();
  const Eigen::Index n = fs.data.rows(), nz = fs.data.cols();
  ImpliedMoments im = model.implied(theta, false);
  Eigen::MatrixXd Z;  // z x n
  if (model.kind() == ModelKind::Effects || model.kind() == ModelKind::Generalized) {
    MatvarInput in;
    in.Z = fs.data.transpose();
    in.X2 = fs.X2;
    in.effects = model.effect_terms(theta, false);
    MatvarCovariances cv = matvar_covariances(im, in);
    Eigen::MatrixXd cl = chol_factor(cv.L, ErrorCode::LNotPD), ct = chol_factor(cv.T, ErrorCode::TNotPD);
    Z = cl * normal_matrix(nz, n, rng) * ct.transpose() / std::sqrt(cv.L.trace());
  } else {
    Z = chol_factor(im.Sigma, ErrorCode::SigmaNotPD) * normal_matrix(nz, n, rng);
  }
  if (model.kind() == ModelKind::Model) Z.colwise() += fs.col_means;
  else if (im.Mcoef.cols() > 0) Z += im.Mcoef * fs.X2;
  DataTable out = data;
  for (Eigen::Index j = 0; j < nz; ++j) {
    const int c = out.col(fs.z_names[j]);
    for (Eigen::Index i = 0; i < n; ++i)
      out.values(i, c) = std::isnan(fs.data(i, j)) ? fs.data(i, j) : Z(j, i);
  }
  return out;
}

BiasCorrection bias_correct(const SemModel& model, const DataTable& data, int k, uint64_t seed, bool parallel) {
  if (!model.fitted()) throw SemError(ErrorCode::NotFitted, "model is not fitted");
  if (k < 1) throw SemError(ErrorCode::DomainError, "bootstrap count must be positive");
  const Eigen::VectorXd theta = model.theta();
  FitOptions opt = model.fit_options();
  opt.parallel = false;
  opt.cov.reset();
  const bool shared_kernels = !model.state().kernels.empty();
  std::vector<Eigen::VectorXd> est(static_cast<size_t>(k));
  std::vector<char> ok(static_cast<size_t>(k), 0);
#pragma omp parallel for schedule(dynamic) if (parallel && !shared_kernels)
  for (int i = 0; i < k; ++i) {
    std::seed_seq ss{static_cast<uint64_t>(seed), static_cast<uint64_t>(i)};
    std::mt19937_64 rng(ss);
    try {
      DataTable sim = simulate_like(model, theta, data, rng);
      SemModel rep(model.kind(), model.description(), model.build_options());
      FitOptions o = opt;
      o.seed = seed + static_cast<uint64_t>(i) + 1;
      FitResult r = rep.fit(sim, o);
      if (r.success && r.x.size() == theta.size() && r.x.allFinite()) {
        est[static_cast<size_t>(i)] = r.x;
        ok[static_cast<size_t>(i)] = 1;
      }
    } catch (const SemError&) {
    }
  }
  BiasCorrection out;
  out.mean = Eigen::VectorXd::Zero(theta.size());
  for (int i = 0; i < k; ++i)
    if (ok[static_cast<size_t>(i)]) {
      out.mean += est[static_cast<size_t>(i)];
      ++out.used;
    }
  out.dropped = k - out.used;
  if (out.used == 0) throw SemError(ErrorCode::AllReplicatesFailed, "no bootstrap replicate converged");
  if (out.dropped > 0) log_warning(std::to_string(out.dropped) + " bootstrap replicates did not converge and were dropped");
  out.mean /= out.used;
  out.theta = 2 * theta - out.mean;
  return out;
}

namespace {

double corr_threshold(int n, double tests) {
  if (n <= 4) return 1.0;
  const double alpha = 0.05 / std::max(1.0, tests);
  const double z = boost::math::quantile(boost::math::complement(boost::math::normal(), alpha / 2));
  return std::tanh(z / std::sqrt(static_cast<double>(n) - 3.0));
}

}  // namespace

namespace {

// average linkage on 1 - |r| until the closest pair is farther than cutoff or `stop` clusters remain
std::vector<std::vector<int>> average_linkage(const Eigen::MatrixXd& d, std::vector<std::vector<int>> cl, double cutoff,
                                              size_t stop) {
  while (cl.size() > stop) {
    int ba = -1, bb = -1;
    double best = std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < cl.size(); ++a)
      for (size_t b = a + 1; b < cl.size(); ++b) {
        double s = 0;
        for (int i : cl[a])
          for (int j : cl[b]) s += d(i, j);
        s /= static_cast<double>(cl[a].size() * cl[b].size());
        if (s < best) best = s, ba = static_cast<int>(a), bb = static_cast<int>(b);
      }
    if (ba < 0 || best > cutoff) break;
    cl[ba].insert(cl[ba].end(), cl[bb].begin(), cl[bb].end());
    cl.erase(cl.begin() + bb);
  }
  return cl;
}

double mean_abs(const Eigen::MatrixXd& corr, const std::vector<int>& a, const std::vector<int>& b) {
  double s = 0;
  int cnt = 0;
  for (int i : a)
    for (int j : b)
      if (i != j) s += std::abs(corr(i, j)), ++cnt;
  return cnt ? s / cnt : 0.0;
}

// One common factor implies |r_AB| ~ sqrt(|r_AA| |r_BB|); correlated but distinct factors fall well below that.
void split_cluster(const Eigen::MatrixXd& corr, const Eigen::MatrixXd& d, const std::vector<int>& c, int min_cluster,
                   std::vector<std::vector<int>>& out) {
  if (static_cast<int>(c.size()) >= 2 * std::max(min_cluster, 2)) {
    std::vector<std::vector<int>> singles;
    for (int i : c) singles.push_back({i});
    auto two = average_linkage(d, singles, std::numeric_limits<double>::infinity(), 2);
    if (two.size() == 2 && static_cast<int>(two[0].size()) >= min_cluster &&
        static_cast<int>(two[1].size()) >= min_cluster) {
      const double wa = mean_abs(corr, two[0], two[0]), wb = mean_abs(corr, two[1], two[1]);
      const double between = mean_abs(corr, two[0], two[1]);
      if (between < 0.75 * std::sqrt(wa * wb)) {
        split_cluster(corr, d, two[0], min_cluster, out);
        split_cluster(corr, d, two[1], min_cluster, out);
        return;
      }
    }
  }
  out.push_back(c);
}

}  // namespace

std::vector<std::vector<int>> correlation_clusters(const Eigen::MatrixXd& corr, int n, int min_cluster) {
  const int m = static_cast<int>(corr.rows());
  const double cutoff = 1.0 - corr_threshold(n, 0.5 * m * (m - 1));
  Eigen::MatrixXd d = 1.0 - corr.cwiseAbs().array();
  std::vector<std::vector<int>> cl(m);
  for (int i = 0; i < m; ++i) cl[i] = {i};
  cl = average_linkage(d, cl, cutoff, 1);
  std::vector<std::vector<int>> out;
  for (auto& c : cl)
    if (static_cast<int>(c.size()) >= min_cluster) split_cluster(corr, d, c, min_cluster, out);
  for (auto& c : out) std::sort(c.begin(), c.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

namespace {

std::string cfa_description(const std::vector<std::vector<std::string>>& factors) {
  std::ostringstream os;
  for (size_t f = 0; f < factors.size(); ++f) {
    os << "eta" << f + 1 << " =~ ";
    for (size_t i = 0; i < factors[f].size(); ++i) os << (i ? " + " : "") << factors[f][i];
    os << "\n";
  }
  return os.str();
}

}  // namespace

EfaResult explore_cfa(const DataTable& data, const EfaOptions& opt) {
  const Eigen::Index m = static_cast<Eigen::Index>(data.columns.size());
  if (m < 3) throw SemError(ErrorCode::DimensionMismatch, "EFA needs at least three columns");
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    if (!data.values.row(i).array().isNaN().any()) rows.push_back(static_cast<int>(i));
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (n < 5) throw SemError(ErrorCode::TooFewRows, "EFA needs at least five complete rows");
  Eigen::MatrixXd x = data.values(rows, Eigen::all);
  x.rowwise() -= x.colwise().mean();
  Eigen::VectorXd sd = (x.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < m; ++j) x.col(j) /= sd[j] > 0 ? sd[j] : 1.0;
  Eigen::MatrixXd corr = x.transpose() * x / static_cast<double>(n - 1);

  EfaResult res;
  auto clusters = correlation_clusters(corr, static_cast<int>(n), opt.min_cluster);
  if (clusters.empty()) {
    if (opt.strict) throw SemError(ErrorCode::NoClustersFound, "no correlated clusters found");
    log_warning("no correlated clusters found; a single factor over all columns is used");
    res.fallback = true;
    std::vector<int> all(static_cast<size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    clusters = {all};
  }

  // loadings: regression of every column on the first principal component scores of all clusters jointly
  const double rho_min = corr_threshold(static_cast<int>(n), static_cast<double>(m));
  Eigen::MatrixXd scores(n, static_cast<Eigen::Index>(clusters.size()));
  for (size_t f = 0; f < clusters.size(); ++f) {
    const auto& c = clusters[f];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr(c, c));
    Eigen::VectorXd v = es.eigenvectors().col(es.eigenvectors().cols() - 1);
    Eigen::VectorXd s = x(Eigen::all, c) * v;
    scores.col(static_cast<Eigen::Index>(f)) = s / std::sqrt(s.squaredNorm() / static_cast<double>(n - 1));
  }
  const Eigen::MatrixXd beta = (scores.transpose() * scores).ldlt().solve(scores.transpose() * x);
  for (size_t f = 0; f < clusters.size(); ++f) {
    const auto& c = clusters[f];
    Eigen::VectorXd load = beta.row(static_cast<Eigen::Index>(f)).transpose();
    const double thr = std::max(0.1 * load.cwiseAbs().maxCoeff(), res.fallback ? 0.0 : rho_min);
    std::vector<int> keep = c;
    for (Eigen::Index j = 0; j < m; ++j)
      if (std::abs(load[j]) >= thr && std::find(c.begin(), c.end(), j) == c.end()) keep.push_back(static_cast<int>(j));
    std::sort(keep.begin(), keep.end(), [&](int a, int b) { return std::abs(load[a]) > std::abs(load[b]); });
    std::vector<std::string> names;
    for (int j : keep) names.push_back(data.columns[j]);
    res.factors.push_back(names);
  }

  // refinement: drop loadings with large p-values
  for (int iter = 0; iter < 5; ++iter) {
    std::vector<std::pair<double, std::pair<int, std::string>>> drop;
    try {
      SemModel cfa(ModelKind::Model, cfa_description(res.factors));
      FitOptions fo;
      cfa.fit(data, fo);
      for (const auto& r : cfa.inspect()) {
        if (r.op != "~" || r.rval.rfind("eta", 0) != 0 || !r.p_value) continue;
        const double p = std::isnan(*r.p_value) ? 1.0 : *r.p_value;
        if (p > opt.p_drop) drop.push_back({p, {std::stoi(r.rval.substr(3)) - 1, r.lval}});
      }
    } catch (const SemError& e) {
      log_warning(std::string("EFA refinement stopped: ") + e.what());
      break;
    }
    if (drop.empty()) break;
    std::sort(drop.rbegin(), drop.rend());
    bool changed = false;
    for (const auto& [p, fv] : drop) {
      auto& f = res.factors[static_cast<size_t>(fv.first)];
      if (f.size() <= 2) continue;
      f.erase(std::remove(f.begin(), f.end(), fv.second), f.end());
      changed = true;
    }
    if (!changed) break;
  }
  res.description = cfa_description(res.factors);
  return res;
}

double loading_error(const std::vector<std::vector<std::string>>& truth,
                     const std::vector<std::vector<std::string>>& found) {
  const size_t k = std::max(truth.size(), found.size());
  std::vector<std::set<std::string>> t(k), f(k);
  for (size_t i = 0; i < truth.size(); ++i) t[i] = {truth[i].begin(), truth[i].end()};
  for (size_t i = 0; i < found.size(); ++i) f[i] = {found[i].begin(), found[i].end()};
  size_t total = 0;
  for (const auto& s : t) total += s.size();
  if (total == 0) return 0.0;
  auto cost = [&](size_t a, size_t b) {
    size_t c = 0;
    for (const auto& v : t[a]) c += !f[b].count(v);
    for (const auto& v : f[b]) c += !t[a].count(v);
    return c;
  };
  std::vector<size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  size_t best = std::numeric_limits<size_t>::max();
  if (k <= 8) {
    do {
      size_t c = 0;
      for (size_t i = 0; i < k; ++i) c += cost(i, perm[i]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // greedy matching for many factors
    std::vector<char> used(k, 0);
    best = 0;
    for (size_t i = 0; i < k; ++i) {
      size_t bj = 0, bc = std::numeric_limits<size_t>::max();
      for (size_t j = 0; j < k; ++j)
        if (!used[j] && cost(i, j) < bc) bc = cost(i, j), bj = j;
      used[bj] = 1;
      best += bc;
    }
  }
  return static_cast<double>(best) / static_cast<double>(total);
}

}  // namespace sem
