#include "sem/genmod.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "sem/effects.hpp"
#include "sem/errors.hpp"

namespace sem {

namespace {

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

int uniform_int(Rng& rng, int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

}  // namespace

std::string generate_description(const GenConfig& cfg, Rng& rng) {
  if (cfg.n_endo < 0 || cfg.n_exo < 0 || cfg.n_lat < 0 || cfg.n_cycles < 0)
    throw SemError(ErrorCode::InfeasibleConfig, "counts must be nonnegative");
  if (cfg.p_join < 0 || cfg.p_join > 1) throw SemError(ErrorCode::InfeasibleConfig, "p_join must lie in [0, 1]");
  if (cfg.n_lat > 0 && (cfg.n_inds_min < 1 || cfg.n_inds_max < cfg.n_inds_min))
    throw SemError(ErrorCode::InfeasibleConfig, "bad indicator range");
  if (cfg.n_exo > 0 && cfg.n_lat + cfg.n_endo == 0)
    throw SemError(ErrorCode::InfeasibleConfig, "exogenous variables need an endogenous target");
  if (cfg.n_endo > 0 && cfg.n_lat == 0 && cfg.n_exo == 0 && cfg.n_endo < 2)
    throw SemError(ErrorCode::InfeasibleConfig, "a single endogenous variable needs a predictor");

  std::vector<std::string> lat, endo, exo;
  for (int i = 1; i <= cfg.n_lat; ++i) lat.push_back("eta" + std::to_string(i));
  for (int i = 1; i <= cfg.n_endo; ++i) endo.push_back("x" + std::to_string(i));
  for (int i = 1; i <= cfg.n_exo; ++i) exo.push_back("g" + std::to_string(i));

  // measurement part
  std::vector<std::vector<std::string>> inds(lat.size());
  int y = 0;
  for (auto& v : inds) {
    const int k = uniform_int(rng, cfg.n_inds_min, cfg.n_inds_max);
    for (int j = 0; j < k; ++j) v.push_back("y" + std::to_string(++y));
  }
  for (size_t i = 1; i < inds.size(); ++i) {
    if (uniform(rng, 0, 1) >= cfg.p_join) continue;
    const auto& other = inds[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(i) - 1))];
    const std::string& shared = other[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(other.size()) - 1))];
    if (std::find(inds[i].begin(), inds[i].end(), shared) == inds[i].end()) inds[i].push_back(shared);
  }

  // structural part: random topological order, average in-degree about 1.5
  std::vector<std::string> order = lat;
  order.insert(order.end(), endo.begin(), endo.end());
  std::shuffle(order.begin(), order.end(), rng);
  const int n_exo = static_cast<int>(exo.size());
  if (n_exo == 0 && !order.empty() && order[0][0] == 'x') {
    auto it = std::find_if(order.begin(), order.end(), [](const std::string& s) { return s[0] == 'e'; });
    if (it == order.end()) it = order.begin() + 1;
    std::iter_swap(order.begin(), it);
  }
  std::vector<std::string> nodes = exo;
  nodes.insert(nodes.end(), order.begin(), order.end());
  const int nn = static_cast<int>(nodes.size());
  std::vector<std::vector<char>> adj(nn, std::vector<char>(nn, 0));  // adj[parent][child]
  for (int c = n_exo; c < nn; ++c) {
    const int cands = c;
    if (cands == 0) continue;
    const double p = std::min(1.0, 1.5 / cands);
    int got = 0;
    for (int a = 0; a < c; ++a)
      if (uniform(rng, 0, 1) < p) adj[a][c] = 1, ++got;
    if (got == 0 && nodes[c][0] == 'x') adj[uniform_int(rng, 0, c - 1)][c] = 1;
  }
  for (int e = 0; e < n_exo; ++e) {
    bool any = false;
    for (int c = 0; c < nn; ++c) any = any || adj[e][c];
    if (!any) adj[e][uniform_int(rng, n_exo, nn - 1)] = 1;
  }
  // cycles: v -> u where u reaches v
  for (int k = 0; k < cfg.n_cycles; ++k) {
    std::vector<std::vector<char>> reach = adj;
    for (int m = 0; m < nn; ++m)
      for (int a = 0; a < nn; ++a)
        if (reach[a][m])
          for (int b = 0; b < nn; ++b)
            if (reach[m][b]) reach[a][b] = 1;
    std::vector<std::pair<int, int>> cand;
    for (int u = n_exo; u < nn; ++u)
      for (int v = n_exo; v < nn; ++v)
        if (u != v && reach[u][v] && !adj[v][u]) cand.emplace_back(v, u);
    if (cand.empty()) throw SemError(ErrorCode::InfeasibleConfig, "not enough edges to form the requested cycles");
    auto [v, u] = cand[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(cand.size()) - 1))];
    adj[v][u] = 1;
  }

  std::ostringstream os;
  os << "# Measurement part\n";
  for (size_t i = 0; i < lat.size(); ++i) os << lat[i] << " =~ " << join(inds[i], " + ") << "\n";
  os << "# Structural part\n";
  for (int c = 0; c < nn; ++c) {
    std::vector<std::string> parents;
    for (int a = 0; a < nn; ++a)
      if (adj[a][c]) parents.push_back(nodes[a]);
    if (!parents.empty()) os << nodes[c] << " ~ " << join(parents, " + ") << "\n";
  }
  return os.str();
}

GeneratedModel generate_parameters(const std::string& description, Rng& rng, double sigma_eta) {
  BuildOptions bo;
  bo.intercepts = false;
  GeneratedModel out;
  out.model = std::make_shared<SemModel>(ModelKind::Means, description, bo);
  SemModel& m = *out.model;
  auto& st = m.mutable_structure();
  const auto& lat = st.cls.latent;
  // fixed exogenous cells are not parameters; give them unit-scale variances
  for (const auto& dc : st.tpl.data_cells) {
    auto& mat = st.tpl.base[dc.loc.mat];
    const double v = dc.a == dc.b ? uniform(rng, 0.7, 1.4) : 0.0;
    mat(dc.loc.row, dc.loc.col) = v;
    mat(dc.loc.col, dc.loc.row) = v;
  }
  const int np = m.n_model_params();
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd th(np);
    for (int i = 0; i < np; ++i) {
      const auto& p = st.ps.params[i];
      const Loc& l = p.locs.front();
      double v;
      if (l.mat == kPsi || l.mat == kTheta || l.mat >= kD0) {
        if (l.row != l.col) {
          v = 0.0;
        } else {
          const bool latent = l.mat == kPsi &&
                              std::find(lat.begin(), lat.end(), st.tpl.omega[l.row]) != lat.end();
          v = (latent ? sigma_eta : 1.0) * uniform(rng, 0.7, 1.4);
        }
      } else {
        v = uniform(rng, 0.3, 1.5) * (uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0);
      }
      th[i] = std::clamp(v, p.lo, p.hi);
    }
    try {
      ImpliedMoments im = m.implied(th, false);
      Eigen::LLT<Eigen::MatrixXd> llt(im.Sigma);
      if (llt.info() != Eigen::Success || !im.Sigma.allFinite()) continue;
    } catch (const SemError&) {
      continue;
    }
    out.theta = th;
    m.set_theta(th);
    for (const auto& e : st.entries) {
      ParameterRow r;
      r.lval = e.lval;
      r.op = e.op;
      r.rval = e.rval;
      r.estimate = e.param >= 0 ? th[e.param] : e.fixed;
      out.params.push_back(r);
    }
    return out;
  }
  throw SemError(ErrorCode::CannotAchievePD, "could not draw parameters with a positive definite Sigma");
}

Eigen::MatrixXd random_kernel(int n, Rng& rng) {
  if (n == 0) return Eigen::MatrixXd(0, 0);
  const int r = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(n)) / 2)));
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(n, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = nd(rng);
  Eigen::MatrixXd k = a * a.transpose();
  return k / k.diagonal().mean();
}

namespace {

// Symmetric square root of a PSD matrix.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

}  // namespace

GeneratedData generate_data(const SemModel& model, const Eigen::VectorXd& theta, int n, Rng& rng,
                            const EffectsSpec& effects) {
  const auto& tpl = model.structure().tpl;
  ImpliedMoments im = model.implied(theta, false);
  std::vector<std::string> x2;
  for (const auto& g : tpl.g)
    if (g != "1") x2.push_back(g);
  Eigen::MatrixXd G(static_cast<Eigen::Index>(tpl.g.size()), n);
  for (size_t i = 0; i < tpl.g.size(); ++i)
    G.row(static_cast<Eigen::Index>(i)) = tpl.g[i] == "1" ? Eigen::RowVectorXd::Ones(n)
                                                           : Eigen::RowVectorXd(normal_matrix(1, n, rng));
  const Eigen::Index nw = static_cast<Eigen::Index>(tpl.omega.size()), nz = static_cast<Eigen::Index>(tpl.z.size());
  Eigen::MatrixXd E = psd_sqrt(im.mats[kPsi]) * normal_matrix(nw, n, rng);
  Eigen::MatrixXd W = im.C * E;
  if (G.rows()) W += im.C * im.mats[kGamma1] * G;
  Eigen::MatrixXd Z = im.mats[kLambda] * W + psd_sqrt(im.mats[kTheta]) * normal_matrix(nz, n, rng);
  if (G.rows()) Z += im.mats[kGamma2] * G;

  GeneratedData out;
  std::vector<std::string> labels;
  for (int i = 0; i < n; ++i) labels.push_back(std::to_string(i));
  auto draw_d = [&]() {
    Eigen::VectorXd d(nz);
    for (Eigen::Index i = 0; i < nz; ++i) d[i] = effects.scale * uniform(rng, 0.7, 1.4);
    return d;
  };
  for (int k = 0; k < effects.n_static; ++k) {
    Eigen::MatrixXd K = random_kernel(n, rng);
    Eigen::VectorXd d = draw_d();
    Z += d.cwiseSqrt().asDiagonal() * normal_matrix(nz, n, rng) * psd_sqrt(K);
    out.k.push_back(LabelledMatrix{labels, K});
  }
  if (effects.moving_average) {
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K(i, j) = autocorrelation_ma(effects.ma_alpha, std::abs(i - j));
    Eigen::VectorXd d = draw_d();
    Z += d.cwiseSqrt().asDiagonal() * normal_matrix(nz, n, rng) * psd_sqrt(K);
  }

  std::vector<std::string> cols = tpl.z;
  cols.insert(cols.end(), x2.begin(), x2.end());
  Eigen::MatrixXd vals(n, static_cast<Eigen::Index>(cols.size()));
  vals.leftCols(nz) = Z.transpose();
  Eigen::Index c = nz;
  for (size_t i = 0; i < tpl.g.size(); ++i)
    if (tpl.g[i] != "1") vals.col(c++) = G.row(static_cast<Eigen::Index>(i)).transpose();
  out.data = make_table(cols, vals);
  if (effects.n_static > 0) {
    Eigen::VectorXd idx = Eigen::VectorXd::LinSpaced(n, 0, n - 1);
    out.data.add_column("group", idx);
  }
  if (effects.moving_average) {
    Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0, n - 1);
    out.data.add_column("time", t);
  }
  return out;
}

std::vector<double> compare_results(const std::vector<ParameterRow>& estimates,
                                    const std::vector<ParameterRow>& truth) {
  std::map<std::string, const ParameterRow*> est;
  for (const auto& r : estimates) est[r.lval + "\t" + r.op + "\t" + r.rval] = &r;
  std::vector<double> errs;
  for (const auto& t : truth) {
    if (t.op != "~" && t.op != "=~") continue;
    auto it = est.find(t.lval + "\t" + t.op + "\t" + t.rval);
    if (it == est.end() || !it->second->std_err) continue;
    const double e = it->second->estimate;
    errs.push_back(std::abs((t.estimate - e) / e));
  }
  return errs;
}

double mape(const std::vector<ParameterRow>& estimates, const std::vector<ParameterRow>& truth) {
  auto e = compare_results(estimates, truth);
  if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

std::vector<ParameterRow> read_param_table(const std::string& path) {
  DataTable t = read_csv(path);
  auto lv = t.labels("lval"), op = t.labels("op"), rv = t.labels("rval");
  Eigen::VectorXd est = t.column("Estimate");
  std::vector<ParameterRow> rows;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    ParameterRow r;
    r.lval = lv[i];
    r.op = op[i];
    r.rval = rv[i];
    r.estimate = est[i];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sem
