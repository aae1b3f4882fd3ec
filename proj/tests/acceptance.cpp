// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>

#include "common.hpp"
#include "sem/effects.hpp"
#include "sem/extras.hpp"
#include "sem/inference.hpp"
#include "sem/log.hpp"
#include "sem/objectives.hpp"
#include "sem/predict.hpp"

using namespace sem;
using namespace testing_util;

namespace {

// Tolerances
constexpr double kPdEstTol = 1e-2, kPdSeTol = 5e-3, kPdSeconds = 5.0;
constexpr double kHolzEstTol = 1e-2, kScoreTol = 1e-2;
constexpr double kArticleObj = 0.091, kArticleObjTol = 0.01, kArticleMape = 19.94, kArticleMapeTol = 2.0;
constexpr double kGradTol = 1e-4;
constexpr double kFimTol = 1e-8;
constexpr double kWhitenTol = 1e-8, kTraceTol = 1e-10;
constexpr double kEffectsNonConv = 0.40, kEffectsNonConvShare = 0.25, kEffectsRatio = 1.5, kEffectsSeconds = 600;
constexpr double kSetANonConv = 0.10, kSetAMape = 15.0, kSetAMeansGap = 1.0;
constexpr double kRemlGap = 3.0, kProjTol = 1e-8;
constexpr double kImputeLo = 9.0, kImputeHi = 20.0;
constexpr double kConstraintEstTol = 1e-2, kConstraintTol = 1e-6;
constexpr double kKernelTol = 1e-12;
constexpr double kEfaError = 0.25;
constexpr int kEfaExact = 8;
constexpr double kPbeRatio = 0.5;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome political_democracy() {
  auto t0 = std::chrono::steady_clock::now();
  DataTable data = read_csv(data_path("pd_data.csv"));
  SemModel m(ModelKind::Model, kPoliticalDemocracy);
  auto r = m.fit(data);
  auto d1 = compare_reference(m.inspect(), read_reference(ref_path("pd_model.csv")));
  SemModel mm(ModelKind::Means, kPoliticalDemocracy);
  auto r2 = mm.fit(data);
  auto rows = mm.inspect();
  auto d2 = compare_reference(rows, read_reference(ref_path("pd_means.csv")));
  double x1 = NAN;
  for (const auto& row : rows)
    if (row.lval == "x1" && row.op == "~" && row.rval == "1") x1 = row.estimate;
  const double secs = seconds_since(t0);
  // objective at the reference estimates, to tell a worse optimum from an unconverged reference
  Eigen::VectorXd at_ref = m.theta();
  for (const auto& e : m.entries())
    for (const auto& x : read_reference(ref_path("pd_model.csv")))
      if (e.param >= 0 && e.op == x.op &&
          ((e.lval == x.lval && e.rval == x.rval) || (e.op == "~~" && e.lval == x.rval && e.rval == x.lval)))
        at_ref[e.param] = x.estimate;
  const double f_ours = m.objective(m.theta(), nullptr), f_ref = m.objective(at_ref, nullptr);
  const bool ok = r.success && r2.success && d1.missing == 0 && d2.missing == 0 && d1.est < kPdEstTol &&
                  d1.se < kPdSeTol && d2.est < kPdEstTol && std::abs(x1 - 5.054393) < kPdEstTol && secs < kPdSeconds;
  return {ok, fmt("Model max|dEst|=%.2g max|dSE|=%.2g; ModelMeans max|dEst|=%.2g x1~1=%.6f", d1.est, d1.se, d2.est,
                  x1) +
                  fmt("; objective %.7f here vs %.7f at reference (%.2fs)", f_ours, f_ref, secs)};
}

Outcome holzinger() {
  DataTable data = read_csv(data_path("holzinger_swineford39_data.csv"));
  SemModel m(ModelKind::Model, kHolzinger);
  auto r = m.fit(data);
  auto d = compare_reference(m.inspect(), read_reference(ref_path("holzinger_model.csv")));
  DataTable f = m.predict_factors(data);
  Eigen::Vector3d row0(f.column("speed")[0], f.column("textual")[0], f.column("visual")[0]);
  const double sd = (row0 - Eigen::Vector3d(0.061510, -0.137550, -0.817675)).cwiseAbs().maxCoeff();
  return {r.success && d.missing == 0 && d.est < kHolzEstTol && sd < kScoreTol,
          fmt("max|dEst|=%.2g; scores row 0 = (%.4f, %.4f, %.4f)", d.est, row0[0], row0[1], row0[2])};
}

Outcome article() {
  DataTable data = read_csv(data_path("article_data.csv"));
  SemModel m(ModelKind::Model, kArticle);
  auto r = m.fit(data);
  WarningCapture cap;
  auto rows = m.inspect();
  bool warned = false;
  for (const auto& w : cap.messages()) warned |= w.find("Moore-Penrose") != std::string::npos;
  const double e = 100 * mape(rows, read_param_table(data_path("article_params.csv")));
  return {std::abs(r.value - kArticleObj) < kArticleObjTol && std::abs(e - kArticleMape) < kArticleMapeTol && warned,
          fmt("objective=%.4f MAPE=%.2f%% pseudo-inverse warning=", r.value, e) + (warned ? "yes" : "no")};
}

// Analytic vs numeric gradients for every objective on generated models.
Outcome gradients() {
  Rng rng(404);
  double worst = 0;
  std::string worst_name;
  int checks = 0;
  auto note = [&](const std::string& name, double e) {
    ++checks;
    if (e > worst) worst = e, worst_name = name;
  };
  GenConfig cfg;
  for (int model = 0; model < 3; ++model) {
    const std::string desc = generate_description(cfg, rng);
    auto g = generate_parameters(desc, rng);
    auto gd = generate_data(*g.model, g.theta, 150, rng, {.n_static = 1});
    DataTable data = gd.data;
    DataTable holes = data;
    std::bernoulli_distribution miss(0.05);
    for (Eigen::Index i = 0; i < holes.values.rows(); ++i)
      for (Eigen::Index j = 0; j < holes.values.cols(); ++j)
        if (holes.columns[j][0] == 'y' && miss(rng)) holes.values(i, j) = NAN;

    std::vector<std::unique_ptr<SemModel>> fitted;
    std::vector<std::string> names;
    for (std::string meth : {"MLW", "ULS", "GLS", "WLS", "DWLS"}) {
      auto m = std::make_unique<SemModel>(ModelKind::Model, desc);
      m->fit(data, {.method = meth});
      fitted.push_back(std::move(m));
      names.push_back(meth);
    }
    {
      auto m = std::make_unique<SemModel>(ModelKind::Model, desc);
      m->fit(holes, {.method = "FIML"});
      fitted.push_back(std::move(m));
      names.push_back("FIML");
    }
    {
      auto m = std::make_unique<SemModel>(ModelKind::Means, desc);
      m->fit(data, {.method = "ML"});
      fitted.push_back(std::move(m));
      names.push_back("means-ML");
    }
    {
      auto m = std::make_unique<SemModel>(ModelKind::Effects, desc);
      FitOptions fo;
      fo.group = "group";
      fo.k = gd.k[0];
      m->fit(data, fo);
      fitted.push_back(std::move(m));
      names.push_back("matrix-variate ML");
    }
    for (size_t k = 0; k < fitted.size(); ++k) {
      const SemModel& m = *fitted[k];
      for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd t = perturb(m, m.theta(), rng);
        note(names[k], gradient_error([&](const Eigen::VectorXd& x, Eigen::VectorXd* gr) { return m.objective(x, gr); }, t));
      }
    }
    // REML stage 1: Wishart likelihood of the projected covariance
    SemModel mm(ModelKind::Means, desc);
    mm.fit(data, {.method = "REML"});
    RemlProjector proj = reml_projector(mm.state().X2);
    Eigen::MatrixXd zp = mm.state().data.transpose() * proj.P1;
    Eigen::MatrixXd shat = zp * zp.transpose() / proj.r;
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::VectorXd t = perturb(mm, mm.theta(), rng);
      note("REML stage 1", gradient_error(
                               [&](const Eigen::VectorXd& x, Eigen::VectorXd* gr) {
                                 return wishart_ml(mm.implied(x, gr != nullptr), shat, gr);
                               },
                               t));
    }
  }
  return {worst < kGradTol, fmt("%.0f checks, worst relative error %.2e", checks, worst) + " (" + worst_name + ")"};
}

// Small effects models for the FIM and whitening oracles.
const char* kSmallEffects = "eta =~ y1 + y2 + y3\ny3 ~ x1\ny4 ~ eta + x1\n";

DataTable small_effect_data(int n, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd v(n, 7);
  for (int i = 0; i < n; ++i) {
    const double eta = nd(rng), x1 = nd(rng);
    v(i, 0) = eta + 0.5 * nd(rng);
    v(i, 1) = 0.8 * eta + 0.5 * nd(rng);
    v(i, 2) = 0.7 * eta + 0.4 * x1 + 0.5 * nd(rng);
    v(i, 3) = 0.6 * eta - 0.5 * x1 + 0.5 * nd(rng);
    v(i, 4) = x1;
    v(i, 5) = i;
    v(i, 6) = i;
  }
  return make_table({"y1", "y2", "y3", "y4", "x1", "group", "time"}, v);
}

LabelledMatrix random_k(int n, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(n, n);
  for (auto& x : a.reshaped()) x = nd(rng);
  LabelledMatrix k;
  k.m = a * a.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) k.labels.push_back(std::to_string(i));
  return k;
}

// Fits only to attach data; estimates are irrelevant here.
std::unique_ptr<SemModel> attach(ModelKind kind, const std::string& desc, const DataTable& data, FitOptions fo) {
  auto m = std::make_unique<SemModel>(kind, desc);
  fo.max_iter = 3;
  try {
    m->fit(data, fo);
  } catch (const SemError&) {
  }
  return m;
}

Outcome fim_oracle() {
  Rng rng(505);
  double worst = 0;
  int count = 0;
  const char* descs[] = {kSmallEffects, "y1 ~ x1\ny2 ~ y1 + x1\n", "eta =~ y1 + y2 + y3\n"};
  for (const char* desc : descs)
    for (int n = 3; n <= 6; ++n)
      for (int kind = 0; kind < 2; ++kind) {
        DataTable data = small_effect_data(n, rng);
        FitOptions fo;
        std::unique_ptr<SemModel> m;
        if (kind == 0) {
          fo.group = "group";
          fo.k = random_k(n, rng);
          m = attach(ModelKind::Effects, desc, data, fo);
        } else {
          fo.effects = {parse_effect_spec("ma:time:order=2")};
          m = attach(ModelKind::Generalized, desc, data, fo);
        }
        if (!m->fitted()) continue;
        for (int rep = 0; rep < 3; ++rep) {
          Eigen::VectorXd t = perturb(*m, m->start(), rng);
          ImpliedMoments im = m->implied(t, true);
          MatvarInput in = m->matvar_input(t, true);
          Eigen::MatrixXd a = matvar_fim(im, in, m->n_theta());
          Eigen::MatrixXd b = matvar_fim_bruteforce(im, in, m->n_theta());
          worst = std::max(worst, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff()));
          ++count;
        }
      }
  return {count > 0 && worst < kFimTol, fmt("%.0f instances, worst relative difference %.2e", count, worst)};
}

Outcome whitening() {
  Rng rng(606);
  double worst_v = 0, worst_g = 0, worst_tr = 0;
  int count = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 20;
    DataTable data = small_effect_data(n, rng);
    FitOptions fo;
    fo.group = "group";
    fo.k = random_k(n, rng);
    auto m = attach(ModelKind::Effects, kSmallEffects, data, fo);
    if (!m->fitted()) continue;
    Eigen::VectorXd t = perturb(*m, m->start(), rng);
    ImpliedMoments im = m->implied(t, true);
    MatvarInput white = m->matvar_input(t, true);
    MatvarInput dense;
    dense.Z = m->state().data.transpose();
    dense.X2 = m->state().X2;
    EffectTerm term;
    term.K = fo.k->m;
    term.offset = m->n_model_params();
    dense.effects.push_back(term);
    Eigen::VectorXd gw, gd;
    const double vw = matvar_ml(im, white, &gw, m->n_theta());
    const double vd = matvar_ml(im, dense, &gd, m->n_theta());
    worst_v = std::max(worst_v, std::abs(vw - vd) / std::max(1.0, std::abs(vd)));
    worst_g = std::max(worst_g, (gw - gd).cwiseAbs().maxCoeff() / std::max(1.0, gd.cwiseAbs().maxCoeff()));
    MatvarCovariances cv = matvar_covariances(im, dense);
    worst_tr = std::max(worst_tr, std::abs(cv.L.trace() - cv.T.trace()) / std::max(1.0, cv.T.trace()));
    ++count;
  }
  return {count == 20 && worst_v < kWhitenTol && worst_g < kWhitenTol && worst_tr < kTraceTol,
          fmt("%.0f instances, value %.1e, gradient %.1e, tr L - tr T %.1e", count, worst_v, worst_g, worst_tr)};
}

Outcome random_effects() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(33);
  GenConfig cfg{.n_endo = 3, .n_exo = 4, .n_lat = 3};
  std::vector<double> me, mm;
  int nc = 0;
  for (int i = 0; i < 40; ++i) {
    auto d = generate_description(cfg, rng);
    auto g = generate_parameters(d, rng);
    auto data = generate_data(*g.model, g.theta, 100, rng, {.n_static = 1});
    double a = 1.0, b = 1.0;
    try {
      SemModel m(ModelKind::Effects, d);
      FitOptions fo;
      fo.group = "group";
      fo.k = data.k[0];
      m.fit(data.data, fo);
      a = mape(m.inspect(), g.params);
    } catch (const SemError&) {
    }
    try {
      SemModel m(ModelKind::Means, d);
      m.fit(data.data);
      b = mape(m.inspect(), g.params);
    } catch (const SemError&) {
    }
    me.push_back(100 * a);
    mm.push_back(100 * b);
    nc += a > kEffectsNonConv;
  }
  const double em = median(me), mmed = median(mm), secs = seconds_since(t0);
  return {em < mmed && nc <= kEffectsNonConvShare * 40 && mmed >= kEffectsRatio * em && secs < kEffectsSeconds,
          fmt("median MAPE ModelEffects %.2f%% vs ModelMeans %.2f%%, non-convergent %.0f/40 (%.0fs)", em, mmed, nc,
              secs)};
}

Outcome set_a() {
  Rng rng(1);
  GenConfig cfg;
  std::vector<double> model_e, means_e;
  int nc = 0, total = 0;
  for (int i = 0; i < 40; ++i) {
    auto d = generate_description(cfg, rng);
    auto g = generate_parameters(d, rng);
    for (int rep = 0; rep < 3; ++rep) {
      auto data = generate_data(*g.model, g.theta, 100, rng);
      double a = 1.0, b = 1.0;
      try {
        SemModel m(ModelKind::Model, d);
        m.fit(data.data);
        a = mape(m.inspect(), g.params);
      } catch (const SemError&) {
      }
      try {
        SemModel m(ModelKind::Means, d);
        m.fit(data.data, {.method = "ML"});
        b = mape(m.inspect(), g.params);
      } catch (const SemError&) {
      }
      ++total;
      nc += a > 0.4;
      model_e.push_back(100 * a);
      means_e.push_back(100 * b);
    }
  }
  const double a = median(model_e), b = median(means_e);
  return {nc <= kSetANonConv * total && a <= kSetAMape && std::abs(a - b) <= kSetAMeansGap,
          fmt("Model median MAPE %.2f%%, ModelMeans/ML %.2f%%, non-convergent %.0f/%.0f", a, b, nc, total)};
}

// MAPE over free covariance rows with a nonzero true value, relative to the truth.
double cov_mape(const std::vector<ParameterRow>& est, const std::vector<ParameterRow>& truth) {
  std::map<std::string, double> t;
  for (const auto& r : truth)
    if (r.op == "~~") t[r.lval + " " + r.rval] = t[r.rval + " " + r.lval] = r.estimate;
  double s = 0;
  int k = 0;
  for (const auto& r : est) {
    if (r.op != "~~" || !r.std_err) continue;
    auto it = t.find(r.lval + " " + r.rval);
    if (it == t.end() || it->second == 0) continue;
    s += std::abs(it->second - r.estimate) / std::abs(it->second);
    ++k;
  }
  return k ? 100 * s / k : 0.0;
}

Outcome reml() {
  Rng rng(909);
  GenConfig cfg;
  std::vector<double> ml, rm;
  double proj_err = 0;
  for (int i = 0; i < 10; ++i) {
    auto d = generate_description(cfg, rng);
    auto g = generate_parameters(d, rng);
    auto data = generate_data(*g.model, g.theta, 100, rng);
    SemModel a(ModelKind::Means, d), b(ModelKind::Means, d);
    a.fit(data.data, {.method = "ML"});
    b.fit(data.data, {.method = "REML"});
    ml.push_back(cov_mape(a.inspect(), g.params));
    rm.push_back(cov_mape(b.inspect(), g.params));
    RemlProjector p = reml_projector(b.state().X2);
    proj_err = std::max({proj_err, (b.state().X2 * p.P1).cwiseAbs().maxCoeff(),
                         (p.P1.transpose() * p.P1 - Eigen::MatrixXd::Identity(p.r, p.r)).cwiseAbs().maxCoeff()});
  }
  double ma = 0, mr = 0;
  for (size_t i = 0; i < ml.size(); ++i) ma += ml[i] / ml.size(), mr += rm[i] / rm.size();
  return {std::abs(ma - mr) <= kRemlGap && proj_err < kProjTol,
          fmt("covariance MAPE ML %.2f%% vs REML %.2f%%, projector error %.1e", ma, mr, proj_err)};
}

double imputation_mape(const DataTable& full, const std::vector<std::pair<int, int>>& cells) {
  DataTable data = full;
  for (auto [r, c] : cells) data.values(r, c) = NAN;
  SemModel m(ModelKind::Means, kPoliticalDemocracy);
  m.fit(data);
  DataTable pred = m.predict(data);
  double s = 0;
  for (auto [r, c] : cells) {
    const double truth = full.values(r, c);
    s += std::abs(pred.column(data.columns[c])[r] - truth) / std::abs(truth);
  }
  return 100 * s / static_cast<double>(cells.size());
}

Outcome imputation() {
  DataTable full = read_csv(data_path("pd_data.csv"));
  std::vector<std::string> cols = {"x1", "x2", "x3", "y1", "y2", "y3", "y4", "y5", "y6", "y7", "y8"};
  Rng rng(123);
  double total = 0;
  for (int mask = 0; mask < 10; ++mask) {
    std::set<std::pair<int, int>> cells;
    std::uniform_int_distribution<int> row(0, static_cast<int>(full.rows()) - 1), col(0, 10);
    // zero-valued cells would make the relative error undefined
    while (cells.size() < 10) {
      const std::pair<int, int> cell{row(rng), full.col(cols[col(rng)])};
      if (full.values(cell.first, cell.second) != 0) cells.insert(cell);
    }
    total += imputation_mape(full, {cells.begin(), cells.end()}) / 10;
  }
  // the mask drawn by Python's random.sample(seed 123) over (row, column) pairs
  const double published = imputation_mape(
      full, {{4, 9}, {24, 10}, {8, 1}, {71, 6}, {37, 10}, {24, 8}, {10, 0}, {3, 6}, {35, 3}, {49, 10}});
  return {total >= kImputeLo && total <= kImputeHi,
          fmt("mean imputation MAPE %.2f%% over 10 masks; %.2f%% on the published mask", total, published)};
}

Outcome constraints() {
  DataTable data = read_csv(data_path("univariate_regression_many_data.csv"));
  SemModel m(ModelKind::Model,
             "y ~ a*x1 + b * x2 + c*x3\ny ~~ v * y\nCONSTRAINT(exp(a) + exp(b) = 10)\n"
             "CONSTRAINT(v < cos(a)^2 + sin(b)^2)");
  m.fit(data);
  std::map<std::string, double> p;
  for (const auto& r : m.inspect()) p[r.op + r.rval] = r.estimate;
  const double a = p["~x1"], b = p["~x2"], c = p["~x3"], v = p["~~y"];
  const double eq = std::abs(std::exp(a) + std::exp(b) - 10);
  const double ineq = std::max(0.0, v - (std::cos(a) * std::cos(a) + std::sin(b) * std::sin(b)));
  const double dev = Eigen::Vector4d(a - 1.9877, b - 0.9937, c - 1.2142, v - 0.8663).cwiseAbs().maxCoeff();
  return {dev < kConstraintEstTol && eq < kConstraintTol && ineq < kConstraintTol,
          fmt("estimates (%.4f, %.4f, %.4f, %.4f)", a, b, c, v) + fmt(", violations %.1e %.1e", eq, ineq)};
}

Outcome kernels() {
  double worst = 0;
  auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  check(autocorrelation_ma(Eigen::VectorXd::Constant(1, 1.0), 1), 0.5);
  const double ma2[] = {1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0};
  for (int lag = 0; lag < 4; ++lag) check(autocorrelation_ma(Eigen::Vector2d(1, 1), lag), ma2[lag]);
  check(autocorrelation_ar(0.5, 2), 0.25);
  check(matern_cov(1.7, 0.5, 1.7), std::exp(-1.0));
  return {worst < kKernelTol, fmt("max deviation %.1e", worst)};
}

Outcome efa() {
  double total = 0;
  int exact = 0;
  for (int s = 0; s < 10; ++s) {
    Rng rng(100 + s);
    GenConfig cfg{.n_endo = 0, .n_exo = 20, .n_lat = 3};
    auto d = generate_description(cfg, rng);
    auto g = generate_parameters(d, rng);
    auto data = generate_data(*g.model, g.theta, 200, rng);
    std::vector<std::string> ys;
    for (const auto& c : data.data.columns)
      if (c[0] == 'y') ys.push_back(c);
    Eigen::MatrixXd y = data.data.select(ys);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd fake(200, 40);
    for (auto& x : fake.reshaped()) x = nd(rng);
    std::vector<std::string> cols = ys;
    for (int j = 0; j < 40; ++j) cols.push_back("fake" + std::to_string(j + 1));
    Eigen::MatrixXd all(200, static_cast<Eigen::Index>(cols.size()));
    all << y, fake;
    auto r = explore_cfa(make_table(cols, all));
    std::vector<std::vector<std::string>> truth;
    for (const auto& st : parse(d).statements)
      if (const auto* rel = std::get_if<Relation>(&st); rel && rel->op == Op::Measure) {
        std::vector<std::string> f;
        for (const auto& t : rel->rhs) f.push_back(t.name);
        truth.push_back(f);
      }
    total += loading_error(truth, r.factors);
    exact += r.factors.size() == truth.size();
  }
  total /= 10;
  return {total <= kEfaError && exact >= kEfaExact, fmt("mean error %.3f, exact factor count %.0f/10", total, exact)};
}

Outcome bootstrap() {
  double bias_mle = 0, bias_pbe = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Rng rng(5000 + t);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd v(10, 2);
    for (int i = 0; i < 10; ++i) {
      v(i, 1) = nd(rng);
      v(i, 0) = 0.5 * v(i, 1) + nd(rng);
    }
    DataTable data = make_table({"y", "x"}, v);
    SemModel m(ModelKind::Model, "y ~ x");
    m.fit(data);
    auto bc = bias_correct(m, data, 50, t);
    int idx = -1;
    for (const auto& e : m.entries())
      if (e.op == "~~" && e.lval == "y" && e.rval == "y") idx = e.param;
    bias_mle += (m.theta()[idx] - 1.0) / trials;
    bias_pbe += (bc.theta[idx] - 1.0) / trials;
  }
  return {std::abs(bias_pbe) < kPbeRatio * std::abs(bias_mle),
          fmt("residual variance bias: MLE %.4f, corrected %.4f", bias_mle, bias_pbe)};
}

}  // namespace

int main() {
  set_warnings_quiet(true);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Political Democracy reproduction", political_democracy},
      {"Holzinger39 reproduction", holzinger},
      {"example_article fit", article},
      {"Gradient suite", gradients},
      {"Fast FIM vs Kronecker FIM", fim_oracle},
      {"Whitening equivalence", whitening},
      {"Random-effects recovery", random_effects},
      {"Synthetic set A", set_a},
      {"REML two-stage", reml},
      {"Imputation", imputation},
      {"Constrained fit", constraints},
      {"Kernel unit values", kernels},
      {"EFA recovery", efa},
      {"Bootstrap bias correction", bootstrap},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed ? 1 : 0;
}
