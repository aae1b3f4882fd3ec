#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "common.hpp"
#include "sem/cli.hpp"
#include "sem/effects.hpp"
#include "sem/extras.hpp"
#include "sem/inference.hpp"
#include "sem/log.hpp"
#include "sem/objectives.hpp"
#include "sem/optimizer.hpp"
#include "sem/predict.hpp"
#include "sem/syntax.hpp"

using namespace sem;
using namespace testing_util;

namespace {

struct Quiet {
  Quiet() { set_warnings_quiet(true); }
} quiet_;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const SemError& e) {
    return e.code();
  }
  FAIL("no SemError thrown");
  return ErrorCode::Io;
}

int run(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  int rc = run_cli(args, o, e);
  if (out) *out = o.str();
  return rc;
}

}  // namespace

TEST_SUITE("syntax") {
  TEST_CASE("round trip of parse and serialize") {
    const std::string text = "eta =~ y1 + 0.5*y2 + a*y3\neta ~ x1\ny1 ~~ y2\nSTART(1.5) a\nCONSTRAINT(a > 0)\n";
    ModelAst ast = parse(text);
    CHECK(parse(serialize(ast)) == ast);
    CHECK(ast.statements.size() == 5);
  }

  TEST_CASE("semicolons and comma lists") {
    ModelAst ast = expand(parse("eta =~ y1 + y2 + y3; eta ~ x1 + x2; x1, x2 ~ x3"));
    int rel = 0;
    for (const auto& s : ast.statements) rel += std::holds_alternative<Relation>(s);
    CHECK(rel == 4);
  }

  TEST_CASE("malformed input") {
    CHECK(code_of([] { parse("y ~~ "); }) == ErrorCode::MalformedTerm);
    CHECK(code_of([] { parse("CONSTRAINT(a > (b)"); }) == ErrorCode::UnbalancedParens);
  }
}

TEST_SUITE("model_graph") {
  TEST_CASE("Political Democracy classification") {
    auto c = classify_variables(parse(kPoliticalDemocracy));
    std::set<std::string> lat(c.latent.begin(), c.latent.end());
    CHECK(lat == std::set<std::string>{"ind60", "dem60", "dem65"});
    CHECK(c.exogenous.empty());
    CHECK(c.output.size() == 11);
  }

  TEST_CASE("start point gives a positive definite implied covariance on generated models") {
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
      const std::string d = generate_description({}, rng);
      auto g = generate_parameters(d, rng);
      auto data = generate_data(*g.model, g.theta, 200, rng);
      SemModel m(ModelKind::Model, d);
      m.fit(data.data, {.max_iter = 1});
      Eigen::LLT<Eigen::MatrixXd> llt(m.implied(m.start(), false).Sigma);
      CHECK(llt.info() == Eigen::Success);
    }
  }
}

TEST_SUITE("moments") {
  TEST_CASE("vech and nearest_pd") {
    Eigen::Matrix2d a;
    a << 1, 2, 2, 5;
    CHECK(vech(a).size() == 3);
    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    bool changed = false;
    Eigen::MatrixXd p = nearest_pd(bad, &changed);
    CHECK(changed);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p).eigenvalues().minCoeff() > 0);
    Eigen::MatrixXd same = nearest_pd(a, &changed);
    CHECK_FALSE(changed);
    CHECK((same - a).norm() == 0);
  }

  TEST_CASE("biased sample covariance") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 2, 2, 4, 3, 6, 4, 8;
    auto s = sample_cov(x);
    CHECK(s.S(0, 0) == doctest::Approx(1.25));
    CHECK(s.S(0, 1) == doctest::Approx(2.5));
  }
}

TEST_SUITE("objectives") {
  TEST_CASE("gradients match finite differences on a fitted model") {
    DataTable data = read_csv(data_path("holzinger_swineford39_data.csv"));
    for (std::string meth : {"MLW", "ULS", "GLS", "DWLS"}) {
      SemModel m(ModelKind::Model, kHolzinger);
      m.fit(data, {.method = meth});
      Rng rng(3);
      Eigen::VectorXd t = perturb(m, m.theta(), rng);
      CHECK(gradient_error([&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return m.objective(x, g); }, t) < 1e-5);
    }
  }

  TEST_CASE("REML projector is orthonormal and annihilates X2") {
    Rng rng(5);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x2(3, 30);
    for (auto& v : x2.reshaped()) v = nd(rng);
    auto p = reml_projector(x2);
    CHECK(p.r == 27);
    CHECK((x2 * p.P1).norm() < 1e-10);
    CHECK((p.P1.transpose() * p.P1 - Eigen::MatrixXd::Identity(27, 27)).norm() < 1e-10);
  }
}

TEST_SUITE("effects") {
  TEST_CASE("autocorrelations and lags") {
    CHECK(autocorrelation_ma(Eigen::VectorXd::Constant(1, 1.0), 1) == doctest::Approx(0.5));
    CHECK(autocorrelation_ar(0.5, 2) == doctest::Approx(0.25));
    CHECK(matern_cov(0.0, 1.5, 2.0) == doctest::Approx(1.0));
    auto b = default_dt_bounds(1);
    CHECK(lag_of(0.4, b) == 0);
    CHECK(lag_of(1.0, b) == 1);
    CHECK_FALSE(lag_of(7.0, b).has_value());
  }

  TEST_CASE("zkz expands group covariance") {
    LabelledMatrix v{{"a", "b"}, Eigen::Matrix2d{{2, 1}, {1, 3}}};
    Eigen::MatrixXd k = zkz({"a", "b", "a"}, &v);
    CHECK(k(0, 2) == 2);
    CHECK(k(1, 1) == 3);
    CHECK(k(0, 1) == 1);
    CHECK(code_of([&] { zkz({"c"}, &v); }) == ErrorCode::UnknownGroupLabel);
  }

  TEST_CASE("effect specs parse") {
    CHECK(parse_effect_spec("ma:time:order=2")->n_params() == 2);
    CHECK(parse_effect_spec("ar:time")->n_params() == 1);
    CHECK(parse_effect_spec("matern:lat,lon:nu=inf,rho=1")->name() == "matern");
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("equality-constrained quadratic") {
    SolveRequest req;
    req.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      if (g) *g = 2 * x;
      return x.squaredNorm();
    };
    req.theta0 = Eigen::Vector2d(3, -1);
    ConstraintExpr c = parse_constraint("a + b = 1", {"a", "b"});
    req.constraints = {to_constraint(c)};
    auto r = minimize(req);
    CHECK(r.success);
    CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(0.5).epsilon(1e-6));
  }

  TEST_CASE("differential evolution: parallel and serial evaluation agree") {
    SolveRequest req;
    req.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      if (g) *g = Eigen::Vector2d(2 * (x[0] - 1) - 0.6 * std::sin(3 * x[0]), 2 * (x[1] + 2));
      return (x[0] - 1) * (x[0] - 1) + 0.2 * std::cos(3 * x[0]) + (x[1] + 2) * (x[1] + 2);
    };
    req.theta0 = Eigen::Vector2d::Zero();
    req.method = Solver::DE;
    req.seed = 9;
    req.de_generations = 50;
    auto a = minimize(req);
    req.parallel = false;
    auto b = minimize(req);
    CHECK((a.x - b.x).norm() == 0);
    CHECK(a.x[1] == doctest::Approx(-2).epsilon(1e-6));
  }
}

TEST_SUITE("inference") {
  TEST_CASE("pseudo-inverse fallback warns") {
    Eigen::Matrix2d s;
    s << 1, 1, 1, 1;
    WarningCapture cap;
    auto r = invert_fim(s);
    CHECK(r.pseudo_inverse_used);
    REQUIRE(cap.messages().size() == 1);
    CHECK(cap.messages()[0].find("Moore-Penrose") != std::string::npos);
    CHECK((s * r.inverted * s - s).norm() < 1e-10);
  }

  TEST_CASE("p-values") {
    CHECK(p_value(1.959963985) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(p_value(0.0) == doctest::Approx(1.0));
  }

  TEST_CASE("univariate regression reference") {
    SemModel m(ModelKind::Model, "y ~ x");
    m.fit(read_csv(data_path("univariate_regression_data.csv")));
    auto rows = m.inspect();
    CHECK(rows[0].estimate == doctest::Approx(-1.221069).epsilon(1e-4));
    CHECK(*rows[0].std_err == doctest::Approx(0.083165).epsilon(1e-3));
  }

  TEST_CASE("robust errors change only inference columns") {
    DataTable data = read_csv(data_path("holzinger_swineford39_data.csv"));
    SemModel m(ModelKind::Model, kHolzinger);
    m.fit(data);
    auto a = m.inspect(), b = m.inspect(true);
    REQUIRE(a.size() == b.size());
    bool differs = false;
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].estimate == b[i].estimate);
      if (a[i].std_err) differs |= *a[i].std_err != *b[i].std_err;
    }
    CHECK(differs);
  }

  TEST_CASE("unfitted model") {
    SemModel m(ModelKind::Model, "y ~ x");
    CHECK(code_of([&] { m.inspect(); }) == ErrorCode::NotFitted);
  }
}

TEST_SUITE("predict") {
  TEST_CASE("Sylvester solver residual") {
    Rng rng(8);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd a(4, 4), b(3, 3), c(4, 3);
    for (auto& v : a.reshaped()) v = nd(rng);
    for (auto& v : b.reshaped()) v = nd(rng);
    for (auto& v : c.reshaped()) v = nd(rng);
    a += 5 * Eigen::MatrixXd::Identity(4, 4);
    b += 5 * Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd x = solve_sylvester(a, b, c);
    CHECK((a * x + x * b - c).norm() < 1e-10);
  }

  TEST_CASE("linear and Sylvester factor scores agree") {
    DataTable data = read_csv(data_path("holzinger_swineford39_data.csv"));
    SemModel m(ModelKind::Model, kHolzinger);
    m.fit(data);
    auto a = factor_scores(m, m.theta(), data);
    auto b = factor_scores(m, m.theta(), data, true);
    CHECK(a.path == ScorePath::Linear);
    CHECK(b.path == ScorePath::Sylvester);
    CHECK((a.H - b.H).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("imputation leaves complete data unchanged") {
    DataTable data = read_csv(data_path("pd_data.csv"));
    SemModel m(ModelKind::Means, kPoliticalDemocracy);
    m.fit(data);
    DataTable p = m.predict(data);
    for (const auto& c : {"y1", "x3"}) CHECK((p.column(c) - data.column(c)).norm() == 0);
  }
}

TEST_SUITE("genmod") {
  TEST_CASE("generated descriptions match the configuration") {
    Rng rng(21);
    GenConfig cfg{.n_endo = 2, .n_exo = 3, .n_lat = 2};
    for (int i = 0; i < 20; ++i) {
      auto c = classify_variables(parse(generate_description(cfg, rng)));
      CHECK(c.latent.size() == 2);
      CHECK(c.exogenous.size() == 3);
    }
  }

  TEST_CASE("random kernel has unit mean diagonal") {
    Rng rng(2);
    Eigen::MatrixXd k = random_kernel(50, rng);
    CHECK(k.diagonal().mean() == doctest::Approx(1.0));
    CHECK((k - k.transpose()).norm() < 1e-12);
  }

  TEST_CASE("large samples recover parameters") {
    Rng rng(77);
    const std::string d = generate_description({}, rng);
    auto g = generate_parameters(d, rng);
    auto data = generate_data(*g.model, g.theta, 10000, rng);
    SemModel m(ModelKind::Model, d);
    m.fit(data.data);
    CHECK(mape(m.inspect(), g.params) < 0.05);
  }
}

TEST_SUITE("extras") {
  TEST_CASE("two orthogonal blocks give two clusters") {
    Rng rng(4);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x(300, 6);
    for (int i = 0; i < 300; ++i) {
      const double f1 = nd(rng), f2 = nd(rng);
      for (int j = 0; j < 3; ++j) x(i, j) = f1 + 0.6 * nd(rng);
      for (int j = 3; j < 6; ++j) x(i, j) = f2 + 0.6 * nd(rng);
    }
    Eigen::MatrixXd c = x;
    c.rowwise() -= c.colwise().mean();
    c = c.transpose() * c;
    Eigen::VectorXd s = c.diagonal().cwiseSqrt().cwiseInverse();
    c = s.asDiagonal() * c * s.asDiagonal();
    auto cl = correlation_clusters(c, 300, 2);
    REQUIRE(cl.size() == 2);
    CHECK(cl[0] == std::vector<int>{0, 1, 2});
    CHECK(cl[1] == std::vector<int>{3, 4, 5});
  }

  TEST_CASE("uncorrelated data falls back to one factor") {
    Rng rng(6);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x(200, 5);
    for (auto& v : x.reshaped()) v = nd(rng);
    DataTable t = make_table({"a", "b", "c", "d", "e"}, x);
    auto r = explore_cfa(t);
    CHECK(r.fallback);
    CHECK_NOTHROW(parse(r.description));
    CHECK(code_of([&] { explore_cfa(t, {.strict = true}); }) == ErrorCode::NoClustersFound);
  }

  TEST_CASE("loading error") {
    std::vector<std::vector<std::string>> t = {{"a", "b"}, {"c", "d"}};
    CHECK(loading_error(t, {{"c", "d"}, {"a", "b"}}) == 0);
    CHECK(loading_error(t, {{"a", "b", "c"}, {"d"}}) == doctest::Approx(0.5));
  }
}

TEST_SUITE("model_api") {
  TEST_CASE("ModelMeans agrees with Model on complete effect-free data") {
    Rng rng(31);
    const std::string d = generate_description({}, rng);
    auto g = generate_parameters(d, rng);
    auto data = generate_data(*g.model, g.theta, 500, rng);
    SemModel a(ModelKind::Model, d), b(ModelKind::Means, d);
    a.fit(data.data);
    b.fit(data.data, {.method = "ML"});
    std::map<std::string, double> ea;
    for (const auto& r : a.inspect()) ea[r.lval + r.op + r.rval] = r.estimate;
    for (const auto& r : b.inspect())
      if (r.op == "~" && r.rval != "1" && ea.count(r.lval + r.op + r.rval))
        CHECK(std::abs(ea[r.lval + r.op + r.rval] - r.estimate) < 1e-3);
  }

  TEST_CASE("method and kind mismatch") {
    DataTable data = read_csv(data_path("univariate_regression_data.csv"));
    SemModel m(ModelKind::Means, "y ~ x");
    CHECK(code_of([&] { m.fit(data, {.method = "ULS"}); }) == ErrorCode::MethodMismatch);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("dot output") {
    CHECK(emit_dot("") == "digraph {}\n");
    const std::string dot = emit_dot("y ~ x");
    CHECK(dot.find("\"x\" -> \"y\"") != std::string::npos);
    CHECK(dot.find("shape=box") != std::string::npos);
    const std::string big = emit_dot("eta =~ y1+y2+y3; eta ~ x1+x2; x1,x2 ~ x3; y1 ~~ y2");
    CHECK(big.find("\"eta\" [shape=ellipse]") != std::string::npos);
    CHECK(big.find("style=dashed, dir=both") != std::string::npos);
  }

  TEST_CASE("fitted plot carries two-decimal estimates") {
    const auto dir = std::filesystem::temp_directory_path() / "sem_cli_plot";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "m.txt") << "y ~ x\n";
    std::string out;
    CHECK(run({"plot", "-m", (dir / "m.txt").string(), "-d", data_path("univariate_regression_data.csv")}, &out) == 0);
    CHECK(out.find("label=\"-1.22\"") != std::string::npos);
  }

  TEST_CASE("fit writes the parameter table and exit codes follow the error class") {
    const auto dir = std::filesystem::temp_directory_path() / "sem_cli_fit";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "pd.txt") << kPoliticalDemocracy;
    std::ofstream(dir / "bad.txt") << "y ~~\n";
    std::string out;
    CHECK(run({"fit", "-m", (dir / "pd.txt").string(), "-d", data_path("pd_data.csv")}, &out) == 0);
    CHECK(out.find("lval,op,rval,Estimate,Std. Err,z-value,p-value\n") != std::string::npos);
    CHECK(out.find("dem60,~,ind60,1.48") != std::string::npos);
    std::string uls;
    CHECK(run({"inspect", "-m", (dir / "pd.txt").string(), "-d", data_path("pd_data.csv"), "--method", "ULS"}, &uls) ==
          0);
    CHECK(uls.rfind("lval,op,rval,Estimate,Std. Err,z-value,p-value\n", 0) == 0);
    CHECK(uls.find("dem60,~,ind60,1.48") == std::string::npos);
    CHECK(run({"fit", "-m", (dir / "missing.txt").string(), "-d", data_path("pd_data.csv")}) == 2);
    CHECK(run({"fit", "-m", (dir / "bad.txt").string(), "-d", data_path("pd_data.csv")}) == 1);
  }

  TEST_CASE("generate is reproducible") {
    const auto a = std::filesystem::temp_directory_path() / "sem_gen_a";
    const auto b = std::filesystem::temp_directory_path() / "sem_gen_b";
    std::filesystem::create_directories(a);
    std::filesystem::create_directories(b);
    CHECK(run({"generate", "--seed", "5", "--static", "1", "--out-dir", a.string()}) == 0);
    CHECK(run({"generate", "--seed", "5", "--static", "1", "--out-dir", b.string()}) == 0);
    for (const char* f : {"model.txt", "params.csv", "data.csv", "k1.csv"}) {
      std::ifstream fa(a / f), fb(b / f);
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      CHECK(!sa.str().empty());
      CHECK(sa.str() == sb.str());
    }
  }
}
