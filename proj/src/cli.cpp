#include "sem/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "sem/errors.hpp"
#include "sem/extras.hpp"
#include "sem/genmod.hpp"
#include "sem/log.hpp"
#include "sem/model_graph.hpp"
#include "sem/syntax.hpp"

namespace sem {

namespace {

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string emit_dot(const std::string& description, const std::vector<ParameterRow>* estimates) {
  const ModelAst ast = expand(parse(description));
  std::vector<std::string> nodes;
  std::set<std::string> seen;
  auto add_node = [&](const std::string& v) {
    if (v != "1" && seen.insert(v).second) nodes.push_back(v);
  };
  struct Edge {
    std::string from, to, key_l, key_op, key_r;
    bool cov;
  };
  std::vector<Edge> edges;
  for (const auto& st : ast.statements) {
    const auto* rel = std::get_if<Relation>(&st);
    if (!rel) continue;
    for (const auto& l : rel->lhs) {
      add_node(l);
      for (const auto& t : rel->rhs) {
        if (t.name == "1") continue;
        add_node(t.name);
        switch (rel->op) {
          case Op::Regress:
            edges.push_back({t.name, l, l, "~", t.name, false});
            break;
          case Op::Measure:
            edges.push_back({l, t.name, t.name, "~", l, false});
            break;
          case Op::Covary:
            if (t.name != l) edges.push_back({l, t.name, l, "~~", t.name, true});
            break;
          default:
            break;
        }
      }
    }
  }
  if (nodes.empty()) return "digraph {}\n";

  std::map<std::string, double> est;
  if (estimates)
    for (const auto& r : *estimates) {
      est[r.lval + "\t" + r.op + "\t" + r.rval] = r.estimate;
      if (r.op == "~~") est[r.rval + "\t" + r.op + "\t" + r.lval] = r.estimate;
    }
  const auto latent = classify_variables(ast).latent;
  const std::set<std::string> lat(latent.begin(), latent.end());

  std::ostringstream os;
  os << "digraph {\n";
  for (const auto& v : nodes) os << "  " << quote(v) << " [shape=" << (lat.count(v) ? "ellipse" : "box") << "];\n";
  for (const auto& e : edges) {
    os << "  " << quote(e.from) << " -> " << quote(e.to);
    std::vector<std::string> attrs;
    if (e.cov) attrs = {"style=dashed", "dir=both"};
    auto it = est.find(e.key_l + "\t" + e.key_op + "\t" + e.key_r);
    if (it != est.end()) attrs.push_back("label=" + quote(two_decimals(it->second)));
    if (!attrs.empty()) {
      os << " [";
      for (size_t i = 0; i < attrs.size(); ++i) os << (i ? ", " : "") << attrs[i];
      os << "]";
    }
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

namespace {

struct Args {
  std::string model, data, input, out, summary, kind = "auto", method, solver = "sqp", information = "expected";
  std::string d_mode = "diag", k_file, group, out_dir = ".";
  std::vector<std::string> effects;
  double b_max = 10.0, p_drop = 0.05, p_join = 0.05;
  uint64_t seed = 0;
  bool robust = false, intercepts = true, mimic = false, strict = false, ma = false, quiet = false;
  int reps = 100, min_cluster = 2, n = 100, n_endo = 3, n_exo = 4, n_lat = 3, n_inds_min = 3, n_inds_max = 3;
  int n_cycles = 0, n_static = 0;
};

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw SemError(ErrorCode::Io, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw SemError(ErrorCode::Io, "cannot write '" + path + "'");
  f << text;
}

ModelKind pick_kind(const Args& a) {
  if (a.kind == "model") return ModelKind::Model;
  if (a.kind == "means") return ModelKind::Means;
  if (a.kind == "effects") return ModelKind::Effects;
  if (a.kind == "generalized") return ModelKind::Generalized;
  if (a.effects.size() > 1) return ModelKind::Generalized;
  if (!a.effects.empty() || !a.k_file.empty()) return ModelKind::Effects;
  return ModelKind::Model;
}

DMode pick_dmode(const std::string& s) {
  if (s == "full") return DMode::Full;
  if (s == "scale") return DMode::Scale;
  return DMode::Diag;
}

struct Fitted {
  std::unique_ptr<SemModel> model;
  DataTable data;
  FitResult result;
};

Fitted fit_from_args(const Args& a) {
  const std::string desc = read_text(a.model);
  Fitted f;
  f.data = read_csv(a.data);
  BuildOptions bo;
  bo.intercepts = a.intercepts;
  bo.mimic_lavaan = a.mimic;
  bo.d_mode = pick_dmode(a.d_mode);
  f.model = std::make_unique<SemModel>(pick_kind(a), desc, bo);
  FitOptions fo;
  fo.method = a.method;
  fo.solver = a.solver == "de" ? Solver::DE : Solver::SQP;
  fo.b_max = a.b_max;
  fo.seed = a.seed;
  fo.group = a.group;
  if (!a.k_file.empty()) fo.k = read_labelled_matrix(a.k_file);
  for (const auto& e : a.effects) fo.effects.push_back(parse_effect_spec(e));
  f.result = f.model->fit(f.data, fo);
  return f;
}

std::string fit_summary(const FitResult& r) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r.value);
  os << "objective: " << r.objective << "\n"
     << "method: " << r.method << "\n"
     << "success: " << (r.success ? "true" : "false") << "\n"
     << "value: " << buf << "\n"
     << "iterations: " << r.iterations << "\n";
  if (!r.success && !r.message.empty()) os << "message: " << r.message << "\n";
  return os.str();
}

std::vector<ParameterRow> table_from(const SemModel& m, const Args& a) {
  return m.inspect(a.robust, a.information == "observed" ? Information::Observed : Information::Expected);
}

void add_model_flags(CLI::App* c, Args& a, bool required_data = true) {
  c->add_option("-m,--model", a.model, "model description file")->required();
  auto* d = c->add_option("-d,--data", a.data, "CSV data file");
  if (required_data) d->required();
  c->add_option("--kind", a.kind, "model kind")
      ->check(CLI::IsMember({"auto", "model", "means", "effects", "generalized"}));
  c->add_option("--method", a.method, "objective (MLW, ULS, GLS, WLS, DWLS, FIML, ML, REML)");
  c->add_option("--solver", a.solver, "optimizer")->check(CLI::IsMember({"sqp", "de"}));
  c->add_option("--b-max", a.b_max, "differential evolution box half-width");
  c->add_option("--seed", a.seed, "random seed");
  c->add_option("--intercepts", a.intercepts, "add intercepts (means/effects kinds)");
  c->add_flag("--mimic-lavaan", a.mimic, "lavaan-like variable classification");
  c->add_option("--d-mode", a.d_mode, "random effect covariance template")
      ->check(CLI::IsMember({"full", "diag", "scale"}));
  c->add_option("--k", a.k_file, "K matrix CSV for a static effect");
  c->add_option("--group", a.group, "group column");
  c->add_option("--effect", a.effects, "effect spec, e.g. static:group:k.csv, ma:time:order=2 (repeatable)");
  c->add_option("-o,--out", a.out, "output path (stdout if omitted)");
}

void add_inference_flags(CLI::App* c, Args& a) {
  c->add_flag("--robust", a.robust, "sandwich standard errors");
  c->add_option("--information", a.information, "information matrix")
      ->check(CLI::IsMember({"expected", "observed"}));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structural equation modeling"};
  app.require_subcommand(1);
  Args a;
  app.add_flag("-q,--quiet", a.quiet, "suppress warnings on standard error");

  auto* fit = app.add_subcommand("fit", "fit a model and write a summary and parameter table");
  add_model_flags(fit, a);
  add_inference_flags(fit, a);
  fit->add_option("--summary", a.summary, "fit summary path (stdout if omitted)");

  auto* inspect = app.add_subcommand("inspect", "fit a model and write its parameter table");
  add_model_flags(inspect, a);
  add_inference_flags(inspect, a);

  auto* predict = app.add_subcommand("predict", "impute missing cells");
  add_model_flags(predict, a);
  predict->add_option("-i,--input", a.input, "table to complete (fit data if omitted)");

  auto* factors = app.add_subcommand("factors", "latent factor scores");
  add_model_flags(factors, a);
  factors->add_option("-i,--input", a.input, "table to score (fit data if omitted)");

  auto* generate = app.add_subcommand("generate", "random model, parameters and data");
  generate->add_option("--n-endo", a.n_endo);
  generate->add_option("--n-exo", a.n_exo);
  generate->add_option("--n-lat", a.n_lat);
  generate->add_option("--n-inds-min", a.n_inds_min);
  generate->add_option("--n-inds-max", a.n_inds_max);
  generate->add_option("--n-cycles", a.n_cycles);
  generate->add_option("--p-join", a.p_join);
  generate->add_option("-n,--rows", a.n, "number of observations");
  generate->add_option("--static", a.n_static, "number of static random effects");
  generate->add_flag("--ma", a.ma, "add an MA(2) disturbance over a time column");
  generate->add_option("--seed", a.seed);
  generate->add_option("--out-dir", a.out_dir, "directory for model.txt, params.csv, data.csv, k*.csv");

  auto* efa = app.add_subcommand("efa", "exploratory CFA structure search");
  efa->add_option("-d,--data", a.data)->required();
  efa->add_option("--min-cluster", a.min_cluster);
  efa->add_option("--p-drop", a.p_drop);
  efa->add_flag("--strict", a.strict, "fail when no clusters are found");
  efa->add_option("-o,--out", a.out);

  auto* plot = app.add_subcommand("plot", "graphviz dot text for a model");
  add_model_flags(plot, a, false);

  auto* bias = app.add_subcommand("bias-correct", "parametric bootstrap bias correction");
  add_model_flags(bias, a);
  bias->add_option("--reps", a.reps, "bootstrap replicates")->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  set_warnings_quiet(a.quiet);

  try {
    if (fit->parsed()) {
      auto f = fit_from_args(a);
      write_text(a.summary, fit_summary(f.result), out);
      write_text(a.out, format_table(table_from(*f.model, a)), out);
    } else if (inspect->parsed()) {
      auto f = fit_from_args(a);
      write_text(a.out, format_table(table_from(*f.model, a)), out);
    } else if (predict->parsed()) {
      auto f = fit_from_args(a);
      const DataTable x = a.input.empty() ? f.data : read_csv(a.input);
      write_text(a.out, to_csv(f.model->predict(x)), out);
    } else if (factors->parsed()) {
      auto f = fit_from_args(a);
      const DataTable x = a.input.empty() ? f.data : read_csv(a.input);
      write_text(a.out, to_csv(f.model->predict_factors(x)), out);
    } else if (generate->parsed()) {
      Rng rng(a.seed);
      GenConfig cfg{a.n_endo, a.n_exo, a.n_lat, a.n_inds_min, a.n_inds_max, a.n_cycles, a.p_join, 1.0};
      const std::string desc = generate_description(cfg, rng);
      auto g = generate_parameters(desc, rng);
      EffectsSpec es;
      es.n_static = a.n_static;
      es.moving_average = a.ma;
      auto data = generate_data(*g.model, g.theta, a.n, rng, es);
      const std::string dir = a.out_dir.empty() ? "." : a.out_dir;
      write_text(dir + "/model.txt", desc, out);
      write_text(dir + "/params.csv", format_table(g.params), out);
      write_csv(dir + "/data.csv", data.data);
      for (size_t i = 0; i < data.k.size(); ++i) {
        DataTable kt = make_table(data.k[i].labels, data.k[i].m);
        kt.index = data.k[i].labels;
        write_csv(dir + "/k" + std::to_string(i + 1) + ".csv", kt);
      }
    } else if (efa->parsed()) {
      EfaOptions eo;
      eo.min_cluster = a.min_cluster;
      eo.p_drop = a.p_drop;
      eo.strict = a.strict;
      write_text(a.out, explore_cfa(read_csv(a.data), eo).description, out);
    } else if (plot->parsed()) {
      if (a.data.empty()) {
        write_text(a.out, emit_dot(read_text(a.model)), out);
      } else {
        auto f = fit_from_args(a);
        const auto rows = f.model->inspect();
        write_text(a.out, emit_dot(read_text(a.model), &rows), out);
      }
    } else if (bias->parsed()) {
      auto f = fit_from_args(a);
      auto bc = bias_correct(*f.model, f.data, a.reps, a.seed);
      err << "bootstrap replicates used: " << bc.used << ", dropped: " << bc.dropped << "\n";
      f.model->set_theta(bc.theta);
      write_text(a.out, format_table(f.model->inspect()), out);
    }
  } catch (const SemError& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Io ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sem
