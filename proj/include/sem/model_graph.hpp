#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sem/syntax.hpp"

namespace sem {

enum class ModelKind { Model, Means, Effects, Generalized };
enum class DMode { Full, Diag, Scale };

const char* kind_name(ModelKind k);
DMode parse_d_mode(const std::string& s);

struct BuildOptions {
  bool mimic_lavaan = false;
  bool intercepts = true;
  bool cov_diag = false;  // skip default covariances between exogenous latents
  DMode d_mode = DMode::Diag;
  int n_effects = 1;      // number of D matrices (effects kinds)
};

struct VariableClassification {
  std::vector<std::string> latent;       // eta
  std::vector<std::string> endogenous;   // x(1)
  std::vector<std::string> exogenous;    // x(2)
  std::vector<std::string> output;       // y
  std::vector<std::string> omega_order;  // [eta; x(1)]
  std::vector<std::string> z_order;      // [y; x(1)]
  std::vector<std::string> indicators;   // right-hand sides of =~
  std::vector<std::string> ordinal;
  // observed variables without incoming edges that stay inside omega; their
  // (co)variances are fixed to sample values
  std::vector<std::string> fixed_exogenous;
  std::vector<std::string> exogenous_latent;
  // mimic_lavaan: outputs that are not indicators; they live in omega and covary freely
  std::vector<std::string> free_outputs;
};

VariableClassification classify_variables(const ModelAst& ast, bool mimic_lavaan = false);

enum Mat : int { kB = 0, kLambda, kPsi, kTheta, kGamma1, kGamma2, kD0 };
const char* mat_name(int m);

struct Loc {
  int mat;
  int row;
  int col;
};

struct DataCell {
  Loc loc;
  std::string a, b;  // sample covariance of these two observed variables
};

struct MatrixTemplates {
  ModelKind kind = ModelKind::Model;
  std::vector<std::string> omega, z, g;  // g carries "1" last when intercepts are on
  std::vector<Eigen::MatrixXd> base;     // fixed values, indexed by Mat (+ effect index)
  std::vector<DataCell> data_cells;
  int n_effects = 0;

  const Eigen::MatrixXd& B() const { return base[kB]; }
  const Eigen::MatrixXd& Lambda() const { return base[kLambda]; }
  int n_mats() const { return static_cast<int>(base.size()); }
};

struct Parameter {
  std::string name;
  double start = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::vector<Loc> locs;
  bool user_start = false;
  std::string variance_of;   // observed variable whose sample variance seeds the start
  std::string intercept_of;  // observed variable whose sample mean seeds the start
};

struct ParameterSpace {
  std::vector<Parameter> params;
  std::vector<std::string> constraints;
  int index(const std::string& name) const;  // -1 if absent
  Eigen::VectorXd start() const;
  size_t size() const { return params.size(); }
};

// One printable row of the estimate table.
struct TableEntry {
  std::string lval, op, rval;
  int param = -1;      // -1: user-fixed value
  double fixed = 0.0;
  Loc loc{0, 0, 0};
  int order = 0;       // 0 regressions/loadings, 1 intercepts, 2 covariances, 3 random-effect covariances
};

struct ModelStructure {
  ModelKind kind = ModelKind::Model;
  BuildOptions options;
  VariableClassification cls;
  MatrixTemplates tpl;
  ParameterSpace ps;
  std::vector<TableEntry> entries;
};

ModelStructure build_parameter_space(const ModelAst& ast, const VariableClassification& cls,
                                     ModelKind kind, const BuildOptions& options = {});

// Fill data-fixed cells and data-driven start values. `names` label the rows of cov.
void apply_sample_stats(ModelStructure& m, const std::vector<std::string>& names,
                        const Eigen::MatrixXd& cov, const Eigen::VectorXd& means);

// Fill the matrices with theta (in place on copies of base).
void fill_matrices(const MatrixTemplates& tpl, const ParameterSpace& ps, const Eigen::VectorXd& theta,
                   std::vector<Eigen::MatrixXd>& mats);

}  // namespace sem
