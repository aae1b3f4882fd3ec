#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "sem/data.hpp"
#include "sem/effects.hpp"
#include "sem/model_graph.hpp"
#include "sem/moments.hpp"
#include "sem/objectives.hpp"
#include "sem/optimizer.hpp"
#include "sem/penalty.hpp"
#include "sem/syntax.hpp"

namespace sem {

struct FitOptions {
  std::string method;  // empty: MLW for Model, FIML for ModelMeans, ML for effects kinds
  Solver solver = Solver::SQP;
  double b_max = 10.0;
  uint64_t seed = 0;
  // Model/ModelMeans: center data by group means. Effects kinds: group column for K.
  std::string group;
  std::optional<LabelledMatrix> k;       // ModelEffects static K over group labels
  std::vector<KernelPtr> effects;        // ModelGeneralizedEffects (or a custom ModelEffects kernel)
  std::optional<Eigen::MatrixXd> cov;    // sample covariance override (Model kind)
  std::vector<Penalty> penalties;
  bool pairwise = false;
  bool biased = true;
  int max_iter = 1000;
  bool parallel = true;
};

enum class Information { Expected, Observed };

struct ParameterRow {
  std::string lval, op, rval;
  double estimate = 0.0;
  std::optional<double> std_err, z_value, p_value;
};

// Data and caches attached at fit time.
struct FitState {
  std::string method;
  std::vector<std::string> z_names;   // observed columns in z order
  std::vector<std::string> x2_names;  // exogenous columns (without "1")
  Eigen::MatrixXd data;               // n x z, original scale, NaN = missing
  Eigen::MatrixXd centered;           // n x z, what the Model-kind objectives see
  Eigen::VectorXd col_means;          // used for centering (Model kind)
  Eigen::MatrixXd X2;                 // g x n, includes the intercept row
  SampleMoments moments;
  Eigen::MatrixXd s_inv, w_inv;
  FimlData fiml;
  // effects kinds
  std::vector<KernelPtr> kernels;
  std::vector<int> kernel_offset;
  MatvarInput mv;                     // whitened or dense input on the fit data
  Eigen::MatrixXd Q;                  // whitening eigenvectors (empty when dense)
  int n = 0;
};

class SemModel {
 public:
  SemModel(ModelKind kind, const std::string& description, BuildOptions options = {});

  FitResult fit(const DataTable& data, const FitOptions& options = {});
  std::vector<ParameterRow> inspect(bool robust = false, Information info = Information::Expected) const;
  // Conditional-expectation imputation of missing cells.
  DataTable predict(const DataTable& x) const;
  DataTable predict_factors(const DataTable& x) const;
  // BLUP of effect i (0-based) on the fit data, z x n in z order.
  Eigen::MatrixXd blup(int effect) const;

  ModelKind kind() const { return kind_; }
  const ModelAst& ast() const { return ast_; }
  const ModelStructure& structure() const { return st_; }
  ModelStructure& mutable_structure() { return st_; }
  const BuildOptions& build_options() const { return bopt_; }
  const FitOptions& fit_options() const { return fit_opts_; }
  std::string description() const { return serialize(ast_); }
  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(const Eigen::VectorXd& t) { theta_ = t; }
  bool fitted() const { return fitted_; }
  const FitState& state() const { return fs_; }
  const FitResult& last_result() const { return result_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int n_model_params() const { return static_cast<int>(st_.ps.size()); }
  int n_theta() const;
  std::vector<std::string> param_names() const;

  // Implied moments for the model part of theta.
  ImpliedMoments implied(const Eigen::VectorXd& theta, bool derivatives) const;
  // Kernel terms at theta (effects kinds).
  std::vector<EffectTerm> effect_terms(const Eigen::VectorXd& theta, bool derivatives) const;
  MatvarInput matvar_input(const Eigen::VectorXd& theta, bool derivatives) const;
  // The fit objective in "2 x negative loglikelihood" units where it exists.
  double objective(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const;
  // Factor multiplying objective() to obtain the negative loglikelihood.
  double loglik_scale() const;
  // Lower/upper bounds for every theta entry.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> bounds() const;
  Eigen::VectorXd start() const;
  // Per-observation scores of the negative loglikelihood (rows x theta); Model/ModelMeans only.
  Eigen::MatrixXd scores(const Eigen::VectorXd& theta) const;
  // Parameter values as a name -> value table in entry order.
  std::vector<TableEntry> entries() const { return st_.entries; }

 private:
  void prepare(const DataTable& data, const FitOptions& options);
  FitResult run(const Objective& f, const Eigen::VectorXd& x0, const std::vector<int>& free,
                const FitOptions& options, const std::string& name);

  ModelKind kind_;
  ModelAst ast_;
  BuildOptions bopt_;
  ModelStructure st_;
  Eigen::VectorXd theta_;
  bool fitted_ = false;
  FitState fs_;
  FitOptions fit_opts_;
  FitResult result_;
  std::vector<Penalty> penalties_;
  std::vector<std::string> warnings_;
  // REML stage-2 caches
  Eigen::MatrixXd reml_linv_, reml_tinv_;
};

// Row names of a parameter table for printing.
std::string format_table(const std::vector<ParameterRow>& rows, char sep = ',', int precision = 6);

}  // namespace sem
