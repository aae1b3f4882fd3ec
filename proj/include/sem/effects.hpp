#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sem/data.hpp"

namespace sem {

// K = Z' V Z for one-hot group assignment Z. V == nullptr means V = I.
Eigen::MatrixXd zkz(const std::vector<std::string>& labels, const LabelledMatrix* v = nullptr);

// alpha excludes the leading alpha_0 = 1.
double autocorrelation_ma(const Eigen::VectorXd& alpha, int lag);
double autocorrelation_ar(double alpha, int lag);
// d rho_lag / d alpha_j for the MA case.
Eigen::VectorXd autocorrelation_ma_grad(const Eigen::VectorXd& alpha, int lag);

using Interval = std::pair<double, double>;  // [lo, hi)
std::vector<Interval> default_dt_bounds(int order);
// Interval index containing dt, nullopt when dt lies beyond every interval.
std::optional<int> lag_of(double dt, const std::vector<Interval>& bounds);

// Normalized so that matern_cov(0, ...) == 1. nu may be infinity.
double matern_cov(double d, double nu, double rho);
double matern_cov_drho(double d, double nu, double rho);

// Random-effect kernel. Custom kernels derive from this and implement the same
// four methods: load, calc_k, grad_k, get_bounds.
class EffectKernel {
 public:
  virtual ~EffectKernel() = default;
  virtual void load(const DataTable& data) = 0;
  virtual Eigen::MatrixXd calc_k(const Eigen::VectorXd& params) const = 0;
  virtual std::vector<Eigen::MatrixXd> grad_k(const Eigen::VectorXd& params) const;
  virtual std::vector<Interval> get_bounds() const;
  virtual int n_params() const { return 0; }
  virtual Eigen::VectorXd start() const { return Eigen::VectorXd::Zero(n_params()); }
  virtual std::vector<std::string> param_names() const;
  virtual std::string name() const { return "custom"; }
  std::vector<std::string> columns;
};

using KernelPtr = std::shared_ptr<EffectKernel>;

class StaticKernel : public EffectKernel {
 public:
  // k == nullopt: identity across groups
  StaticKernel(std::string group, std::optional<LabelledMatrix> k);
  void load(const DataTable& data) override;
  Eigen::MatrixXd calc_k(const Eigen::VectorXd&) const override { return k_; }
  std::string name() const override { return "static"; }

 private:
  std::optional<LabelledMatrix> v_;
  Eigen::MatrixXd k_;
};

// K = Z' V(theta) Z over the distinct groups.
class FreeKernel : public EffectKernel {
 public:
  FreeKernel(std::string group, bool diagonal, bool correlation);
  void load(const DataTable& data) override;
  Eigen::MatrixXd calc_k(const Eigen::VectorXd& params) const override;
  std::vector<Eigen::MatrixXd> grad_k(const Eigen::VectorXd& params) const override;
  std::vector<Interval> get_bounds() const override;
  int n_params() const override { return static_cast<int>(cells_.size()); }
  Eigen::VectorXd start() const override;
  std::string name() const override { return "free"; }

 private:
  Eigen::MatrixXd v_of(const Eigen::VectorXd& params) const;
  bool diagonal_, correlation_;
  std::vector<std::string> groups_;
  std::vector<int> assign_;
  std::vector<std::pair<int, int>> cells_;
};

class MaKernel : public EffectKernel {
 public:
  MaKernel(std::string time, int order, std::vector<Interval> dt_bounds = {},
           std::optional<Eigen::VectorXd> fixed = std::nullopt, std::string group = "");
  void load(const DataTable& data) override;
  Eigen::MatrixXd calc_k(const Eigen::VectorXd& params) const override;
  std::vector<Eigen::MatrixXd> grad_k(const Eigen::VectorXd& params) const override;
  int n_params() const override { return fixed_ ? 0 : order_; }
  Eigen::VectorXd start() const override { return Eigen::VectorXd::Constant(n_params(), 0.1); }
  std::string name() const override { return "ma"; }

 private:
  int order_;
  std::vector<Interval> bounds_;
  std::optional<Eigen::VectorXd> fixed_;
  std::string group_;
  Eigen::MatrixXi lags_;  // -1 beyond
};

class ArKernel : public EffectKernel {
 public:
  ArKernel(std::string time, double dt = 1.0, std::optional<double> fixed = std::nullopt, std::string group = "");
  void load(const DataTable& data) override;
  Eigen::MatrixXd calc_k(const Eigen::VectorXd& params) const override;
  std::vector<Eigen::MatrixXd> grad_k(const Eigen::VectorXd& params) const override;
  std::vector<Interval> get_bounds() const override;
  int n_params() const override { return fixed_ ? 0 : 1; }
  Eigen::VectorXd start() const override { return Eigen::VectorXd::Constant(n_params(), 0.1); }
  std::string name() const override { return "ar"; }

 private:
  double dt_;
  std::optional<double> fixed_;
  std::string group_;
  Eigen::MatrixXi lags_;  // -1 across groups
};

class MaternKernel : public EffectKernel {
 public:
  MaternKernel(std::vector<std::string> coords, double nu, double rho, bool active, double minkowski_p = 2.0);
  void load(const DataTable& data) override;
  Eigen::MatrixXd calc_k(const Eigen::VectorXd& params) const override;
  std::vector<Eigen::MatrixXd> grad_k(const Eigen::VectorXd& params) const override;
  std::vector<Interval> get_bounds() const override;
  int n_params() const override { return active_ ? 1 : 0; }
  Eigen::VectorXd start() const override { return Eigen::VectorXd::Constant(n_params(), rho_); }
  std::string name() const override { return "matern"; }

 private:
  double nu_, rho_;
  bool active_;
  double p_;
  Eigen::MatrixXd dist_;
};

// Parses "static:group:k.csv", "static:group", "free:group[:diag|:corr]",
// "ma:time:order=2", "ar:time[:dt=1]", "matern:lat,lon:nu=inf,rho=1[,active=0]".
KernelPtr parse_effect_spec(const std::string& spec);

}  // namespace sem
