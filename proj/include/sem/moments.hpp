#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "sem/model_graph.hpp"

namespace sem {

struct SampleMoments {
  Eigen::MatrixXd S;
  Eigen::VectorXd means;
  Eigen::MatrixXd X2;  // g x n
  int n = 0;
  std::optional<Eigen::MatrixXd> W;
  bool repaired = false;
};

// data: n x p, NaN marks a missing cell. Without pairwise, rows with any
// missing cell are dropped.
SampleMoments sample_cov(const Eigen::MatrixXd& data, bool biased = true, bool pairwise = false);

// Row-major upper triangle: (0,0), (0,1), ..., (0,p-1), (1,1), ...
std::vector<std::pair<int, int>> vech_index(int p);
Eigen::VectorXd vech(const Eigen::MatrixXd& a);

Eigen::MatrixXd wls_weight(const Eigen::MatrixXd& data, bool* repaired = nullptr);

// Eigenvalue clipping at 1e-10 * max(1, ||A||). PD input is returned untouched.
Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& a, bool* changed = nullptr);

struct ImpliedMoments {
  std::vector<Eigen::MatrixXd> mats;  // filled B, Lambda, Psi, Theta, Gamma1, Gamma2, D...
  Eigen::MatrixXd C;                  // (I - B)^-1
  Eigen::MatrixXd LC;                 // Lambda C
  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd Mcoef;              // Gamma2 + Lambda C Gamma1, z x g; M = Mcoef X2
  // per parameter
  std::vector<Eigen::MatrixXd> dSigma;
  std::vector<Eigen::MatrixXd> dMcoef;
  std::vector<std::vector<Eigen::MatrixXd>> dD;  // [param][effect], empty matrix when untouched
  std::vector<char> touches_sigma, touches_mean, touches_d;

  const Eigen::MatrixXd& D(int k) const { return mats[kD0 + k]; }
  int n_effects() const { return static_cast<int>(mats.size()) - kD0; }
};

ImpliedMoments implied_moments(const MatrixTemplates& tpl, const ParameterSpace& ps, const Eigen::VectorXd& theta,
                               bool derivatives = true);

// M = Mcoef X2 (z x n)
Eigen::MatrixXd implied_mean(const ImpliedMoments& im, const Eigen::MatrixXd& X2);

}  // namespace sem
