#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sem/model.hpp"

namespace sem {

// Solves A X + X B = C through complex Schur forms of A and B.
Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& C);

enum class ScorePath { Linear, Sylvester };

struct FactorScores {
  std::vector<std::string> names;  // latent names, sorted
  Eigen::MatrixXd H;               // n x latent
  ScorePath path = ScorePath::Linear;
  // pieces of the stationarity system L_H A0 H + H T = rhs, kept for checks
  Eigen::MatrixXd LH, A0, T, rhs;
};

// MAP factor scores. The Sylvester path is used when the model has random
// effects or when forced.
FactorScores factor_scores(const SemModel& m, const Eigen::VectorXd& theta, const DataTable& x,
                           bool force_sylvester = false);

// Conditional-expectation imputation of the z-columns of x.
DataTable impute(const SemModel& m, const Eigen::VectorXd& theta, const DataTable& x);

// MAP estimate of effect i on the fit data (z x n).
Eigen::MatrixXd blup(const SemModel& m, const Eigen::VectorXd& theta, int effect);

}  // namespace sem
