#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sem/model.hpp"

namespace sem {

struct FimResult {
  Eigen::MatrixXd matrix;
  Eigen::MatrixXd inverted;
  bool pseudo_inverse_used = false;
};

// Cholesky inverse with a Moore-Penrose fallback (singular values below
// 1e-10 * max dropped) and a warning.
FimResult invert_fim(const Eigen::MatrixXd& fim);

// Expected information of the negative loglikelihood at theta.
Eigen::MatrixXd expected_fim_matrix(const SemModel& m, const Eigen::VectorXd& theta);
// Matrix-variate fast form; also used directly by tests.
Eigen::MatrixXd matvar_fim(const ImpliedMoments& im, const MatvarInput& in, int n_theta);
// Brute force: Gaussian FIM on vec(Z) with covariance T (x) L / tr{T}.
Eigen::MatrixXd matvar_fim_bruteforce(const ImpliedMoments& im, const MatvarInput& in, int n_theta);

FimResult expected_fim(const SemModel& m, const Eigen::VectorXd& theta);
// Central differences of the analytic gradient, step 1e-5 * (1 + |theta_i|).
FimResult observed_fim(const SemModel& m, const Eigen::VectorXd& theta);

double p_value(double z);

std::vector<ParameterRow> parameter_table(const SemModel& m, const Eigen::VectorXd& theta, const FimResult& fim,
                                          bool robust);

}  // namespace sem
