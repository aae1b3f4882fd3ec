#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sem/model_graph.hpp"

namespace sem {

enum class PenaltyKind { L1Naive, L1Smooth, L1Thresh, L2Naive, L2Square };
PenaltyKind parse_penalty_kind(const std::string& s);

struct Penalty {
  PenaltyKind kind = PenaltyKind::L2Square;
  double c = 1.0;
  double alpha = 1e-6;
  std::vector<std::string> param_names;
  std::vector<std::string> mx_names;  // Beta, Lambda, Psi, Theta, Gamma1, Gamma2, D
  std::vector<int> target;            // resolved theta indices
};

// Fills p.target from names; throws InfeasibleConfig when nothing matches.
void resolve_penalty(Penalty& p, const ParameterSpace& ps);

// c * R(theta[target]); grad (full length) is accumulated, not overwritten.
double penalty_value(const Penalty& p, const Eigen::VectorXd& theta, Eigen::VectorXd* grad);

}  // namespace sem
