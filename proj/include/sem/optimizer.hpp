#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sem {

// Returns the value and fills grad when non-null. Throwing SemError marks the
// point as infeasible.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct ExprNode;

enum class ConstraintRel { Eq, Less, Greater };

// Normalized so that equalities read g == 0 and inequalities g >= 0.
struct ConstraintExpr {
  std::shared_ptr<const ExprNode> lhs, rhs;
  ConstraintRel rel = ConstraintRel::Eq;
  std::string text;
};

ConstraintExpr parse_constraint(const std::string& text, const std::vector<std::string>& names);
std::pair<double, Eigen::VectorXd> eval_constraint(const ConstraintExpr& c, const Eigen::VectorXd& theta);

struct Constraint {
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> g;
  bool equality = true;
};
Constraint to_constraint(const ConstraintExpr& c);

enum class Solver { SQP, DE };
Solver parse_solver(const std::string& s);

struct SolveRequest {
  Objective objective;
  Eigen::VectorXd theta0;
  Eigen::VectorXd lo, hi;  // empty means unbounded
  std::vector<Constraint> constraints;
  Solver method = Solver::SQP;
  double b_max = 10.0;
  int max_iter = 1000;
  double tol = 1e-10;
  uint64_t seed = 0;
  bool parallel = true;  // DE population evaluation
  int de_generations = 300;
};

struct FitResult {
  std::string objective;
  std::string method;
  bool success = false;
  double value = 0.0;
  int iterations = 0;
  Eigen::VectorXd x;
  std::string message;
  std::vector<std::string> warnings;
  std::vector<FitResult> stages;  // two-stage methods keep both records here
};

FitResult minimize(const SolveRequest& req);

// Dense convex QP: min 1/2 x'Gx + g0'x s.t. CE'x + ce0 = 0, CI'x + ci0 >= 0.
// Returns +inf when infeasible. u receives multipliers of active constraints
// (equalities first, then inequalities by index) laid out as [eq | ineq].
double solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& g0, const Eigen::MatrixXd& CE,
                const Eigen::VectorXd& ce0, const Eigen::MatrixXd& CI, const Eigen::VectorXd& ci0, Eigen::VectorXd& x,
                Eigen::VectorXd* multipliers = nullptr);

}  // namespace sem
