#include "sem/penalty.hpp"

#include <algorithm>
#include <cmath>

#include "sem/errors.hpp"

namespace sem {

PenaltyKind parse_penalty_kind(const std::string& s) {
  if (s == "l1-naive" || s == "l1_naive") return PenaltyKind::L1Naive;
  if (s == "l1-smooth" || s == "l1_smooth") return PenaltyKind::L1Smooth;
  if (s == "l1-thresh" || s == "l1_thresh") return PenaltyKind::L1Thresh;
  if (s == "l2-naive" || s == "l2_naive") return PenaltyKind::L2Naive;
  if (s == "l2-square" || s == "l2_square") return PenaltyKind::L2Square;
  throw SemError(ErrorCode::ParseError, "unknown penalty '" + s + "'");
}

void resolve_penalty(Penalty& p, const ParameterSpace& ps) {
  p.target.clear();
  for (size_t i = 0; i < ps.params.size(); ++i) {
    const auto& par = ps.params[i];
    bool hit = std::find(p.param_names.begin(), p.param_names.end(), par.name) != p.param_names.end();
    for (const auto& l : par.locs)
      if (std::find(p.mx_names.begin(), p.mx_names.end(), std::string(mat_name(l.mat))) != p.mx_names.end()) hit = true;
    if (hit) p.target.push_back(static_cast<int>(i));
  }
  if (p.target.empty()) throw SemError(ErrorCode::InfeasibleConfig, "penalty has no target parameters");
}

namespace {
double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
}  // namespace

double penalty_value(const Penalty& p, const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
  double v = 0;
  if (p.kind == PenaltyKind::L2Naive) {
    double s = 0;
    for (int i : p.target) s += theta[i] * theta[i];
    v = std::sqrt(s);
    if (grad && v > 0)
      for (int i : p.target) (*grad)[i] += p.c * theta[i] / v;
    return p.c * v;
  }
  for (int i : p.target) {
    const double t = theta[i];
    double g = 0;
    switch (p.kind) {
      case PenaltyKind::L1Naive:
        v += std::abs(t);
        g = (t > 0) - (t < 0);
        break;
      case PenaltyKind::L1Smooth:
        v += p.alpha * (softplus(-t / p.alpha) + softplus(t / p.alpha));
        g = std::tanh(t / (2 * p.alpha));
        break;
      case PenaltyKind::L1Thresh:
        v += std::abs(t);
        g = ((t > 0) - (t < 0)) * std::max(std::abs(t) - p.alpha, 0.0);
        break;
      case PenaltyKind::L2Square:
        v += t * t;
        g = 2 * t;
        break;
      default:
        break;
    }
    if (grad) (*grad)[i] += p.c * g;
  }
  return p.c * v;
}

}  // namespace sem
