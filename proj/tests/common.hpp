#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sem/data.hpp"
#include "sem/genmod.hpp"
#include "sem/model.hpp"

#ifndef SEM_SOURCE_DIR
#define SEM_SOURCE_DIR "."
#endif

namespace testing_util {

inline std::string data_path(const std::string& name) { return std::string(SEM_SOURCE_DIR) + "/data/" + name; }
inline std::string ref_path(const std::string& name) {
  return std::string(SEM_SOURCE_DIR) + "/tests/reference/" + name;
}

inline const char* kPoliticalDemocracy =
    "ind60 =~ x1 + x2 + x3\n"
    "dem60 =~ y1 + y2 + y3 + y4\n"
    "dem65 =~ y5 + y6 + y7 + y8\n"
    "dem60 ~ ind60\n"
    "dem65 ~ ind60 + dem60\n"
    "y1 ~~ y5\n"
    "y2 ~~ y4 + y6\n"
    "y3 ~~ y7\n"
    "y4 ~~ y8\n"
    "y6 ~~ y8\n";

inline const char* kHolzinger =
    "visual =~ x1 + x2 + x3\n"
    "textual =~ x4 + x5 + x6\n"
    "speed =~ x7 + x8 + x9\n";

inline const char* kArticle =
    "eta1 =~ y1 + y2 + y3\n"
    "eta2 =~ y3 + y2\n"
    "eta3 =~ y4 + y5\n"
    "eta4 =~ y4 + y6\n"
    "eta3 ~ x2 + x1\n"
    "eta4 ~ x3\n"
    "x3 ~ eta1 + eta2 + x1\n"
    "x4 ~ eta4 + x6\n"
    "y7 ~ x4 + x6\n"
    "y6 ~~ y5\n"
    "x2 ~~ eta2\n";

struct RefRow {
  std::string lval, op, rval;
  double estimate;
  double se;  // NaN when fixed
};

inline std::vector<RefRow> read_reference(const std::string& path) {
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  std::vector<RefRow> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c, d, e;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::getline(ss, d, ',');
    std::getline(ss, e, ',');
    out.push_back({a, b, c, std::stod(d), e == "-" ? NAN : std::stod(e)});
  }
  return out;
}

// Largest deviation of estimates and standard errors from a reference table.
// Covariance rows match in either orientation. missing counts reference rows absent from the fit.
struct RefDiff {
  double est = 0, se = 0;
  int missing = 0;
};

inline RefDiff compare_reference(const std::vector<sem::ParameterRow>& rows, const std::vector<RefRow>& ref) {
  std::map<std::string, const sem::ParameterRow*> idx;
  for (const auto& r : rows) {
    idx[r.lval + " " + r.op + " " + r.rval] = &r;
    if (r.op == "~~") idx[r.rval + " " + r.op + " " + r.lval] = &r;
  }
  RefDiff d;
  for (const auto& r : ref) {
    auto it = idx.find(r.lval + " " + r.op + " " + r.rval);
    if (it == idx.end()) {
      ++d.missing;
      continue;
    }
    d.est = std::max(d.est, std::abs(it->second->estimate - r.estimate));
    if (!std::isnan(r.se) && it->second->std_err) d.se = std::max(d.se, std::abs(*it->second->std_err - r.se));
  }
  return d;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Central-difference check of an objective's gradient. Returns the largest
// absolute deviation scaled by max(1, |fd|_inf).
template <class F>
double gradient_error(F f, const Eigen::VectorXd& theta) {
  Eigen::VectorXd g;
  f(theta, &g);
  Eigen::VectorXd fd(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(theta[i]));
    Eigen::VectorXd a = theta, b = theta;
    a[i] += h;
    b[i] -= h;
    fd[i] = (f(a, nullptr) - f(b, nullptr)) / (2 * h);
  }
  return (g - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff());
}

// A nearby feasible point: variances scaled by U(0.8, 1.25), everything else shifted by N(0, 0.1).
inline Eigen::VectorXd perturb(const sem::SemModel& m, const Eigen::VectorXd& theta, sem::Rng& rng) {
  auto [lo, hi] = m.bounds();
  std::uniform_real_distribution<double> u(0.8, 1.25);
  std::normal_distribution<double> nd(0.0, 0.1);
  Eigen::VectorXd t = theta;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (lo[i] >= 0) t[i] = std::max(t[i], 0.1) * u(rng);
    else t[i] += nd(rng);
    t[i] = std::clamp(t[i], lo[i], hi[i]);
  }
  return t;
}

}  // namespace testing_util
