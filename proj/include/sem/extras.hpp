#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sem/data.hpp"
#include "sem/model.hpp"

namespace sem {

struct BiasCorrection {
  Eigen::VectorXd theta;     // 2 theta_hat - mean(replicates)
  Eigen::VectorXd mean;      // mean of the replicate estimates
  int used = 0;
  int dropped = 0;
};

// Parametric bootstrap: k datasets of the original size are simulated from the
// fitted model and refit with the original options.
BiasCorrection bias_correct(const SemModel& model, const DataTable& data, int k = 100, uint64_t seed = 0,
                            bool parallel = true);

// Simulates one dataset shaped like `data` from the model at theta; columns
// outside z are copied unchanged.
DataTable simulate_like(const SemModel& model, const Eigen::VectorXd& theta, const DataTable& data,
                        std::mt19937_64& rng);

struct EfaOptions {
  int min_cluster = 2;
  double p_drop = 0.05;
  bool strict = false;  // throw NoClustersFound instead of falling back to one factor
};

struct EfaResult {
  std::string description;
  std::vector<std::vector<std::string>> factors;  // indicators per factor
  bool fallback = false;
};

// Single-linkage clustering on 1 - |corr|. The cut is placed at the largest
// gap of the minimum spanning tree weights, capped by a Bonferroni
// significance bound on |corr|.
std::vector<std::vector<int>> correlation_clusters(const Eigen::MatrixXd& corr, int n, int min_cluster);

EfaResult explore_cfa(const DataTable& data, const EfaOptions& options = {});

// Share of falsely found or missed loadings relative to the true loading count,
// after the best matching of factors.
double loading_error(const std::vector<std::vector<std::string>>& truth,
                     const std::vector<std::vector<std::string>>& found);

}  // namespace sem
