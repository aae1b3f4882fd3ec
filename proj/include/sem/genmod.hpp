#pragma once

#include <Eigen/Dense>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sem/model.hpp"

namespace sem {

using Rng = std::mt19937_64;

struct GenConfig {
  int n_endo = 3;
  int n_exo = 4;
  int n_lat = 3;
  int n_inds_min = 3;  // indicators per latent drawn from [min, max]
  int n_inds_max = 3;
  int n_cycles = 0;
  double p_join = 0.05;
  double sigma_eta = 1.0;  // latent variances ~ sigma_eta * U(0.7, 1.4)
};

// Latents eta#, their indicators y#, endogenous observed x#, exogenous observed g#.
std::string generate_description(const GenConfig& cfg, Rng& rng);

struct GeneratedModel {
  std::shared_ptr<SemModel> model;  // ModelMeans without intercepts, theta loaded
  Eigen::VectorXd theta;
  std::vector<ParameterRow> params;  // "true" parameter table
};

GeneratedModel generate_parameters(const std::string& description, Rng& rng, double sigma_eta = 1.0);

struct EffectsSpec {
  int n_static = 0;             // static effects over a "group" column (one group per row)
  bool moving_average = false;  // MA(2) disturbance over a "time" column
  Eigen::VectorXd ma_alpha = Eigen::Vector2d(0.6, 0.3);
  double scale = 1.0;           // D = scale * diag(U(0.7, 1.4))
};

struct GeneratedData {
  DataTable data;
  std::vector<LabelledMatrix> k;  // one per static effect
};

// Random K with unit mean diagonal and rank about sqrt(n)/2.
Eigen::MatrixXd random_kernel(int n, Rng& rng);

GeneratedData generate_data(const SemModel& model, const Eigen::VectorXd& theta, int n, Rng& rng,
                            const EffectsSpec& effects = {});

// Absolute relative errors |true - est| / |est| over regression and loading
// rows of `truth` that are free in `estimates`.
std::vector<double> compare_results(const std::vector<ParameterRow>& estimates,
                                    const std::vector<ParameterRow>& truth);
double mape(const std::vector<ParameterRow>& estimates, const std::vector<ParameterRow>& truth);

// Reads a parameter table written by write_param_table or the supplementary
// lval,op,rval,Estimate format.
std::vector<ParameterRow> read_param_table(const std::string& path);

}  // namespace sem
