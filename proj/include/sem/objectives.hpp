#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sem/errors.hpp"
#include "sem/moments.hpp"

namespace sem {

// All objectives take implied moments (with derivative stacks when a gradient
// is requested) and write d/dtheta into grad (sized to the parameter count).

// tr{S Sigma^-1} + ln|Sigma|
double wishart_ml(const ImpliedMoments& im, const Eigen::MatrixXd& S, Eigen::VectorXd* grad);

enum class LsKind { ULS, GLS, WLS, DWLS };
// winv: inverse weight matrix in vech space (WLS), or its diagonal inverse (DWLS)
double least_squares(LsKind kind, const ImpliedMoments& im, const Eigen::MatrixXd& S, const Eigen::MatrixXd* s_inv,
                     const Eigen::MatrixXd* winv, Eigen::VectorXd* grad);

// Rows grouped by missingness pattern.
struct FimlData {
  struct Pattern {
    std::vector<int> obs;    // observed variable indices
    Eigen::MatrixXd z;       // rows x |obs|
    Eigen::MatrixXd x2;      // g x rows
  };
  std::vector<Pattern> patterns;
  int n = 0;
};
// data: n x p in z order; x2: g x n (may be empty).
FimlData prepare_fiml(const Eigen::MatrixXd& data, const Eigen::MatrixXd& x2);
// sum over rows of e' Sigma_o^-1 e + ln|Sigma_o|, e = z_o - mu_o
double fiml(const ImpliedMoments& im, const FimlData& d, Eigen::VectorXd* grad);

// Complete-data means ML: tr{(Z-M)' Sigma^-1 (Z-M)}/n + ln|Sigma|; Z is z x n.
double means_ml(const ImpliedMoments& im, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X2, Eigen::VectorXd* grad);
// tr{(Z-M)' W (Z-M) T} with fixed W (z x z) and T (n x n or empty for identity); used by REML stage 2.
double mean_gls(const ImpliedMoments& im, const Eigen::MatrixXd& W, const Eigen::MatrixXd& T, const Eigen::MatrixXd& Z,
                const Eigen::MatrixXd& X2, Eigen::VectorXd* grad);

struct RemlProjector {
  Eigen::MatrixXd P1;  // n x r
  int r = 0;
};
RemlProjector reml_projector(const Eigen::MatrixXd& X2);

// Matrix-variate normal objective over Z (z x n). Each effect k contributes
// K_k (n x n) and D_k (from im). Kernel derivatives dK are attached to
// parameter slots beyond the model parameters.
struct EffectTerm {
  Eigen::MatrixXd K;
  std::vector<Eigen::MatrixXd> dK;  // one per kernel parameter
  int offset = 0;                   // first theta index of the kernel parameters
};

struct MatvarInput {
  Eigen::MatrixXd Z;   // z x n, possibly rotated
  Eigen::MatrixXd X2;  // g x n, rotated alongside Z
  std::vector<EffectTerm> effects;
  // Whitened: single constant kernel replaced by its eigenvalues; T is diagonal.
  bool whitened = false;
  Eigen::VectorXd s;
};

struct Whitening {
  Eigen::MatrixXd ZQ;
  Eigen::VectorXd s;
  Eigen::MatrixXd Q;
};
Whitening whiten(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& K);
// Rotate Z, X2 by eigenvectors of the single kernel K.
MatvarInput whitened_input(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X2, const Eigen::MatrixXd& K);

struct MatvarCovariances {
  Eigen::MatrixXd L;
  Eigen::MatrixXd T;   // dense, empty when whitened
  Eigen::VectorXd t;   // diagonal of T when whitened
};
MatvarCovariances matvar_covariances(const ImpliedMoments& im, const MatvarInput& in);

// tr{L} tr{T^-1 Zh' L^-1 Zh} + n ln|L| + m ln|T| - n m ln tr{L}
// grad has size = total theta length (model params + kernel params).
double matvar_ml(const ImpliedMoments& im, const MatvarInput& in, Eigen::VectorXd* grad, int n_theta);

// GLS over mean parameters with L, T frozen: tr{T^-1 Zh' L^-1 Zh}.
double matvar_mean_gls(const ImpliedMoments& im, const MatvarInput& in, const Eigen::MatrixXd& Linv,
                       const Eigen::MatrixXd& Tinv, Eigen::VectorXd* grad);

// Cholesky log-determinant; throws code on failure.
double logdet_pd(const Eigen::MatrixXd& a, Eigen::MatrixXd* inverse, ErrorCode code);

}  // namespace sem
