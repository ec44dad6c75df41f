#pragma once

#include <Eigen/Dense>

namespace koopred::baselines {

// Minimum-norm least-squares solve K = pinv(Phi) * T via SVD; singular
// values below rcond * sigma_max are treated as zero.
Eigen::MatrixXd edmd_pinv(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& T,
                          double rcond = 1e-15);

// Sequential thresholded least squares, per target column: refit on the
// active set, zero coefficients with |w| < lambda, shrink, repeat until a
// fixed point or max_rounds. Inactive coefficients are exactly 0.
Eigen::MatrixXd stls(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& T,
                     double lambda, int max_rounds = 10);

struct SblResult {
  Eigen::VectorXd weights;     // pruned coefficients are exactly 0
  Eigen::VectorXd precisions;  // per-coefficient precision hyperparameters
  int iterations = 0;
  bool converged = false;
};

// Sparse Bayesian learning by fixed-point evidence maximization with noise
// re-estimation each round. Coefficients whose precision exceeds 1e12 are
// pruned to exactly 0. Converged when the max relative precision change
// drops below tol.
SblResult sbl(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& t,
              int max_iter = 1000, double tol = 1e-6);

// sbl applied independently per target column.
Eigen::MatrixXd sbl_matrix(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& T,
                           int max_iter = 1000, double tol = 1e-6);

}  // namespace koopred::baselines
