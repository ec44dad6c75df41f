#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace koopred::vb {

// Coefficient-update scheduling. gauss_seidel refreshes each expectation as
// soon as it is recomputed, so later coefficients in a sweep see the latest
// values. jacobi computes every update of a sweep from the previous sweep's
// expectations, which makes per-coefficient updates order-independent.
enum class UpdateMode { gauss_seidel, jacobi };

std::string to_string(UpdateMode mode);
UpdateMode update_mode_from_string(const std::string& s);

// Hyperprior parameters and solver settings for one spike-and-slab
// regression t = Phi (gamma ⊙ beta) + v. Scalars broadcast to every
// coefficient.
struct Priors {
  double a = 1e-6, b = 1e-6;  // Gamma(shape, rate) on the noise precision
  double c = 1e-6, d = 1e-6;  // Gamma(shape, rate) on each weight precision
  double e = 1.0, f = 1.0;    // Beta on each inclusion probability
  double damping = 0.5;       // convex blend of new vs. previous weight update, (0, 1]
  double gamma_clip = 1e-8;   // inclusion posteriors clipped to [clip, 1-clip]
  int max_iter = 500;
  double tol = 1e-6;          // convergence: max_i |change in damped weight mean|
  UpdateMode update_mode = UpdateMode::gauss_seidel;

  void validate() const;
};

// All variational parameters and expectations for one target regression.
// Barred quantities are posterior parameters, hat quantities the matching
// expectations.
struct PosteriorState {
  double a_bar = 0, b_bar = 0;
  Eigen::VectorXd c_bar, d_bar;  // per-coefficient Gamma posteriors
  Eigen::VectorXd e_bar, f_bar;  // per-coefficient Beta posteriors
  Eigen::VectorXd mu;            // damped posterior weight means
  Eigen::VectorXd sigma2;        // posterior weight variances, 1 / damped precision
  Eigen::VectorXd alpha_bar_damped;  // damped weight-update precisions
  Eigen::VectorXd pi_bar;        // clipped inclusion posteriors

  double rho_hat = 0;            // a_bar / b_bar
  Eigen::VectorXd alpha_hat;     // c_bar / d_bar
  Eigen::VectorXd pi_hat;        // e_bar / (e_bar + f_bar)
  Eigen::VectorXd gamma_hat;     // = pi_bar

  int iterations = 0;
  bool converged = false;

  Eigen::Index n_coeffs() const { return mu.size(); }
  void validate(const Priors& priors) const;
};

// Aggregate over all L target regressions: the fitted operator and the
// inclusion matrix, both (L+l) x L with one column per target.
struct FitResult {
  std::vector<PosteriorState> states;
  Eigen::MatrixXd K_F_hat;  // column j = gamma_hat_j ⊙ mu_j
  Eigen::MatrixXd Gamma;    // column j = gamma_hat_j
  Eigen::VectorXd rho_hats;
  std::vector<int> iterations_used;
  std::vector<bool> converged;
};

// Digamma to absolute error <= 1e-10: the recurrence psi(x) = psi(x+1) - 1/x
// lifts x to >= 6, then the asymptotic series applies.
double digamma(double x);

// Numerically stable logistic function (no overflow for any finite eta).
double stable_sigmoid(double eta);

// Neutral-belief initialization: ridge weight means, unit variances,
// inclusion probability 1/2, data-scaled noise precision.
PosteriorState initialize(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& t,
                          const Priors& priors);

// Single-factor updates. Each refreshes the matching expectation in place
// and returns the new posterior parameters.
std::pair<double, double> update_rho(PosteriorState& s, const Eigen::VectorXd& t,
                                     const Eigen::MatrixXd& Phi, const Priors& priors);
std::pair<double, double> update_alpha(PosteriorState& s, Eigen::Index i,
                                       const Priors& priors);
std::pair<double, double> update_pi(PosteriorState& s, Eigen::Index i,
                                    const Priors& priors);

// Residual of the target without coefficient i's contribution.
Eigen::VectorXd residual(const PosteriorState& s, const Eigen::VectorXd& t,
                         const Eigen::MatrixXd& Phi, Eigen::Index i);

// Weight update with damping; returns (damped precision, damped mean).
std::pair<double, double> update_beta(PosteriorState& s, Eigen::Index i,
                                      const Eigen::VectorXd& r_i,
                                      const Eigen::VectorXd& phi_i, const Priors& priors);

// Inclusion update; returns the clipped posterior probability.
double update_gamma(PosteriorState& s, Eigen::Index i, const Eigen::VectorXd& r_i,
                    const Eigen::VectorXd& phi_i, const Priors& priors);

// Full coordinate-ascent solve for one target.
PosteriorState fit_target(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& t,
                          const Priors& priors);

// Independent solve per target column; parallel across targets when
// n_threads > 1. Column order of K_F_hat/Gamma follows the target order.
FitResult fit_all(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& targets,
                  const Priors& priors, int n_threads = 1);

std::string to_json(const Priors& priors);
Priors priors_from_json(const std::string& text);

std::string to_json(const FitResult& result);
FitResult fit_result_from_json(const std::string& text);

}  // namespace koopred::vb
