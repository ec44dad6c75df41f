#pragma once

#include <Eigen/Dense>

#include <string>

#include "koopred/dictionary.hpp"

namespace koopred::koopman {

// Identification methods: I pseudoinverse least squares, II sequential
// thresholded least squares, III sparse Bayesian learning, IV spike-and-slab
// variational inference.
enum class Method { I, II, III, IV };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Linear lifted-space model phi[k+1] = K_F_hat^T [phi(x[k]); u[k]],
// x_out[k] = C phi(x[k]).
struct KoopmanModel {
  dict::Dictionary dictionary;
  Eigen::MatrixXd K_F_hat;   // (L+l) x L
  Eigen::MatrixXd C;         // n_out x L, one 1 per row at an output index
  Eigen::VectorXd rho_hats;  // per-target noise precisions; empty for I-III
  Eigen::MatrixXd Gamma;     // posterior inclusion matrix; empty for I-III
  Method method = Method::I;

  int n_out() const { return static_cast<int>(C.rows()); }
  void validate() const;
};

// Builds the output selection matrix from the dictionary's output indices.
Eigen::MatrixXd selection_matrix(const dict::Dictionary& dict);

KoopmanModel make_model(dict::Dictionary dict, Eigen::MatrixXd K_F_hat, Method method,
                        Eigen::VectorXd rho_hats = {}, Eigen::MatrixXd Gamma = {});

struct OneStep {
  Eigen::VectorXd phi_next;  // L-vector
  Eigen::VectorXd x_next;    // n_out-vector
};

// One-step prediction from a measured (embedded) state and input.
OneStep one_step(const KoopmanModel& model, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& u);

// Multi-step prediction: lift once, then propagate linearly in lifted space
// and read outputs through C. With relift, the physical state is
// reconstructed and re-lifted every step; that requires the outputs to cover
// the full (embedded) state. Throws on a non-finite state with the step
// index.
Eigen::MatrixXd rollout(const KoopmanModel& model, const Eigen::VectorXd& x0,
                        const Eigen::MatrixXd& inputs, int horizon,
                        bool relift = false);

// Squared prediction error normalized by the target's variance about its
// mean. Throws for constant x_true.
double nmse(const Eigen::VectorXd& x_true, const Eigen::VectorXd& x_pred);

std::string to_json(const KoopmanModel& model);
KoopmanModel model_from_json(const std::string& text);

}  // namespace koopred::koopman
