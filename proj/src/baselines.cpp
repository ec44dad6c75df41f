#include "koopred/baselines.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <vector>

#include <Eigen/SVD>

#include "koopred/errors.hpp"

namespace koopred::baselines {

namespace {

constexpr double kPrunePrecision = 1e12;
constexpr double kMaxNoisePrecision = 1e12;
constexpr double kDeleteZ2 = 9.0;  // squared z-score floor for keeping a coefficient

Eigen::MatrixXd minimum_norm_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   double rcond) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(rcond);
  return svd.solve(B);
}

}  // namespace

Eigen::MatrixXd edmd_pinv(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& T,
                          double rcond) {
  if (Phi.rows() != T.rows())
    throw ConfigError("design matrix and targets disagree on sample count");
  if (Phi.rows() < 1) throw ConfigError("need at least one sample");
  return minimum_norm_solve(Phi, T, rcond);
}

Eigen::MatrixXd stls(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& T,
                     double lambda, int max_rounds) {
  if (lambda < 0) throw ConfigError("lambda must be >= 0");
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (Phi.rows() != T.rows())
    throw ConfigError("design matrix and targets disagree on sample count");

  const Eigen::Index p = Phi.cols();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(p, T.cols());

  for (Eigen::Index col = 0; col < T.cols(); ++col) {
    std::vector<Eigen::Index> active(p);
    std::iota(active.begin(), active.end(), Eigen::Index{0});

    Eigen::VectorXd w;
    for (int round = 0; round < max_rounds && !active.empty(); ++round) {
      Eigen::MatrixXd sub(Phi.rows(), active.size());
      for (size_t k = 0; k < active.size(); ++k) sub.col(k) = Phi.col(active[k]);
      w = minimum_norm_solve(sub, T.col(col), 1e-15);

      std::vector<Eigen::Index> survivors;
      Eigen::VectorXd w_kept(active.size());
      Eigen::Index kept = 0;
      for (size_t k = 0; k < active.size(); ++k) {
        if (std::abs(w(k)) >= lambda) {
          survivors.push_back(active[k]);
          w_kept(kept++) = w(k);
        }
      }
      if (survivors.size() == active.size()) {
        active = std::move(survivors);
        w = w_kept.head(kept);
        break;  // fixed point
      }
      active = std::move(survivors);
      w = w_kept.head(kept);
    }
    for (size_t k = 0; k < active.size(); ++k) K(active[k], col) = w(k);
  }
  return K;
}

namespace {

struct SblWorkspace {
  const Eigen::MatrixXd& Phi;
  const Eigen::VectorXd& t;
  Eigen::MatrixXd gram;    // Phi^T Phi
  Eigen::VectorXd proj;    // Phi^T t
  bool jitter_logged = false;
};

struct SblRound {
  Eigen::MatrixXd Sigma;  // posterior covariance over the active set
  Eigen::VectorXd mu;     // posterior mean over the active set
  double gamma_sum = 0.0;
};

SblRound sbl_posterior(SblWorkspace& ws, const std::vector<Eigen::Index>& active,
                       const Eigen::VectorXd& alpha, double beta) {
  const auto n_active = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd A(n_active, n_active);
  Eigen::VectorXd h(n_active);
  for (Eigen::Index r = 0; r < n_active; ++r) {
    h(r) = ws.proj(active[r]);
    for (Eigen::Index c = 0; c < n_active; ++c)
      A(r, c) = beta * ws.gram(active[r], active[c]);
    A(r, r) += alpha(active[r]);
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    const double jitter = 1e-10 * A.trace();
    A.diagonal().array() += jitter;
    ldlt.compute(A);
    if (!ws.jitter_logged) {
      std::cerr << "sbl: ill-conditioned posterior covariance, added jitter " << jitter
                << "\n";
      ws.jitter_logged = true;
    }
    if (ldlt.info() != Eigen::Success)
      throw NumericError("sbl posterior covariance factorization failed");
  }

  SblRound round;
  round.Sigma = ldlt.solve(Eigen::MatrixXd::Identity(n_active, n_active));
  round.mu = beta * (round.Sigma * h);
  for (Eigen::Index k = 0; k < n_active; ++k)
    round.gamma_sum += 1.0 - alpha(active[k]) * round.Sigma(k, k);
  return round;
}

}  // namespace

SblResult sbl(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& t, int max_iter,
              double tol) {
  if (Phi.rows() != t.size())
    throw ConfigError("design matrix and target disagree on sample count");
  if (Phi.rows() < 1) throw ConfigError("need at least one sample");

  const Eigen::Index m = Phi.rows();
  const Eigen::Index p = Phi.cols();

  std::vector<Eigen::Index> active(p);
  std::iota(active.begin(), active.end(), Eigen::Index{0});
  Eigen::VectorXd alpha = Eigen::VectorXd::Ones(p);

  double noise_var = 0.1 * (t.array() - t.mean()).square().mean();
  if (!(noise_var > 0)) noise_var = 1e-6;

  SblWorkspace ws{Phi, t, Phi.transpose() * Phi, Phi.transpose() * t};

  SblResult result;
  result.weights = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd mu;
  int iterations_left = max_iter;

  // outer loop: run the alpha fixed point to convergence, then delete the
  // coefficients whose marginal likelihood is maximized at infinite
  // precision (q^2 <= s); repeat until the active set is stable
  for (int pass = 0; pass < 20 && !active.empty(); ++pass) {
    double beta = std::min(1.0 / noise_var, kMaxNoisePrecision);

    bool converged = false;
    while (iterations_left > 0 && !active.empty()) {
      --iterations_left;
      ++result.iterations;

      const SblRound round = sbl_posterior(ws, active, alpha, beta);
      mu = round.mu;

      double max_rel_change = 0.0;
      std::vector<Eigen::Index> survivors;
      Eigen::VectorXd mu_kept(mu.size());
      Eigen::Index kept = 0;
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(active.size()); ++k) {
        const Eigen::Index idx = active[k];
        const double gamma_k = 1.0 - alpha(idx) * round.Sigma(k, k);
        const double mu2 = mu(k) * mu(k);
        const double alpha_new =
            mu2 > 0 ? std::max(gamma_k, 1e-12) / mu2 : 2.0 * kPrunePrecision;
        max_rel_change =
            std::max(max_rel_change, std::abs(alpha_new - alpha(idx)) / alpha(idx));
        alpha(idx) = alpha_new;
        if (alpha_new <= kPrunePrecision) {
          survivors.push_back(idx);
          mu_kept(kept++) = mu(k);
        }
      }

      // noise re-estimation from the residual and the effective dof
      Eigen::VectorXd fit = Eigen::VectorXd::Zero(m);
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(active.size()); ++k)
        fit += mu(k) * Phi.col(active[k]);
      const double rss = (t - fit).squaredNorm();
      const double dof = static_cast<double>(m) - round.gamma_sum;
      if (dof > 0 && rss > 0) noise_var = rss / dof;
      noise_var = std::max(noise_var, 1.0 / kMaxNoisePrecision);
      beta = std::min(1.0 / noise_var, kMaxNoisePrecision);

      const bool pruned = survivors.size() != active.size();
      active = std::move(survivors);
      mu = mu_kept.head(kept);
      if (!pruned && max_rel_change < tol) {
        converged = true;
        break;
      }
    }
    result.converged = converged;
    if (active.empty()) break;

    // significance test at the converged point. With C_{-i} the model
    // covariance without coefficient i, q_i = phi_i^T C_{-i}^{-1} t and
    // s_i = phi_i^T C_{-i}^{-1} phi_i form the squared z-score q_i^2, / s_i;
    // under a pure noise coefficient it is chi-square(1), so the plain
    // evidence rule (threshold 1) retains about a third of the noise
    // columns. Delete below a three-sigma threshold instead.
    const SblRound round = sbl_posterior(ws, active, alpha, beta);
    const auto n_active = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd h(n_active);
    for (Eigen::Index r = 0; r < n_active; ++r) h(r) = ws.proj(active[r]);
    std::vector<Eigen::Index> survivors;
    Eigen::VectorXd mu_kept(n_active);
    Eigen::Index kept = 0;
    for (Eigen::Index k = 0; k < n_active; ++k) {
      const Eigen::Index idx = active[k];
      Eigen::VectorXd g(n_active);
      for (Eigen::Index r = 0; r < n_active; ++r) g(r) = ws.gram(active[r], idx);
      const double S = beta * ws.gram(idx, idx) - beta * beta * g.dot(round.Sigma * g);
      const double Q = beta * ws.proj(idx) - beta * beta * g.dot(round.Sigma * h);

      // s_i = alpha S / (alpha - S), q_i = alpha Q / (alpha - S); the
      // identity S < alpha holds exactly, so a vanishing difference means a
      // diverging z-score and the coefficient is kept
      const double a_i = alpha(idx);
      const double denom = a_i - S;
      bool keep = true;
      if (denom > 1e-9 * a_i && S > 0) {
        const double z2 = a_i * Q * Q / (denom * S);
        keep = z2 > kDeleteZ2;
      }
      if (keep) {
        survivors.push_back(idx);
        mu_kept(kept++) = round.mu(k);
      } else {
        alpha(idx) = 2.0 * kPrunePrecision;
      }
    }
    const bool deleted = survivors.size() != active.size();
    active = std::move(survivors);
    mu = mu_kept.head(kept);
    if (!deleted && (converged || iterations_left <= 0)) break;
  }

  if (!active.empty()) {
    // refit the surviving coefficients once so the reported weights match
    // the final active set
    const double beta = std::min(1.0 / noise_var, kMaxNoisePrecision);
    mu = sbl_posterior(ws, active, alpha, beta).mu;
  }

  result.weights.setZero();
  for (size_t k = 0; k < active.size(); ++k) result.weights(active[k]) = mu(k);
  result.precisions = alpha;
  return result;
}

Eigen::MatrixXd sbl_matrix(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& T,
                           int max_iter, double tol) {
  Eigen::MatrixXd K(Phi.cols(), T.cols());
  for (Eigen::Index col = 0; col < T.cols(); ++col)
    K.col(col) = sbl(Phi, T.col(col), max_iter, tol).weights;
  return K;
}

}  // namespace koopred::baselines
