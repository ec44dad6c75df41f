#include "koopred/vb.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>

#include <json.hpp>

#include "koopred/errors.hpp"

namespace koopred::vb {

using nlohmann::json;

std::string to_string(UpdateMode mode) {
  return mode == UpdateMode::gauss_seidel ? "gauss_seidel" : "jacobi";
}

UpdateMode update_mode_from_string(const std::string& s) {
  if (s == "gauss_seidel") return UpdateMode::gauss_seidel;
  if (s == "jacobi") return UpdateMode::jacobi;
  throw ConfigError("unknown update mode '" + s + "'");
}

void Priors::validate() const {
  if (!(a > 0) || !(b > 0) || !(c > 0) || !(d > 0) || !(e > 0) || !(f > 0))
    throw ConfigError("all prior hyperparameters must be positive");
  if (!(damping > 0) || damping > 1.0)
    throw ConfigError("damping must lie in (0, 1]");
  if (!(gamma_clip > 0) || !(gamma_clip < 0.5))
    throw ConfigError("gamma_clip must lie in (0, 0.5)");
  if (max_iter < 0) throw ConfigError("max_iter must be >= 0");
  if (!(tol > 0)) throw ConfigError("tol must be > 0");
}

void PosteriorState::validate(const Priors& priors) const {
  auto positive = [](const Eigen::VectorXd& v) { return (v.array() > 0).all(); };
  if (!(a_bar > 0) || !(b_bar > 0))
    throw NumericError("noise-precision posterior parameters must stay positive");
  if (!positive(c_bar) || !positive(d_bar) || !positive(e_bar) || !positive(f_bar))
    throw NumericError("per-coefficient posterior scale parameters must stay positive");
  if (!positive(sigma2)) throw NumericError("posterior variances must stay positive");
  const double lo = priors.gamma_clip;
  if (!((pi_bar.array() >= lo).all() && (pi_bar.array() <= 1.0 - lo).all()))
    throw NumericError("inclusion posteriors escaped the clip interval");
}

double digamma(double x) {
  if (!(x > 0)) throw NumericError("digamma domain error: x must be > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // asymptotic expansion, truncation below 1e-12 for x >= 6
  double series = inv2 * (1.0 / 12.0 -
                  inv2 * (1.0 / 120.0 -
                  inv2 * (1.0 / 252.0 -
                  inv2 * (1.0 / 240.0 -
                  inv2 * (1.0 / 132.0 -
                  inv2 * (691.0 / 32760.0 -
                  inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

double stable_sigmoid(double eta) {
  if (eta >= 0) {
    const double z = std::exp(-eta);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(eta);
  return z / (1.0 + z);
}

namespace {

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

Eigen::VectorXd prediction(const PosteriorState& s, const Eigen::MatrixXd& Phi) {
  return Phi * s.gamma_hat.cwiseProduct(s.mu);
}

void apply_rho(PosteriorState& s, double residual_sq, double m, const Priors& priors) {
  s.a_bar = 0.5 * m + priors.a;
  s.b_bar = 0.5 * residual_sq + priors.b;
  if (!std::isfinite(s.b_bar))
    throw NumericError("noise-precision update produced a non-finite rate");
  s.rho_hat = s.a_bar / s.b_bar;
}

// Shared scalar cores so fit_target can feed cached dot products while the
// public per-vector operations stay the single source of the formulas.
struct BetaValues {
  double alpha_damped;
  double mu_damped;
};

BetaValues beta_values(const PosteriorState& s, Eigen::Index i, double phi_dot_r,
                       double phi_sq, const Priors& priors) {
  const double alpha_raw = s.rho_hat * s.gamma_hat(i) * phi_sq + s.alpha_hat(i);
  if (!(alpha_raw > 0))
    throw NumericError("weight-update precision is non-positive at coefficient " +
                       std::to_string(i));
  const double numer = s.rho_hat * s.gamma_hat(i) * phi_dot_r;
  const double mu_raw = numer == 0.0 ? 0.0 : numer / alpha_raw;
  const double pd = priors.damping;
  return {pd * alpha_raw + (1.0 - pd) * s.alpha_bar_damped(i),
          pd * mu_raw + (1.0 - pd) * s.mu(i)};
}

void apply_beta(PosteriorState& s, Eigen::Index i, const BetaValues& v) {
  s.alpha_bar_damped(i) = v.alpha_damped;
  s.mu(i) = v.mu_damped;
  s.sigma2(i) = 1.0 / v.alpha_damped;
}

double gamma_eta(const PosteriorState& s, Eigen::Index i, double phi_dot_r,
                 double phi_sq) {
  return s.rho_hat * s.mu(i) * phi_dot_r -
         0.5 * s.rho_hat * (s.mu(i) * s.mu(i) + s.sigma2(i)) * phi_sq +
         digamma(s.e_bar(i)) - digamma(s.f_bar(i));
}

double apply_gamma(PosteriorState& s, Eigen::Index i, double eta, const Priors& priors) {
  const double p = clip(stable_sigmoid(eta), priors.gamma_clip, 1.0 - priors.gamma_clip);
  s.pi_bar(i) = p;
  s.gamma_hat(i) = p;
  return p;
}

}  // namespace

PosteriorState initialize(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& t,
                          const Priors& priors) {
  priors.validate();
  const Eigen::Index m = Phi.rows();
  const Eigen::Index p = Phi.cols();
  if (t.size() != m) throw ConfigError("target length does not match design matrix rows");
  if (p < 1) throw ConfigError("design matrix has no columns");

  PosteriorState s;
  s.a_bar = priors.a;
  s.b_bar = priors.b;
  s.c_bar = Eigen::VectorXd::Constant(p, priors.c);
  s.d_bar = Eigen::VectorXd::Constant(p, priors.d);
  s.e_bar = Eigen::VectorXd::Constant(p, priors.e);
  s.f_bar = Eigen::VectorXd::Constant(p, priors.f);

  // ridge start with a unit regularizer
  Eigen::MatrixXd gram = Phi.transpose() * Phi;
  gram.diagonal().array() += 1.0;
  s.mu = gram.ldlt().solve(Phi.transpose() * t);

  s.sigma2 = Eigen::VectorXd::Ones(p);
  s.alpha_bar_damped = Eigen::VectorXd::Ones(p);
  s.pi_bar = Eigen::VectorXd::Constant(p, 0.5);
  s.gamma_hat = s.pi_bar;
  s.alpha_hat = Eigen::VectorXd::Ones(p);
  s.pi_hat = Eigen::VectorXd::Constant(p, priors.e / (priors.e + priors.f));

  const double centered = (t.array() - t.mean()).matrix().squaredNorm();
  s.rho_hat = centered > 0 ? static_cast<double>(m) / centered : 1.0;
  return s;
}

std::pair<double, double> update_rho(PosteriorState& s, const Eigen::VectorXd& t,
                                     const Eigen::MatrixXd& Phi, const Priors& priors) {
  apply_rho(s, (t - prediction(s, Phi)).squaredNorm(), static_cast<double>(t.size()),
            priors);
  return {s.a_bar, s.b_bar};
}

std::pair<double, double> update_alpha(PosteriorState& s, Eigen::Index i,
                                       const Priors& priors) {
  s.c_bar(i) = priors.c + 0.5;
  s.d_bar(i) = priors.d + 0.5 * (s.mu(i) * s.mu(i) + s.sigma2(i));
  s.alpha_hat(i) = s.c_bar(i) / s.d_bar(i);
  return {s.c_bar(i), s.d_bar(i)};
}

std::pair<double, double> update_pi(PosteriorState& s, Eigen::Index i,
                                    const Priors& priors) {
  s.e_bar(i) = s.gamma_hat(i) + priors.e;
  s.f_bar(i) = 1.0 - s.gamma_hat(i) + priors.f;
  s.pi_hat(i) = s.e_bar(i) / (s.e_bar(i) + s.f_bar(i));
  return {s.e_bar(i), s.f_bar(i)};
}

Eigen::VectorXd residual(const PosteriorState& s, const Eigen::VectorXd& t,
                         const Eigen::MatrixXd& Phi, Eigen::Index i) {
  Eigen::VectorXd coef = s.gamma_hat.cwiseProduct(s.mu);
  coef(i) = 0.0;
  return t - Phi * coef;
}

std::pair<double, double> update_beta(PosteriorState& s, Eigen::Index i,
                                      const Eigen::VectorXd& r_i,
                                      const Eigen::VectorXd& phi_i, const Priors& priors) {
  const BetaValues v =
      beta_values(s, i, phi_i.dot(r_i), phi_i.squaredNorm(), priors);
  apply_beta(s, i, v);
  return {v.alpha_damped, v.mu_damped};
}

double update_gamma(PosteriorState& s, Eigen::Index i, const Eigen::VectorXd& r_i,
                    const Eigen::VectorXd& phi_i, const Priors& priors) {
  const double eta = gamma_eta(s, i, phi_i.dot(r_i), phi_i.squaredNorm());
  return apply_gamma(s, i, eta, priors);
}

PosteriorState fit_target(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& t,
                          const Priors& priors) {
  priors.validate();
  const Eigen::Index m = Phi.rows();
  const Eigen::Index p = Phi.cols();
  if (m < 2) throw ConfigError("need at least 2 samples");
  if (t.size() != m) throw ConfigError("target length does not match design matrix rows");

  PosteriorState s = initialize(Phi, t, priors);

  const Eigen::VectorXd phi_sq = Phi.colwise().squaredNorm();
  const Eigen::VectorXd phi_t = Phi.transpose() * t;
  const bool jacobi = priors.update_mode == UpdateMode::jacobi;

  for (int iter = 0; iter < priors.max_iter; ++iter) {
    // coefficient vector and its prediction as of the sweep start; in
    // gauss_seidel mode the prediction tracks every coefficient change,
    // in jacobi mode it stays frozen for the whole sweep
    Eigen::VectorXd coef = s.gamma_hat.cwiseProduct(s.mu);
    Eigen::VectorXd pred = Phi * coef;
    apply_rho(s, (t - pred).squaredNorm(), static_cast<double>(m), priors);

    double delta_max = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      update_alpha(s, i, priors);
      update_pi(s, i, priors);

      // residual without coefficient i, folded into a single dot product
      const double phi_dot_r = phi_t(i) - Phi.col(i).dot(pred) + coef(i) * phi_sq(i);

      const double mu_before = s.mu(i);
      const BetaValues bv = beta_values(s, i, phi_dot_r, phi_sq(i), priors);
      apply_beta(s, i, bv);
      const double pi = apply_gamma(s, i, gamma_eta(s, i, phi_dot_r, phi_sq(i)), priors);

      if (!std::isfinite(bv.mu_damped) || !std::isfinite(bv.alpha_damped) ||
          !std::isfinite(pi)) {
        throw NumericError("non-finite update at iteration " + std::to_string(iter) +
                           ", coefficient " + std::to_string(i));
      }
      delta_max = std::max(delta_max, std::abs(bv.mu_damped - mu_before));

      if (!jacobi) {
        const double new_coef = s.gamma_hat(i) * s.mu(i);
        pred += (new_coef - coef(i)) * Phi.col(i);
        coef(i) = new_coef;
      }
    }

    s.iterations = iter + 1;
    if (delta_max < priors.tol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

FitResult fit_all(const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& targets,
                  const Priors& priors, int n_threads) {
  priors.validate();
  const Eigen::Index L = targets.cols();
  const Eigen::Index p = Phi.cols();
  if (targets.rows() != Phi.rows())
    throw ConfigError("targets row count does not match design matrix");
  if (n_threads < 1) n_threads = 1;

  FitResult result;
  result.states.resize(L);
  std::vector<std::optional<std::string>> failures(L);

  auto worker_body = [&](Eigen::Index j) {
    try {
      result.states[j] = fit_target(Phi, targets.col(j), priors);
    } catch (const Error& err) {
      failures[j] = err.what();
    }
  };

  if (n_threads == 1 || L <= 1) {
    for (Eigen::Index j = 0; j < L; ++j) worker_body(j);
  } else {
    std::atomic<Eigen::Index> next{0};
    auto run = [&]() {
      for (;;) {
        const Eigen::Index j = next.fetch_add(1);
        if (j >= L) return;
        worker_body(j);
      }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(n_threads, static_cast<int>(L));
    pool.reserve(count);
    for (int w = 0; w < count; ++w) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }

  for (Eigen::Index j = 0; j < L; ++j) {
    if (failures[j])
      throw NumericError("target " + std::to_string(j) + ": " + *failures[j]);
  }

  result.K_F_hat.resize(p, L);
  result.Gamma.resize(p, L);
  result.rho_hats.resize(L);
  result.iterations_used.resize(L);
  result.converged.resize(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    const PosteriorState& s = result.states[j];
    result.Gamma.col(j) = s.gamma_hat;
    result.K_F_hat.col(j) = s.gamma_hat.cwiseProduct(s.mu);
    result.rho_hats(j) = s.rho_hat;
    result.iterations_used[j] = s.iterations;
    result.converged[j] = s.converged;
  }
  return result;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("matrix payload size does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  return m;
}

std::vector<double> vec_to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd vec_from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

}  // namespace

std::string to_json(const Priors& priors) {
  json j;
  j["a"] = priors.a;
  j["b"] = priors.b;
  j["c"] = priors.c;
  j["d"] = priors.d;
  j["e"] = priors.e;
  j["f"] = priors.f;
  j["damping"] = priors.damping;
  j["gamma_clip"] = priors.gamma_clip;
  j["max_iter"] = priors.max_iter;
  j["tol"] = priors.tol;
  j["update_mode"] = to_string(priors.update_mode);
  return j.dump(2);
}

Priors priors_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad priors JSON: ") + e.what());
  }
  Priors priors;
  priors.a = j.value("a", priors.a);
  priors.b = j.value("b", priors.b);
  priors.c = j.value("c", priors.c);
  priors.d = j.value("d", priors.d);
  priors.e = j.value("e", priors.e);
  priors.f = j.value("f", priors.f);
  priors.damping = j.value("damping", priors.damping);
  priors.gamma_clip = j.value("gamma_clip", priors.gamma_clip);
  priors.max_iter = j.value("max_iter", priors.max_iter);
  priors.tol = j.value("tol", priors.tol);
  if (j.contains("update_mode"))
    priors.update_mode = update_mode_from_string(j.at("update_mode").get<std::string>());
  priors.validate();
  return priors;
}

std::string to_json(const FitResult& result) {
  json states = json::array();
  for (const auto& s : result.states) {
    json js;
    js["a_bar"] = s.a_bar;
    js["b_bar"] = s.b_bar;
    js["c_bar"] = vec_to_std(s.c_bar);
    js["d_bar"] = vec_to_std(s.d_bar);
    js["e_bar"] = vec_to_std(s.e_bar);
    js["f_bar"] = vec_to_std(s.f_bar);
    js["mu"] = vec_to_std(s.mu);
    js["sigma2"] = vec_to_std(s.sigma2);
    js["alpha_bar_damped"] = vec_to_std(s.alpha_bar_damped);
    js["pi_bar"] = vec_to_std(s.pi_bar);
    js["rho_hat"] = s.rho_hat;
    js["alpha_hat"] = vec_to_std(s.alpha_hat);
    js["pi_hat"] = vec_to_std(s.pi_hat);
    js["gamma_hat"] = vec_to_std(s.gamma_hat);
    js["iterations"] = s.iterations;
    js["converged"] = s.converged;
    states.push_back(std::move(js));
  }
  json j;
  j["states"] = std::move(states);
  j["k_f_hat"] = matrix_to_json(result.K_F_hat);
  j["gamma"] = matrix_to_json(result.Gamma);
  j["rho_hats"] = vec_to_std(result.rho_hats);
  j["iterations_used"] = result.iterations_used;
  j["converged"] = std::vector<int>(result.converged.begin(), result.converged.end());
  return j.dump(2);
}

FitResult fit_result_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad fit-result JSON: ") + e.what());
  }
  FitResult result;
  try {
    for (const auto& js : j.at("states")) {
      PosteriorState s;
      s.a_bar = js.at("a_bar").get<double>();
      s.b_bar = js.at("b_bar").get<double>();
      s.c_bar = vec_from_std(js.at("c_bar").get<std::vector<double>>());
      s.d_bar = vec_from_std(js.at("d_bar").get<std::vector<double>>());
      s.e_bar = vec_from_std(js.at("e_bar").get<std::vector<double>>());
      s.f_bar = vec_from_std(js.at("f_bar").get<std::vector<double>>());
      s.mu = vec_from_std(js.at("mu").get<std::vector<double>>());
      s.sigma2 = vec_from_std(js.at("sigma2").get<std::vector<double>>());
      s.alpha_bar_damped = vec_from_std(js.at("alpha_bar_damped").get<std::vector<double>>());
      s.pi_bar = vec_from_std(js.at("pi_bar").get<std::vector<double>>());
      s.rho_hat = js.at("rho_hat").get<double>();
      s.alpha_hat = vec_from_std(js.at("alpha_hat").get<std::vector<double>>());
      s.pi_hat = vec_from_std(js.at("pi_hat").get<std::vector<double>>());
      s.gamma_hat = vec_from_std(js.at("gamma_hat").get<std::vector<double>>());
      s.iterations = js.at("iterations").get<int>();
      s.converged = js.at("converged").get<bool>();
      result.states.push_back(std::move(s));
    }
    result.K_F_hat = matrix_from_json(j.at("k_f_hat"));
    result.Gamma = matrix_from_json(j.at("gamma"));
    result.rho_hats = vec_from_std(j.at("rho_hats").get<std::vector<double>>());
    result.iterations_used = j.at("iterations_used").get<std::vector<int>>();
    for (int v : j.at("converged").get<std::vector<int>>())
      result.converged.push_back(v != 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad fit-result JSON: ") + e.what());
  }
  return result;
}

}  // namespace koopred::vb
