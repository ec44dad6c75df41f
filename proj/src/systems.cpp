#include "koopred/systems.hpp"

#include <cmath>
#include <functional>
#include <random>

#include <json.hpp>

#include "koopred/errors.hpp"
#include "koopred/random.hpp"

namespace koopred::systems {

using nlohmann::json;

namespace {

using Deriv = std::function<Eigen::Vector3d(const Eigen::Vector3d&)>;

Eigen::Vector3d rk4_step(const Deriv& f, const Eigen::Vector3d& x, double h) {
  const Eigen::Vector3d k1 = f(x);
  const Eigen::Vector3d k2 = f(x + 0.5 * h * k1);
  const Eigen::Vector3d k3 = f(x + 0.5 * h * k2);
  const Eigen::Vector3d k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_bounded(const Eigen::Vector3d& x, int step) {
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6)
    throw NumericError("integration diverged at step " + std::to_string(step));
}

}  // namespace

data::Dataset simulate_lorenz(const LorenzParams& params, const Eigen::Vector3d& x0,
                              double dt, int n_steps, std::uint64_t seed) {
  (void)seed;  // the flow is deterministic; kept for interface uniformity
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (params.substeps < 1) throw ConfigError("substeps must be >= 1");

  const Deriv f = [&](const Eigen::Vector3d& x) {
    return Eigen::Vector3d(params.sigma * (x(1) - x(0)),
                           x(0) * (params.rho - x(2)) - x(1),
                           x(0) * x(1) - params.beta * x(2));
  };

  data::Dataset d;
  d.dt = dt;
  d.states.resize(n_steps + 1, 3);
  d.inputs.resize(n_steps, 0);
  d.column_names = {"x", "y", "z"};

  Eigen::Vector3d x = x0;
  d.states.row(0) = x;
  const double h = dt / params.substeps;
  for (int k = 0; k < n_steps; ++k) {
    for (int s = 0; s < params.substeps; ++s) x = rk4_step(f, x, h);
    check_bounded(x, k + 1);
    d.states.row(k + 1) = x;
  }
  return d;
}

data::Dataset simulate_usv(const UsvParams& params, const Eigen::Vector3d& v0,
                           const Eigen::MatrixXd& input_signal, double dt, int n_steps,
                           std::uint64_t seed) {
  (void)seed;
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (params.substeps < 1) throw ConfigError("substeps must be >= 1");
  if (!(params.m11 > 0) || !(params.m22 > 0) || !(params.m33 > 0))
    throw ConfigError("mass matrix entries must be positive");
  if (input_signal.rows() < n_steps || input_signal.cols() != 2)
    throw ConfigError("input signal must provide n_steps rows of 2 channels");

  data::Dataset d;
  d.dt = dt;
  d.states.resize(n_steps + 1, 3);
  d.inputs = input_signal.topRows(n_steps);
  d.column_names = {"surge", "sway", "yaw_rate", "thrust_left", "thrust_right"};

  Eigen::Vector3d v = v0;
  d.states.row(0) = v;
  const double h = dt / params.substeps;
  for (int k = 0; k < n_steps; ++k) {
    const double tl = input_signal(k, 0);
    const double tr = input_signal(k, 1);
    const Eigen::Vector3d tau(tl + tr, 0.0, params.lever * (tl - tr));

    const Deriv f = [&](const Eigen::Vector3d& w) {
      // added-mass Coriolis: C(v) v = [-m22 v r, m11 u r, (m22 - m11) u v]
      const Eigen::Vector3d coriolis(-params.m22 * w(1) * w(2),
                                     params.m11 * w(0) * w(2),
                                     (params.m22 - params.m11) * w(0) * w(1));
      const Eigen::Vector3d damping =
          (params.d_lin.array() + params.d_quad.array() * w.array().abs()) * w.array();
      Eigen::Vector3d acc = tau - coriolis - damping;
      acc(0) /= params.m11;
      acc(1) /= params.m22;
      acc(2) /= params.m33;
      return acc;
    };

    for (int s = 0; s < params.substeps; ++s) v = rk4_step(f, v, h);
    check_bounded(v, k + 1);
    d.states.row(k + 1) = v;
  }
  return d;
}

ExcitationKind excitation_kind_from_string(const std::string& s) {
  if (s == "prbs") return ExcitationKind::prbs;
  if (s == "multisine") return ExcitationKind::multisine;
  if (s == "chirp") return ExcitationKind::chirp;
  throw ConfigError("unknown excitation kind '" + s + "'");
}

Eigen::MatrixXd excitation(ExcitationKind kind, int n_steps, int channels,
                           double amplitude, std::uint64_t seed) {
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (!(amplitude > 0)) throw ConfigError("amplitude must be > 0");

  Eigen::MatrixXd u(n_steps, channels);
  std::mt19937_64 rng(seed);
  auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  switch (kind) {
    case ExcitationKind::prbs: {
      for (int c = 0; c < channels; ++c)
        for (int k = 0; k < n_steps; ++k)
          u(k, c) = (rng() & 1u) ? amplitude : -amplitude;
      break;
    }
    case ExcitationKind::multisine: {
      const int harmonics = std::max(1, std::min(20, n_steps / 4));
      for (int c = 0; c < channels; ++c) {
        std::vector<double> phase(harmonics);
        for (auto& ph : phase) ph = 2.0 * M_PI * unit();
        Eigen::VectorXd s(n_steps);
        for (int k = 0; k < n_steps; ++k) {
          double v = 0.0;
          for (int h = 1; h <= harmonics; ++h)
            v += std::sin(2.0 * M_PI * h * k / static_cast<double>(n_steps) +
                          phase[h - 1]);
          s(k) = v;
        }
        const double peak = s.cwiseAbs().maxCoeff();
        u.col(c) = peak > 0 ? (amplitude / peak) * s : s;
      }
      break;
    }
    case ExcitationKind::chirp: {
      // sweep from one cycle per record up to 0.2 cycles per sample
      const double f0 = 1.0 / n_steps;
      const double f1 = 0.2;
      for (int c = 0; c < channels; ++c) {
        const double phase0 = 2.0 * M_PI * unit();
        for (int k = 0; k < n_steps; ++k) {
          const double x = static_cast<double>(k);
          const double arg =
              2.0 * M_PI * (f0 * x + 0.5 * (f1 - f0) * x * x / n_steps) + phase0;
          u(k, c) = amplitude * std::sin(arg);
        }
      }
      break;
    }
  }
  return u;
}

namespace {

Eigen::Vector3d vec3_from_json(const json& j, const char* key,
                               const Eigen::Vector3d& fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError(std::string(key) + " must have 3 entries");
  return Eigen::Vector3d(v[0], v[1], v[2]);
}

}  // namespace

data::Dataset simulate_from_json(const std::string& system_json, std::uint64_t seed) {
  json j;
  try {
    j = json::parse(system_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad system JSON: ") + e.what());
  }
  const std::string type = j.value("type", "");
  try {
    if (type == "lorenz") {
      LorenzParams p;
      p.sigma = j.value("sigma", p.sigma);
      p.rho = j.value("rho", p.rho);
      p.beta = j.value("beta", p.beta);
      p.substeps = j.value("substeps", p.substeps);
      const Eigen::Vector3d x0 = vec3_from_json(j, "x0", Eigen::Vector3d(1.0, 1.0, 1.0));
      return simulate_lorenz(p, x0, j.value("dt", 0.001), j.value("n_steps", 6000), seed);
    }
    if (type == "usv") {
      UsvParams p;
      if (j.contains("params")) {
        const json& pj = j.at("params");
        p.m11 = pj.value("m11", p.m11);
        p.m22 = pj.value("m22", p.m22);
        p.m33 = pj.value("m33", p.m33);
        p.d_lin = vec3_from_json(pj, "d_lin", p.d_lin);
        p.d_quad = vec3_from_json(pj, "d_quad", p.d_quad);
        p.lever = pj.value("lever", p.lever);
        p.substeps = pj.value("substeps", p.substeps);
      }
      const int n_steps = j.value("n_steps", 2000);
      const json exc = j.value("excitation", json::object());
      const Eigen::MatrixXd u = excitation(
          excitation_kind_from_string(exc.value("kind", "multisine")), n_steps, 2,
          exc.value("amplitude", 8.0), derive_seed(seed, 0xe5c));
      const Eigen::Vector3d v0 = vec3_from_json(j, "x0", Eigen::Vector3d::Zero());
      return simulate_usv(p, v0, u, j.value("dt", 0.1), n_steps, seed);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad system JSON: ") + e.what());
  }
  throw ConfigError("system type '" + type + "' is not simulatable");
}

}  // namespace koopred::systems
