#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "koopred/dataset.hpp"

namespace koopred::systems {

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  int substeps = 1;  // RK4 substeps per sample interval
};

// Classic 4th-order Runge-Kutta integration of the Lorenz equations;
// autonomous dataset (no inputs). Throws on divergence (|state| > 1e6) with
// the failing step index.
data::Dataset simulate_lorenz(const LorenzParams& params, const Eigen::Vector3d& x0,
                              double dt, int n_steps, std::uint64_t seed = 0);

// 3-DOF surge/sway/yaw body-velocity model with diagonal mass, linear plus
// quadratic damping, added-mass Coriolis coupling and two-thruster
// force/torque mixing: M v_dot + C(v) v + D(v) v = tau(u).
struct UsvParams {
  double m11 = 12.0, m22 = 16.0, m33 = 1.5;      // mass + added mass, diagonal
  Eigen::Vector3d d_lin{3.0, 6.0, 1.0};          // linear damping
  Eigen::Vector3d d_quad{4.0, 8.0, 0.5};         // quadratic damping
  double lever = 0.35;                           // thruster moment arm
  int substeps = 1;
};

// RK4 with zero-order-hold inputs. input_signal must cover n_steps rows of
// two thrust channels. Dataset holds the 3 velocity states and 2 inputs.
data::Dataset simulate_usv(const UsvParams& params, const Eigen::Vector3d& v0,
                           const Eigen::MatrixXd& input_signal, double dt, int n_steps,
                           std::uint64_t seed = 0);

enum class ExcitationKind { prbs, multisine, chirp };

ExcitationKind excitation_kind_from_string(const std::string& s);

// Deterministic persistently-exciting input signals, bounded by amplitude.
Eigen::MatrixXd excitation(ExcitationKind kind, int n_steps, int channels,
                           double amplitude, std::uint64_t seed);

// JSON-driven simulation used by the CLI and the experiment harness; the
// config object carries {"type": "lorenz"|"usv", ...}.
data::Dataset simulate_from_json(const std::string& system_json, std::uint64_t seed);

}  // namespace koopred::systems
