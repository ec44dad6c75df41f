#include "koopred/koopman.hpp"

#include <cmath>

#include <json.hpp>

#include "koopred/errors.hpp"

namespace koopred::koopman {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::I: return "I";
    case Method::II: return "II";
    case Method::III: return "III";
    case Method::IV: return "IV";
  }
  return "I";
}

Method method_from_string(const std::string& s) {
  if (s == "I") return Method::I;
  if (s == "II") return Method::II;
  if (s == "III") return Method::III;
  if (s == "IV") return Method::IV;
  throw ConfigError("unknown method '" + s + "' (expected I, II, III or IV)");
}

Eigen::MatrixXd selection_matrix(const dict::Dictionary& dict) {
  dict.validate();
  Eigen::MatrixXd C =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dict.output_indices.size()),
                            dict.size());
  for (size_t r = 0; r < dict.output_indices.size(); ++r)
    C(static_cast<Eigen::Index>(r), dict.output_indices[r]) = 1.0;
  return C;
}

void KoopmanModel::validate() const {
  dictionary.validate();
  const int L = dictionary.size();
  const int l = dictionary.n_inputs;
  if (K_F_hat.rows() != L + l || K_F_hat.cols() != L)
    throw ConfigError("operator shape " + std::to_string(K_F_hat.rows()) + "x" +
                      std::to_string(K_F_hat.cols()) + " does not match dictionary (" +
                      std::to_string(L + l) + "x" + std::to_string(L) + ")");
  if (C.cols() != L) throw ConfigError("selection matrix column count != L");
  for (Eigen::Index r = 0; r < C.rows(); ++r) {
    int ones = 0;
    for (Eigen::Index c = 0; c < C.cols(); ++c) {
      if (C(r, c) == 1.0) ++ones;
      else if (C(r, c) != 0.0)
        throw ConfigError("selection matrix must contain only 0 and 1");
    }
    if (ones != 1) throw ConfigError("selection matrix needs exactly one 1 per row");
  }
  if (rho_hats.size() != 0 && rho_hats.size() != L)
    throw ConfigError("rho_hats length != L");
  if (Gamma.size() != 0 && (Gamma.rows() != L + l || Gamma.cols() != L))
    throw ConfigError("inclusion matrix shape does not match dictionary");
}

KoopmanModel make_model(dict::Dictionary dict, Eigen::MatrixXd K_F_hat, Method method,
                        Eigen::VectorXd rho_hats, Eigen::MatrixXd Gamma) {
  KoopmanModel model;
  model.dictionary = std::move(dict);
  model.K_F_hat = std::move(K_F_hat);
  model.C = selection_matrix(model.dictionary);
  model.method = method;
  model.rho_hats = std::move(rho_hats);
  model.Gamma = std::move(Gamma);
  model.validate();
  return model;
}

namespace {

Eigen::VectorXd lifted_step(const KoopmanModel& model, const Eigen::VectorXd& phi,
                            const Eigen::VectorXd& u) {
  const int L = model.dictionary.size();
  const int l = model.dictionary.n_inputs;
  if (phi.size() != L) throw ConfigError("lifted state has wrong dimension");
  if (u.size() != l)
    throw ConfigError("input has dimension " + std::to_string(u.size()) +
                      ", model expects " + std::to_string(l));
  Eigen::VectorXd z(L + l);
  z.head(L) = phi;
  z.tail(l) = u;
  return model.K_F_hat.transpose() * z;
}

}  // namespace

OneStep one_step(const KoopmanModel& model, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& u) {
  OneStep out;
  out.phi_next = lifted_step(model, model.dictionary.evaluate(x), u);
  out.x_next = model.C * out.phi_next;
  return out;
}

Eigen::MatrixXd rollout(const KoopmanModel& model, const Eigen::VectorXd& x0,
                        const Eigen::MatrixXd& inputs, int horizon, bool relift) {
  const int l = model.dictionary.n_inputs;
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (l > 0 && inputs.rows() < horizon)
    throw ConfigError("input sequence shorter than horizon");
  if (l > 0 && inputs.cols() != l) throw ConfigError("input sequence has wrong width");
  if (relift && model.n_out() != model.dictionary.state_dim)
    throw ConfigError("relift requires outputs covering the full state");

  Eigen::MatrixXd traj(horizon, model.n_out());
  Eigen::VectorXd phi = model.dictionary.evaluate(x0);
  const Eigen::VectorXd empty_u(0);
  for (int k = 0; k < horizon; ++k) {
    const Eigen::VectorXd u = l > 0 ? Eigen::VectorXd(inputs.row(k)) : empty_u;
    phi = lifted_step(model, phi, u);
    Eigen::VectorXd x = model.C * phi;
    if (!x.allFinite())
      throw NumericError("rollout diverged at step " + std::to_string(k));
    traj.row(k) = x;
    if (relift) phi = model.dictionary.evaluate(x);
  }
  return traj;
}

double nmse(const Eigen::VectorXd& x_true, const Eigen::VectorXd& x_pred) {
  if (x_true.size() != x_pred.size()) throw ConfigError("nmse length mismatch");
  if (x_true.size() < 2) throw ConfigError("nmse needs at least 2 samples");
  const double denom = (x_true.array() - x_true.mean()).matrix().squaredNorm();
  if (denom <= 0.0) throw DataError("nmse undefined for a constant reference signal");
  return (x_true - x_pred).squaredNorm() / denom;
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

}  // namespace

std::string to_json(const KoopmanModel& model) {
  json j;
  j["method"] = to_string(model.method);
  j["dictionary"] = json::parse(dict::to_json(model.dictionary));
  j["k_f_hat"] = matrix_to_json(model.K_F_hat);
  if (model.rho_hats.size() > 0)
    j["rho_hats"] = std::vector<double>(model.rho_hats.data(),
                                        model.rho_hats.data() + model.rho_hats.size());
  if (model.Gamma.size() > 0) j["gamma"] = matrix_to_json(model.Gamma);
  return j.dump(2);
}

KoopmanModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model JSON: ") + e.what());
  }
  try {
    dict::Dictionary d = dict::dictionary_from_json(j.at("dictionary").dump());
    Eigen::VectorXd rho;
    if (j.contains("rho_hats")) {
      const auto v = j.at("rho_hats").get<std::vector<double>>();
      rho = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
    }
    Eigen::MatrixXd gamma;
    if (j.contains("gamma")) gamma = matrix_from_json(j.at("gamma"));
    return make_model(std::move(d), matrix_from_json(j.at("k_f_hat")),
                      method_from_string(j.at("method").get<std::string>()),
                      std::move(rho), std::move(gamma));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model JSON: ") + e.what());
  }
}

}  // namespace koopred::koopman
