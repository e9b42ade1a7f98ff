#include "dtc/protocols/bc.hpp"

#include <chrono>
#include <cmath>

#include "dtc/env/io.hpp"

namespace dtc::protocols {

using nlohmann::json;
using MatRd = model::MatR<double>;

json bc_config_to_json(const BcConfig& c) {
  return {{"hidden", c.hidden},   {"n_hidden", c.n_hidden}, {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"seed", c.seed},   {"lr", c.hyper.lr},
          {"weight_decay", c.hyper.weight_decay}};
}

BcConfig bc_config_from_json(const json& j, BcConfig c) {
  if (!j.is_object()) throw ValidationError("bc config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "hidden") c.hidden = v.get<int>();
      else if (k == "n_hidden") c.n_hidden = v.get<int>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "lr") c.hyper.lr = v.get<double>();
      else if (k == "weight_decay") c.hyper.weight_decay = v.get<double>();
      else throw ValidationError("unknown bc config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bc config: ") + e.what());
  }
  if (c.hidden < 1 || c.n_hidden < 0 || c.epochs < 0 || c.batch_size < 1)
    throw ValidationError("bc config: hidden >= 1, n_hidden >= 0, epochs >= 0, batch_size >= 1 required");
  return c;
}

namespace {

double gelu(double x) {
  const double c = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  const double c = 0.7978845608028654;
  const double th = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3 * 0.044715 * x * x);
}

int n_layers(const BcModel& m) { return static_cast<int>(m.params.size() / 2); }

std::string wname(int i) { return "l" + std::to_string(i) + ".W"; }
std::string bname(int i) { return "l" + std::to_string(i) + ".b"; }

// Forward over rows; keeps pre-activations when `pre` is given.
MatRd run(const BcModel& m, const MatRd& x, std::vector<MatRd>* ins, std::vector<MatRd>* pre) {
  const int L = n_layers(m);
  MatRd h = x;
  for (int i = 0; i < L; ++i) {
    if (ins) ins->push_back(h);
    MatRd z = h * m.params[wname(i)].transpose();
    z.rowwise() += m.params[bname(i)].row(0);
    if (i + 1 == L) return z;
    if (pre) pre->push_back(z);
    h = z.unaryExpr([](double v) { return gelu(v); });
  }
  return h;
}

}  // namespace

Vec BcModel::predict(const Vec& obs) const {
  require(obs.size() == n_o, "BcModel: observation has length " + std::to_string(obs.size()));
  MatRd x = obs.transpose();
  return run(*this, x, nullptr, nullptr).row(0).transpose();
}

Mat BcModel::predict_rows(const Mat& obs) const {
  require(obs.cols() == n_o, "BcModel: observation rows have the wrong width");
  return run(*this, MatRd(obs), nullptr, nullptr);
}

BcModel init_bc(int n_o, int n_a, const BcConfig& cfg) {
  require(n_o >= 1 && n_a >= 1, "init_bc: dimensions must be positive");
  BcModel m;
  m.n_o = n_o;
  m.n_a = n_a;
  Rng rng(cfg.seed);
  int in = n_o;
  for (int i = 0; i <= cfg.n_hidden; ++i) {
    const int out = i == cfg.n_hidden ? n_a : cfg.hidden;
    // Variance 1/fan_in keeps activations O(1) through the depth.
    MatRd W(out, in);
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = rng.normal(0.0, sd);
    m.params.add(wname(i), std::move(W), true);
    m.params.add(bname(i), MatRd::Zero(1, out), false);
    in = out;
  }
  return m;
}

namespace {

void stack_pairs(const std::vector<data::Trajectory>& trajs, MatRd& X, MatRd& Y) {
  Eigen::Index n = 0;
  for (const auto& t : trajs) n += t.obs.rows();
  require(n > 0, "behavior cloning: no samples");
  X.resize(n, trajs.front().obs.cols());
  Y.resize(n, trajs.front().act.cols());
  Eigen::Index r = 0;
  for (const auto& t : trajs) {
    require(t.obs.cols() == X.cols() && t.act.cols() == Y.cols(), "behavior cloning: mixed dimensions");
    X.middleRows(r, t.obs.rows()) = t.obs;
    Y.middleRows(r, t.act.rows()) = t.act;
    r += t.obs.rows();
  }
}

}  // namespace

BcTrainResult train_bc(const std::vector<data::Trajectory>& trajs, const BcConfig& cfg) {
  require(!trajs.empty(), "train_bc: no trajectories");
  MatRd X, Y;
  stack_pairs(trajs, X, Y);
  BcTrainResult res{init_bc(static_cast<int>(X.cols()), static_cast<int>(Y.cols()), cfg), {}};
  BcModel& m = res.model;
  const int L = n_layers(m);
  model::AdamWState<double> state;
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<std::size_t> idx(n);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.next_u64() % i)]);
    for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(n, b0 + static_cast<std::size_t>(cfg.batch_size));
      const auto B = static_cast<Eigen::Index>(b1 - b0);
      MatRd xb(B, X.cols()), yb(B, Y.cols());
      for (Eigen::Index r = 0; r < B; ++r) {
        xb.row(r) = X.row(static_cast<Eigen::Index>(idx[b0 + static_cast<std::size_t>(r)]));
        yb.row(r) = Y.row(static_cast<Eigen::Index>(idx[b0 + static_cast<std::size_t>(r)]));
      }
      std::vector<MatRd> ins, pre;
      const MatRd out = run(m, xb, &ins, &pre);
      const MatRd err = out - yb;
      const double loss = err.squaredNorm() / static_cast<double>(err.size());
      if (!std::isfinite(loss)) throw model::NumericalFault("behavior cloning: non-finite loss at step " + std::to_string(step));
      model::TensorList<double> grads = m.params.zeros_like();
      MatRd d = err * (2.0 / static_cast<double>(err.size()));
      for (int i = L - 1; i >= 0; --i) {
        grads[wname(i)] = d.transpose() * ins[static_cast<std::size_t>(i)];
        grads[bname(i)] = d.colwise().sum();
        if (i == 0) break;
        d = (d * m.params[wname(i)]).cwiseProduct(
            pre[static_cast<std::size_t>(i - 1)].unaryExpr([](double v) { return gelu_grad(v); }));
      }
      model::adamw_step(m.params, grads, state, cfg.hyper);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.log.push_back({step++, loss, cfg.hyper.lr, wall});
    }
  }
  return res;
}

double bc_mse(const BcModel& model, const std::vector<data::Trajectory>& trajs) {
  MatRd X, Y;
  stack_pairs(trajs, X, Y);
  const MatRd err = run(model, X, nullptr, nullptr) - Y;
  return err.squaredNorm() / static_cast<double>(err.size());
}

json bc_model_to_json(const BcModel& m) {
  json layers = json::array();
  for (const auto& t : m.params) layers.push_back({{"name", t.name}, {"value", env::matrix_to_json(t.value)}});
  return {{"n_o", m.n_o}, {"n_a", m.n_a}, {"tensors", std::move(layers)}};
}

BcModel bc_model_from_json(const json& j) {
  try {
    BcModel m;
    m.n_o = j.at("n_o").get<int>();
    m.n_a = j.at("n_a").get<int>();
    for (const auto& t : j.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      m.params.add(name, env::matrix_from_json(t.at("value"), name), name.back() == 'W');
    }
    const int L = n_layers(m);
    if (L < 1 || static_cast<int>(m.params.size()) != 2 * L) throw ValidationError("bc model: bad tensor list");
    int in = m.n_o;
    for (int i = 0; i < L; ++i) {
      const auto& W = m.params[wname(i)];
      const auto& b = m.params[bname(i)];
      if (W.cols() != in || b.rows() != 1 || b.cols() != W.rows())
        throw ValidationError("bc model: tensor '" + wname(i) + "' has the wrong shape");
      in = static_cast<int>(W.rows());
    }
    if (in != m.n_a) throw ValidationError("bc model: output width does not match n_a");
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bc model: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ValidationError(std::string("bc model: ") + e.what());
  }
}

}  // namespace dtc::protocols
