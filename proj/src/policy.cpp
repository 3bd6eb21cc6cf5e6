#include "sgil/policy.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sgil::policy {

int feature_dim(const std::string& tag) {
  if (tag == "unicycle" || tag == "taxi") return 4;
  if (tag == "int1d") return 1;
  throw std::invalid_argument("unknown feature map: " + tag);
}

Eigen::VectorXd featurize(const std::string& tag, const models::State& x) {
  if (!x.allFinite()) throw std::invalid_argument("non-finite state");
  Eigen::VectorXd f(feature_dim(tag));
  if (tag == "unicycle")
    f << x[0], x[1], std::cos(x[2]), std::sin(x[2]);
  else if (tag == "taxi")
    f << x[0], x[1] / 200.0, std::cos(x[2]), std::sin(x[2]);
  else
    f << x[0];
  return f;
}

Eigen::MatrixXd featurize_batch(const std::string& tag,
                                const std::vector<models::State>& xs) {
  Eigen::MatrixXd F(feature_dim(tag), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) F.col(i) = featurize(tag, xs[i]);
  return F;
}

MlpPolicy init_policy(const TrainConfig& cfg, const std::string& tag,
                      double out_scale) {
  if (cfg.lr <= 0 || cfg.batch <= 0 || cfg.epochs <= 0)
    throw std::invalid_argument("hyperparameters must be positive");
  const int d = feature_dim(tag);
  MlpPolicy p;
  p.features = tag;
  p.shift = Eigen::VectorXd::Zero(d);
  p.scale = Eigen::VectorXd::Ones(d);
  p.out_scale = out_scale;
  Rng rng = Rng::stream(cfg.seed, "mlp-init");
  int fan_in = d;
  std::vector<int> widths = cfg.hidden;
  widths.push_back(1);
  for (int w : widths) {
    Layer l;
    l.W.resize(w, fan_in);
    const double a = std::sqrt(6.0 / (fan_in + w));
    for (int r = 0; r < l.W.rows(); ++r)
      for (int c = 0; c < l.W.cols(); ++c) l.W(r, c) = rng.uniform(-a, a);
    l.b = Eigen::VectorXd::Zero(w);
    p.layers.push_back(std::move(l));
    fan_in = w;
  }
  return p;
}

namespace {

// activations per layer, kept around for backprop
struct Pass {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = normalized input
  Eigen::ArrayXd squash;              // tanh of the final preactivation
};

Eigen::VectorXd run_forward(const MlpPolicy& p, const Eigen::MatrixXd& F,
                            Pass* keep) {
  const int L = static_cast<int>(p.layers.size());
  Eigen::MatrixXd a =
      p.scale.cwiseInverse().asDiagonal() * (F.colwise() - p.shift);
  if (keep) keep->acts.assign(1, a);
  for (int i = 0; i < L - 1; ++i) {
    a = ((p.layers[i].W * a).colwise() + p.layers[i].b).array().tanh();
    if (keep) keep->acts.push_back(a);
  }
  const Eigen::ArrayXd z =
      ((p.layers[L - 1].W * a).colwise() + p.layers[L - 1].b)
          .row(0)
          .transpose()
          .array();
  Eigen::ArrayXd s = z.tanh();
  if (keep) keep->squash = s;
  return p.out_scale * s.matrix();
}

}  // namespace

double forward(const MlpPolicy& p, const models::State& x) {
  const Eigen::MatrixXd F = featurize(p.features, x);
  return run_forward(p, F, nullptr)[0];
}

Eigen::VectorXd forward_batch(const MlpPolicy& p, const Eigen::MatrixXd& F) {
  return run_forward(p, F, nullptr);
}

double loss_and_gradients(const MlpPolicy& p, const Eigen::MatrixXd& F,
                          const Eigen::VectorXd& y, Gradients& g) {
  const int L = static_cast<int>(p.layers.size());
  const auto B = F.cols();
  Pass pass;
  const Eigen::VectorXd out = run_forward(p, F, &pass);
  const Eigen::ArrayXd err = (out - y).array();
  const double loss = err.square().mean();

  g.dW.resize(L);
  g.db.resize(L);
  // d loss / d out, then through the output squash
  Eigen::ArrayXd dz =
      (2.0 / B) * err * p.out_scale * (1.0 - pass.squash.square());
  Eigen::MatrixXd delta = dz.matrix().transpose();  // 1 x B
  for (int i = L - 1; i >= 0; --i) {
    g.dW[i] = delta * pass.acts[i].transpose();
    g.db[i] = delta.rowwise().sum();
    if (i > 0) {
      delta = (p.layers[i].W.transpose() * delta).array()
                  .cwiseProduct(1.0 - pass.acts[i].array().square())
                  .matrix();
    }
  }
  return loss;
}

TrainResult train(const std::string& tag, const std::vector<models::State>& xs,
                  const Eigen::VectorXd& labels, double out_scale,
                  const TrainConfig& cfg) {
  if (xs.empty() || labels.size() != static_cast<Eigen::Index>(xs.size()))
    throw std::invalid_argument("dataset empty or label count mismatch");
  const Eigen::MatrixXd F = featurize_batch(tag, xs);
  const auto N = F.cols();

  TrainResult res;
  res.policy = init_policy(cfg, tag, out_scale);
  MlpPolicy& p = res.policy;
  p.shift = F.rowwise().mean();
  for (int r = 0; r < F.rows(); ++r) {
    const double var = (F.row(r).array() - p.shift[r]).square().mean();
    const double sd = std::sqrt(var);
    p.scale[r] = sd > 1e-8 ? sd : 1.0;
  }

  const int L = static_cast<int>(p.layers.size());
  Gradients g, m, v;
  m.dW.resize(L);
  m.db.resize(L);
  v.dW.resize(L);
  v.db.resize(L);
  for (int i = 0; i < L; ++i) {
    m.dW[i] = Eigen::MatrixXd::Zero(p.layers[i].W.rows(), p.layers[i].W.cols());
    v.dW[i] = m.dW[i];
    m.db[i] = Eigen::VectorXd::Zero(p.layers[i].b.size());
    v.db[i] = m.db[i];
  }

  std::vector<Eigen::Index> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffler = Rng::stream(cfg.seed, "epoch-shuffle");
  long step = 0;

  const auto adam = [&](Eigen::Ref<Eigen::MatrixXd> w,
                        Eigen::Ref<Eigen::MatrixXd> mw,
                        Eigen::Ref<Eigen::MatrixXd> vw,
                        const Eigen::MatrixXd& grad) {
    mw = cfg.beta1 * mw + (1.0 - cfg.beta1) * grad;
    vw = cfg.beta2 * vw + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    w.array() -= cfg.lr * (mw.array() / bc1) /
                 ((vw.array() / bc2).sqrt() + cfg.eps);
  };

  res.loss_curve.reserve(cfg.epochs);
  Eigen::MatrixXd Fb;
  Eigen::VectorXd yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(perm);
    double epoch_sse = 0.0;
    for (Eigen::Index lo = 0; lo < N; lo += cfg.batch) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch, N - lo);
      Fb.resize(F.rows(), bs);
      yb.resize(bs);
      for (Eigen::Index k = 0; k < bs; ++k) {
        Fb.col(k) = F.col(perm[lo + k]);
        yb[k] = labels[perm[lo + k]];
      }
      const double loss = loss_and_gradients(p, Fb, yb, g);
      if (!std::isfinite(loss))
        throw std::runtime_error("training loss became non-finite at epoch " +
                                 std::to_string(epoch));
      epoch_sse += loss * bs;
      ++step;
      for (int i = 0; i < L; ++i) {
        adam(p.layers[i].W, m.dW[i], v.dW[i], g.dW[i]);
        Eigen::Map<Eigen::MatrixXd> bmap(p.layers[i].b.data(),
                                         p.layers[i].b.size(), 1);
        Eigen::Map<Eigen::MatrixXd> mmap(m.db[i].data(), m.db[i].size(), 1);
        Eigen::Map<Eigen::MatrixXd> vmap(v.db[i].data(), v.db[i].size(), 1);
        adam(bmap, mmap, vmap, g.db[i]);
      }
    }
    res.loss_curve.push_back(epoch_sse / N);
  }
  return res;
}

double grad_check(const MlpPolicy& p, const Eigen::MatrixXd& F,
                  const Eigen::VectorXd& y, Rng& rng, int n_probes) {
  if (F.cols() == 0) throw std::invalid_argument("empty batch");
  Gradients g;
  loss_and_gradients(p, F, y, g);
  MlpPolicy q = p;
  const double h = 1e-6;
  double worst = 0.0;
  Gradients scratch;
  const int L = static_cast<int>(p.layers.size());
  for (int probe = 0; probe < n_probes; ++probe) {
    const int li = rng.uniform_int(0, L - 1);
    const bool bias = rng.uniform01() < 0.2;
    double* ref;
    double analytic;
    if (bias) {
      const int r = rng.uniform_int(0, static_cast<int>(q.layers[li].b.size()) - 1);
      ref = &q.layers[li].b[r];
      analytic = g.db[li][r];
    } else {
      const int r = rng.uniform_int(0, static_cast<int>(q.layers[li].W.rows()) - 1);
      const int c = rng.uniform_int(0, static_cast<int>(q.layers[li].W.cols()) - 1);
      ref = &q.layers[li].W(r, c);
      analytic = g.dW[li](r, c);
    }
    const double keep = *ref;
    *ref = keep + h;
    const double up = loss_and_gradients(q, F, y, scratch);
    *ref = keep - h;
    const double dn = loss_and_gradients(q, F, y, scratch);
    *ref = keep;
    const double numeric = (up - dn) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace sgil::policy
