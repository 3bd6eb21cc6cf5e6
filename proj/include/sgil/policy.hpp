#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sgil/models.hpp"
#include "sgil/rng.hpp"

namespace sgil::policy {

struct Layer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

// Tanh MLP on hand-picked features; the output is out_scale * tanh(.) so the
// command always respects the actuator bound.
struct MlpPolicy {
  std::string features;        // unicycle | taxi | int1d
  Eigen::VectorXd shift;       // per-feature normalization: (f - shift) / scale
  Eigen::VectorXd scale;
  std::vector<Layer> layers;   // hidden layers tanh, final layer feeds the squash
  double out_scale = 1.0;
};

struct TrainConfig {
  std::vector<int> hidden{64, 64};
  double lr = 1e-3;
  int batch = 64;
  int epochs = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  MlpPolicy policy;
  std::vector<double> loss_curve;  // per-epoch mean squared error
};

// parameter gradients, same shapes as the layers
struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

int feature_dim(const std::string& tag);
Eigen::VectorXd featurize(const std::string& tag, const models::State& x);
Eigen::MatrixXd featurize_batch(const std::string& tag,
                                const std::vector<models::State>& xs);

MlpPolicy init_policy(const TrainConfig& cfg, const std::string& tag,
                      double out_scale);

double forward(const MlpPolicy& p, const models::State& x);
// F holds raw (unnormalized) features as columns
Eigen::VectorXd forward_batch(const MlpPolicy& p, const Eigen::MatrixXd& F);

// mean squared error over the batch and its parameter gradients
double loss_and_gradients(const MlpPolicy& p, const Eigen::MatrixXd& F,
                          const Eigen::VectorXd& y, Gradients& g);

TrainResult train(const std::string& tag, const std::vector<models::State>& xs,
                  const Eigen::VectorXd& labels, double out_scale,
                  const TrainConfig& cfg);

// max relative disagreement between analytic and central-difference gradients
// over n_probes randomly chosen parameters
double grad_check(const MlpPolicy& p, const Eigen::MatrixXd& F,
                  const Eigen::VectorXd& y, Rng& rng, int n_probes = 120);

}  // namespace sgil::policy
