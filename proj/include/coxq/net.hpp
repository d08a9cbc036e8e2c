#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace coxq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Rng;

enum class Activation { Relu, Linear };

/// Fully connected feed-forward network with per-layer activations and
/// hand-written backward passes. Batches are stored column-wise.
class DenseNet {
 public:
  struct Layer {
    Mat W;
    Vec b;
    Activation act = Activation::Relu;
  };

  /// Gradients (or Adam moments) with the same shapes as the parameters.
  struct Grads {
    std::vector<Mat> dW;
    std::vector<Vec> db;
    void setZero();
    bool allFinite() const;
  };

  /// Activations recorded during a forward pass, consumed by backward().
  struct Tape {
    std::vector<Mat> pre;   // pre-activation per layer
    std::vector<Mat> post;  // post-activation per layer (post[0] is the input)
  };

  DenseNet() = default;
  DenseNet(int input_dim, const std::vector<int>& hidden, int output_dim);

  /// Orthogonal hidden weights, small-uniform output head, zero biases.
  void init(Rng& rng, double head_scale = 1e-3);

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().W.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().W.rows()); }

  Vec forward(const Vec& x) const;
  Mat forward(const Mat& X) const;
  Mat forward(const Mat& X, Tape& tape) const;

  /// Backpropagates dL/doutput (columns = samples). Accumulates parameter
  /// gradients into `grads` and returns dL/dinput.
  Mat backward(const Tape& tape, const Mat& dOut, Grads& grads) const;

  /// dL/dinput only, parameters untouched.
  Mat input_gradient(const Tape& tape, const Mat& dOut) const;

  Grads zeroGrads() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  bool allFinite() const;

 private:
  std::vector<Layer> layers_;
};

/// Adaptive moment estimation on one DenseNet's parameters. Non-finite
/// gradients skip the step and bump a counter.
class Adam {
 public:
  Adam() = default;
  Adam(const DenseNet& net, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(DenseNet& net, const DenseNet::Grads& grads);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }
  std::int64_t skipped() const { return skipped_; }

  // Flat views for checkpointing.
  DenseNet::Grads& m() { return m_; }
  DenseNet::Grads& v() { return v_; }
  std::int64_t& t() { return t_; }
  std::int64_t& skipped_counter() { return skipped_; }

 private:
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::int64_t skipped_ = 0;
  DenseNet::Grads m_, v_;
};

/// Adam on a single scalar (used for the entropy temperature).
class ScalarAdam {
 public:
  explicit ScalarAdam(double lr = 3e-4) : lr_(lr) {}
  void step(double& param, double grad);
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  double m_ = 0, v_ = 0;
  std::int64_t t_ = 0;
};

}  // namespace coxq
