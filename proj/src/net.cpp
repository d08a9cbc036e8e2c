#include "coxq/net.hpp"

#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

#include "coxq/rng.hpp"

namespace coxq {

void DenseNet::Grads::setZero() {
  for (auto& m : dW) m.setZero();
  for (auto& v : db) v.setZero();
}

bool DenseNet::Grads::allFinite() const {
  for (const auto& m : dW)
    if (!m.allFinite()) return false;
  for (const auto& v : db)
    if (!v.allFinite()) return false;
  return true;
}

DenseNet::DenseNet(int input_dim, const std::vector<int>& hidden, int output_dim) {
  int in = input_dim;
  for (int h : hidden) {
    layers_.push_back({Mat::Zero(h, in), Vec::Zero(h), Activation::Relu});
    in = h;
  }
  layers_.push_back({Mat::Zero(output_dim, in), Vec::Zero(output_dim), Activation::Linear});
}

void DenseNet::init(Rng& rng, double head_scale) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    const int rows = static_cast<int>(layer.W.rows());
    const int cols = static_cast<int>(layer.W.cols());
    if (l + 1 == layers_.size()) {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) layer.W(i, j) = rng.uniform(-head_scale, head_scale);
    } else {
      // Orthogonal init via QR of a Gaussian matrix.
      Mat g(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) g(i, j) = rng.normal();
      if (rows >= cols) {
        Eigen::HouseholderQR<Mat> qr(g);
        Mat q = qr.householderQ() * Mat::Identity(rows, cols);
        layer.W = q;
      } else {
        Eigen::HouseholderQR<Mat> qr(g.transpose());
        Mat q = qr.householderQ() * Mat::Identity(cols, rows);
        layer.W = q.transpose();
      }
      layer.W *= std::sqrt(2.0);  // relu gain
    }
    layer.b.setZero();
  }
}

static inline void apply_act(Mat& m, Activation a) {
  if (a == Activation::Relu) m = m.cwiseMax(0.0);
}

Vec DenseNet::forward(const Vec& x) const {
  Mat out = forward(Mat(x));
  return out.col(0);
}

Mat DenseNet::forward(const Mat& X) const {
  if (X.rows() != input_dim()) throw std::invalid_argument("DenseNet::forward: input dim mismatch");
  Mat h = X;
  for (const Layer& l : layers_) {
    h = (l.W * h).colwise() + l.b;
    apply_act(h, l.act);
  }
  return h;
}

Mat DenseNet::forward(const Mat& X, Tape& tape) const {
  if (X.rows() != input_dim()) throw std::invalid_argument("DenseNet::forward: input dim mismatch");
  tape.pre.resize(layers_.size());
  tape.post.resize(layers_.size() + 1);
  tape.post[0] = X;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.pre[l] = (layers_[l].W * tape.post[l]).colwise() + layers_[l].b;
    tape.post[l + 1] = tape.pre[l];
    apply_act(tape.post[l + 1], layers_[l].act);
  }
  return tape.post.back();
}

Mat DenseNet::backward(const Tape& tape, const Mat& dOut, Grads& grads) const {
  Mat delta = dOut;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    if (layers_[l].act == Activation::Relu)
      delta = delta.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
    grads.dW[l].noalias() += delta * tape.post[l].transpose();
    grads.db[l] += delta.rowwise().sum();
    delta = layers_[l].W.transpose() * delta;
  }
  return delta;  // dL/dinput
}

Mat DenseNet::input_gradient(const Tape& tape, const Mat& dOut) const {
  Mat delta = dOut;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    if (layers_[l].act == Activation::Relu)
      delta = delta.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
    delta = layers_[l].W.transpose() * delta;
  }
  return delta;
}

DenseNet::Grads DenseNet::zeroGrads() const {
  Grads g;
  for (const Layer& l : layers_) {
    g.dW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
    g.db.push_back(Vec::Zero(l.b.size()));
  }
  return g;
}

bool DenseNet::allFinite() const {
  for (const Layer& l : layers_)
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  return true;
}

Adam::Adam(const DenseNet& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_ = net.zeroGrads();
  v_ = net.zeroGrads();
}

void Adam::step(DenseNet& net, const DenseNet::Grads& grads) {
  if (!grads.allFinite()) {
    ++skipped_;
    return;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    m_.dW[l] = beta1_ * m_.dW[l] + (1.0 - beta1_) * grads.dW[l];
    v_.dW[l] = beta2_ * v_.dW[l] + (1.0 - beta2_) * grads.dW[l].cwiseProduct(grads.dW[l]);
    layers[l].W.array() -=
        lr_ * (m_.dW[l].array() / bc1) / ((v_.dW[l].array() / bc2).sqrt() + eps_);
    m_.db[l] = beta1_ * m_.db[l] + (1.0 - beta1_) * grads.db[l];
    v_.db[l] = beta2_ * v_.db[l] + (1.0 - beta2_) * grads.db[l].cwiseProduct(grads.db[l]);
    layers[l].b.array() -=
        lr_ * (m_.db[l].array() / bc1) / ((v_.db[l].array() / bc2).sqrt() + eps_);
  }
}

void ScalarAdam::step(double& param, double grad) {
  if (!std::isfinite(grad)) return;
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad * grad;
  const double mhat = m_ / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const double vhat = v_ / (1.0 - std::pow(beta2_, static_cast<double>(t_)));
  param -= lr_ * mhat / (std::sqrt(vhat) + eps_);
}

}  // namespace coxq
