#pragma once

#include "rigkit/math.hpp"

#include <cmath>

namespace rigkit {

struct AdamConfig {
  double learningRate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig config) : config_(config), m_(VecX::Zero(size)), v_(VecX::Zero(size)) {}

  void step(VecX& params, const VecX& grad) {
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
    params.array() -= config_.learningRate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
  }

  long steps() const {
    return t_;
  }

 private:
  AdamConfig config_;
  VecX m_;
  VecX v_;
  long t_ = 0;
};

} // namespace rigkit
