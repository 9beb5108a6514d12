#pragma once

#include <span>
#include <string>
#include <vector>

namespace pclreid {

/// One contiguous trainable array paired with its gradient.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
  bool frozen = false;
};

/// Plain SGD with L2 weight decay: p <- p - lr * (g + wd * p).
/// Throws NumericError naming `block` if any gradient entry is non-finite;
/// the parameters are left untouched in that case.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr,
              double weight_decay, const std::string& block = "params");

/// Applies sgd_step to every non-frozen block. All blocks are validated
/// before any of them is modified.
void sgd_step(std::span<const ParamBlock> blocks, double lr, double weight_decay);

}  // namespace pclreid
