#include "pclreid/optim.hpp"

#include <cmath>

#include "pclreid/errors.hpp"

namespace pclreid {

namespace {

void check_block(std::span<const double> params, std::span<const double> grads,
                 const std::string& block) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: gradient length mismatch for block '" + block + "'");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient in parameter block '" + block + "' at index " +
                         std::to_string(i));
    }
  }
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grads, double lr,
              double weight_decay, const std::string& block) {
  check_block(params, grads, block);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * (grads[i] + weight_decay * params[i]);
  }
}

void sgd_step(std::span<const ParamBlock> blocks, double lr, double weight_decay) {
  for (const auto& b : blocks) {
    if (!b.frozen) check_block(b.values, b.grads, b.name);
  }
  for (const auto& b : blocks) {
    if (b.frozen) continue;
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      b.values[i] -= lr * (b.grads[i] + weight_decay * b.values[i]);
    }
  }
}

}  // namespace pclreid
