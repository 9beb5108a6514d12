#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pclreid/matrix.hpp"
#include "pclreid/numerics.hpp"
#include "pclreid/optim.hpp"

namespace pclreid {

struct EncoderDims {
  std::size_t input = 64;
  std::size_t hidden = 64;
  std::size_t projection = 32;

  std::size_t output() const noexcept { return hidden + projection; }
  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// y = x * weight + bias, weight is (fan_in x fan_out).
struct LinearLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t fan_in() const noexcept { return weight.rows(); }
  std::size_t fan_out() const noexcept { return weight.cols(); }
  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

/// Two-layer encoder head with a BNNeck after each layer:
///
///   a = relu(x W1 + b1)
///   f = l2_normalize([BN1(a) | BN2(a W2 + b2)])
///
/// Layer 1 stands in for the backbone and can be frozen; layer 2 is the
/// linear projection that reduces the feature dimension.
///
/// Each head carries a generation number. Every mutable accessor to the
/// trainable parameters bumps it, which invalidates forward caches that
/// were produced before the change.
class EncoderHead {
 public:
  EncoderHead() = default;
  EncoderHead(LinearLayer layer1, LinearLayer layer2, BatchNormState bnneck1,
              BatchNormState bnneck2);

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a seeded Rng, biases zero,
  /// BNNecks at identity.
  static EncoderHead init(const EncoderDims& dims, std::uint64_t seed);

  EncoderDims dims() const noexcept;

  const LinearLayer& layer1() const noexcept { return layer1_; }
  const LinearLayer& layer2() const noexcept { return layer2_; }
  const BatchNormState& bnneck1() const noexcept { return bnneck1_; }
  const BatchNormState& bnneck2() const noexcept { return bnneck2_; }

  LinearLayer& mutable_layer1() { bump(); return layer1_; }
  LinearLayer& mutable_layer2() { bump(); return layer2_; }
  BatchNormState& mutable_bnneck1() { bump(); return bnneck1_; }
  BatchNormState& mutable_bnneck2() { bump(); return bnneck2_; }

  bool freeze_layer1() const noexcept { return freeze_layer1_; }
  void set_freeze_layer1(bool on) noexcept { freeze_layer1_ = on; }
  bool freeze_projection() const noexcept { return freeze_projection_; }
  void set_freeze_projection(bool on) noexcept { freeze_projection_ = on; }

  std::uint64_t generation() const noexcept { return generation_; }

  /// Parameters compare equal; generation and freeze flags are ignored.
  bool same_parameters(const EncoderHead& other) const;

 private:
  friend struct EncoderAccess;
  void bump();

  LinearLayer layer1_;
  LinearLayer layer2_;
  BatchNormState bnneck1_;
  BatchNormState bnneck2_;
  bool freeze_layer1_ = false;
  bool freeze_projection_ = false;
  std::uint64_t generation_ = 0;
};

/// Everything the backward pass needs from a train-mode forward.
struct EncoderCache {
  const EncoderHead* owner = nullptr;
  std::uint64_t generation = 0;
  Mode mode = Mode::eval;
  Matrix input;
  Matrix pre1;  ///< x W1 + b1
  Matrix act1;  ///< relu(pre1)
  BatchNormCache bn1;
  BatchNormCache bn2;
  NormalizedRows output;
};

struct EncoderOutput {
  Matrix features;  ///< unit rows, width = hidden + projection
  EncoderCache cache;
};

/// Train mode uses batch statistics (batch >= 2) and updates the BNNeck running
/// statistics of `head`; eval mode is a pure function of the head.
EncoderOutput encoder_forward(EncoderHead& head, const Matrix& x, Mode mode);

/// Eval-mode embedding on an immutable head.
Matrix encoder_embed(const EncoderHead& head, const Matrix& x);

/// Sets both BNNeck running statistics to the population mean and unbiased
/// variance of their inputs over `x`. Parameters are untouched.
void calibrate_batch_norm(EncoderHead& head, const Matrix& x);

struct ParamGrads {
  Matrix weight1;
  std::vector<double> bias1;
  Matrix weight2;
  std::vector<double> bias2;
  std::vector<double> scale1;
  std::vector<double> shift1;
  std::vector<double> scale2;
  std::vector<double> shift2;

  static ParamGrads zeros_like(const EncoderHead& head);
};

/// Chain rule through the head. Layer-1 gradients are exactly zero when
/// freeze_layer1 is set. Throws UsageError for a cache that did not come from a
/// train-mode forward of this head at its current generation.
ParamGrads encoder_backward(const EncoderHead& head, const EncoderCache& cache,
                            const Matrix& grad_features);

/// Named views over the trainable arrays and matching gradients, with freeze
/// flags resolved. Obtaining them bumps the head generation.
std::vector<ParamBlock> parameter_blocks(EncoderHead& head, const ParamGrads& grads);

/// sgd_step over every trainable block of the head.
void apply_sgd(EncoderHead& head, const ParamGrads& grads, double lr, double weight_decay);

}  // namespace pclreid
