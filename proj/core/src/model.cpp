#include "pclreid/model.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "pclreid/errors.hpp"
#include "pclreid/rng.hpp"

namespace pclreid {

namespace {

std::atomic<std::uint64_t> g_generation{0};

std::uint64_t next_generation() { return ++g_generation; }

LinearLayer init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  LinearLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& w : layer.weight.values()) w = rng.uniform_symmetric(bound);
  return layer;
}

void check_layer(const LinearLayer& layer, const char* name) {
  if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
    throw ShapeError(std::string(name) + ": empty weight matrix");
  }
  if (layer.bias.size() != layer.weight.cols()) {
    throw ShapeError(std::string(name) + ": bias length does not match fan_out");
  }
}

void check_bn(const BatchNormState& bn, std::size_t dim, const char* name) {
  if (bn.scale.size() != dim || bn.shift.size() != dim || bn.running_mean.size() != dim ||
      bn.running_var.size() != dim) {
    throw ShapeError(std::string(name) + ": state length does not match feature width");
  }
  if (!(bn.eps > 0.0)) throw ShapeError(std::string(name) + ": eps must be positive");
}

}  // namespace

EncoderHead::EncoderHead(LinearLayer layer1, LinearLayer layer2, BatchNormState bnneck1,
                         BatchNormState bnneck2)
    : layer1_(std::move(layer1)),
      layer2_(std::move(layer2)),
      bnneck1_(std::move(bnneck1)),
      bnneck2_(std::move(bnneck2)),
      generation_(next_generation()) {
  check_layer(layer1_, "layer1");
  check_layer(layer2_, "layer2");
  if (layer2_.fan_in() != layer1_.fan_out()) {
    throw ShapeError("layer2 fan_in must equal layer1 fan_out");
  }
  check_bn(bnneck1_, layer1_.fan_out(), "bnneck1");
  check_bn(bnneck2_, layer2_.fan_out(), "bnneck2");
}

EncoderHead EncoderHead::init(const EncoderDims& dims, std::uint64_t seed) {
  if (dims.input == 0 || dims.hidden == 0 || dims.projection == 0) {
    throw ConfigError("dims", "all encoder dimensions must be >= 1");
  }
  Rng rng(seed);
  LinearLayer l1 = init_linear(dims.input, dims.hidden, rng);
  LinearLayer l2 = init_linear(dims.hidden, dims.projection, rng);
  return EncoderHead(std::move(l1), std::move(l2), BatchNormState::identity(dims.hidden),
                     BatchNormState::identity(dims.projection));
}

EncoderDims EncoderHead::dims() const noexcept {
  return {layer1_.fan_in(), layer1_.fan_out(), layer2_.fan_out()};
}

bool EncoderHead::same_parameters(const EncoderHead& other) const {
  return layer1_ == other.layer1_ && layer2_ == other.layer2_ && bnneck1_ == other.bnneck1_ &&
         bnneck2_ == other.bnneck2_;
}

void EncoderHead::bump() { generation_ = next_generation(); }

struct EncoderAccess {
  static BatchNormState& bn1(EncoderHead& h) { return h.bnneck1_; }
  static BatchNormState& bn2(EncoderHead& h) { return h.bnneck2_; }
};

EncoderOutput encoder_forward(EncoderHead& head, const Matrix& x, Mode mode) {
  const EncoderDims d = head.dims();
  if (x.cols() != d.input) {
    throw ShapeError("encoder_forward: input width " + std::to_string(x.cols()) +
                     " does not match encoder input " + std::to_string(d.input));
  }
  EncoderOutput out;
  EncoderCache& c = out.cache;
  c.pre1 = linear_forward(x, head.layer1().weight, head.layer1().bias);
  c.act1 = relu_forward(c.pre1);
  const Matrix pre2 = linear_forward(c.act1, head.layer2().weight, head.layer2().bias);
  Matrix h1 = batch_norm_forward(c.act1, EncoderAccess::bn1(head), mode, &c.bn1);
  Matrix h2 = batch_norm_forward(pre2, EncoderAccess::bn2(head), mode, &c.bn2);
  c.output = l2_normalize_rows(concat_cols(h1, h2));
  out.features = c.output.unit;
  c.owner = &head;
  c.generation = head.generation();
  c.mode = mode;
  c.input = x;
  return out;
}

Matrix encoder_embed(const EncoderHead& head, const Matrix& x) {
  const EncoderDims d = head.dims();
  if (x.cols() != d.input) {
    throw ShapeError("encoder_embed: input width " + std::to_string(x.cols()) +
                     " does not match encoder input " + std::to_string(d.input));
  }
  const Matrix act1 = relu_forward(linear_forward(x, head.layer1().weight, head.layer1().bias));
  const Matrix pre2 = linear_forward(act1, head.layer2().weight, head.layer2().bias);
  return l2_normalize_rows(concat_cols(batch_norm_eval(act1, head.bnneck1()),
                                       batch_norm_eval(pre2, head.bnneck2())))
      .unit;
}

namespace {

void set_population_stats(BatchNormState& bn, const Matrix& x) {
  const std::size_t n = x.rows();
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    bn.running_mean[c] = mean;
    bn.running_var[c] = ss / static_cast<double>(n - 1);
  }
}

}  // namespace

void calibrate_batch_norm(EncoderHead& head, const Matrix& x) {
  if (x.rows() < 2) throw UsageError("calibrate_batch_norm: need at least two rows");
  if (x.cols() != head.dims().input) {
    throw ShapeError("calibrate_batch_norm: input width " + std::to_string(x.cols()) +
                     " does not match encoder input " + std::to_string(head.dims().input));
  }
  const Matrix act1 = relu_forward(linear_forward(x, head.layer1().weight, head.layer1().bias));
  const Matrix pre2 = linear_forward(act1, head.layer2().weight, head.layer2().bias);
  set_population_stats(EncoderAccess::bn1(head), act1);
  set_population_stats(EncoderAccess::bn2(head), pre2);
}

ParamGrads ParamGrads::zeros_like(const EncoderHead& head) {
  const EncoderDims d = head.dims();
  ParamGrads g;
  g.weight1 = Matrix(d.input, d.hidden);
  g.bias1.assign(d.hidden, 0.0);
  g.weight2 = Matrix(d.hidden, d.projection);
  g.bias2.assign(d.projection, 0.0);
  g.scale1.assign(d.hidden, 0.0);
  g.shift1.assign(d.hidden, 0.0);
  g.scale2.assign(d.projection, 0.0);
  g.shift2.assign(d.projection, 0.0);
  return g;
}

ParamGrads encoder_backward(const EncoderHead& head, const EncoderCache& cache,
                            const Matrix& grad_features) {
  if (cache.mode != Mode::train) {
    throw UsageError("encoder_backward: cache comes from an eval-mode forward");
  }
  if (cache.owner != &head || cache.generation != head.generation()) {
    throw UsageError("encoder_backward: stale or mismatched forward cache");
  }
  const EncoderDims d = head.dims();
  if (grad_features.rows() != cache.input.rows() || grad_features.cols() != d.output()) {
    throw ShapeError("encoder_backward: gradient shape does not match forward output");
  }

  ParamGrads g = ParamGrads::zeros_like(head);
  const Matrix grad_concat = l2_normalize_rows_backward(cache.output, grad_features);
  const Matrix grad_h1 = slice_cols(grad_concat, 0, d.hidden);
  const Matrix grad_h2 = slice_cols(grad_concat, d.hidden, d.output());

  BatchNormGrads bn2 = batch_norm_backward(cache.bn2, head.bnneck2(), grad_h2);
  g.scale2 = std::move(bn2.scale);
  g.shift2 = std::move(bn2.shift);
  LinearGrads lin2 = linear_backward(cache.act1, head.layer2().weight, bn2.input);
  g.weight2 = std::move(lin2.weight);
  g.bias2 = std::move(lin2.bias);

  BatchNormGrads bn1 = batch_norm_backward(cache.bn1, head.bnneck1(), grad_h1);
  g.scale1 = std::move(bn1.scale);
  g.shift1 = std::move(bn1.shift);

  if (!head.freeze_layer1()) {
    Matrix grad_act1 = std::move(bn1.input);
    axpy(1.0, lin2.input.values(), grad_act1.values());
    const Matrix grad_pre1 = relu_backward(cache.pre1, grad_act1);
    LinearGrads lin1 = linear_backward(cache.input, head.layer1().weight, grad_pre1);
    g.weight1 = std::move(lin1.weight);
    g.bias1 = std::move(lin1.bias);
  }
  return g;
}

std::vector<ParamBlock> parameter_blocks(EncoderHead& head, const ParamGrads& grads) {
  const bool f1 = head.freeze_layer1();
  const bool f2 = head.freeze_projection();
  LinearLayer& l1 = head.mutable_layer1();
  LinearLayer& l2 = head.mutable_layer2();
  BatchNormState& bn1 = head.mutable_bnneck1();
  BatchNormState& bn2 = head.mutable_bnneck2();
  return {
      {"layer1.weight", l1.weight.values(), grads.weight1.values(), f1},
      {"layer1.bias", l1.bias, grads.bias1, f1},
      {"layer2.weight", l2.weight.values(), grads.weight2.values(), f2},
      {"layer2.bias", l2.bias, grads.bias2, f2},
      {"bnneck1.scale", bn1.scale, grads.scale1, false},
      {"bnneck1.shift", bn1.shift, grads.shift1, bn1.freeze_shift},
      {"bnneck2.scale", bn2.scale, grads.scale2, false},
      {"bnneck2.shift", bn2.shift, grads.shift2, bn2.freeze_shift},
  };
}

void apply_sgd(EncoderHead& head, const ParamGrads& grads, double lr, double weight_decay) {
  const auto blocks = parameter_blocks(head, grads);
  sgd_step(blocks, lr, weight_decay);
}

}  // namespace pclreid
