#include "pct3d/layers.hpp"

#include <cmath>
#include <numeric>

namespace pct3d {

void init_linear_weight(Parameter& w, RandomStream& rng) {
  if (w.shape().size() != 2) throw ContractError("init_linear_weight: rank != 2");
  const double fan_in = w.shape()[0], fan_out = w.shape()[1];
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
}

LinearLayer::LinearLayer(int in, int out, bool with_bias)
    : weight({in, out}) {
  if (with_bias) bias.emplace(Shape{out});
}

void LinearLayer::register_into(ParamRegistry& reg, const std::string& prefix) {
  reg.add(prefix + ".weight", &weight);
  if (bias) reg.add(prefix + ".bias", &*bias);
}

void LinearLayer::init(RandomStream& rng) {
  init_linear_weight(weight, rng);
  if (bias) std::fill(bias->values().begin(), bias->values().end(), 0.0);
}

Tensor LinearLayer::forward(const Tensor& x, ForwardCtx& ctx) {
  Tensor y = matmul(x, weight.use(ctx.tape));
  if (bias) y = add_bias(y, bias->use(ctx.tape));
  return y;
}

BatchNormLayer::BatchNormLayer(int channels)
    : gamma({channels}), beta({channels}), stats(channels) {}

void BatchNormLayer::register_into(ParamRegistry& reg, const std::string& prefix) {
  reg.add(prefix + ".gamma", &gamma);
  reg.add(prefix + ".beta", &beta);
  reg.add(prefix, &stats);
}

void BatchNormLayer::init(RandomStream&) {
  std::fill(gamma.values().begin(), gamma.values().end(), 1.0);
  std::fill(beta.values().begin(), beta.values().end(), 0.0);
}

Tensor BatchNormLayer::forward(const Tensor& x, ForwardCtx& ctx) {
  return batch_norm(x, gamma.use(ctx.tape), beta.use(ctx.tape), stats, ctx.mode);
}

LbrLayer::LbrLayer(int in, int out) : lin(in, out), bn(out) {}

void LbrLayer::register_into(ParamRegistry& reg, const std::string& prefix) {
  lin.register_into(reg, prefix + ".lin");
  bn.register_into(reg, prefix + ".bn");
}

void LbrLayer::init(RandomStream& rng) {
  lin.init(rng);
  bn.init(rng);
}

Tensor LbrLayer::forward(const Tensor& x, ForwardCtx& ctx) {
  return relu(bn.forward(lin.forward(x, ctx), ctx));
}

Tensor stack_coords(const std::vector<PointMatrix>& coords) {
  std::int64_t rows = 0;
  for (const auto& c : coords) rows += c.rows();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(rows) * 3);
  for (const auto& c : coords) {
    data.insert(data.end(), c.data(), c.data() + c.size());
  }
  return Tensor::from_data({static_cast<int>(rows), 3}, std::move(data));
}

Tensor slice_rows(const Tensor& x, int begin, int end) {
  std::vector<int> idx(static_cast<std::size_t>(end - begin));
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(x, std::move(idx));
}

}  // namespace pct3d
