#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pct3d/ops.hpp"
#include "pct3d/tensor.hpp"

namespace pct3d {

// Everything a forward pass needs to know about its environment. tape may be
// null for pure inference; rng is only consulted by dropout in train mode.
struct ForwardCtx {
  Tape* tape = nullptr;
  RunMode mode = RunMode::kEval;
  RandomStream* rng = nullptr;
};

// Named parameters and batch-norm statistics in registration order; the
// order defines both initialization and the checkpoint layout.
struct ParamRegistry {
  std::vector<std::pair<std::string, Parameter*>> params;
  std::vector<std::pair<std::string, BnStats*>> stats;

  void add(std::string name, Parameter* p) {
    params.emplace_back(std::move(name), p);
  }
  void add(std::string name, BnStats* s) {
    stats.emplace_back(std::move(name), s);
  }
};

void init_linear_weight(Parameter& w, RandomStream& rng);

struct LinearLayer {
  LinearLayer(int in, int out, bool with_bias = true);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);
  Tensor forward(const Tensor& x, ForwardCtx& ctx);

  Parameter weight;  // in x out
  std::optional<Parameter> bias;
};

struct BatchNormLayer {
  explicit BatchNormLayer(int channels);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);
  Tensor forward(const Tensor& x, ForwardCtx& ctx);

  Parameter gamma;
  Parameter beta;
  BnStats stats;
};

// Linear -> BatchNorm -> ReLU.
struct LbrLayer {
  LbrLayer(int in, int out);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);
  Tensor forward(const Tensor& x, ForwardCtx& ctx);

  LinearLayer lin;
  BatchNormLayer bn;
};

// Stacks per-sample coordinate blocks into one constant (B*n x 3) tensor.
Tensor stack_coords(const std::vector<PointMatrix>& coords);

// Contiguous [begin, end) row slice as a gather (differentiable).
Tensor slice_rows(const Tensor& x, int begin, int end);

}  // namespace pct3d
