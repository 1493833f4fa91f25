#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pct3d/tensor.hpp"

namespace pct3d {

// A differentiable program rebuilt from scratch on every evaluation. The
// callback must bind its parameters through Parameter::use on the given tape
// and return a scalar loss.
using TensorProgram = std::function<Tensor(Tape&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_coord = -1;
};

// Compares the analytic gradient of `program` against central finite
// differences at sampled coordinates of each parameter. Relative error is
// |analytic - numeric| / max(1, |analytic|, |numeric|). eps must lie in
// [1e-7, 1e-3]. Up to max_coords coordinates are probed per parameter.
GradCheckResult grad_check(
    const TensorProgram& program,
    const std::vector<std::pair<std::string, Parameter*>>& params,
    double eps = 1e-5, int max_coords = 24, std::uint64_t seed = 17);

}  // namespace pct3d
