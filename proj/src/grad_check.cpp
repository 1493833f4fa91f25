#include "pct3d/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pct3d {

namespace {

double forward_value(const TensorProgram& program) {
  Tape tape;
  return program(tape).scalar_value();
}

}  // namespace

GradCheckResult grad_check(
    const TensorProgram& program,
    const std::vector<std::pair<std::string, Parameter*>>& params,
    double eps, int max_coords, std::uint64_t seed) {
  if (eps < 1e-7 || eps > 1e-3) {
    throw ValueError("grad_check: eps outside [1e-7, 1e-3]");
  }
  for (auto& [name, p] : params) p->zero_grad();
  {
    Tape tape;
    Tensor loss = program(tape);
    tape.backward(loss);
  }

  GradCheckResult result;
  RandomStream rng(seed);
  for (auto& [name, p] : params) {
    const std::int64_t n = p->size();
    std::vector<std::int64_t> coords;
    if (n <= max_coords) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int i = 0; i < max_coords; ++i)
        coords.push_back(rng.uniform_int(static_cast<int>(n)));
    }
    for (std::int64_t c : coords) {
      double& slot = p->values()[static_cast<std::size_t>(c)];
      const double saved = slot;
      slot = saved + eps;
      const double up = forward_value(program);
      slot = saved - eps;
      const double down = forward_value(program);
      slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad()[static_cast<std::size_t>(c)];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name;
        result.worst_coord = c;
      }
    }
  }
  return result;
}

}  // namespace pct3d
