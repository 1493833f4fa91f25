#pragma once

#include <string>
#include <vector>

#include "pct3d/grad_check.hpp"

namespace pct3d {

struct BlockCheck {
  std::string block;
  double max_rel_err = 0.0;
};

// Finite-difference verification of every network block at tiny sizes
// (s <= 8, d <= 16). Parameters are drawn at a generic random point first;
// the zero-bias init would park ReLU inputs exactly on the kink for
// self-pair position offsets, where central differences are undefined.
std::vector<BlockCheck> run_gradient_suite(std::uint64_t seed = 17);

}  // namespace pct3d
