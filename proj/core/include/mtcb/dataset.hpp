#pragma once

#include <cstddef>
#include <vector>

#include "mtcb/kernels.hpp"

namespace mtcb {

/// Labeled samples of one task: inputs x and scalar targets y.
struct TaskDataset {
  std::vector<ContextVector> x;
  std::vector<double> y;

  std::size_t size() const noexcept { return x.size(); }
  bool empty() const noexcept { return x.empty(); }
  void add(ContextVector input, double target) {
    x.push_back(std::move(input));
    y.push_back(target);
  }
};

}  // namespace mtcb
