#pragma once

#include <stdexcept>
#include <string>

namespace projnet {

// Shape disagreement while building a graph or evaluating a model.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A transform was asked for something it cannot do exactly,
// e.g. writing back through an index that drops elements.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// The forward pass produced NaN/Inf while initializing edge state.
struct InitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Solver state stopped being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace projnet
