#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "projnet/nn.hpp"
#include "projnet/solve.hpp"

namespace projnet {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  nn::ModelSpec model;
  std::uint64_t seed = 0;
  SolverConfig solver;
  ParamTree params;
};

// Doubles are stored as base64 of their little-endian IEEE-754 bytes, so a
// round trip is bit exact.
std::string encode_tensor_data(const Tensor& t);
std::vector<double> decode_tensor_data(const std::string& b64, std::size_t count);

nlohmann::json solver_to_json(const SolverConfig& c);
SolverConfig solver_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& c);
// Throws CheckpointError on a version mismatch, a malformed document, or
// parameters that disagree with the model's shapes.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace projnet
