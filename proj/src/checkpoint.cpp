#include "projnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sodium.h>

namespace projnet {

namespace {

constexpr int kB64 = sodium_base64_VARIANT_ORIGINAL;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (7 - i));
    return r;
  }
  return v;
}

const char* loss_name(TargetKind k) { return k == TargetKind::Margin ? "margin" : "ce"; }

TargetKind parse_loss(const std::string& s) {
  if (s == "margin") return TargetKind::Margin;
  if (s == "ce") return TargetKind::CrossEntropyProx;
  throw CheckpointError("unknown loss '" + s + "'");
}

}  // namespace

std::string encode_tensor_data(const Tensor& t) {
  std::vector<unsigned char> bytes(t.size() * 8);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t v = to_le(std::bit_cast<std::uint64_t>(t[i]));
    std::memcpy(bytes.data() + 8 * i, &v, 8);
  }
  std::string out(sodium_base64_encoded_len(bytes.size(), kB64), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), kB64);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<double> decode_tensor_data(const std::string& b64, std::size_t count) {
  std::vector<unsigned char> bytes(count * 8 + 8);
  std::size_t len = 0;
  if (sodium_base642bin(bytes.data(), bytes.size(), b64.data(), b64.size(), nullptr, &len, nullptr, kB64) != 0)
    throw CheckpointError("tensor payload is not valid base64");
  if (len != count * 8)
    throw CheckpointError("tensor payload holds " + std::to_string(len) + " bytes, expected " +
                          std::to_string(count * 8));
  std::vector<double> r(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + 8 * i, 8);
    r[i] = std::bit_cast<double>(to_le(v));
  }
  return r;
}

nlohmann::json solver_to_json(const SolverConfig& c) {
  const auto& s = c.scalar;
  return {
      {"method", to_string(c.method)},
      {"steps_per_batch", c.steps_per_batch},
      {"loss", loss_name(c.loss)},
      {"lambda", c.lambda},
      {"margin", c.margin},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"max_steps", c.max_steps},
      {"weighted_consensus", c.weighted_consensus},
      {"dr_inner", to_string(c.dr_inner)},
      {"log_every", c.log_every},
      {"scalar",
       {{"newton_iters", s.newton_iters},
        {"fp_iters", s.fp_iters},
        {"root_tolerance", s.root_tolerance},
        {"lambda_clamp", s.lambda_clamp},
        {"dot_bracketed", s.dot_bracketed},
        {"max_root_iters", s.max_root_iters},
        {"ce_solver", s.ce_solver == CeSolver::Newton ? "newton" : "damped_fixed_point"}}},
  };
}

SolverConfig solver_from_json(const nlohmann::json& j) {
  SolverConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.steps_per_batch = j.at("steps_per_batch").get<std::size_t>();
  c.loss = parse_loss(j.at("loss").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.margin = j.at("margin").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.weighted_consensus = j.at("weighted_consensus").get<bool>();
  std::string inner = j.at("dr_inner").get<std::string>();
  if (inner != "A" && inner != "B") throw CheckpointError("dr_inner must be A or B");
  c.dr_inner = inner == "A" ? Part::A : Part::B;
  c.log_every = j.at("log_every").get<std::size_t>();
  const auto& s = j.at("scalar");
  c.scalar.newton_iters = s.at("newton_iters").get<int>();
  c.scalar.fp_iters = s.at("fp_iters").get<int>();
  c.scalar.root_tolerance = s.at("root_tolerance").get<double>();
  c.scalar.lambda_clamp = s.at("lambda_clamp").get<double>();
  c.scalar.dot_bracketed = s.at("dot_bracketed").get<bool>();
  c.scalar.max_root_iters = s.at("max_root_iters").get<int>();
  c.scalar.ce_solver = s.at("ce_solver").get<std::string>() == "newton" ? CeSolver::Newton : CeSolver::DampedFixedPoint;
  return c;
}

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : c.params) params[name] = {{"shape", t.shape()}, {"data", encode_tensor_data(t)}};
  return {
      {"format", "projnet-checkpoint"},
      {"version", c.version},
      {"model", c.model.to_json()},
      {"seed", c.seed},
      {"solver", solver_to_json(c.solver)},
      {"params", params},
  };
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "projnet-checkpoint")
      throw CheckpointError("not a projnet checkpoint");
    int v = j.at("version").get<int>();
    if (v != kCheckpointVersion)
      throw CheckpointError("checkpoint version " + std::to_string(v) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.version = v;
    c.model = nn::ModelSpec::from_json(j.at("model"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.solver = solver_from_json(j.at("solver"));
    for (const auto& [name, shape] : c.model.param_shapes()) {
      if (!j.at("params").contains(name)) throw CheckpointError("parameter '" + name + "' is missing");
      const auto& p = j["params"][name];
      Shape s = p.at("shape").get<Shape>();
      if (s != shape)
        throw CheckpointError("parameter '" + name + "' has shape " + shape_str(s) + ", model expects " +
                              shape_str(shape));
      c.params.emplace(name, Tensor(s, decode_tensor_data(p.at("data").get<std::string>(), numel(s))));
    }
    if (j["params"].size() != c.params.size()) throw CheckpointError("checkpoint holds unknown parameters");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  f << checkpoint_to_json(c).dump(1) << '\n';
  if (!f) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("'" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace projnet
