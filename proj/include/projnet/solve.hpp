#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "projnet/data.hpp"
#include "projnet/edge_state.hpp"
#include "projnet/graph.hpp"
#include "projnet/nn.hpp"
#include "projnet/node_projection.hpp"

namespace projnet {

enum class Method { AP, DR, CP };
const char* to_string(Method m);
Method parse_method(const std::string& s);

// Two closed sets over a flat state. apply() projects `in` onto one of them
// and combines the result into `out` per the emit mode. It returns the
// squared distance in Residual mode and the count of non-finite values
// written otherwise.
class TwoSetProblem {
 public:
  virtual ~TwoSetProblem() = default;
  virtual std::size_t dim() const = 0;
  virtual double apply(Part part, EmitMode mode, const double* in, double* out) const = 0;
};

// The Theorem-2 split of a bipartitioned graph.
class GraphProblem : public TwoSetProblem {
 public:
  GraphProblem(const Graph& g, ProjectionOptions opts);
  std::size_t dim() const override { return g_.state_size(); }
  double apply(Part part, EmitMode mode, const double* in, double* out) const override;
  const Graph& graph() const { return g_; }

 private:
  const Graph& g_;
  ProjectionOptions opts_;
  std::vector<NodeId> a_, b_;
};

// The steps return the number of non-finite values written to z.
// z <- P_A(P_B(z))
std::size_t ap_step(const TwoSetProblem& p, std::span<double> z);
// z <- (z + R_outer(R_inner(z))) / 2, using `work` as scratch. When shadow
// is non-empty it receives P_inner of the new z.
std::size_t dr_step(const TwoSetProblem& p, std::span<double> z, std::span<double> work, Part inner = Part::B,
             std::span<double> shadow = {});

void project_partition(const Graph& g, EdgeState& z, Part part, const ProjectionOptions& opts = {});
void ap_step(const Graph& g, EdgeState& z, const ProjectionOptions& opts = {});
void dr_step(const Graph& g, EdgeState& z, EdgeState& work, const ProjectionOptions& opts = {},
             Part inner = Part::B, EdgeState* shadow = nullptr);

// Ordered groups of constraint nodes; nodes within a group never share an edge.
struct Schedule {
  std::vector<std::vector<NodeId>> groups;
};
// Breadth-first from the targets, one group per depth, split where needed.
Schedule cp_schedule(const Graph& g);
// Throws std::invalid_argument if a group holds adjacent nodes or a
// constraint node is missing or repeated.
void validate_schedule(const Graph& g, const Schedule& s);
std::size_t cp_step(const Graph& g, EdgeState& z, const Schedule& s, const ProjectionOptions& opts = {});

// Sum over constraint nodes of the squared distance to each node's set.
double feasibility_residual(const Graph& g, const EdgeState& z, const ProjectionOptions& opts = {});

struct SolverConfig {
  Method method = Method::DR;
  std::size_t steps_per_batch = 50;
  TargetKind loss = TargetKind::CrossEntropyProx;
  double lambda = 5.0;
  double margin = 1.0;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::size_t max_steps = 1000;
  bool weighted_consensus = false;
  Part dr_inner = Part::B;
  // record cadence in solver steps; 0 means once per batch
  std::size_t log_every = 0;
  ScalarSolveConfig scalar;

  TargetSpec target() const {
    return loss == TargetKind::Margin ? TargetSpec::margin(margin) : TargetSpec::cross_entropy(lambda);
  }
  ProjectionOptions projection() const { return {weighted_consensus, scalar}; }
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  double residual = 0;        // feasibility residual of the iterate θ is read from
  double train_loss = 0;      // loss of the batch under the extracted θ
  double train_accuracy = 0;  // accuracy of the batch under the extracted θ
  double elapsed_ms = 0;
};

struct TrainReport {
  std::vector<StepRecord> records;
  ParamTree params;
  std::size_t steps = 0;
  std::size_t batches = 0;
  bool stopped_early = false;
};

struct TrainHooks {
  // Called after each batch with the carried θ; return false to stop.
  std::function<bool(std::size_t step, const ParamTree& params)> on_batch_end;
  std::function<void(const StepRecord&)> on_record;
};

TrainReport train(const nn::ModelSpec& model, const Dataset& data, const SolverConfig& cfg, ParamTree params,
                  const TrainHooks& hooks = {});

}  // namespace projnet
