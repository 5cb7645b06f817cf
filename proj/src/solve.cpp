#include "projnet/solve.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <optional>
#include <queue>
#include <stdexcept>

#include "projnet/errors.hpp"

namespace projnet {

const char* to_string(Method m) {
  switch (m) {
    case Method::AP: return "ap";
    case Method::DR: return "dr";
    case Method::CP: return "cp";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "ap") return Method::AP;
  if (l == "dr") return Method::DR;
  if (l == "cp") return Method::CP;
  throw std::invalid_argument("unknown method '" + s + "' (expected ap, dr or cp)");
}

GraphProblem::GraphProblem(const Graph& g, ProjectionOptions opts) : g_(g), opts_(opts) {
  if (!g.partitioned()) throw std::invalid_argument("GraphProblem: graph is not bipartitioned");
  a_ = g.nodes_in(Part::A);
  b_ = g.nodes_in(Part::B);
}

double GraphProblem::apply(Part part, EmitMode mode, const double* in, double* out) const {
  if (part == Part::None) throw std::invalid_argument("GraphProblem: no partition given");
  return project_nodes(g_, part == Part::A ? a_ : b_, opts_, mode, in, out);
}

std::size_t ap_step(const TwoSetProblem& p, std::span<double> z) {
  p.apply(Part::B, EmitMode::Assign, z.data(), z.data());
  return static_cast<std::size_t>(p.apply(Part::A, EmitMode::Assign, z.data(), z.data()));
}

std::size_t dr_step(const TwoSetProblem& p, std::span<double> z, std::span<double> work, Part inner,
                    std::span<double> shadow) {
  if (work.size() != z.size()) throw std::invalid_argument("dr_step: scratch size mismatch");
  p.apply(inner, EmitMode::Reflect, z.data(), work.data());
  auto bad = static_cast<std::size_t>(p.apply(other(inner), EmitMode::Average, work.data(), z.data()));
  if (!shadow.empty()) {
    if (shadow.size() != z.size()) throw std::invalid_argument("dr_step: shadow size mismatch");
    p.apply(inner, EmitMode::Assign, z.data(), shadow.data());
  }
  return bad;
}

void project_partition(const Graph& g, EdgeState& z, Part part, const ProjectionOptions& opts) {
  if (!g.partitioned()) throw std::invalid_argument("project_partition: graph is not bipartitioned");
  auto nodes = g.nodes_in(part);
  project_nodes(g, nodes, opts, EmitMode::Assign, z.data(), z.data());
}

void ap_step(const Graph& g, EdgeState& z, const ProjectionOptions& opts) {
  GraphProblem p(g, opts);
  ap_step(p, z.values());
}

void dr_step(const Graph& g, EdgeState& z, EdgeState& work, const ProjectionOptions& opts, Part inner,
             EdgeState* shadow) {
  GraphProblem p(g, opts);
  work.resize(z.size());
  if (shadow) shadow->resize(z.size());
  dr_step(p, z.values(), work.values(), inner, shadow ? shadow->values() : std::span<double>{});
}

Schedule cp_schedule(const Graph& g) {
  std::size_t n = g.num_nodes();
  std::vector<std::vector<NodeId>> adj(n);
  std::vector<bool> constraint(n, false);
  for (NodeId v : g.constraint_nodes()) {
    constraint[v] = true;
    adj[v] = g.neighbors(v);
  }

  std::vector<long> depth(n, -1);
  std::vector<std::vector<NodeId>> layers;
  auto bfs = [&](std::vector<NodeId> seeds) {
    std::size_t base = layers.size();
    std::queue<NodeId> q;
    for (NodeId s : seeds) {
      depth[s] = static_cast<long>(base);
      q.push(s);
    }
    while (!q.empty()) {
      NodeId v = q.front();
      q.pop();
      std::size_t d = static_cast<std::size_t>(depth[v]);
      if (layers.size() <= d) layers.resize(d + 1);
      layers[d].push_back(v);
      for (NodeId u : adj[v])
        if (depth[u] < 0) {
          depth[u] = depth[v] + 1;
          q.push(u);
        }
    }
  };

  std::vector<NodeId> targets;
  for (NodeId v = 0; v < n; ++v)
    if (std::holds_alternative<TargetNode>(g.node(v).kind)) targets.push_back(v);
  if (!targets.empty()) bfs(targets);
  for (NodeId v = 0; v < n; ++v)
    if (constraint[v] && depth[v] < 0) bfs({v});

  Schedule s;
  for (auto& layer : layers) {
    std::sort(layer.begin(), layer.end());
    std::vector<std::vector<NodeId>> split;
    for (NodeId v : layer) {
      auto clash = [&](const std::vector<NodeId>& grp) {
        return std::any_of(grp.begin(), grp.end(), [&](NodeId u) {
          return std::find(adj[v].begin(), adj[v].end(), u) != adj[v].end();
        });
      };
      auto it = std::find_if_not(split.begin(), split.end(), clash);
      if (it == split.end())
        split.push_back({v});
      else
        it->push_back(v);
    }
    for (auto& grp : split) s.groups.push_back(std::move(grp));
  }
  return s;
}

void validate_schedule(const Graph& g, const Schedule& s) {
  std::vector<int> seen(g.num_nodes(), 0);
  for (std::size_t k = 0; k < s.groups.size(); ++k) {
    const auto& grp = s.groups[k];
    for (NodeId v : grp) {
      if (v >= g.num_nodes() || !g.node(v).is_constraint())
        throw std::invalid_argument("schedule: group " + std::to_string(k) + " holds a non-constraint node");
      if (seen[v]++) throw std::invalid_argument("schedule: node " + std::to_string(v) + " appears twice");
    }
    for (NodeId v : grp) {
      auto nb = g.neighbors(v);
      for (NodeId u : grp)
        if (std::find(nb.begin(), nb.end(), u) != nb.end())
          throw std::invalid_argument("schedule: group " + std::to_string(k) + " holds adjacent nodes " +
                                      std::to_string(v) + " and " + std::to_string(u));
    }
  }
  for (NodeId v : g.constraint_nodes())
    if (!seen[v]) throw std::invalid_argument("schedule: node " + std::to_string(v) + " is missing");
}

std::size_t cp_step(const Graph& g, EdgeState& z, const Schedule& s, const ProjectionOptions& opts) {
  double bad = 0;
  for (const auto& grp : s.groups) bad += project_nodes(g, grp, opts, EmitMode::Assign, z.data(), z.data());
  return static_cast<std::size_t>(bad);
}

double feasibility_residual(const Graph& g, const EdgeState& z, const ProjectionOptions& opts) {
  auto nodes = g.constraint_nodes();
  return project_nodes(g, nodes, opts, EmitMode::Residual, z.data(), const_cast<double*>(z.data()));
}

void SolverConfig::validate() const {
  if (steps_per_batch < 1) throw std::invalid_argument("solver: steps per batch must be >= 1");
  if (!(lambda > 0)) throw std::invalid_argument("solver: lambda must be positive");
  if (!(margin > 0)) throw std::invalid_argument("solver: margin must be positive");
  if (batch_size < 1) throw std::invalid_argument("solver: batch size must be >= 1");
  if (dr_inner == Part::None) throw std::invalid_argument("solver: DR inner partition must be A or B");
}

TrainReport train(const nn::ModelSpec& model, const Dataset& data, const SolverConfig& cfg, ParamTree params,
                  const TrainHooks& hooks) {
  cfg.validate();
  model.validate();
  std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  std::size_t bs = std::min(cfg.batch_size, n), per_epoch = n / bs;
  TargetSpec target = cfg.target();
  ProjectionOptions opts = cfg.projection();
  auto t0 = std::chrono::steady_clock::now();

  TrainReport rep;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::uint64_t rng = cfg.seed;
  EdgeState z, work;

  auto record = [&](std::size_t step, const Graph& g, const EdgeState& src, const Dataset& batch) {
    StepRecord r;
    r.step = step;
    r.residual = feasibility_residual(g, src, opts);
    ParamTree th = extract_params(g, src);
    Tensor rows = nn::logit_rows(model, nn::forward_eval(model, th, batch.inputs));
    r.train_loss = nn::mean_loss(rows, batch.labels, target);
    r.train_accuracy = nn::accuracy(rows, batch.labels);
    r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.on_record) hooks.on_record(r);
    rep.records.push_back(r);
  };

  bool stop = false;
  while (!stop && rep.steps < cfg.max_steps) {
    shuffle_indices(idx, rng);
    for (std::size_t b = 0; b < per_epoch && !stop && rep.steps < cfg.max_steps; ++b) {
      Dataset batch = data.subset(std::span<const std::size_t>(idx).subspan(b * bs, bs));
      Graph traced = nn::trace(model, params, batch.inputs, batch.labels, target);
      Graph g = cfg.method == Method::CP ? std::move(traced) : bipartition(traced);
      init_state(g, params, z);
      work.resize(z.size());

      std::size_t k_max = std::min(cfg.steps_per_batch, cfg.max_steps - rep.steps);
      Schedule sched;
      std::optional<GraphProblem> prob;
      if (cfg.method == Method::CP) {
        sched = cp_schedule(g);
        validate_schedule(g, sched);
      } else {
        prob.emplace(g, opts);
      }

      // DR reads θ from the shadow P_inner(z), materialized into `work` on demand
      auto source = [&]() -> const EdgeState& {
        if (cfg.method != Method::DR) return z;
        prob->apply(cfg.dr_inner, EmitMode::Assign, z.data(), work.data());
        return work;
      };

      for (std::size_t k = 1; k <= k_max; ++k) {
        std::size_t bad = 0;
        switch (cfg.method) {
          case Method::AP: bad = ap_step(*prob, z.values()); break;
          case Method::DR: bad = dr_step(*prob, z.values(), work.values(), cfg.dr_inner); break;
          case Method::CP: bad = cp_step(g, z, sched, opts); break;
        }
        ++rep.steps;
        if (bad)
          throw DivergenceError("train: non-finite edge state at step " + std::to_string(rep.steps) + " (batch " +
                                std::to_string(rep.batches) + ")");
        if (cfg.log_every && rep.steps % cfg.log_every == 0 && k != k_max) record(rep.steps, g, source(), batch);
      }

      const EdgeState& src = source();
      if (!src.all_finite())
        throw DivergenceError("train: non-finite shadow iterate at step " + std::to_string(rep.steps));
      params = extract_params(g, src);
      ++rep.batches;
      record(rep.steps, g, src, batch);
      if (hooks.on_batch_end && !hooks.on_batch_end(rep.steps, params)) {
        stop = true;
        rep.stopped_early = true;
      }
    }
  }
  rep.params = std::move(params);
  return rep;
}

}  // namespace projnet
