#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dagcomm/numkit.hpp"

#include "json.hpp"

namespace dagcomm::topology {

using AdjMatrix = std::vector<uint8_t>;  // n*n row-major, a[i*n+j]=1 means i sends to j

struct TopoCheck {
  bool acyclic = false;
  std::vector<int> order;  // topological order when acyclic
  std::vector<int> cycle;  // vertex set of one cycle otherwise
};

// Kahn's algorithm; on failure reports the vertices of one directed cycle.
TopoCheck validate_acyclic(const AdjMatrix& adj, int n);

// Longest-path length via boolean matrix powers: d = k-1 where k is the
// smallest power with A^k = 0. Cyclic input is a contract error.
int nilpotent_depth(const AdjMatrix& adj, int n);

// Communication graph with derived order, depth and round layering.
struct Dag {
  int n = 0;
  AdjMatrix adj;
  std::vector<int> topo_order;
  std::vector<int> round_of;  // 0 for sources, 1 + max over predecessors otherwise
  int depth = 0;

  static Dag from_adj(int n, AdjMatrix adj);  // throws ContractError on a cycle
  static Dag empty(int n) { return from_adj(n, AdjMatrix(static_cast<size_t>(n) * n, 0)); }

  bool edge(int i, int j) const { return adj[static_cast<size_t>(i) * n + j] != 0; }
  int edge_count() const;
  std::vector<int> in_neighbors(int j) const;
  std::vector<int> in_degrees() const;
  std::vector<int> out_degrees() const;

  nlohmann::json to_json() const;  // {n, edges: [[i,j],...]}
  static Dag from_json(const nlohmann::json& j);
};

std::vector<int> rounds(const Dag& dag);  // copy of the round assignment

// Agents split (seeded, near-even) into d+1 ordered layers; every earlier-layer
// agent sends to every later-layer agent. Resulting depth is exactly d.
Dag gen_layered_fc(int n, int d, uint64_t seed);

// Relabel nodes by a seeded random permutation. Structure (edge count, depth,
// degree multisets) is preserved; which agent sits where changes.
Dag shuffle_order(const Dag& dag, uint64_t seed);

// ---------------------------------------------------------------------------
// Score-based topology learner: a total order from Gumbel-perturbed priority
// scores, then independent edge inclusion for order-respecting pairs.

struct TopoLearnerParams {
  int n = 0;
  numkit::Vec priority;    // n
  numkit::Vec edge_logit;  // n*n; entry (i,j) used when i precedes j in the order
  double temperature = 1.0;

  static TopoLearnerParams create(int n, double temperature = 1.0);
};

struct SampledTopo {
  Dag dag;
  std::vector<int> order;  // sampled total order, most-upstream first
  double log_prob = 0.0;
};

// Order ~ Plackett-Luce with logits priority/temperature (Gumbel argsort,
// ties broken by lower agent index); edge (i,j) for i before j included with
// probability sigmoid(edge_logit[i][j]). Acyclic by construction.
SampledTopo sample_topology(const TopoLearnerParams& lp, uint64_t seed);

// Most probable structure: priority argsort without noise, edges with
// sigmoid(logit) > 0.5.
Dag mode_topology(const TopoLearnerParams& lp);

// d log_prob / d params for one sample, accumulated into flat grads
// (priority grads then edge grads).
void accumulate_logprob_grad(const TopoLearnerParams& lp, const SampledTopo& sample, double weight,
                             numkit::Vec& grad_priority, numkit::Vec& grad_edge);

// REINFORCE learner state: running-mean baseline plus optimizer moments.
struct TopoLearner {
  TopoLearnerParams params;
  numkit::FlatOptimState opt_priority;
  numkit::FlatOptimState opt_edge;
  double baseline = 0.0;
  bool baseline_ready = false;

  static TopoLearner create(int n, double temperature, double lr);

  // Gradient estimate: mean over the batch of (return - baseline) * grad log p,
  // applied as one ascent step; baseline then tracks the batch mean.
  void update(const std::vector<SampledTopo>& samples, const std::vector<double>& returns);
};

}  // namespace dagcomm::topology
