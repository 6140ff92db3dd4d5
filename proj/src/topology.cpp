#include "dagcomm/topology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dagcomm/errors.hpp"
#include "dagcomm/rng.hpp"

namespace dagcomm::topology {

namespace {

void check_square(const AdjMatrix& adj, int n) {
  if (n < 0 || adj.size() != static_cast<size_t>(n) * static_cast<size_t>(n)) {
    throw ContractError("adjacency matrix is not n*n");
  }
  for (int i = 0; i < n; ++i) {
    if (adj[static_cast<size_t>(i) * n + i]) throw ContractError("self-loop on agent " + std::to_string(i));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TopoCheck validate_acyclic(const AdjMatrix& adj, int n) {
  check_square(adj, n);
  TopoCheck res;
  std::vector<int> indeg(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (adj[static_cast<size_t>(i) * n + j]) ++indeg[static_cast<size_t>(j)];
    }
  }
  std::vector<int> queue;
  for (int i = 0; i < n; ++i) {
    if (indeg[static_cast<size_t>(i)] == 0) queue.push_back(i);
  }
  // Pop the smallest ready vertex so the order is canonical.
  std::vector<int> order;
  std::vector<int> deg = indeg;
  std::vector<uint8_t> placed(static_cast<size_t>(n), 0);
  while (true) {
    int next = -1;
    for (int i = 0; i < n; ++i) {
      if (!placed[static_cast<size_t>(i)] && deg[static_cast<size_t>(i)] == 0) {
        next = i;
        break;
      }
    }
    if (next < 0) break;
    placed[static_cast<size_t>(next)] = 1;
    order.push_back(next);
    for (int j = 0; j < n; ++j) {
      if (adj[static_cast<size_t>(next) * n + j]) --deg[static_cast<size_t>(j)];
    }
  }
  if (static_cast<int>(order.size()) == n) {
    res.acyclic = true;
    res.order = std::move(order);
    return res;
  }

  // Remaining vertices all lie on or feed cycles; walk until a vertex repeats.
  std::vector<int> color(static_cast<size_t>(n), 0);  // 0 unseen, 1 on stack, 2 done
  std::vector<int> stack;
  std::function<bool(int)> dfs = [&](int v) -> bool {
    color[static_cast<size_t>(v)] = 1;
    stack.push_back(v);
    for (int j = 0; j < n; ++j) {
      if (!adj[static_cast<size_t>(v) * n + j] || placed[static_cast<size_t>(j)]) continue;
      if (color[static_cast<size_t>(j)] == 1) {
        auto it = std::find(stack.begin(), stack.end(), j);
        res.cycle.assign(it, stack.end());
        return true;
      }
      if (color[static_cast<size_t>(j)] == 0 && dfs(j)) return true;
    }
    color[static_cast<size_t>(v)] = 2;
    stack.pop_back();
    return false;
  };
  for (int i = 0; i < n && res.cycle.empty(); ++i) {
    if (!placed[static_cast<size_t>(i)] && color[static_cast<size_t>(i)] == 0) dfs(i);
  }
  std::sort(res.cycle.begin(), res.cycle.end());
  return res;
}

int nilpotent_depth(const AdjMatrix& adj, int n) {
  check_square(adj, n);
  if (n == 0) return 0;
  // A^1 = A; multiply until the power vanishes. An acyclic matrix vanishes by
  // A^n at the latest.
  AdjMatrix power = adj;
  auto is_zero = [n](const AdjMatrix& m) {
    for (uint8_t v : m) {
      if (v) return false;
    }
    return true;
  };
  int k = 1;
  while (!is_zero(power)) {
    if (k > n) throw ContractError("nilpotent_depth: adjacency matrix is cyclic");
    AdjMatrix next(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i) {
      for (int m = 0; m < n; ++m) {
        if (!power[static_cast<size_t>(i) * n + m]) continue;
        const uint8_t* arow = &adj[static_cast<size_t>(m) * n];
        uint8_t* nrow = &next[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) nrow[j] |= arow[j];
      }
    }
    power = std::move(next);
    ++k;
  }
  return k - 1;
}

Dag Dag::from_adj(int n, AdjMatrix adj) {
  TopoCheck check = validate_acyclic(adj, n);
  if (!check.acyclic) {
    std::string verts;
    for (int v : check.cycle) verts += (verts.empty() ? "" : ",") + std::to_string(v);
    throw ContractError("Dag: adjacency has a cycle {" + verts + "}");
  }
  Dag d;
  d.n = n;
  d.adj = std::move(adj);
  d.topo_order = std::move(check.order);
  d.round_of.assign(static_cast<size_t>(n), 0);
  for (int v : d.topo_order) {
    int r = 0;
    bool has_pred = false;
    for (int i = 0; i < n; ++i) {
      if (d.adj[static_cast<size_t>(i) * n + v]) {
        has_pred = true;
        r = std::max(r, d.round_of[static_cast<size_t>(i)] + 1);
      }
    }
    d.round_of[static_cast<size_t>(v)] = has_pred ? r : 0;
  }
  d.depth = 0;
  for (int r : d.round_of) d.depth = std::max(d.depth, r);
  return d;
}

int Dag::edge_count() const {
  int c = 0;
  for (uint8_t v : adj) c += v ? 1 : 0;
  return c;
}

std::vector<int> Dag::in_neighbors(int j) const {
  std::vector<int> res;
  for (int i = 0; i < n; ++i) {
    if (adj[static_cast<size_t>(i) * n + j]) res.push_back(i);
  }
  return res;
}

std::vector<int> Dag::in_degrees() const {
  std::vector<int> deg(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (adj[static_cast<size_t>(i) * n + j]) ++deg[static_cast<size_t>(j)];
    }
  }
  return deg;
}

std::vector<int> Dag::out_degrees() const {
  std::vector<int> deg(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (adj[static_cast<size_t>(i) * n + j]) ++deg[static_cast<size_t>(i)];
    }
  }
  return deg;
}

nlohmann::json Dag::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (edge(i, j)) edges.push_back({i, j});
    }
  }
  return nlohmann::json{{"n", n}, {"edges", edges}};
}

Dag Dag::from_json(const nlohmann::json& j) {
  const int n = j.at("n").get<int>();
  if (n < 0) throw ContractError("Dag::from_json: negative n");
  AdjMatrix adj(static_cast<size_t>(n) * n, 0);
  for (const auto& e : j.at("edges")) {
    const int a = e.at(0).get<int>();
    const int b = e.at(1).get<int>();
    if (a < 0 || a >= n || b < 0 || b >= n) throw ContractError("Dag::from_json: edge out of range");
    adj[static_cast<size_t>(a) * n + b] = 1;
  }
  return from_adj(n, std::move(adj));
}

std::vector<int> rounds(const Dag& dag) { return dag.round_of; }

Dag gen_layered_fc(int n, int d, uint64_t seed) {
  if (n < 2) throw ContractError("gen_layered_fc: need at least 2 agents");
  if (d < 1 || d > n - 1) throw ContractError("gen_layered_fc: depth out of [1, n-1]");
  Rng rng(mix64(seed, 0x6c61796572ULL));
  std::vector<int> agents(static_cast<size_t>(n));
  std::iota(agents.begin(), agents.end(), 0);
  rng.shuffle(agents);

  const int layers = d + 1;
  std::vector<int> sizes(static_cast<size_t>(layers), n / layers);
  std::vector<int> extra_slots(static_cast<size_t>(layers));
  std::iota(extra_slots.begin(), extra_slots.end(), 0);
  rng.shuffle(extra_slots);
  for (int i = 0; i < n % layers; ++i) ++sizes[static_cast<size_t>(extra_slots[static_cast<size_t>(i)])];

  std::vector<int> layer_of(static_cast<size_t>(n), 0);
  int cursor = 0;
  for (int l = 0; l < layers; ++l) {
    for (int s = 0; s < sizes[static_cast<size_t>(l)]; ++s) {
      layer_of[static_cast<size_t>(agents[static_cast<size_t>(cursor++)])] = l;
    }
  }

  AdjMatrix adj(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (layer_of[static_cast<size_t>(i)] < layer_of[static_cast<size_t>(j)]) {
        adj[static_cast<size_t>(i) * n + j] = 1;
      }
    }
  }
  return Dag::from_adj(n, std::move(adj));
}

Dag shuffle_order(const Dag& dag, uint64_t seed) {
  Rng rng(mix64(seed, 0x73687566666cULL));
  std::vector<int> perm(static_cast<size_t>(dag.n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  AdjMatrix adj(static_cast<size_t>(dag.n) * dag.n, 0);
  for (int i = 0; i < dag.n; ++i) {
    for (int j = 0; j < dag.n; ++j) {
      if (dag.edge(i, j)) {
        adj[static_cast<size_t>(perm[static_cast<size_t>(i)]) * dag.n + perm[static_cast<size_t>(j)]] = 1;
      }
    }
  }
  return Dag::from_adj(dag.n, std::move(adj));
}

TopoLearnerParams TopoLearnerParams::create(int n, double temperature) {
  if (n < 2) throw ContractError("TopoLearnerParams: need at least 2 agents");
  if (temperature <= 0.0) throw ContractError("TopoLearnerParams: temperature must be positive");
  TopoLearnerParams lp;
  lp.n = n;
  lp.priority.assign(static_cast<size_t>(n), 0.0);
  lp.edge_logit.assign(static_cast<size_t>(n) * n, 0.0);
  lp.temperature = temperature;
  return lp;
}

namespace {

// Plackett-Luce log-likelihood of `order` under logits priority/temperature.
double order_log_prob(const TopoLearnerParams& lp, const std::vector<int>& order) {
  const double inv_t = 1.0 / lp.temperature;
  double lp_sum = 0.0;
  for (size_t t = 0; t < order.size(); ++t) {
    double mx = -1e300;
    for (size_t s = t; s < order.size(); ++s) {
      mx = std::max(mx, lp.priority[static_cast<size_t>(order[s])] * inv_t);
    }
    double denom = 0.0;
    for (size_t s = t; s < order.size(); ++s) {
      denom += std::exp(lp.priority[static_cast<size_t>(order[s])] * inv_t - mx);
    }
    lp_sum += lp.priority[static_cast<size_t>(order[t])] * inv_t - (mx + std::log(denom));
  }
  return lp_sum;
}

std::vector<int> argsort_priority(const numkit::Vec& keys) {
  std::vector<int> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (keys[static_cast<size_t>(a)] != keys[static_cast<size_t>(b)]) {
      return keys[static_cast<size_t>(a)] > keys[static_cast<size_t>(b)];
    }
    return a < b;
  });
  return idx;
}

}  // namespace

SampledTopo sample_topology(const TopoLearnerParams& lp, uint64_t seed) {
  if (lp.n < 2) throw ContractError("sample_topology: need at least 2 agents");
  Rng rng(mix64(seed, 0x746f706fULL));

  numkit::Vec perturbed(static_cast<size_t>(lp.n));
  for (int i = 0; i < lp.n; ++i) {
    perturbed[static_cast<size_t>(i)] = lp.priority[static_cast<size_t>(i)] + lp.temperature * rng.gumbel();
  }
  SampledTopo out;
  out.order = argsort_priority(perturbed);
  out.log_prob = order_log_prob(lp, out.order);

  AdjMatrix adj(static_cast<size_t>(lp.n) * lp.n, 0);
  std::vector<int> pos(static_cast<size_t>(lp.n));
  for (int t = 0; t < lp.n; ++t) pos[static_cast<size_t>(out.order[static_cast<size_t>(t)])] = t;
  for (int i = 0; i < lp.n; ++i) {
    for (int j = 0; j < lp.n; ++j) {
      if (i == j || pos[static_cast<size_t>(i)] >= pos[static_cast<size_t>(j)]) continue;
      const double p = sigmoid(lp.edge_logit[static_cast<size_t>(i) * lp.n + j]);
      const bool include = rng.uniform() < p;
      if (include) adj[static_cast<size_t>(i) * lp.n + j] = 1;
      const double pr = include ? p : 1.0 - p;
      out.log_prob += std::log(std::max(pr, 1e-300));
    }
  }
  out.dag = Dag::from_adj(lp.n, std::move(adj));
  return out;
}

Dag mode_topology(const TopoLearnerParams& lp) {
  std::vector<int> order = argsort_priority(lp.priority);
  std::vector<int> pos(static_cast<size_t>(lp.n));
  for (int t = 0; t < lp.n; ++t) pos[static_cast<size_t>(order[static_cast<size_t>(t)])] = t;
  AdjMatrix adj(static_cast<size_t>(lp.n) * lp.n, 0);
  for (int i = 0; i < lp.n; ++i) {
    for (int j = 0; j < lp.n; ++j) {
      if (i != j && pos[static_cast<size_t>(i)] < pos[static_cast<size_t>(j)] &&
          lp.edge_logit[static_cast<size_t>(i) * lp.n + j] > 0.0) {
        adj[static_cast<size_t>(i) * lp.n + j] = 1;
      }
    }
  }
  return Dag::from_adj(lp.n, std::move(adj));
}

void accumulate_logprob_grad(const TopoLearnerParams& lp, const SampledTopo& sample, double weight,
                             numkit::Vec& grad_priority, numkit::Vec& grad_edge) {
  const int n = lp.n;
  const double inv_t = 1.0 / lp.temperature;

  // Plackett-Luce: d/d logit_k = [k chosen at t] - softmax over the remaining pool.
  for (int t = 0; t < n; ++t) {
    double mx = -1e300;
    for (int s = t; s < n; ++s) {
      mx = std::max(mx, lp.priority[static_cast<size_t>(sample.order[static_cast<size_t>(s)])] * inv_t);
    }
    double denom = 0.0;
    for (int s = t; s < n; ++s) {
      denom += std::exp(lp.priority[static_cast<size_t>(sample.order[static_cast<size_t>(s)])] * inv_t - mx);
    }
    for (int s = t; s < n; ++s) {
      const int k = sample.order[static_cast<size_t>(s)];
      const double smax =
          std::exp(lp.priority[static_cast<size_t>(k)] * inv_t - mx) / denom;
      grad_priority[static_cast<size_t>(k)] -= weight * smax * inv_t;
    }
    grad_priority[static_cast<size_t>(sample.order[static_cast<size_t>(t)])] += weight * inv_t;
  }

  std::vector<int> pos(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) pos[static_cast<size_t>(sample.order[static_cast<size_t>(t)])] = t;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || pos[static_cast<size_t>(i)] >= pos[static_cast<size_t>(j)]) continue;
      const double s = sigmoid(lp.edge_logit[static_cast<size_t>(i) * n + j]);
      const double g = sample.dag.edge(i, j) ? 1.0 - s : -s;
      grad_edge[static_cast<size_t>(i) * n + j] += weight * g;
    }
  }
}

TopoLearner TopoLearner::create(int n, double temperature, double lr) {
  TopoLearner l;
  l.params = TopoLearnerParams::create(n, temperature);
  numkit::AdamConfig cfg;
  cfg.lr = lr;
  l.opt_priority = numkit::FlatOptimState::create(l.params.priority.size(), cfg);
  l.opt_edge = numkit::FlatOptimState::create(l.params.edge_logit.size(), cfg);
  return l;
}

void TopoLearner::update(const std::vector<SampledTopo>& samples,
                         const std::vector<double>& returns) {
  if (samples.empty() || samples.size() != returns.size()) {
    throw ContractError("TopoLearner::update: empty or mismatched batch");
  }
  double batch_mean = 0.0;
  for (double r : returns) batch_mean += r;
  batch_mean /= static_cast<double>(returns.size());
  if (!baseline_ready) {
    baseline = batch_mean;
    baseline_ready = true;
  }

  numkit::Vec gp(params.priority.size(), 0.0);
  numkit::Vec ge(params.edge_logit.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    accumulate_logprob_grad(params, samples[i], (returns[i] - baseline) * inv_b, gp, ge);
  }
  // Ascent on expected return.
  for (double& g : gp) g = -g;
  for (double& g : ge) g = -g;
  numkit::optim_step_flat(params.priority, gp, opt_priority);
  numkit::optim_step_flat(params.edge_logit, ge, opt_edge);

  baseline = 0.9 * baseline + 0.1 * batch_mean;
}

}  // namespace dagcomm::topology
