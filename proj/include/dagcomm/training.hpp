#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dagcomm/comms.hpp"
#include "dagcomm/envs.hpp"
#include "dagcomm/metrics.hpp"
#include "dagcomm/numkit.hpp"
#include "dagcomm/topology.hpp"

namespace dagcomm::training {

using numkit::MlpParams;
using numkit::Vec;

// One agent's parameter bundle. Agents sharing weights point at the same
// group; PP and TJ use a single group, PCP one per role.
struct AgentNetsOwned {
  MlpParams encoder;   // obs -> hidden (tanh output)
  MlpParams msg_head;  // hidden -> msg_width (identity)
  MlpParams update;    // hidden + msg_width + act_summary -> hidden (tanh)
  MlpParams actor;     // hidden -> hidden -> n_actions (softmax)
};

struct PolicySet {
  std::vector<AgentNetsOwned> groups;
  std::vector<int> group_of;  // agent -> group
  MlpParams critic;           // n_agents * hidden -> 2*hidden -> 1 (identity)
  int hidden_width = 32;
  int msg_width = 16;
  int act_summary_width = 0;
  std::vector<int> actions_per_group;

  static PolicySet create(const envs::Env& proto, int hidden_width, int msg_width, uint64_t seed);

  comms::AgentNets net_views() const;
  std::vector<int> action_widths() const;  // per agent
  int n_agents() const { return static_cast<int>(group_of.size()); }
};

struct TrainConfig {
  envs::GridConfig env;
  std::string topo_mode = "none";  // none|broadcast|learned|shuffled|fc-d1|fc-d2|fc-d4
  int epochs = 200;
  int batches_per_epoch = 2;
  int episodes_per_batch = 100;
  double lambda_iei = 0.0;
  double lambda_sei = 0.0;
  double gamma = 0.99;
  double entropy_bonus = 0.01;
  uint64_t seed = 0;
  int eval_episodes = 100;
  double lr = 1e-3;
  int hidden_width = 32;
  int msg_width = 16;
  double max_grad_norm = 5.0;
  double learner_lr = 0.02;
  double temperature = 1.0;
  uint64_t shuffle_seed = 1;

  void validate() const;
  comms::TopologyMode comm_mode() const;
  bool uses_learner() const { return topo_mode == "learned" || topo_mode == "shuffled"; }
  int fixed_depth() const;  // K for fc-dK modes, -1 otherwise
};

// Everything one episode produced, indexed [step][agent].
struct EpisodeTrace {
  std::vector<std::vector<Vec>> obs;
  std::vector<std::vector<uint8_t>> active;
  std::vector<std::vector<int>> actions;   // -1 for inactive slots
  std::vector<std::vector<double>> rewards;
  std::vector<std::vector<int>> units;     // RL unit identity per slot (-1 inactive)
  std::vector<std::vector<Vec>> payloads;  // outgoing messages (empty in mode none)
  comms::CommLedger ledger;

  comms::TopologyMode mode = comms::TopologyMode::None;
  bool has_dag = false;
  topology::Dag exec_dag;        // topology actually executed
  topology::SampledTopo sampled; // learner's sample (learned/shuffled modes)
  bool from_learner = false;

  bool success = false;
  int length = 0;
  double episode_return = 0.0;  // sum over steps of the mean active-agent reward
  uint64_t env_seed = 0;
};

// Plays one episode. Deterministic given (proto config, cfg, learner state,
// ep_seed). Greedy mode takes argmax actions and, in learned/shuffled modes,
// the learner's mode topology.
EpisodeTrace rollout(const envs::Env& proto, const PolicySet& ps, const TrainConfig& cfg,
                     const topology::TopoLearnerParams* learner, uint64_t ep_seed, bool greedy,
                     int episode_id);

struct Gradients {
  std::vector<AgentNetsOwned> groups;
  MlpParams critic;

  static Gradients zeros_like(const PolicySet& ps);
  void add(const Gradients& other);
  double sq_norm() const;
  void scale(double s);
};

struct LossBreakdown {
  double actor = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean policy entropy (bonus term)
  double iei = 0.0;
  double sei = 0.0;
  double total = 0.0;
};

// Constants of the policy-gradient surrogate; captured once so perturbed
// re-evaluations (finite differences) stay aligned with the analytic
// gradients.
struct FrozenTargets {
  std::vector<std::vector<std::vector<double>>> advantage;  // [episode][step][agent]
  std::vector<std::vector<double>> value_target;            // [episode][step]
};

// Test-only reweighting of the loss terms.
struct LossOptions {
  double actor_weight = 1.0;
  double value_weight = 1.0;
};

// Recomputes the differentiable forward pass from the traces and assembles
//   loss = actor + value - entropy_bonus*H(pi) + lambda_iei*IEI + lambda_sei*SEI,
// with advantages and value targets treated as constants. Accumulates
// gradients for every parameter bundle when `grads` is non-null. `frozen`
// supplies externally fixed advantages/targets; `capture` receives the ones
// computed here.
LossBreakdown compute_loss(const std::vector<EpisodeTrace>& traces, const PolicySet& ps,
                           const TrainConfig& cfg, Gradients* grads,
                           const FrozenTargets* frozen = nullptr,
                           FrozenTargets* capture = nullptr, const LossOptions& opts = {},
                           int threads = 1);

struct TrainHooks {
  std::function<void(const metrics::MetricsRecord&)> on_epoch;
  std::function<void(int epoch, const PolicySet&, const topology::TopoLearner*)> on_checkpoint;
  int checkpoint_interval = 0;  // epochs; 0 = final only (via on_checkpoint(epochs,...))
};

struct TrainResult {
  PolicySet policies;
  std::optional<topology::TopoLearner> learner;
  std::vector<metrics::MetricsRecord> curve;
};

// Full CTDE loop: epochs x batches x episodes, one policy update per batch,
// topology-learner update per batch in learned/shuffled modes, one
// MetricsRecord per epoch from that epoch's training episodes. Rollout
// parallelism comes from the DAGCOMM_THREADS env var and never changes
// results. Throws NumericError after three consecutive non-finite batches.
TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {});

// Greedy evaluation over n episodes (decentralized: no critic involved).
metrics::MetricsRecord evaluate(const envs::Env& proto, const PolicySet& ps,
                                const TrainConfig& cfg, const topology::TopoLearnerParams* learner,
                                int n_episodes, uint64_t seed);

// Checkpoint round-trip (numkit binary format). `meta` is an arbitrary JSON
// string stored verbatim; the learner block is optional.
void save_checkpoint(const std::string& path, const PolicySet& ps,
                     const topology::TopoLearnerParams* learner, const std::string& meta);

struct LoadedCheckpoint {
  PolicySet policies;
  std::optional<topology::TopoLearnerParams> learner;
  std::string meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

int rollout_threads();  // DAGCOMM_THREADS, clamped to [1, 64]

}  // namespace dagcomm::training
