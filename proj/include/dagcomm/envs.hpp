#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dagcomm/numkit.hpp"

namespace dagcomm::envs {

using numkit::Vec;

enum class EnvId { PP, PCP, TJ };

std::string env_name(EnvId id);
EnvId env_from_name(const std::string& name);  // throws ConfigError

struct GridConfig {
  EnvId env = EnvId::PP;
  int grid_size = 10;
  int n_agents = 5;
  int vision = 1;
  int max_steps = 80;
  int n_prey = 1;       // PP/PCP
  int n_predators = 3;  // PCP role split
  int n_capture = 2;    // PCP role split
  double p_arrive = 0.3;  // TJ
  int n_max = 5;          // TJ concurrent car cap

  static GridConfig pp();
  static GridConfig pcp();
  static GridConfig tj();
  static GridConfig defaults_for(EnvId id);

  void validate() const;  // throws ContractError
};

struct StepInfo {
  int collisions = 0;   // cars collided this step (TJ)
  bool prey_caught = false;
  int arrivals = 0;     // cars spawned this step (TJ)
};

struct StepResult {
  std::vector<double> rewards;  // one per agent slot; 0.0 for inactive slots
  bool done = false;
  bool success = false;
  StepInfo info;
};

// Episodic multi-agent grid environment. Value semantics: copyable via
// clone(), per-instance RNG stream, deterministic replay for a fixed
// (config, seed, action sequence).
class Env {
 public:
  virtual ~Env() = default;

  virtual void reset(uint64_t seed) = 0;
  // One action per ACTIVE agent slot (inactive entries are ignored).
  virtual StepResult step(const std::vector<int>& actions) = 0;
  // Fixed-length observation; inactive agent is a contract error.
  virtual Vec observe(int agent) const = 0;

  virtual int n_agents() const = 0;
  virtual int obs_width() const = 0;
  virtual int n_actions(int agent) const = 0;
  virtual bool active(int agent) const = 0;
  // Identity of the RL unit currently in this slot (TJ reuses slots across
  // cars); -1 when inactive.
  virtual int unit_id(int agent) const = 0;
  virtual bool success() const = 0;
  virtual bool done() const = 0;
  virtual int steps_elapsed() const = 0;
  virtual std::string render_ascii() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  int max_action_width() const {
    int w = 0;
    for (int a = 0; a < n_agents(); ++a) w = std::max(w, n_actions(a));
    return w;
  }
};

std::unique_ptr<Env> make_env(const GridConfig& cfg);

// ---------------------------------------------------------------------------
// Pursuit environments (PP homogeneous, PCP heterogeneous).
//
// Actions: 0 up, 1 down, 2 left, 3 right, 4 stay; PCP capture-role agents add
// 5 capture. Moving off-grid is a stay. Agents move simultaneously and may
// share cells; the prey then random-walks to a free 4-neighbor cell.
//
// Observation layout: (2v+1)^2 window cells in row-major (drow, dcol) order,
// each cell holding the channel block, then normalized (row, col) of self,
// then (PCP only) a role one-hot. Channels: PP {other predators, prey, wall};
// PCP {predator-role, capture-role, prey, wall} with the prey channel zeroed
// for capture-role observers.
class PursuitEnv final : public Env {
 public:
  explicit PursuitEnv(const GridConfig& cfg);

  void reset(uint64_t seed) override;
  StepResult step(const std::vector<int>& actions) override;
  Vec observe(int agent) const override;

  int n_agents() const override { return cfg_.n_agents; }
  int obs_width() const override;
  int n_actions(int agent) const override;
  bool active(int agent) const override;
  int unit_id(int agent) const override { return agent; }
  bool success() const override { return success_; }
  bool done() const override { return done_; }
  int steps_elapsed() const override { return steps_; }
  std::string render_ascii() const override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PursuitEnv>(*this); }

  bool is_capture_role(int agent) const;
  bool capture_latched(int agent) const;

  // Test hook: pin entity positions (and optionally latched capture flags).
  void debug_place(const std::vector<std::pair<int, int>>& agent_pos, std::pair<int, int> prey_pos);

  std::pair<int, int> agent_pos(int agent) const { return agent_pos_[static_cast<size_t>(agent)]; }
  std::pair<int, int> prey_pos() const { return prey_pos_; }

 private:
  GridConfig cfg_;
  Rng rng_{0};
  std::vector<std::pair<int, int>> agent_pos_;
  std::pair<int, int> prey_pos_{0, 0};
  std::vector<uint8_t> captured_;  // latched per capture-role agent
  int steps_ = 0;
  bool done_ = false;
  bool success_ = false;

  bool check_success() const;
};

// ---------------------------------------------------------------------------
// Traffic Junction, easy level: two one-way roads crossing mid-grid, two entry
// points with two routes each (straight or turn at the junction). Cars take
// gas (advance along route) or brake (hold). Collisions (shared cell or swap)
// cost -10 per car and forfeit success; every car pays -0.01*tau per step
// where tau is steps since entry. Episodes always run max_steps; success means
// zero collisions. New cars appear at an entry at the END of a step with
// probability p_arrive, only while active cars < n_max and the entry cell is
// free, so the next observation sees them and the next step supplies their
// action.
//
// Observation layout: 3x3 window with channels {other car, wall}, then
// previous-action one-hot (2), route one-hot (4), normalized (row, col).
class TrafficJunctionEnv final : public Env {
 public:
  static constexpr int kGas = 0;
  static constexpr int kBrake = 1;
  static constexpr int kNumRoutes = 4;

  explicit TrafficJunctionEnv(const GridConfig& cfg);

  void reset(uint64_t seed) override;
  StepResult step(const std::vector<int>& actions) override;
  Vec observe(int agent) const override;

  int n_agents() const override { return cfg_.n_agents; }
  int obs_width() const override;
  int n_actions(int) const override { return 2; }
  bool active(int agent) const override { return cars_[static_cast<size_t>(agent)].active; }
  int unit_id(int agent) const override;
  bool success() const override { return done_ && !collided_ever_; }
  bool done() const override { return done_; }
  int steps_elapsed() const override { return steps_; }
  std::string render_ascii() const override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<TrafficJunctionEnv>(*this); }

  int total_collisions() const { return total_collisions_; }
  int active_count() const;
  const std::vector<std::pair<int, int>>& route(int id) const;

  // Test hook: force a car into a slot at a route position.
  void debug_spawn(int slot, int route_id, int pos_index);

 private:
  struct Car {
    bool active = false;
    int route = 0;
    int pos = 0;        // index into route cells
    int entry_step = 0; // step count when the car appeared
    int prev_action = -1;
    int unit = -1;
    bool collided_now = false;
  };

  GridConfig cfg_;
  Rng rng_{0};
  std::vector<Car> cars_;
  std::vector<std::vector<std::pair<int, int>>> routes_;
  int steps_ = 0;
  bool done_ = false;
  bool collided_ever_ = false;
  int total_collisions_ = 0;
  int next_unit_ = 0;

  void build_routes();
  void spawn_arrivals(StepInfo& info);
  std::pair<int, int> car_cell(const Car& c) const { return routes_[static_cast<size_t>(c.route)][static_cast<size_t>(c.pos)]; }
};

}  // namespace dagcomm::envs
