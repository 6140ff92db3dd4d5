#include "dagcomm/envs.hpp"

#include <algorithm>
#include <numeric>

#include "dagcomm/errors.hpp"

namespace dagcomm::envs {

std::string env_name(EnvId id) {
  switch (id) {
    case EnvId::PP: return "pp";
    case EnvId::PCP: return "pcp";
    case EnvId::TJ: return "tj";
  }
  return "?";
}

EnvId env_from_name(const std::string& name) {
  if (name == "pp") return EnvId::PP;
  if (name == "pcp") return EnvId::PCP;
  if (name == "tj") return EnvId::TJ;
  throw ConfigError("unknown environment id '" + name + "' (expected pp|pcp|tj)");
}

GridConfig GridConfig::pp() { return defaults_for(EnvId::PP); }
GridConfig GridConfig::pcp() { return defaults_for(EnvId::PCP); }
GridConfig GridConfig::tj() { return defaults_for(EnvId::TJ); }

GridConfig GridConfig::defaults_for(EnvId id) {
  GridConfig c;
  c.env = id;
  switch (id) {
    case EnvId::PP:
      c.grid_size = 10;
      c.max_steps = 80;
      break;
    case EnvId::PCP:
      c.grid_size = 10;
      c.max_steps = 80;
      break;
    case EnvId::TJ:
      c.grid_size = 7;
      c.max_steps = 20;
      break;
  }
  return c;
}

void GridConfig::validate() const {
  if (n_agents < 1) throw ContractError("config: n_agents must be >= 1");
  if (vision < 0) throw ContractError("config: vision must be >= 0");
  if (max_steps <= 0) throw ContractError("config: max_steps must be > 0");
  if (env == EnvId::TJ) {
    if (grid_size < 5) throw ContractError("config: TJ grid must be at least 5x5");
    if (p_arrive < 0.0 || p_arrive > 1.0) throw ContractError("config: p_arrive must be in [0,1]");
    if (n_max < 1 || n_max > n_agents) throw ContractError("config: n_max must be in [1, n_agents]");
  } else {
    if (n_prey != 1) throw ContractError("config: pursuit environments support exactly one prey");
    if (grid_size * grid_size < n_agents + n_prey) {
      throw ContractError("config: grid too small for entity count");
    }
    if (env == EnvId::PCP && n_predators + n_capture != n_agents) {
      throw ContractError("config: PCP role counts must sum to n_agents");
    }
    if (env == EnvId::PCP && (n_predators < 1 || n_capture < 1)) {
      throw ContractError("config: PCP needs both roles populated");
    }
  }
}

std::unique_ptr<Env> make_env(const GridConfig& cfg) {
  cfg.validate();
  if (cfg.env == EnvId::TJ) return std::make_unique<TrafficJunctionEnv>(cfg);
  return std::make_unique<PursuitEnv>(cfg);
}

// ---------------------------------------------------------------------------
// PursuitEnv

namespace {
constexpr int kMoveRow[5] = {-1, 1, 0, 0, 0};  // up, down, left, right, stay
constexpr int kMoveCol[5] = {0, 0, -1, 1, 0};
constexpr int kCapture = 5;
constexpr double kStepCost = -0.05;
constexpr double kSuccessBonus = 5.0;
}  // namespace

PursuitEnv::PursuitEnv(const GridConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.env == EnvId::TJ) throw ContractError("PursuitEnv: config is for TJ");
  reset(0);
}

void PursuitEnv::reset(uint64_t seed) {
  rng_ = Rng(mix64(seed, 0x707572ULL));
  std::vector<int> cells(static_cast<size_t>(cfg_.grid_size) * cfg_.grid_size);
  std::iota(cells.begin(), cells.end(), 0);
  rng_.shuffle(cells);
  agent_pos_.assign(static_cast<size_t>(cfg_.n_agents), {0, 0});
  for (int a = 0; a < cfg_.n_agents; ++a) {
    agent_pos_[static_cast<size_t>(a)] = {cells[static_cast<size_t>(a)] / cfg_.grid_size,
                                          cells[static_cast<size_t>(a)] % cfg_.grid_size};
  }
  prey_pos_ = {cells[static_cast<size_t>(cfg_.n_agents)] / cfg_.grid_size,
               cells[static_cast<size_t>(cfg_.n_agents)] % cfg_.grid_size};
  captured_.assign(static_cast<size_t>(cfg_.n_agents), 0);
  steps_ = 0;
  done_ = false;
  success_ = false;
}

bool PursuitEnv::is_capture_role(int agent) const {
  return cfg_.env == EnvId::PCP && agent >= cfg_.n_predators;
}

bool PursuitEnv::capture_latched(int agent) const {
  return captured_[static_cast<size_t>(agent)] != 0;
}

int PursuitEnv::n_actions(int agent) const { return is_capture_role(agent) ? 6 : 5; }

bool PursuitEnv::active(int) const { return !done_; }

bool PursuitEnv::check_success() const {
  const int co_located = cfg_.env == EnvId::PCP ? cfg_.n_predators : cfg_.n_agents;
  for (int a = 0; a < co_located; ++a) {
    if (agent_pos_[static_cast<size_t>(a)] != prey_pos_) return false;
  }
  if (cfg_.env == EnvId::PCP) {
    for (int a = cfg_.n_predators; a < cfg_.n_agents; ++a) {
      if (!captured_[static_cast<size_t>(a)]) return false;
    }
  }
  return true;
}

StepResult PursuitEnv::step(const std::vector<int>& actions) {
  if (done_) throw ContractError("step: episode already done");
  if (static_cast<int>(actions.size()) != cfg_.n_agents) {
    throw ContractError("step: need one action per agent");
  }
  StepResult res;
  res.rewards.assign(static_cast<size_t>(cfg_.n_agents), 0.0);
  ++steps_;

  std::vector<uint8_t> missed_capture(static_cast<size_t>(cfg_.n_agents), 0);
  for (int a = 0; a < cfg_.n_agents; ++a) {
    const int act = actions[static_cast<size_t>(a)];
    if (act < 0 || act >= n_actions(a)) {
      throw ContractError("step: invalid action " + std::to_string(act) + " for agent " +
                          std::to_string(a));
    }
    if (act == kCapture) {
      // Capture resolves against the prey's position before it moves.
      if (agent_pos_[static_cast<size_t>(a)] == prey_pos_) {
        captured_[static_cast<size_t>(a)] = 1;
      } else {
        missed_capture[static_cast<size_t>(a)] = 1;
      }
      continue;
    }
    auto [r, c] = agent_pos_[static_cast<size_t>(a)];
    const int nr = r + kMoveRow[act];
    const int nc = c + kMoveCol[act];
    if (nr >= 0 && nr < cfg_.grid_size && nc >= 0 && nc < cfg_.grid_size) {
      agent_pos_[static_cast<size_t>(a)] = {nr, nc};
    }
  }

  success_ = check_success();
  if (success_) {
    done_ = true;
    res.info.prey_caught = true;
    for (double& r : res.rewards) r = kSuccessBonus;
  } else {
    for (int a = 0; a < cfg_.n_agents; ++a) {
      res.rewards[static_cast<size_t>(a)] = kStepCost + (missed_capture[static_cast<size_t>(a)] ? kStepCost : 0.0);
    }
    if (steps_ >= cfg_.max_steps) done_ = true;
  }

  if (!done_) {
    // Prey random-walks to a free 4-neighbor cell; blocked cells are those
    // holding any agent.
    std::vector<std::pair<int, int>> free_cells;
    for (int m = 0; m < 4; ++m) {
      const int nr = prey_pos_.first + kMoveRow[m];
      const int nc = prey_pos_.second + kMoveCol[m];
      if (nr < 0 || nr >= cfg_.grid_size || nc < 0 || nc >= cfg_.grid_size) continue;
      bool occupied = false;
      for (const auto& p : agent_pos_) {
        if (p == std::pair<int, int>{nr, nc}) {
          occupied = true;
          break;
        }
      }
      if (!occupied) free_cells.emplace_back(nr, nc);
    }
    if (!free_cells.empty()) {
      prey_pos_ = free_cells[static_cast<size_t>(rng_.uniform_int(static_cast<int>(free_cells.size())))];
    }
  }

  res.done = done_;
  res.success = success_;
  return res;
}

int PursuitEnv::obs_width() const {
  const int window = (2 * cfg_.vision + 1) * (2 * cfg_.vision + 1);
  const int channels = cfg_.env == EnvId::PCP ? 4 : 3;
  const int role = cfg_.env == EnvId::PCP ? 2 : 0;
  return window * channels + 2 + role;
}

Vec PursuitEnv::observe(int agent) const {
  if (agent < 0 || agent >= cfg_.n_agents) throw ContractError("observe: bad agent id");
  if (done_) throw ContractError("observe: episode done");
  const int v = cfg_.vision;
  const int side = 2 * v + 1;
  const bool pcp = cfg_.env == EnvId::PCP;
  const int channels = pcp ? 4 : 3;
  const int wall_ch = channels - 1;
  const int prey_ch = pcp ? 2 : 1;
  Vec obs(static_cast<size_t>(obs_width()), 0.0);
  const auto [ar, ac] = agent_pos_[static_cast<size_t>(agent)];
  const bool mask_prey = is_capture_role(agent);  // capture agents cannot see prey

  for (int dr = -v; dr <= v; ++dr) {
    for (int dc = -v; dc <= v; ++dc) {
      const int cell = (dr + v) * side + (dc + v);
      const int r = ar + dr;
      const int c = ac + dc;
      double* slot = &obs[static_cast<size_t>(cell) * channels];
      if (r < 0 || r >= cfg_.grid_size || c < 0 || c >= cfg_.grid_size) {
        slot[wall_ch] = 1.0;
        continue;
      }
      for (int other = 0; other < cfg_.n_agents; ++other) {
        if (other == agent) continue;
        if (agent_pos_[static_cast<size_t>(other)] != std::pair<int, int>{r, c}) continue;
        if (pcp) {
          slot[is_capture_role(other) ? 1 : 0] = 1.0;
        } else {
          slot[0] = 1.0;
        }
      }
      if (!mask_prey && prey_pos_ == std::pair<int, int>{r, c}) slot[prey_ch] = 1.0;
    }
  }
  const int base = side * side * channels;
  obs[static_cast<size_t>(base)] = static_cast<double>(ar) / (cfg_.grid_size - 1);
  obs[static_cast<size_t>(base) + 1] = static_cast<double>(ac) / (cfg_.grid_size - 1);
  if (pcp) obs[static_cast<size_t>(base) + 2 + (is_capture_role(agent) ? 1 : 0)] = 1.0;
  return obs;
}

void PursuitEnv::debug_place(const std::vector<std::pair<int, int>>& agent_pos,
                             std::pair<int, int> prey_pos) {
  if (static_cast<int>(agent_pos.size()) != cfg_.n_agents) {
    throw ContractError("debug_place: need one position per agent");
  }
  agent_pos_ = agent_pos;
  prey_pos_ = prey_pos;
}

std::string PursuitEnv::render_ascii() const {
  std::string out;
  for (int r = 0; r < cfg_.grid_size; ++r) {
    for (int c = 0; c < cfg_.grid_size; ++c) {
      char ch = '.';
      if (prey_pos_ == std::pair<int, int>{r, c}) ch = 'Y';
      for (int a = 0; a < cfg_.n_agents; ++a) {
        if (agent_pos_[static_cast<size_t>(a)] == std::pair<int, int>{r, c}) {
          ch = is_capture_role(a) ? 'C' : 'P';
        }
      }
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// TrafficJunctionEnv

TrafficJunctionEnv::TrafficJunctionEnv(const GridConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.env != EnvId::TJ) throw ContractError("TrafficJunctionEnv: config is not TJ");
  build_routes();
  reset(0);
}

void TrafficJunctionEnv::build_routes() {
  const int n = cfg_.grid_size;
  const int mid = n / 2;
  routes_.assign(kNumRoutes, {});
  // Entry west, straight east.
  for (int c = 0; c < n; ++c) routes_[0].emplace_back(mid, c);
  // Entry west, turn south at the junction.
  for (int c = 0; c <= mid; ++c) routes_[1].emplace_back(mid, c);
  for (int r = mid + 1; r < n; ++r) routes_[1].emplace_back(r, mid);
  // Entry north, straight south.
  for (int r = 0; r < n; ++r) routes_[2].emplace_back(r, mid);
  // Entry north, turn east at the junction.
  for (int r = 0; r <= mid; ++r) routes_[3].emplace_back(r, mid);
  for (int c = mid + 1; c < n; ++c) routes_[3].emplace_back(mid, c);
}

void TrafficJunctionEnv::reset(uint64_t seed) {
  rng_ = Rng(mix64(seed, 0x746a0ULL));
  cars_.assign(static_cast<size_t>(cfg_.n_agents), Car{});
  steps_ = 0;
  done_ = false;
  collided_ever_ = false;
  total_collisions_ = 0;
  next_unit_ = 0;
}

int TrafficJunctionEnv::active_count() const {
  int c = 0;
  for (const Car& car : cars_) c += car.active ? 1 : 0;
  return c;
}

int TrafficJunctionEnv::unit_id(int agent) const {
  const Car& c = cars_[static_cast<size_t>(agent)];
  return c.active ? c.unit : -1;
}

const std::vector<std::pair<int, int>>& TrafficJunctionEnv::route(int id) const {
  return routes_[static_cast<size_t>(id)];
}

void TrafficJunctionEnv::spawn_arrivals(StepInfo& info) {
  // Entry order is fixed (west then north) so the RNG stream is reproducible.
  const std::pair<int, int> entry_cell[2] = {routes_[0][0], routes_[2][0]};
  const int entry_routes[2][2] = {{0, 1}, {2, 3}};
  for (int e = 0; e < 2; ++e) {
    if (active_count() >= cfg_.n_max) break;
    bool entry_free = true;
    for (const Car& c : cars_) {
      if (c.active && car_cell(c) == entry_cell[e]) {
        entry_free = false;
        break;
      }
    }
    if (!entry_free) continue;
    if (rng_.uniform() >= cfg_.p_arrive) continue;
    int slot = -1;
    for (int s = 0; s < cfg_.n_agents; ++s) {
      if (!cars_[static_cast<size_t>(s)].active) {
        slot = s;
        break;
      }
    }
    if (slot < 0) break;
    Car& c = cars_[static_cast<size_t>(slot)];
    c.active = true;
    c.route = entry_routes[e][rng_.uniform_int(2)];
    c.pos = 0;
    c.entry_step = steps_;
    c.prev_action = -1;
    c.unit = next_unit_++;
    c.collided_now = false;
    ++info.arrivals;
  }
}

StepResult TrafficJunctionEnv::step(const std::vector<int>& actions) {
  if (done_) throw ContractError("step: episode already done");
  if (static_cast<int>(actions.size()) != cfg_.n_agents) {
    throw ContractError("step: need one action per agent slot");
  }
  StepResult res;
  res.rewards.assign(static_cast<size_t>(cfg_.n_agents), 0.0);
  ++steps_;

  std::vector<uint8_t> was_active(static_cast<size_t>(cfg_.n_agents), 0);
  std::vector<std::pair<int, int>> old_cell(static_cast<size_t>(cfg_.n_agents), {-1, -1});
  std::vector<uint8_t> exited(static_cast<size_t>(cfg_.n_agents), 0);

  for (int a = 0; a < cfg_.n_agents; ++a) {
    Car& c = cars_[static_cast<size_t>(a)];
    if (!c.active) continue;
    was_active[static_cast<size_t>(a)] = 1;
    old_cell[static_cast<size_t>(a)] = car_cell(c);
    const int act = actions[static_cast<size_t>(a)];
    if (act != kGas && act != kBrake) {
      throw ContractError("step: invalid action " + std::to_string(act) + " for agent " +
                          std::to_string(a));
    }
    c.collided_now = false;
    if (act == kGas) {
      ++c.pos;
      if (c.pos >= static_cast<int>(routes_[static_cast<size_t>(c.route)].size())) {
        exited[static_cast<size_t>(a)] = 1;
      }
    }
    c.prev_action = act;
  }

  // Collisions: shared cell or swapped cells among cars still on the grid.
  for (int a = 0; a < cfg_.n_agents; ++a) {
    if (!was_active[static_cast<size_t>(a)] || exited[static_cast<size_t>(a)]) continue;
    for (int b = a + 1; b < cfg_.n_agents; ++b) {
      if (!was_active[static_cast<size_t>(b)] || exited[static_cast<size_t>(b)]) continue;
      const auto cell_a = car_cell(cars_[static_cast<size_t>(a)]);
      const auto cell_b = car_cell(cars_[static_cast<size_t>(b)]);
      const bool same = cell_a == cell_b;
      const bool swapped = cell_a == old_cell[static_cast<size_t>(b)] &&
                           cell_b == old_cell[static_cast<size_t>(a)] && cell_a != cell_b;
      if (same || swapped) {
        cars_[static_cast<size_t>(a)].collided_now = true;
        cars_[static_cast<size_t>(b)].collided_now = true;
      }
    }
  }

  for (int a = 0; a < cfg_.n_agents; ++a) {
    if (!was_active[static_cast<size_t>(a)]) continue;
    Car& c = cars_[static_cast<size_t>(a)];
    if (c.collided_now) {
      ++res.info.collisions;
      collided_ever_ = true;
      ++total_collisions_;
    }
    const int tau = steps_ - c.entry_step;
    res.rewards[static_cast<size_t>(a)] = -0.01 * tau + (c.collided_now ? -10.0 : 0.0);
    if (exited[static_cast<size_t>(a)]) c.active = false;
  }

  // Success means a full episode with zero collisions; a collision forfeits it
  // but the episode still runs max_steps so step statistics stay comparable.
  if (steps_ >= cfg_.max_steps) {
    done_ = true;
  } else {
    spawn_arrivals(res.info);
  }
  res.done = done_;
  res.success = done_ && !collided_ever_;
  return res;
}

int TrafficJunctionEnv::obs_width() const {
  const int side = 2 * cfg_.vision + 1;
  return side * side * 2 + 2 + kNumRoutes + 2;
}

Vec TrafficJunctionEnv::observe(int agent) const {
  if (agent < 0 || agent >= cfg_.n_agents) throw ContractError("observe: bad agent id");
  const Car& c = cars_[static_cast<size_t>(agent)];
  if (!c.active) throw ContractError("observe: agent " + std::to_string(agent) + " is inactive");
  const int v = cfg_.vision;
  const int side = 2 * v + 1;
  Vec obs(static_cast<size_t>(obs_width()), 0.0);
  const auto [ar, ac] = car_cell(c);
  for (int dr = -v; dr <= v; ++dr) {
    for (int dc = -v; dc <= v; ++dc) {
      const int cell = (dr + v) * side + (dc + v);
      const int r = ar + dr;
      const int col = ac + dc;
      double* slot = &obs[static_cast<size_t>(cell) * 2];
      if (r < 0 || r >= cfg_.grid_size || col < 0 || col >= cfg_.grid_size) {
        slot[1] = 1.0;
        continue;
      }
      for (int other = 0; other < cfg_.n_agents; ++other) {
        if (other == agent) continue;
        const Car& oc = cars_[static_cast<size_t>(other)];
        if (oc.active && car_cell(oc) == std::pair<int, int>{r, col}) slot[0] = 1.0;
      }
    }
  }
  int base = side * side * 2;
  if (c.prev_action >= 0) obs[static_cast<size_t>(base + c.prev_action)] = 1.0;
  base += 2;
  obs[static_cast<size_t>(base + c.route)] = 1.0;
  base += kNumRoutes;
  obs[static_cast<size_t>(base)] = static_cast<double>(ar) / (cfg_.grid_size - 1);
  obs[static_cast<size_t>(base) + 1] = static_cast<double>(ac) / (cfg_.grid_size - 1);
  return obs;
}

void TrafficJunctionEnv::debug_spawn(int slot, int route_id, int pos_index) {
  if (slot < 0 || slot >= cfg_.n_agents) throw ContractError("debug_spawn: bad slot");
  if (route_id < 0 || route_id >= kNumRoutes) throw ContractError("debug_spawn: bad route");
  if (pos_index < 0 || pos_index >= static_cast<int>(routes_[static_cast<size_t>(route_id)].size())) {
    throw ContractError("debug_spawn: bad route position");
  }
  Car& c = cars_[static_cast<size_t>(slot)];
  c.active = true;
  c.route = route_id;
  c.pos = pos_index;
  c.entry_step = steps_;
  c.prev_action = -1;
  c.unit = next_unit_++;
  c.collided_now = false;
}

std::string TrafficJunctionEnv::render_ascii() const {
  const int n = cfg_.grid_size;
  const int mid = n / 2;
  std::string out;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      char ch = '.';
      if (r == mid && c == mid) ch = '+';
      else if (r == mid) ch = '-';
      else if (c == mid) ch = '|';
      for (int a = 0; a < cfg_.n_agents; ++a) {
        const Car& car = cars_[static_cast<size_t>(a)];
        if (car.active && car_cell(car) == std::pair<int, int>{r, c}) {
          ch = static_cast<char>('0' + a);
        }
      }
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace dagcomm::envs
