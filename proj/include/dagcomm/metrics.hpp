#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dagcomm/numkit.hpp"

#include "json.hpp"

namespace dagcomm::metrics {

using numkit::Vec;

// Per-epoch measurement row. `c_comm` is transmissions per episode; `iei` and
// `sei` are the information-efficiency indices over that epoch's messages.
struct MetricsRecord {
  int epoch = 0;
  double success_rate = 0.0;
  double avg_steps = 0.0;
  double c_comm = 0.0;
  double iei = 0.0;
  double sei = 0.0;
  double loss = 0.0;

  static std::string csv_header();  // epoch,success_rate,avg_steps,c_comm,iei,sei,loss
  std::string csv_row() const;
  nlohmann::json to_json() const;
};

// Shannon entropy (nats) of the distribution p_i = |m_i| / sum|m_j|.
// All-zero payloads have entropy 0 by definition.
double message_entropy(const Vec& payload);

// d message_entropy / d payload (zero where payload entries are zero).
Vec message_entropy_grad(const Vec& payload);

// Mean entropy over all outgoing messages in a batch. Empty set is a contract error.
double iei(const std::vector<Vec>& messages);

// Mean pairwise cosine similarity over unordered agent pairs of per-agent mean
// payloads; zero vectors contribute similarity 0. Fewer than 2 agents is a
// contract error.
double sei(const std::vector<Vec>& agent_means);

// d sei / d agent_means[i], one vector per agent.
std::vector<Vec> sei_grad(const std::vector<Vec>& agent_means);

double success_rate(const std::vector<bool>& successes);

// Mean episode length; callers record failed pursuit episodes at max length.
double avg_steps(const std::vector<int>& lengths);

// First epoch (1-indexed) whose W-epoch moving average reaches theta times the
// final W-epoch moving average; nullopt when the curve never gets there.
std::optional<int> convergence_epoch(const std::vector<double>& curve, int window, double theta);

}  // namespace dagcomm::metrics
