#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dagcomm/numkit.hpp"
#include "dagcomm/topology.hpp"

namespace dagcomm::comms {

using numkit::MlpCache;
using numkit::MlpParams;
using numkit::Vec;

struct Message {
  int sender = -1;
  int round = 0;
  Vec payload;
};

struct LedgerRecord {
  int episode = 0;
  int step = 0;
  int round = 0;
  int sender = 0;
  int receiver = 0;
};

// Every point-to-point transmission of a run or episode, one record per edge
// traversal per environment step.
struct CommLedger {
  std::vector<LedgerRecord> records;

  void add(int episode, int step, int round, int sender, int receiver) {
    records.push_back({episode, step, round, sender, receiver});
  }
  size_t total() const { return records.size(); }
  void append(const CommLedger& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
  }
  static std::string csv_header() { return "episode,step,round,sender,receiver"; }
  void write_csv(std::ostream& out) const;
};

// Average transmissions per episode. Zero episodes is a contract error.
double count_comm(size_t total_records, int n_episodes);

// Element-wise mean of payloads; the empty list aggregates to a zero vector of
// the given width. Mixed widths are a contract error.
Vec aggregate(const std::vector<Message>& incoming, int width);

// payload = msg_head(hidden); differentiable via the optional cache.
Vec encode_message(const Vec& hidden, const MlpParams& msg_head, MlpCache* cache = nullptr);

enum class TopologyMode { None, Broadcast, Dag };

struct CommPlan {
  TopologyMode mode = TopologyMode::None;
  const topology::Dag* dag = nullptr;  // required in Dag mode
};

// Non-owning per-agent parameter views; shared parameters repeat the pointer.
struct AgentNets {
  std::vector<const MlpParams*> msg_head;
  std::vector<const MlpParams*> update_net;
  int msg_width = 0;
  int act_summary_width = 0;  // one-hot width for upstream action summaries
};

// Forward caches recorded during propagation, consumed by the trainer's
// backward pass.
struct PropRecord {
  std::vector<MlpCache> msg_cache;
  std::vector<MlpCache> update_cache;
  std::vector<std::vector<int>> senders;  // in-neighbors whose payloads were aggregated
  std::vector<uint8_t> has_payload;
  std::vector<uint8_t> has_update;
  std::vector<Vec> enriched;

  void resize(int n) {
    msg_cache.assign(static_cast<size_t>(n), {});
    update_cache.assign(static_cast<size_t>(n), {});
    senders.assign(static_cast<size_t>(n), {});
    has_payload.assign(static_cast<size_t>(n), 0);
    has_update.assign(static_cast<size_t>(n), 0);
    enriched.assign(static_cast<size_t>(n), {});
  }
};

// Sequential DAG propagation over one environment step.
//
// Round-0 agents keep their encoder hidden and act first; a round-r agent
// aggregates the payloads of its active in-neighbors (all of which acted in
// earlier rounds), concatenates [own hidden | mean payload | mean one-hot of
// upstream actions], and passes this through its update net to get the
// enriched hidden it acts on. Messages are encoded from the enriched hidden
// after the agent has selected its action. Broadcast mode is the one-round
// mean-field baseline: every active agent sends a message encoded from its
// base hidden to every other active agent. Mode None skips messaging
// entirely.
//
// `act` is invoked exactly once per active agent, in communication order.
// One ledger record is appended per traversed edge. Returns the enriched
// hiddens (by value in `rec` too, when recording).
std::vector<Vec> propagate(const CommPlan& plan, const std::vector<Vec>& hiddens,
                           const AgentNets& nets, const std::vector<uint8_t>& active,
                           const std::vector<int>& action_widths,
                           const std::function<int(int agent, const Vec& enriched)>& act,
                           std::vector<int>& actions_out, std::vector<Vec>& payloads_out,
                           CommLedger* ledger, int episode, int step, PropRecord* rec = nullptr);

}  // namespace dagcomm::comms
