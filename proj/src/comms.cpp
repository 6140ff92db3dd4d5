#include "dagcomm/comms.hpp"

#include <ostream>

#include "dagcomm/errors.hpp"

namespace dagcomm::comms {

void CommLedger::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  for (const LedgerRecord& r : records) {
    out << r.episode << ',' << r.step << ',' << r.round << ',' << r.sender << ',' << r.receiver
        << '\n';
  }
}

double count_comm(size_t total_records, int n_episodes) {
  if (n_episodes <= 0) throw ContractError("count_comm: need at least one episode");
  return static_cast<double>(total_records) / static_cast<double>(n_episodes);
}

Vec aggregate(const std::vector<Message>& incoming, int width) {
  if (incoming.empty()) return Vec(static_cast<size_t>(width), 0.0);
  Vec out(incoming.front().payload.size(), 0.0);
  for (const Message& m : incoming) {
    if (m.payload.size() != out.size()) throw ContractError("aggregate: mixed payload widths");
    for (size_t i = 0; i < out.size(); ++i) out[i] += m.payload[i];
  }
  const double inv = 1.0 / static_cast<double>(incoming.size());
  for (double& x : out) x *= inv;
  return out;
}

Vec encode_message(const Vec& hidden, const MlpParams& msg_head, MlpCache* cache) {
  return numkit::mlp_forward(msg_head, hidden, cache);
}

namespace {

// [own hidden | aggregated payload | mean one-hot of upstream actions]
Vec update_input(const Vec& hidden, const Vec& agg, const std::vector<int>& senders,
                 const std::vector<int>& actions, const std::vector<int>& action_widths,
                 int act_summary_width) {
  Vec in;
  in.reserve(hidden.size() + agg.size() + static_cast<size_t>(act_summary_width));
  in.insert(in.end(), hidden.begin(), hidden.end());
  in.insert(in.end(), agg.begin(), agg.end());
  Vec summary(static_cast<size_t>(act_summary_width), 0.0);
  if (!senders.empty()) {
    const double inv = 1.0 / static_cast<double>(senders.size());
    for (int s : senders) {
      const int a = actions[static_cast<size_t>(s)];
      if (a >= 0 && a < action_widths[static_cast<size_t>(s)]) summary[static_cast<size_t>(a)] += inv;
    }
  }
  in.insert(in.end(), summary.begin(), summary.end());
  return in;
}

}  // namespace

std::vector<Vec> propagate(const CommPlan& plan, const std::vector<Vec>& hiddens,
                           const AgentNets& nets, const std::vector<uint8_t>& active,
                           const std::vector<int>& action_widths,
                           const std::function<int(int agent, const Vec& enriched)>& act,
                           std::vector<int>& actions_out, std::vector<Vec>& payloads_out,
                           CommLedger* ledger, int episode, int step, PropRecord* rec) {
  const int n = static_cast<int>(hiddens.size());
  if (plan.mode == TopologyMode::Dag) {
    if (plan.dag == nullptr || plan.dag->n != n) {
      throw ContractError("propagate: plan dag missing or agent count mismatch");
    }
  }
  if (static_cast<int>(active.size()) != n || static_cast<int>(action_widths.size()) != n) {
    throw ContractError("propagate: per-agent array sizes mismatch");
  }

  std::vector<Vec> enriched(static_cast<size_t>(n));
  actions_out.assign(static_cast<size_t>(n), -1);
  payloads_out.assign(static_cast<size_t>(n), {});
  if (rec) rec->resize(n);

  auto emit_payload = [&](int a, const Vec& from_hidden) {
    MlpCache* cache = rec ? &rec->msg_cache[static_cast<size_t>(a)] : nullptr;
    payloads_out[static_cast<size_t>(a)] = encode_message(from_hidden, *nets.msg_head[static_cast<size_t>(a)], cache);
    if (rec) rec->has_payload[static_cast<size_t>(a)] = 1;
  };

  switch (plan.mode) {
    case TopologyMode::None: {
      for (int a = 0; a < n; ++a) {
        if (!active[static_cast<size_t>(a)]) continue;
        enriched[static_cast<size_t>(a)] = hiddens[static_cast<size_t>(a)];
        actions_out[static_cast<size_t>(a)] = act(a, enriched[static_cast<size_t>(a)]);
      }
      break;
    }
    case TopologyMode::Broadcast: {
      // Messages come from base hiddens; everyone then aggregates and acts.
      for (int a = 0; a < n; ++a) {
        if (active[static_cast<size_t>(a)]) emit_payload(a, hiddens[static_cast<size_t>(a)]);
      }
      for (int a = 0; a < n; ++a) {
        if (!active[static_cast<size_t>(a)]) continue;
        std::vector<Message> incoming;
        std::vector<int> senders;
        for (int s = 0; s < n; ++s) {
          if (s == a || !active[static_cast<size_t>(s)]) continue;
          incoming.push_back(Message{s, 1, payloads_out[static_cast<size_t>(s)]});
          senders.push_back(s);
          if (ledger) ledger->add(episode, step, 1, s, a);
        }
        const Vec agg = aggregate(incoming, nets.msg_width);
        // Simultaneous acting: no upstream actions exist yet.
        Vec in = update_input(hiddens[static_cast<size_t>(a)], agg, {}, actions_out, action_widths,
                              nets.act_summary_width);
        MlpCache* cache = rec ? &rec->update_cache[static_cast<size_t>(a)] : nullptr;
        enriched[static_cast<size_t>(a)] =
            numkit::mlp_forward(*nets.update_net[static_cast<size_t>(a)], in, cache);
        if (rec) {
          rec->has_update[static_cast<size_t>(a)] = 1;
          rec->senders[static_cast<size_t>(a)] = senders;
        }
      }
      for (int a = 0; a < n; ++a) {
        if (active[static_cast<size_t>(a)]) {
          actions_out[static_cast<size_t>(a)] = act(a, enriched[static_cast<size_t>(a)]);
        }
      }
      break;
    }
    case TopologyMode::Dag: {
      const topology::Dag& dag = *plan.dag;
      for (int r = 0; r <= dag.depth; ++r) {
        for (int a = 0; a < n; ++a) {
          if (!active[static_cast<size_t>(a)] || dag.round_of[static_cast<size_t>(a)] != r) continue;
          std::vector<Message> incoming;
          std::vector<int> senders;
          if (r > 0) {
            for (int s = 0; s < n; ++s) {
              if (!dag.edge(s, a) || !active[static_cast<size_t>(s)]) continue;
              incoming.push_back(Message{s, r, payloads_out[static_cast<size_t>(s)]});
              senders.push_back(s);
              if (ledger) ledger->add(episode, step, r, s, a);
            }
          }
          if (senders.empty()) {
            enriched[static_cast<size_t>(a)] = hiddens[static_cast<size_t>(a)];
          } else {
            const Vec agg = aggregate(incoming, nets.msg_width);
            Vec in = update_input(hiddens[static_cast<size_t>(a)], agg, senders, actions_out,
                                  action_widths, nets.act_summary_width);
            MlpCache* cache = rec ? &rec->update_cache[static_cast<size_t>(a)] : nullptr;
            enriched[static_cast<size_t>(a)] =
                numkit::mlp_forward(*nets.update_net[static_cast<size_t>(a)], in, cache);
            if (rec) {
              rec->has_update[static_cast<size_t>(a)] = 1;
              rec->senders[static_cast<size_t>(a)] = senders;
            }
          }
          actions_out[static_cast<size_t>(a)] = act(a, enriched[static_cast<size_t>(a)]);
          emit_payload(a, enriched[static_cast<size_t>(a)]);
        }
      }
      break;
    }
  }
  if (rec) rec->enriched = enriched;
  return enriched;
}

}  // namespace dagcomm::comms
