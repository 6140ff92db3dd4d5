#include "dagcomm/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "dagcomm/errors.hpp"

namespace dagcomm::metrics {

std::string MetricsRecord::csv_header() {
  return "epoch,success_rate,avg_steps,c_comm,iei,sei,loss";
}

std::string MetricsRecord::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g", epoch, success_rate,
                avg_steps, c_comm, iei, sei, loss);
  return buf;
}

nlohmann::json MetricsRecord::to_json() const {
  return nlohmann::json{{"epoch", epoch},   {"success_rate", success_rate},
                        {"avg_steps", avg_steps}, {"c_comm", c_comm},
                        {"iei", iei},       {"sei", sei},
                        {"loss", loss}};
}

double message_entropy(const Vec& payload) {
  if (payload.empty()) throw ContractError("message_entropy: empty payload");
  double sum = 0.0;
  for (double m : payload) sum += std::abs(m);
  if (sum == 0.0) return 0.0;
  double h = 0.0;
  for (double m : payload) {
    const double p = std::abs(m) / sum;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Vec message_entropy_grad(const Vec& payload) {
  Vec grad(payload.size(), 0.0);
  double sum = 0.0;
  for (double m : payload) sum += std::abs(m);
  if (sum == 0.0) return grad;
  const double h = message_entropy(payload);
  for (size_t k = 0; k < payload.size(); ++k) {
    if (payload[k] == 0.0) continue;
    const double p = std::abs(payload[k]) / sum;
    const double sign = payload[k] > 0.0 ? 1.0 : -1.0;
    // dH/dm_k = -sign(m_k) (ln p_k + H) / S
    grad[k] = -sign * (std::log(p) + h) / sum;
  }
  return grad;
}

double iei(const std::vector<Vec>& messages) {
  if (messages.empty()) throw ContractError("iei: no messages");
  double s = 0.0;
  for (const Vec& m : messages) s += message_entropy(m);
  return s / static_cast<double>(messages.size());
}

namespace {

double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double sei(const std::vector<Vec>& agent_means) {
  const size_t n = agent_means.size();
  if (n < 2) throw ContractError("sei: need at least 2 agents");
  double total = 0.0;
  int pairs = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      ++pairs;
      const double ni = norm(agent_means[i]);
      const double nj = norm(agent_means[j]);
      if (ni == 0.0 || nj == 0.0) continue;  // zero vectors contribute 0
      if (agent_means[i].size() != agent_means[j].size()) {
        throw DimensionError("sei: payload widths differ");
      }
      total += dot(agent_means[i], agent_means[j]) / (ni * nj);
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<Vec> sei_grad(const std::vector<Vec>& agent_means) {
  const size_t n = agent_means.size();
  if (n < 2) throw ContractError("sei_grad: need at least 2 agents");
  std::vector<Vec> grads;
  grads.reserve(n);
  for (const Vec& m : agent_means) grads.emplace_back(m.size(), 0.0);
  const double inv_pairs = 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const Vec& a = agent_means[i];
      const Vec& b = agent_means[j];
      const double na = norm(a);
      const double nb = norm(b);
      if (na == 0.0 || nb == 0.0) continue;
      const double cos_ab = dot(a, b) / (na * nb);
      for (size_t k = 0; k < a.size(); ++k) {
        grads[i][k] += inv_pairs * (b[k] / (na * nb) - cos_ab * a[k] / (na * na));
        grads[j][k] += inv_pairs * (a[k] / (na * nb) - cos_ab * b[k] / (nb * nb));
      }
    }
  }
  return grads;
}

double success_rate(const std::vector<bool>& successes) {
  if (successes.empty()) throw ContractError("success_rate: no episodes");
  double s = 0.0;
  for (bool b : successes) s += b ? 1.0 : 0.0;
  return s / static_cast<double>(successes.size());
}

double avg_steps(const std::vector<int>& lengths) {
  if (lengths.empty()) throw ContractError("avg_steps: no episodes");
  double s = 0.0;
  for (int l : lengths) s += static_cast<double>(l);
  return s / static_cast<double>(lengths.size());
}

std::optional<int> convergence_epoch(const std::vector<double>& curve, int window, double theta) {
  const int n = static_cast<int>(curve.size());
  if (window <= 0) throw ContractError("convergence_epoch: window must be positive");
  if (n < window) throw ContractError("convergence_epoch: curve shorter than window");
  auto moving_avg = [&](int last) {  // mean of curve[last-window+1 .. last], 0-indexed
    double s = 0.0;
    for (int i = last - window + 1; i <= last; ++i) s += curve[static_cast<size_t>(i)];
    return s / static_cast<double>(window);
  };
  const double target = theta * moving_avg(n - 1);
  for (int last = window - 1; last < n; ++last) {
    if (moving_avg(last) >= target) return last + 1;  // 1-indexed epoch
  }
  return std::nullopt;
}

}  // namespace dagcomm::metrics
