#include "dpgen/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpgen {

namespace {

double log_binom(int64_t n, int64_t k) {
  return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
         std::lgamma(static_cast<double>(n - k + 1));
}

double log_sum_exp(const std::vector<double>& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> per_step_costs(const RdpLedger& ledger) {
  std::vector<double> costs(ledger.orders.size());
  for (size_t i = 0; i < ledger.orders.size(); ++i)
    costs[i] = rdp_subsampled_gaussian(static_cast<int64_t>(ledger.orders[i]), ledger.sigma,
                                       ledger.gamma);
  return costs;
}

}  // namespace

std::vector<double> default_order_grid() {
  std::vector<double> orders;
  for (int64_t l = 2; l <= 64; ++l) orders.push_back(static_cast<double>(l));
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

double rdp_gaussian(double order, double sigma, double sensitivity) {
  if (order <= 1.0) throw std::invalid_argument("rdp_gaussian: order must exceed 1");
  if (sigma <= 0.0) throw std::invalid_argument("rdp_gaussian: sigma must be positive");
  if (sensitivity < 0.0) throw std::invalid_argument("rdp_gaussian: negative sensitivity");
  return order * sensitivity * sensitivity / (2.0 * sigma * sigma);
}

double rdp_subsampled_gaussian(int64_t order, double sigma, double gamma) {
  if (order < 2) throw std::invalid_argument("rdp_subsampled_gaussian: integer order >= 2 required");
  if (sigma <= 0.0) throw std::invalid_argument("rdp_subsampled_gaussian: sigma must be positive");
  if (gamma <= 0.0 || gamma > 1.0)
    throw std::invalid_argument("rdp_subsampled_gaussian: gamma must be in (0,1]");
  if (gamma == 1.0) return rdp_gaussian(static_cast<double>(order), sigma, 1.0);

  const double log_gamma = std::log(gamma);
  const double log_1m_gamma = std::log1p(-gamma);
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(order + 1));
  for (int64_t j = 0; j <= order; ++j) {
    const double lb = log_binom(order, j);
    const double moment = static_cast<double>(j) * static_cast<double>(j - 1) /
                          (2.0 * sigma * sigma);
    terms.push_back(lb + static_cast<double>(order - j) * log_1m_gamma +
                    static_cast<double>(j) * log_gamma + moment);
  }
  const double lse = log_sum_exp(terms);
  const double eps = lse / static_cast<double>(order - 1);
  if (!std::isfinite(eps)) throw NumericError("rdp_subsampled_gaussian: non-finite bound");
  return std::max(0.0, eps);
}

RdpLedger make_ledger(std::vector<double> orders, double sigma, double gamma) {
  if (orders.empty()) throw std::invalid_argument("make_ledger: empty order grid");
  for (size_t i = 0; i < orders.size(); ++i) {
    if (orders[i] <= 1.0) throw std::invalid_argument("make_ledger: orders must exceed 1");
    if (i > 0 && orders[i] <= orders[i - 1])
      throw std::invalid_argument("make_ledger: orders must be strictly ascending");
  }
  if (sigma <= 0.0) throw std::invalid_argument("make_ledger: sigma must be positive");
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("make_ledger: gamma in (0,1]");
  RdpLedger ledger;
  ledger.orders = std::move(orders);
  ledger.eps_per_order.assign(ledger.orders.size(), 0.0);
  ledger.sigma = sigma;
  ledger.gamma = gamma;
  ledger.steps = 0;
  return ledger;
}

RdpLedger step_account(const RdpLedger& ledger) {
  RdpLedger next = ledger;
  const std::vector<double> costs = per_step_costs(ledger);
  for (size_t i = 0; i < next.eps_per_order.size(); ++i) next.eps_per_order[i] += costs[i];
  next.steps += 1;
  return next;
}

double to_eps_delta(const RdpLedger& ledger, double delta) {
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("to_eps_delta: delta in (0,1)");
  if (ledger.orders.empty()) throw InvalidStateError("to_eps_delta: empty order grid");
  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < ledger.orders.size(); ++i)
    best = std::min(best, ledger.eps_per_order[i] + log_inv_delta / (ledger.orders[i] - 1.0));
  return best;
}

int64_t steps_for_budget(const DpBudget& budget, double sigma, double gamma,
                         const std::vector<double>& orders) {
  if (budget.epsilon <= 0.0) throw std::invalid_argument("steps_for_budget: epsilon > 0 required");
  RdpLedger base = make_ledger(orders, sigma, gamma);
  const std::vector<double> costs = per_step_costs(base);
  const double log_inv_delta = std::log(1.0 / budget.delta);

  auto eps_at = [&](int64_t t) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < base.orders.size(); ++i)
      best = std::min(best, static_cast<double>(t) * costs[i] +
                                log_inv_delta / (base.orders[i] - 1.0));
    return best;
  };

  if (eps_at(0) > budget.epsilon) return 0;
  const int64_t cap = int64_t{1} << 60;
  if (eps_at(cap) <= budget.epsilon) return cap;  // saturated: answer exceeds the search range
  int64_t lo = 0, hi = 1;
  while (eps_at(hi) <= budget.epsilon) {
    lo = hi;
    hi *= 2;
  }
  // invariant: eps_at(lo) <= epsilon < eps_at(hi)
  while (hi - lo > 1) {
    const int64_t mid = lo + (hi - lo) / 2;
    if (eps_at(mid) <= budget.epsilon)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace dpgen
