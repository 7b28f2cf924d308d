#pragma once

#include <cstdint>
#include <vector>

#include "dpgen/common.hpp"

namespace dpgen {

struct DpBudget {
  double epsilon = 10.0;
  double delta = 1e-5;
};

// Accumulated RDP cost over a fixed grid of orders, for one subsampled
// Gaussian mechanism applied once per tracked step.
struct RdpLedger {
  std::vector<double> orders;         // ascending, each > 1
  std::vector<double> eps_per_order;  // accumulated RDP epsilon at each order
  double gamma = 1.0;                 // sampling rate
  double sigma = 1.0;                 // noise multiplier
  int64_t steps = 0;
};

// Integer orders 2..64 plus 128 and 256 (integer orders keep the subsampling
// binomial series exact).
std::vector<double> default_order_grid();

// Gaussian mechanism: lambda * sensitivity^2 / (2 sigma^2).
double rdp_gaussian(double order, double sigma, double sensitivity);

// Poisson-subsampled Gaussian mechanism at integer order >= 2:
//   eps(l) = log( sum_{j=0}^{l} C(l,j) (1-gamma)^(l-j) gamma^j e^{j(j-1)/(2 sigma^2)} ) / (l-1)
// evaluated in log-space.
double rdp_subsampled_gaussian(int64_t order, double sigma, double gamma);

RdpLedger make_ledger(std::vector<double> orders, double sigma, double gamma);

// One mechanism application: adds the per-order cost, bumps the step count.
RdpLedger step_account(const RdpLedger& ledger);

// Standard RDP -> (eps, delta) conversion: min over orders of
// eps(lambda) + log(1/delta) / (lambda - 1).
double to_eps_delta(const RdpLedger& ledger, double delta);

// Largest step count whose conversion stays within the budget; saturates at
// 2^60 when even that many steps fit.
int64_t steps_for_budget(const DpBudget& budget, double sigma, double gamma,
                         const std::vector<double>& orders);

}  // namespace dpgen
