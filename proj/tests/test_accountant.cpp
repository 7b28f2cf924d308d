#include <cmath>
#include <vector>

#include "doctest.h"
#include "dpgen/accountant.hpp"

using namespace dpgen;

namespace {

// Independent evaluation of the subsampled bound in long double, structured
// as an incremental recurrence instead of lgamma + logsumexp.
long double dual_subsampled_eps(int64_t order, long double sigma, long double gamma) {
  if (gamma >= 1.0L) return static_cast<long double>(order) / (2.0L * sigma * sigma);
  // walk terms j = 0..order keeping a running max-scaled sum
  std::vector<long double> logs;
  long double log_c = 0.0L;  // log C(order, j), updated incrementally
  for (int64_t j = 0; j <= order; ++j) {
    if (j > 0) log_c += std::log(static_cast<long double>(order - j + 1)) -
                        std::log(static_cast<long double>(j));
    const long double t = log_c + static_cast<long double>(order - j) * std::log(1.0L - gamma) +
                          static_cast<long double>(j) * std::log(gamma) +
                          static_cast<long double>(j) * static_cast<long double>(j - 1) /
                              (2.0L * sigma * sigma);
    logs.push_back(t);
  }
  long double mx = logs[0];
  for (long double t : logs) mx = std::max(mx, t);
  long double s = 0.0L;
  for (long double t : logs) s += std::exp(t - mx);
  return (mx + std::log(s)) / static_cast<long double>(order - 1);
}

}  // namespace

TEST_CASE("gaussian mechanism rdp closed form") {
  CHECK(rdp_gaussian(2.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rdp_gaussian(2.0, 10.0, 1.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(rdp_gaussian(2.0, 1.0, 0.0) == 0.0);  // zero sensitivity, zero cost
  CHECK_THROWS_AS(rdp_gaussian(1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rdp_gaussian(2.0, 0.0, 1.0), std::invalid_argument);

  // monotone decrease in sigma
  double prev = rdp_gaussian(2.0, 0.5, 1.0);
  for (double s : {1.0, 2.0, 4.0, 8.0}) {
    const double cur = rdp_gaussian(2.0, s, 1.0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("subsampled bound collapses to plain gaussian at gamma = 1") {
  for (int64_t order : {2, 3, 8, 32, 64}) {
    for (double sigma : {0.5, 1.0, 2.0}) {
      const double sub = rdp_subsampled_gaussian(order, sigma, 1.0);
      const double plain = rdp_gaussian(static_cast<double>(order), sigma, 1.0);
      CHECK(std::abs(sub - plain) <= 1e-9);
    }
  }
}

TEST_CASE("order-2 closed form log(1 + gamma^2 (e^{1/sigma^2} - 1))") {
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (double gamma : {0.01, 0.1, 0.5}) {
      const double want = std::log(1.0 + gamma * gamma * (std::exp(1.0 / (sigma * sigma)) - 1.0));
      CHECK(std::abs(rdp_subsampled_gaussian(2, sigma, gamma) - want) <= 1e-9);
    }
  }
  const double spot = std::log(1.0 + 0.01 * (std::exp(1.0) - 1.0));
  CHECK(rdp_subsampled_gaussian(2, 1.0, 0.1) == doctest::Approx(spot).epsilon(1e-9));
}

TEST_CASE("subsampled bound rejects bad arguments") {
  CHECK_THROWS_AS(rdp_subsampled_gaussian(1, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(rdp_subsampled_gaussian(2, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rdp_subsampled_gaussian(2, 1.0, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(rdp_subsampled_gaussian(2, -1.0, 0.1), std::invalid_argument);
}

TEST_CASE("monotonicity grid: eps rises with gamma, falls with sigma") {
  const std::vector<double> gammas{0.01, 0.1, 0.5};
  const std::vector<double> sigmas{0.5, 1.0, 2.0};
  for (int64_t order = 2; order <= 64; ++order) {
    for (double sigma : sigmas) {
      double prev = -1.0;
      for (double gamma : gammas) {
        const double eps = rdp_subsampled_gaussian(order, sigma, gamma);
        CHECK(eps >= 0.0);
        CHECK(std::isfinite(eps));
        CHECK(eps >= prev - 1e-12);
        prev = eps;
      }
    }
    for (double gamma : gammas) {
      double prev = std::numeric_limits<double>::infinity();
      for (double sigma : sigmas) {
        const double eps = rdp_subsampled_gaussian(order, sigma, gamma);
        CHECK(eps <= prev + 1e-12);
        prev = eps;
      }
    }
  }
}

TEST_CASE("subsampled bound agrees with the dual implementation") {
  for (int64_t order : {2, 5, 16, 64}) {
    for (double sigma : {0.8, 1.07, 2.0}) {
      for (double gamma : {0.001, 0.1, 0.9}) {
        const double got = rdp_subsampled_gaussian(order, sigma, gamma);
        const double want = static_cast<double>(
            dual_subsampled_eps(order, static_cast<long double>(sigma),
                                static_cast<long double>(gamma)));
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("step accounting composes additively") {
  RdpLedger ledger = make_ledger(default_order_grid(), 1.0, 0.1);
  RdpLedger one = step_account(ledger);
  RdpLedger many = ledger;
  const int64_t k = 10;
  for (int64_t i = 0; i < k; ++i) many = step_account(many);
  CHECK(many.steps == k);
  for (size_t i = 0; i < ledger.orders.size(); ++i)
    CHECK(many.eps_per_order[i] ==
          doctest::Approx(static_cast<double>(k) * one.eps_per_order[i]).epsilon(1e-12));

  // zero steps -> zero epsilon everywhere
  for (double e : ledger.eps_per_order) CHECK(e == 0.0);
}

TEST_CASE("to_eps_delta on a single order") {
  RdpLedger ledger;
  ledger.orders = {2.0};
  ledger.eps_per_order = {1.0};
  ledger.gamma = 0.1;
  ledger.sigma = 1.0;
  ledger.steps = 1;
  CHECK(to_eps_delta(ledger, std::exp(-1.0)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("to_eps_delta with zero rdp reduces to conversion overhead") {
  RdpLedger ledger = make_ledger(default_order_grid(), 1.0, 0.1);
  const double delta = 1e-5;
  const double overhead = std::log(1.0 / delta) / (256.0 - 1.0);  // largest order wins
  CHECK(to_eps_delta(ledger, delta) == doctest::Approx(overhead).epsilon(1e-12));
}

TEST_CASE("to_eps_delta argument checks") {
  RdpLedger ledger = make_ledger(default_order_grid(), 1.0, 0.1);
  CHECK_THROWS_AS(to_eps_delta(ledger, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(to_eps_delta(ledger, 1.0), std::invalid_argument);
  RdpLedger empty;
  CHECK_THROWS_AS(to_eps_delta(empty, 1e-5), InvalidStateError);
}

TEST_CASE("to_eps_delta is monotone in steps and delta") {
  RdpLedger ledger = make_ledger(default_order_grid(), 1.07, 0.01);
  double prev = 0.0;
  for (int step = 0; step < 50; ++step) {
    const double eps = to_eps_delta(ledger, 1e-5);
    CHECK(eps >= prev - 1e-12);
    prev = eps;
    ledger = step_account(ledger);
  }
  CHECK(to_eps_delta(ledger, 1e-4) <= to_eps_delta(ledger, 1e-5));
}

TEST_CASE("2000-step conversion agrees with an independent reimplementation") {
  const double sigma = 1.07, gamma = 1.0 / 1000.0, delta = 1e-5;
  const int64_t steps = 2000;
  std::vector<double> orders = default_order_grid();

  RdpLedger ledger = make_ledger(orders, sigma, gamma);
  for (int64_t i = 0; i < steps; ++i) ledger = step_account(ledger);
  const double got = to_eps_delta(ledger, delta);

  long double best = 1e30L;
  for (double order : orders) {
    const long double per_step = dual_subsampled_eps(static_cast<int64_t>(order),
                                                     static_cast<long double>(sigma),
                                                     static_cast<long double>(gamma));
    const long double total = per_step * static_cast<long double>(steps) +
                              std::log(1.0L / static_cast<long double>(delta)) /
                                  (static_cast<long double>(order) - 1.0L);
    best = std::min(best, total);
  }
  CHECK(std::abs(got - static_cast<double>(best)) <= 1e-6);
}

TEST_CASE("steps_for_budget sits exactly on the boundary") {
  const DpBudget budget{10.0, 1e-5};
  for (double sigma : {1.07, 2.0}) {
    for (double gamma : {0.01, 0.1}) {
      const int64_t t = steps_for_budget(budget, sigma, gamma, default_order_grid());
      REQUIRE(t > 0);
      RdpLedger at_t = make_ledger(default_order_grid(), sigma, gamma);
      for (int64_t i = 0; i < t; ++i) at_t = step_account(at_t);
      CHECK(to_eps_delta(at_t, budget.delta) <= budget.epsilon);
      RdpLedger past = step_account(at_t);
      CHECK(to_eps_delta(past, budget.delta) > budget.epsilon);
    }
  }
}

TEST_CASE("steps_for_budget returns zero when the overhead alone exceeds eps") {
  const DpBudget budget{0.001, 1e-5};
  CHECK(steps_for_budget(budget, 1.0, 0.1, default_order_grid()) == 0);
}

TEST_CASE("steps_for_budget grows with sigma and handles huge sigma") {
  const DpBudget budget{10.0, 1e-5};
  int64_t prev = 0;
  for (double sigma : {1.0, 2.0, 4.0, 8.0}) {
    const int64_t t = steps_for_budget(budget, sigma, 0.001, default_order_grid());
    CHECK(t >= prev);
    prev = t;
  }

  // representable boundary: validate T vs T+1 by scaling the one-step cost
  const double sigma = 1e3, gamma = 0.001;
  const int64_t t = steps_for_budget(budget, sigma, gamma, default_order_grid());
  CHECK(t > 1000000);
  RdpLedger base = make_ledger(default_order_grid(), sigma, gamma);
  RdpLedger one = step_account(base);
  RdpLedger t_ledger = base;
  for (size_t i = 0; i < t_ledger.eps_per_order.size(); ++i)
    t_ledger.eps_per_order[i] = one.eps_per_order[i] * static_cast<double>(t);
  t_ledger.steps = t;
  CHECK(to_eps_delta(t_ledger, budget.delta) <= budget.epsilon);
  for (size_t i = 0; i < t_ledger.eps_per_order.size(); ++i)
    t_ledger.eps_per_order[i] = one.eps_per_order[i] * static_cast<double>(t + 1);
  t_ledger.steps = t + 1;
  CHECK(to_eps_delta(t_ledger, budget.delta) > budget.epsilon);

  // past the representable range the query saturates at the search cap
  const int64_t huge = steps_for_budget(budget, 1e6, gamma, default_order_grid());
  CHECK(huge == (int64_t{1} << 60));
}

TEST_CASE("ledger construction rejects bad grids") {
  CHECK_THROWS_AS(make_ledger({}, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_ledger({1.0, 2.0}, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_ledger({2.0, 2.0}, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_ledger({2.0, 3.0}, 0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_ledger({2.0, 3.0}, 1.0, 0.0), std::invalid_argument);
}
