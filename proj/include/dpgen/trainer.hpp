#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "dpgen/config.hpp"
#include "dpgen/data.hpp"
#include "dpgen/losses.hpp"
#include "dpgen/sanitizer.hpp"

namespace dpgen {

// Named random streams, one per consumer, all derived from the root seed so an
// ablation only perturbs the stream of the component it touches.
struct RngSet {
  RngStream subset;
  RngStream data;
  RngStream latent;
  RngStream labels;
  RngStream dp;
  RngStream inject;
  RngStream alpha;

  static RngSet from_seed(uint64_t seed);
  std::vector<RngStream*> streams();  // fixed serialization order
};

// Deterministic shuffle-and-slice partition into k near-equal subsets
// (sizes differ by at most one), disjoint and exhaustive.
std::vector<std::vector<int64_t>> partition_dataset(const LabeledDataset& dataset, int64_t k,
                                                    uint64_t seed);

struct Batch {
  Tensor images;  // [B,H,W]
  std::vector<int> labels;
};

// Batch sampler bound to the fixed partition; a batch can only come from one
// subset, which is what keeps discriminator i on D_i. The observer hook lets
// tests audit every index that is handed out.
class SubsetLoader {
 public:
  SubsetLoader(const LabeledDataset& dataset, std::vector<std::vector<int64_t>> subsets);

  Batch sample(int64_t subset, int64_t batch_size, RngStream& rng) const;
  int64_t num_subsets() const { return static_cast<int64_t>(subsets_.size()); }
  const std::vector<std::vector<int64_t>>& subsets() const { return subsets_; }
  const LabeledDataset& dataset() const { return *dataset_; }

  mutable std::function<void(int64_t subset, int64_t index)> observer;

 private:
  const LabeledDataset* dataset_;
  std::vector<std::vector<int64_t>> subsets_;
};

struct RunState {
  ModelBundle bundle;
  EfState ef;
  RdpLedger ledger;
  int64_t iteration = 0;
  RngSet rng;
  std::vector<std::vector<int64_t>> partition;
  // running average of the generator parameters; every iterate is already a
  // function of sanitized releases, so averaging is free post-processing
  ParamVector gen_params_avg;
  // heavy-ball buffer for the sanitized generator updates
  ParamVector gen_momentum;

  const ParamVector& release_generator() const { return gen_params_avg; }
};

// Fresh state at iteration zero: initialized models, zero EF errors, empty
// ledger, partition drawn from the seed. Discriminators start at random init
// until pretraining replaces them.
RunState init_run_state(const TrainConfig& cfg, const LabeledDataset& dataset);

// n_pre discriminator-loss steps per subset against the frozen initial
// generator. Returns the final per-subset discriminator loss when asked.
std::vector<ParamVector> pretrain_discriminators(const TrainConfig& cfg, const SubsetLoader& loader,
                                                 const ModelBundle& init_bundle,
                                                 std::vector<double>* final_losses = nullptr);

struct IterationStats {
  int64_t subset = -1;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_g_d = 0.0;
  double loss_g_c = 0.0;
  double loss_g_e = 0.0;
  double loss_en = 0.0;
  double loss_c = 0.0;
};

enum class IterationStatus { Ok, BudgetExhausted };

// One pass of the multi-component loop: discriminator steps, encoder steps,
// classifier steps on fake then real data, one sanitized generator update,
// one accountant step. Refuses to run (state untouched) if the step would
// push the converted epsilon past the budget.
IterationStatus train_iteration(RunState& state, const TrainConfig& cfg,
                                const SubsetLoader& loader, IterationStats* stats = nullptr);

struct TrainResult {
  RunState state;
  std::vector<std::string> log_lines;  // tab-separated key=value records
  int64_t completed = 0;
  bool halted_by_budget = false;
};

// Runs pretraining (unless a bank or resume state is supplied) and the full
// loop until `iterations` or the privacy gate. Only the generator and the
// ledger are release-safe; callers keep everything else private.
TrainResult train(const TrainConfig& cfg, const LabeledDataset& dataset,
                  const RunState* resume = nullptr,
                  const std::vector<ParamVector>* pretrained_bank = nullptr,
                  std::ostream* live_log = nullptr);

}  // namespace dpgen
