#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dpgen/checkpoint.hpp"
#include "dpgen/data.hpp"
#include "dpgen/trainer.hpp"

using namespace dpgen;
namespace fs = std::filesystem;

namespace {

TrainConfig fast_cfg() {
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.classes = 2;
  cfg.synth_per_class = 40;
  cfg.image_size = 8;
  cfg.latent_dim = 4;
  cfg.embed_dim = 2;
  cfg.gen_channels = {4, 4, 2};
  cfg.disc_hidden = {16};
  cfg.cls_hidden = {8};
  cfg.enc_hidden = {8};
  cfg.k = 2;
  cfg.batch = 8;
  cfg.iterations = 5;
  cfg.n_dis = 1;
  cfg.n_en = 1;
  cfg.n_f = 1;
  cfg.n_r = 1;
  cfg.n_pre = 2;
  cfg.gamma = 0.5;
  cfg.sigma = 2.0;
  cfg.eps = 1e6;  // wide open unless a test narrows it
  cfg.eval_interval = 2;
  cfg.eval_samples = 8;
  cfg.validate();
  return cfg;
}

LabeledDataset fast_data(const TrainConfig& cfg) {
  return synth_dataset(cfg.classes, cfg.synth_per_class, cfg.image_size, cfg.image_size,
                       RngStream(cfg.seed).substream("synth_data").seed());
}

std::string temp_path(const char* name) { return (fs::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("partition splits evenly, disjointly and deterministically") {
  LabeledDataset ds = synth_dataset(2, 50, 8, 8, 3);  // 100 samples
  auto subsets = partition_dataset(ds, 10, 42);
  REQUIRE(subsets.size() == 10);
  std::set<int64_t> seen;
  for (const auto& s : subsets) {
    CHECK(s.size() == 10);
    for (int64_t idx : s) CHECK(seen.insert(idx).second);  // disjoint
  }
  CHECK(seen.size() == 100);  // exhaustive

  auto again = partition_dataset(ds, 10, 42);
  CHECK(again == subsets);
  CHECK(partition_dataset(ds, 10, 43) != subsets);
}

TEST_CASE("partition with a remainder differs by at most one") {
  LabeledDataset ds = synth_dataset(1, 101, 8, 8, 4);
  auto subsets = partition_dataset(ds, 10, 1);
  size_t smallest = 1000, largest = 0;
  std::set<int64_t> seen;
  for (const auto& s : subsets) {
    smallest = std::min(smallest, s.size());
    largest = std::max(largest, s.size());
    for (int64_t idx : s) CHECK(seen.insert(idx).second);
  }
  CHECK(largest - smallest <= 1);
  CHECK(seen.size() == 101);

  LabeledDataset tiny = synth_dataset(1, 5, 8, 8, 4);
  CHECK_THROWS_AS(partition_dataset(tiny, 10, 1), std::invalid_argument);
}

TEST_CASE("pretrain with zero steps returns the random init") {
  TrainConfig cfg = fast_cfg();
  cfg.n_pre = 0;
  LabeledDataset ds = fast_data(cfg);
  RunState st = init_run_state(cfg, ds);
  SubsetLoader loader(ds, st.partition);
  std::vector<ParamVector> bank = pretrain_discriminators(cfg, loader, st.bundle);
  REQUIRE(bank.size() == st.bundle.disc_params.size());
  for (size_t i = 0; i < bank.size(); ++i)
    CHECK(bank[i].raw() == st.bundle.disc_params[i].raw());
}

TEST_CASE("pretraining widens the real-fake critic gap on most subsets") {
  TrainConfig cfg = fast_cfg();
  cfg.k = 5;
  cfg.synth_per_class = 50;
  cfg.n_pre = 40;
  cfg.eta_d = 5e-3;
  LabeledDataset ds = fast_data(cfg);
  RunState st = init_run_state(cfg, ds);
  SubsetLoader loader(ds, st.partition);
  std::vector<ParamVector> bank = pretrain_discriminators(cfg, loader, st.bundle);

  auto gap = [&](const ParamVector& dparams, int64_t subset) {
    RngStream rng(777);
    Batch real = loader.sample(subset, 32, rng);
    Tensor z = gaussian_sample({32, cfg.latent_dim}, 0.0, 1.0, rng);
    std::vector<int> y(32, 0);
    RngStream inj(778);
    Tensor fake = generator_forward(st.bundle.gen_spec, st.bundle.gen_params, z, &y,
                                    cfg.noise(), inj);
    Tensor sr = mlp_forward(st.bundle.disc_spec, dparams, flatten_images(real.images));
    Tensor sf = mlp_forward(st.bundle.disc_spec, dparams, flatten_images(fake));
    return mean(sr) - mean(sf);
  };

  int improved = 0;
  for (int64_t i = 0; i < cfg.k; ++i)
    if (gap(bank[static_cast<size_t>(i)], i) > gap(st.bundle.disc_params[static_cast<size_t>(i)], i))
      ++improved;
  CHECK(improved >= static_cast<int>(0.8 * static_cast<double>(cfg.k)));
}

TEST_CASE("loader only hands out indices from the requested subset") {
  TrainConfig cfg = fast_cfg();
  LabeledDataset ds = fast_data(cfg);
  RunState st = init_run_state(cfg, ds);
  SubsetLoader loader(ds, st.partition);

  std::vector<std::set<int64_t>> allowed(static_cast<size_t>(cfg.k));
  for (int64_t i = 0; i < cfg.k; ++i)
    allowed[static_cast<size_t>(i)].insert(st.partition[static_cast<size_t>(i)].begin(),
                                           st.partition[static_cast<size_t>(i)].end());
  int64_t audited = 0;
  loader.observer = [&](int64_t subset, int64_t index) {
    ++audited;
    CHECK(allowed[static_cast<size_t>(subset)].count(index) == 1);
  };

  for (int iter = 0; iter < 4; ++iter) {
    IterationStatus status = train_iteration(st, cfg, loader);
    CHECK(status == IterationStatus::Ok);
  }
  CHECK(audited > 0);
}

TEST_CASE("degenerate inner loops still advance generator and ledger") {
  TrainConfig cfg = fast_cfg();
  cfg.n_dis = 0;
  cfg.n_en = 0;
  cfg.n_f = 0;
  cfg.n_r = 0;
  LabeledDataset ds = fast_data(cfg);
  RunState st = init_run_state(cfg, ds);
  SubsetLoader loader(ds, st.partition);

  const std::vector<double> disc0 = st.bundle.disc_params[0].raw();
  const std::vector<double> cls0 = st.bundle.cls_params.raw();
  const std::vector<double> enc0 = st.bundle.enc_params.raw();
  const std::vector<double> gen0 = st.bundle.gen_params.raw();

  CHECK(train_iteration(st, cfg, loader) == IterationStatus::Ok);
  CHECK(st.iteration == 1);
  CHECK(st.ledger.steps == 1);
  CHECK(st.bundle.disc_params[0].raw() == disc0);
  CHECK(st.bundle.cls_params.raw() == cls0);
  CHECK(st.bundle.enc_params.raw() == enc0);
  CHECK(st.bundle.gen_params.raw() != gen0);
}

TEST_CASE("training is deterministic in config, dataset and seed") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 4;
  LabeledDataset ds = fast_data(cfg);
  TrainResult a = train(cfg, ds);
  TrainResult b = train(cfg, ds);
  CHECK(a.state.bundle.gen_params.raw() == b.state.bundle.gen_params.raw());
  CHECK(a.state.bundle.cls_params.raw() == b.state.bundle.cls_params.raw());
  CHECK(a.log_lines == b.log_lines);
  CHECK(a.state.ledger.eps_per_order == b.state.ledger.eps_per_order);
}

TEST_CASE("ledger grows by exactly the one-step cost per iteration") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 10;
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  CHECK(r.state.ledger.steps == 10);
  RdpLedger one = step_account(make_ledger(default_order_grid(), cfg.sigma, cfg.gamma));
  for (size_t i = 0; i < one.orders.size(); ++i)
    CHECK(r.state.ledger.eps_per_order[i] ==
          doctest::Approx(10.0 * one.eps_per_order[i]).epsilon(1e-12));
}

TEST_CASE("run stops after exactly T iterations under a wide budget") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 5;
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  CHECK(r.completed == 5);
  CHECK(r.state.iteration == 5);
  CHECK(r.state.ledger.steps == 5);
  CHECK(!r.halted_by_budget);
}

TEST_CASE("privacy gate refuses the first over-budget iteration") {
  TrainConfig cfg = fast_cfg();
  // one step already exceeds the target
  const double one_step =
      to_eps_delta(step_account(make_ledger(default_order_grid(), cfg.sigma, cfg.gamma)), cfg.delta);
  cfg.eps = one_step * 0.9;
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  CHECK(r.completed == 0);
  CHECK(r.state.iteration == 0);
  CHECK(r.halted_by_budget);
  CHECK(to_eps_delta(r.state.ledger, cfg.delta) <= cfg.eps);
}

TEST_CASE("gate halts mid-run and never exceeds the budget") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 50;
  const RdpLedger base = make_ledger(default_order_grid(), cfg.sigma, cfg.gamma);
  RdpLedger l3 = base;
  for (int i = 0; i < 3; ++i) l3 = step_account(l3);
  RdpLedger l4 = step_account(l3);
  // budget admits exactly three steps
  cfg.eps = 0.5 * (to_eps_delta(l3, cfg.delta) + to_eps_delta(l4, cfg.delta));
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  CHECK(r.completed == 3);
  CHECK(r.halted_by_budget);
  CHECK(to_eps_delta(r.state.ledger, cfg.delta) <= cfg.eps);
}

TEST_CASE("checkpoint save/load/resume reproduces uninterrupted training bit-exactly") {
  TrainConfig cfg3 = fast_cfg();
  cfg3.iterations = 3;
  LabeledDataset ds = fast_data(cfg3);
  TrainResult first = train(cfg3, ds);

  const std::string path = temp_path("dpgen_state.ckpt");
  checkpoint_save(first.state, cfg3, path);
  RunState resumed = checkpoint_load(path, cfg3);

  TrainConfig cfg6 = cfg3;
  cfg6.iterations = 6;
  TrainResult cont = train(cfg6, ds, &resumed);
  TrainResult straight = train(cfg6, ds);

  CHECK(cont.state.iteration == 6);
  CHECK(cont.state.bundle.gen_params.raw() == straight.state.bundle.gen_params.raw());
  CHECK(cont.state.bundle.cls_params.raw() == straight.state.bundle.cls_params.raw());
  CHECK(cont.state.bundle.enc_params.raw() == straight.state.bundle.enc_params.raw());
  for (size_t i = 0; i < cont.state.bundle.disc_params.size(); ++i)
    CHECK(cont.state.bundle.disc_params[i].raw() == straight.state.bundle.disc_params[i].raw());
  for (size_t s = 0; s < kNumSources; ++s)
    CHECK(cont.state.ef.errors[s].data == straight.state.ef.errors[s].data);
  CHECK(cont.state.ledger.eps_per_order == straight.state.ledger.eps_per_order);
}

TEST_CASE("checkpoint load rejects a corrupt header") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 1;
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  const std::string path = temp_path("dpgen_corrupt.ckpt");
  checkpoint_save(r.state, cfg, path);

  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(0);
  f.put('X');
  f.close();
  CHECK_THROWS_AS(checkpoint_load(path, cfg), FormatError);
}

TEST_CASE("checkpoint load rejects a missing required section") {
  TrainConfig cfg = fast_cfg();
  LabeledDataset ds = fast_data(cfg);
  RunState st = init_run_state(cfg, ds);
  // a bank file shares the container format but lacks the ef/ledger sections
  const std::string path = temp_path("dpgen_bank_as_ckpt.ckpt");
  save_discriminator_bank(cfg.discriminator_spec(), st.bundle.disc_params, cfg, path);
  try {
    checkpoint_load(path, cfg);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("missing required section") != std::string::npos);
  }
}

TEST_CASE("checkpoint load rejects a different config digest") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 1;
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  const std::string path = temp_path("dpgen_digest.ckpt");
  checkpoint_save(r.state, cfg, path);

  TrainConfig other = cfg;
  other.sigma = cfg.sigma * 2.0;
  CHECK_THROWS_AS(checkpoint_load(path, other), FormatError);

  // stopping criteria may change freely
  TrainConfig longer = cfg;
  longer.iterations = 100;
  longer.eps = 123.0;
  CHECK_NOTHROW(checkpoint_load(path, longer));
}

TEST_CASE("public generator checkpoint carries no private parameters") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 1;
  LabeledDataset ds = fast_data(cfg);
  TrainResult r = train(cfg, ds);
  const std::string path = temp_path("dpgen_public.ckpt");
  save_public_generator(r.state, cfg, path);

  std::vector<std::string> names = checkpoint_section_names(path);
  for (const std::string& n : names) {
    CHECK(n.find("disc") == std::string::npos);
    CHECK(n.find("cls") == std::string::npos);
    CHECK(n.find("enc") == std::string::npos);
  }

  PublicGenerator pg = load_public_generator(path);
  CHECK(pg.params.raw() == r.state.bundle.gen_params.raw());
  CHECK(pg.ledger.steps == r.state.ledger.steps);
  CHECK(pg.noise.sigma_noise == cfg.sigma_noise);
}

TEST_CASE("bank round trip and pretrained-bank training path") {
  TrainConfig cfg = fast_cfg();
  cfg.iterations = 2;
  LabeledDataset ds = fast_data(cfg);
  RunState st = init_run_state(cfg, ds);
  SubsetLoader loader(ds, st.partition);
  std::vector<ParamVector> bank = pretrain_discriminators(cfg, loader, st.bundle);

  const std::string path = temp_path("dpgen_bank.ckpt");
  save_discriminator_bank(cfg.discriminator_spec(), bank, cfg, path);
  std::vector<ParamVector> loaded = load_discriminator_bank(path, cfg);
  REQUIRE(loaded.size() == bank.size());
  for (size_t i = 0; i < bank.size(); ++i) CHECK(loaded[i].raw() == bank[i].raw());

  // training with the external bank equals training with inline pretraining
  TrainResult with_bank = train(cfg, ds, nullptr, &loaded);
  TrainResult inline_pre = train(cfg, ds);
  CHECK(with_bank.state.bundle.gen_params.raw() == inline_pre.state.bundle.gen_params.raw());
}

TEST_CASE("init_run_state validates dataset shape and size") {
  TrainConfig cfg = fast_cfg();
  LabeledDataset tiny = synth_dataset(cfg.classes, 2, cfg.image_size, cfg.image_size, 1);
  CHECK_THROWS_AS(init_run_state(cfg, tiny), std::invalid_argument);
  LabeledDataset wrong_size = synth_dataset(cfg.classes, cfg.synth_per_class, 16, 16, 1);
  CHECK_THROWS_AS(init_run_state(cfg, wrong_size), std::invalid_argument);
}
