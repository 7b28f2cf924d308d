#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpgen/checkpoint.hpp"
#include "dpgen/common.hpp"
#include "dpgen/data.hpp"
#include "dpgen/metrics.hpp"
#include "dpgen/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dpgen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed_override;
  std::string dataset_images;
  std::string dataset_labels;
};

TrainConfig load_config(const CommonOpts& opts) {
  TrainConfig cfg = load_config_file(opts.config_path);
  if (opts.seed_override) {
    cfg.seed = *opts.seed_override;
    cfg.validate();
  }
  return cfg;
}

LabeledDataset load_dataset(const TrainConfig& cfg, const CommonOpts& opts) {
  if (cfg.data == "synth") {
    return synth_dataset(cfg.classes, cfg.synth_per_class, cfg.image_size, cfg.image_size,
                         RngStream(cfg.seed).substream("synth_data").seed());
  }
  if (opts.dataset_images.empty() || opts.dataset_labels.empty())
    throw ConfigError("data = idx requires --dataset-images and --dataset-labels");
  LabeledDataset ds;
  ds.images = read_idx_images(opts.dataset_images);
  ds.labels = read_idx_labels(opts.dataset_labels);
  ds.num_classes = cfg.classes;
  if (ds.size() != static_cast<int64_t>(ds.labels.size()))
    throw FormatError("image and label counts differ");
  for (int y : ds.labels)
    if (y < 0 || y >= cfg.classes) throw FormatError("label outside configured class range");
  return ds;
}

void write_resolved_config(const TrainConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "config.resolved");
  f << config_to_text(cfg);
}

int run_pretrain(const CommonOpts& opts) {
  TrainConfig cfg = load_config(opts);
  std::cout << "seed=" << cfg.seed << "\n";
  LabeledDataset ds = load_dataset(cfg, opts);
  write_resolved_config(cfg, opts.out_dir);
  fs::create_directories(fs::path(opts.out_dir) / "private");

  RunState st = init_run_state(cfg, ds);
  SubsetLoader loader(ds, st.partition);
  std::vector<double> losses;
  std::vector<ParamVector> bank = pretrain_discriminators(cfg, loader, st.bundle, &losses);
  for (size_t i = 0; i < losses.size(); ++i)
    std::cout << "subset=" << i << "\tloss_d=" << losses[i] << "\n";
  const std::string path = (fs::path(opts.out_dir) / "private" / "bank.ckpt").string();
  save_discriminator_bank(cfg.discriminator_spec(), bank, cfg, path);
  std::cout << "bank=" << path << "\n";
  return kExitOk;
}

int run_train(const CommonOpts& opts, const std::string& bank_path,
              const std::string& resume_path) {
  TrainConfig cfg = load_config(opts);
  std::cout << "seed=" << cfg.seed << "\n";
  LabeledDataset ds = load_dataset(cfg, opts);
  write_resolved_config(cfg, opts.out_dir);
  const fs::path out(opts.out_dir);
  fs::create_directories(out / "public");
  fs::create_directories(out / "private");

  std::optional<RunState> resume;
  if (!resume_path.empty()) resume = checkpoint_load(resume_path, cfg);
  std::optional<std::vector<ParamVector>> bank;
  if (!bank_path.empty()) bank = load_discriminator_bank(bank_path, cfg);

  std::ofstream log(out / "metrics.log", resume ? std::ios::app : std::ios::trunc);
  TrainResult result = train(cfg, ds, resume ? &*resume : nullptr, bank ? &*bank : nullptr, &log);

  checkpoint_save(result.state, cfg, (out / "private" / "state.ckpt").string());
  save_public_generator(result.state, cfg, (out / "public" / "generator.ckpt").string());

  const double final_eps = to_eps_delta(result.state.ledger, cfg.delta);
  std::cout << "iterations=" << result.state.iteration
            << (result.halted_by_budget ? "\tbudget_gate=hit" : "") << "\n";
  std::cout << "final eps=" << final_eps << " delta=" << cfg.delta << "\n";
  return kExitOk;
}

int run_generate(const std::string& checkpoint, int64_t count, uint64_t seed,
                 const std::string& out_dir) {
  PublicGenerator pg = load_public_generator(checkpoint);
  std::cout << "seed=" << seed << "\n";
  fs::create_directories(out_dir);
  GeneratedBatch gb = sample_generator(pg.spec, pg.params, pg.noise, count, seed);
  const fs::path out(out_dir);
  write_idx_images((out / "images.idx").string(), gb.images);
  write_idx_labels((out / "labels.idx").string(), gb.labels);
  std::cout << "images=" << (out / "images.idx").string() << "\n";
  std::cout << "labels=" << (out / "labels.idx").string() << "\n";
  return kExitOk;
}

int run_eval(const CommonOpts& opts, const std::string& gen_images, const std::string& gen_labels,
             const std::string& checkpoint) {
  TrainConfig cfg = load_config(opts);
  std::cout << "seed=" << cfg.seed << "\n";
  LabeledDataset real = load_dataset(cfg, opts);

  FeatureClassifier fc = train_feature_classifier(real, cfg.feat_hidden, cfg.feat_steps,
                                                  cfg.feat_seed);

  Tensor gen;
  std::vector<int> labels;
  if (!checkpoint.empty()) {
    PublicGenerator pg = load_public_generator(checkpoint);
    GeneratedBatch gb = sample_generator(pg.spec, pg.params, pg.noise, real.size(), cfg.seed);
    gen = gb.images;
    labels = gb.labels;
  } else if (!gen_images.empty()) {
    gen = read_idx_images(gen_images);
    if (!gen_labels.empty()) labels = read_idx_labels(gen_labels);
  } else {
    // real-vs-real sanity split
    const int64_t half = real.size() / 2;
    const int64_t hw = real.height() * real.width();
    Tensor a = Tensor::zeros({half, real.height(), real.width()});
    Tensor b = Tensor::zeros({real.size() - half, real.height(), real.width()});
    std::copy(real.images.data.begin(), real.images.data.begin() + half * hw, a.data.begin());
    std::copy(real.images.data.begin() + half * hw, real.images.data.end(), b.data.begin());
    FeatureStats sa = feature_stats(a, FeatureExtractor::ClassifierPenultimate, &fc.spec, &fc.params);
    FeatureStats sb = feature_stats(b, FeatureExtractor::ClassifierPenultimate, &fc.spec, &fc.params);
    const double fd = frechet_distance(sa, sb);
    const double is = inception_style_score(b, fc.spec, fc.params);
    std::cout << "fd=" << fd << "\tis=" << is << "\n";
    return kExitOk;
  }

  FeatureStats sr = feature_stats(real.images, FeatureExtractor::ClassifierPenultimate, &fc.spec,
                                  &fc.params);
  FeatureStats sg = feature_stats(gen, FeatureExtractor::ClassifierPenultimate, &fc.spec, &fc.params);
  const double fd = frechet_distance(sr, sg);
  const double is = inception_style_score(gen, fc.spec, fc.params);
  std::cout << "fd=" << fd << "\tis=" << is;
  if (!labels.empty()) {
    const double mlp = train_probe_accuracy(gen, labels, real, cfg.classes, ProbeKind::Mlp,
                                            cfg.seed);
    const double cnn = train_probe_accuracy(gen, labels, real, cfg.classes, ProbeKind::CnnLike,
                                            cfg.seed);
    std::cout << "\tg2r_mlp=" << mlp << "\tg2r_cnn=" << cnn;
  }
  std::cout << "\n";
  return kExitOk;
}

int run_account(double sigma, double gamma, double delta, int64_t steps, double target_eps,
                const std::string& orders_arg) {
  std::vector<double> orders = default_order_grid();
  if (!orders_arg.empty()) {
    orders.clear();
    std::stringstream ss(orders_arg);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) orders.push_back(std::stod(item));
  }

  if (target_eps > 0.0) {
    DpBudget budget{target_eps, delta};
    const int64_t max_steps = steps_for_budget(budget, sigma, gamma, orders);
    std::cout << "max_steps=" << max_steps << " at eps=" << target_eps << " delta=" << delta
              << "\n";
    json j{{"max_steps", max_steps}, {"target_eps", target_eps}, {"delta", delta},
           {"sigma", sigma}, {"gamma", gamma}};
    std::cout << j.dump() << "\n";
    return kExitOk;
  }

  RdpLedger ledger = make_ledger(orders, sigma, gamma);
  for (int64_t s = 0; s < steps; ++s) ledger = step_account(ledger);
  std::cout << "lambda\teps_rdp\n";
  for (size_t i = 0; i < ledger.orders.size(); ++i) {
    std::cout << ledger.orders[i] << "\t" << ledger.eps_per_order[i] << "\n";
    json j{{"lambda", ledger.orders[i]}, {"eps", ledger.eps_per_order[i]}};
    std::cout << j.dump() << "\n";
  }
  const double eps = to_eps_delta(ledger, delta);
  std::cout << "final eps=" << eps << " delta=" << delta << " steps=" << steps << "\n";
  json j{{"epsilon", eps}, {"delta", delta}, {"steps", steps}, {"sigma", sigma}, {"gamma", gamma}};
  std::cout << j.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale differentially private generative training"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string bank_path, resume_path, checkpoint, gen_images, gen_labels, orders;
  int64_t count = 100, steps = 0;
  uint64_t gen_seed = 0;
  double sigma = 1.0, gamma = 0.1, delta = 1e-5, target_eps = 0.0;

  auto add_common = [&](CLI::App* cmd, bool need_out) {
    cmd->add_option("--config", opts.config_path, "config file")->required();
    if (need_out) cmd->add_option("--out", opts.out_dir, "output directory")->required();
    cmd->add_option("--seed", opts.seed_override, "override the config seed");
    cmd->add_option("--dataset-images", opts.dataset_images, "IDX image file (data = idx)");
    cmd->add_option("--dataset-labels", opts.dataset_labels, "IDX label file (data = idx)");
  };

  CLI::App* pre = app.add_subcommand("pretrain", "pretrain the discriminator bank");
  add_common(pre, true);

  CLI::App* tr = app.add_subcommand("train", "run the private training loop");
  add_common(tr, true);
  tr->add_option("--bank", bank_path, "pretrained discriminator bank");
  tr->add_option("--resume", resume_path, "resume from a full checkpoint");

  CLI::App* gen = app.add_subcommand("generate", "sample images from a public generator");
  gen->add_option("--checkpoint", checkpoint, "public generator checkpoint")->required();
  gen->add_option("--count", count, "number of samples")->required();
  gen->add_option("--seed", gen_seed, "sampling seed")->required();
  gen->add_option("--out", opts.out_dir, "output directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "FD / IS / gen2real metrics");
  add_common(ev, false);
  ev->add_option("--gen-images", gen_images, "generated IDX images");
  ev->add_option("--gen-labels", gen_labels, "generated IDX labels");
  ev->add_option("--checkpoint", checkpoint, "public generator checkpoint to sample from");

  CLI::App* acc = app.add_subcommand("account", "RDP budget table / inverse query");
  acc->add_option("--sigma", sigma, "noise multiplier")->required();
  acc->add_option("--gamma", gamma, "sampling rate")->required();
  acc->add_option("--delta", delta, "target delta");
  acc->add_option("--steps", steps, "number of mechanism steps");
  acc->add_option("--target-eps", target_eps, "solve for the max steps within this epsilon");
  acc->add_option("--orders", orders, "comma-separated integer order grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return run_pretrain(opts);
    if (tr->parsed()) return run_train(opts, bank_path, resume_path);
    if (gen->parsed()) return run_generate(checkpoint, count, gen_seed, opts.out_dir);
    if (ev->parsed()) return run_eval(opts, gen_images, gen_labels, checkpoint);
    if (acc->parsed()) return run_account(sigma, gamma, delta, steps, target_eps, orders);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
