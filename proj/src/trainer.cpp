#include "dpgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dpgen/metrics.hpp"

namespace dpgen {

RngSet RngSet::from_seed(uint64_t seed) {
  RngStream root(seed);
  RngSet s;
  s.subset = root.substream("subset");
  s.data = root.substream("data");
  s.latent = root.substream("latent");
  s.labels = root.substream("labels");
  s.dp = root.substream("dp_noise");
  s.inject = root.substream("inject");
  s.alpha = root.substream("gp_alpha");
  return s;
}

std::vector<RngStream*> RngSet::streams() {
  return {&subset, &data, &latent, &labels, &dp, &inject, &alpha};
}

std::vector<std::vector<int64_t>> partition_dataset(const LabeledDataset& dataset, int64_t k,
                                                    uint64_t seed) {
  const int64_t n = dataset.size();
  if (k < 1) throw std::invalid_argument("partition_dataset: k must be >= 1");
  if (n < k) throw std::invalid_argument("partition_dataset: dataset smaller than k");
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  RngStream rng = RngStream(seed).substream("partition");
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(i + 1);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<std::vector<int64_t>> subsets(static_cast<size_t>(k));
  const int64_t base = n / k, extra = n % k;
  int64_t at = 0;
  for (int64_t i = 0; i < k; ++i) {
    const int64_t size = base + (i < extra ? 1 : 0);
    subsets[static_cast<size_t>(i)].assign(order.begin() + at, order.begin() + at + size);
    at += size;
  }
  return subsets;
}

SubsetLoader::SubsetLoader(const LabeledDataset& dataset, std::vector<std::vector<int64_t>> subsets)
    : dataset_(&dataset), subsets_(std::move(subsets)) {}

Batch SubsetLoader::sample(int64_t subset, int64_t batch_size, RngStream& rng) const {
  if (subset < 0 || subset >= num_subsets())
    throw std::invalid_argument("SubsetLoader: subset index out of range");
  const auto& pool = subsets_[static_cast<size_t>(subset)];
  if (pool.empty()) throw InvalidStateError("SubsetLoader: empty subset");
  const int64_t h = dataset_->height(), w = dataset_->width();
  Batch b;
  b.images = Tensor::zeros({batch_size, h, w});
  b.labels.resize(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i) {
    const int64_t idx = pool[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(pool.size())))];
    if (observer) observer(subset, idx);
    std::copy(dataset_->images.data.begin() + idx * h * w,
              dataset_->images.data.begin() + (idx + 1) * h * w,
              b.images.data.begin() + i * h * w);
    b.labels[static_cast<size_t>(i)] = dataset_->labels[static_cast<size_t>(idx)];
  }
  return b;
}

RunState init_run_state(const TrainConfig& cfg, const LabeledDataset& dataset) {
  cfg.validate();
  if (dataset.size() < cfg.k * cfg.batch)
    throw std::invalid_argument("init_run_state: dataset smaller than k * batch");
  if (dataset.height() != cfg.image_size || dataset.width() != cfg.image_size)
    throw std::invalid_argument("init_run_state: dataset image size does not match config");
  if (dataset.num_classes != cfg.classes)
    throw std::invalid_argument("init_run_state: dataset class count does not match config");

  RunState st;
  st.rng = RngSet::from_seed(cfg.seed);
  st.partition = partition_dataset(dataset, cfg.k, cfg.seed);

  RngStream root(cfg.seed);
  RngStream g_init = root.substream("init_generator");
  RngStream d_init = root.substream("init_discriminators");
  RngStream c_init = root.substream("init_classifier");
  RngStream e_init = root.substream("init_encoder");

  st.bundle.gen_spec = cfg.generator_spec();
  st.bundle.gen_params = generator_init(st.bundle.gen_spec, g_init);
  st.bundle.disc_spec = cfg.discriminator_spec();
  st.bundle.disc_params.reserve(static_cast<size_t>(cfg.k));
  for (int64_t i = 0; i < cfg.k; ++i)
    st.bundle.disc_params.push_back(mlp_init(st.bundle.disc_spec, d_init));
  st.bundle.cls_spec = cfg.classifier_spec();
  st.bundle.cls_params = mlp_init(st.bundle.cls_spec, c_init);
  st.bundle.enc_spec = cfg.encoder_spec();
  st.bundle.enc_params = mlp_init(st.bundle.enc_spec, e_init);

  st.gen_params_avg = st.bundle.gen_params;
  st.gen_momentum = ParamVector::like(st.bundle.gen_params);
  st.ef = EfState::zeros({cfg.image_size, cfg.image_size}, cfg.ef());
  st.ledger = make_ledger(default_order_grid(), cfg.sigma, cfg.gamma);
  st.iteration = 0;
  return st;
}

std::vector<ParamVector> pretrain_discriminators(const TrainConfig& cfg, const SubsetLoader& loader,
                                                 const ModelBundle& init_bundle,
                                                 std::vector<double>* final_losses) {
  RngStream root(cfg.seed);
  RngStream data_rng = root.substream("pretrain_data");
  RngStream latent_rng = root.substream("pretrain_latent");
  RngStream label_rng = root.substream("pretrain_labels");
  RngStream alpha_rng = root.substream("pretrain_alpha");
  RngStream inject_rng = root.substream("pretrain_inject");

  const LossWeights weights = cfg.weights();
  const NoiseConfig noise = cfg.noise();
  std::vector<ParamVector> bank = init_bundle.disc_params;
  if (final_losses) final_losses->assign(bank.size(), 0.0);

  for (size_t i = 0; i < bank.size(); ++i) {
    double last = 0.0;
    for (int64_t s = 0; s < cfg.n_pre; ++s) {
      Batch real = loader.sample(static_cast<int64_t>(i), cfg.batch, data_rng);
      Tensor z = gaussian_sample({cfg.batch, cfg.latent_dim}, 0.0, 1.0, latent_rng);
      std::vector<int> y(static_cast<size_t>(cfg.batch));
      for (auto& v : y) v = static_cast<int>(label_rng.uniform_int(cfg.classes));
      Tensor fake = generator_forward(init_bundle.gen_spec, init_bundle.gen_params, z, &y, noise,
                                      inject_rng);
      DiscriminatorLoss dl =
          loss_discriminator(init_bundle.disc_spec, bank[i], real.images, fake, weights, alpha_rng);
      apply_update(bank[i], dl.grad_params, cfg.eta_d);
      last = dl.value;
    }
    if (final_losses) (*final_losses)[i] = last;
  }
  return bank;
}

IterationStatus train_iteration(RunState& state, const TrainConfig& cfg,
                                const SubsetLoader& loader, IterationStats* stats) {
  // privacy gate: never execute a step whose accounted cost would exceed eps
  RdpLedger next_ledger = step_account(state.ledger);
  if (to_eps_delta(next_ledger, cfg.delta) > cfg.eps) return IterationStatus::BudgetExhausted;

  const LossWeights weights = cfg.weights();
  const NoiseConfig noise = cfg.noise();
  const ClipConfig clip = cfg.clip();
  const DpNoiseConfig dp_cfg = cfg.dp_noise_cfg();
  ModelBundle& m = state.bundle;

  const int64_t j = state.rng.subset.uniform_int(cfg.k);
  if (stats) stats->subset = j;

  // one real batch per subset visit, reused by every consumer below
  Batch real = loader.sample(j, cfg.batch, state.rng.data);

  for (int64_t s = 0; s < cfg.n_dis; ++s) {
    Tensor z = gaussian_sample({cfg.batch, cfg.latent_dim}, 0.0, 1.0, state.rng.latent);
    std::vector<int> y(static_cast<size_t>(cfg.batch));
    for (auto& v : y) v = static_cast<int>(state.rng.labels.uniform_int(cfg.classes));
    Tensor fake = generator_forward(m.gen_spec, m.gen_params, z, &y, noise, state.rng.inject);
    DiscriminatorLoss dl = loss_discriminator(m.disc_spec, m.disc_params[static_cast<size_t>(j)],
                                              real.images, fake, weights, state.rng.alpha);
    apply_update(m.disc_params[static_cast<size_t>(j)], dl.grad_params, cfg.eta_d);
    if (stats) stats->loss_d = dl.value;
  }

  for (int64_t s = 0; s < cfg.n_en; ++s) {
    ReconstructionLoss re = loss_reconstruction(m.enc_spec, m.enc_params, m.gen_spec, m.gen_params,
                                                real.images, noise, state.rng.inject);
    apply_update(m.enc_params, re.grad_encoder, cfg.eta_e);
    if (stats) stats->loss_en = re.value;
  }

  for (int64_t s = 0; s < cfg.n_f; ++s) {
    Tensor z = gaussian_sample({cfg.batch, cfg.latent_dim}, 0.0, 1.0, state.rng.latent);
    std::vector<int> y(static_cast<size_t>(cfg.batch));
    for (auto& v : y) v = static_cast<int>(state.rng.labels.uniform_int(cfg.classes));
    ClassifierLoss cl = loss_classifier(m.cls_spec, m.cls_params, m.gen_spec, m.gen_params, z, y,
                                        noise, state.rng.inject);
    apply_update(m.cls_params, cl.grad_params, cfg.eta_c);
    if (stats) stats->loss_c = cl.value;
  }

  for (int64_t s = 0; s < cfg.n_r; ++s) {
    ClassifierLoss cr = classifier_xent(m.cls_spec, m.cls_params, real.images, real.labels);
    apply_update(m.cls_params, cr.grad_params, cfg.eta_c);
  }

  // sanitized generator update
  {
    Tensor z = gaussian_sample({cfg.batch, cfg.latent_dim}, 0.0, 1.0, state.rng.latent);
    std::vector<int> y(static_cast<size_t>(cfg.batch));
    if (cfg.single_label_batch) {
      const int shared = static_cast<int>(state.rng.labels.uniform_int(cfg.classes));
      std::fill(y.begin(), y.end(), shared);
    } else {
      for (auto& v : y) v = static_cast<int>(state.rng.labels.uniform_int(cfg.classes));
    }
    GeneratorLoss gl =
        loss_generator(m, j, z, y, real.images, weights, noise, state.rng.inject);
    SourceGrads grads;
    grads[static_cast<size_t>(GradSource::Discriminator)] = gl.d_source;
    grads[static_cast<size_t>(GradSource::Classifier)] = gl.c_source;
    grads[static_cast<size_t>(GradSource::Encoder)] = gl.e_source;
    Tensor sanitized = sanitize_hook(grads, state.ef, clip, dp_cfg, state.rng.dp);

    // each sample receives the released direction; 1/B makes the parameter
    // gradient the batch mean of per-sample Jacobian transposes
    Tensor upstream = Tensor::zeros(gl.fake.shape);
    const int64_t hw = sanitized.numel();
    for (int64_t i = 0; i < cfg.batch; ++i)
      for (int64_t p = 0; p < hw; ++p)
        upstream.data[i * hw + p] = sanitized.data[static_cast<size_t>(p)] / static_cast<double>(cfg.batch);
    ParamVector gdir = ParamVector::like(m.gen_params);
    generator_backward(m.gen_spec, m.gen_params, gl.cache, upstream, &gdir, nullptr);
    if (cfg.gen_weight_lr_scale != 1.0) {
      for (const auto& seg : gdir.segments()) {
        if (seg.name.ends_with(".w") || seg.name == "embed") {
          auto view = gdir.seg(seg.name);
          for (double& v : view) v *= cfg.gen_weight_lr_scale;
        }
      }
    }
    double eta_t = cfg.eta_g;
    if (cfg.eta_g_halflife > 0 && state.iteration >= cfg.eta_g_decay_start)
      eta_t = cfg.eta_g /
              (1.0 + static_cast<double>(state.iteration - cfg.eta_g_decay_start) /
                         static_cast<double>(cfg.eta_g_halflife));
    if (cfg.gen_weight_decay > 0.0) {
      const double shrink = 1.0 - eta_t * cfg.gen_weight_decay;
      for (size_t i = 0; i < m.gen_params.size(); ++i) m.gen_params[i] *= shrink;
    }
    if (cfg.gen_momentum > 0.0) {
      for (size_t i = 0; i < state.gen_momentum.size(); ++i)
        state.gen_momentum[i] = cfg.gen_momentum * state.gen_momentum[i] + gdir[i];
      apply_update(m.gen_params, state.gen_momentum, eta_t);
    } else {
      apply_update(m.gen_params, gdir, eta_t);
    }

    if (cfg.gen_avg_decay > 0.0) {
      for (size_t i = 0; i < state.gen_params_avg.size(); ++i)
        state.gen_params_avg[i] += cfg.gen_avg_decay * (m.gen_params[i] - state.gen_params_avg[i]);
    } else {
      state.gen_params_avg = m.gen_params;
    }

    if (stats) {
      stats->loss_g = gl.total;
      stats->loss_g_d = gl.d_term;
      stats->loss_g_c = gl.c_term;
      stats->loss_g_e = gl.e_term;
    }
  }

  state.ledger = std::move(next_ledger);
  state.iteration += 1;
  return IterationStatus::Ok;
}

namespace {

std::string format_log_line(int64_t iter, const IterationStats& st, double eps_so_far,
                            double diversity) {
  std::ostringstream os;
  os.precision(6);
  os << "iter=" << iter << "\tsubset=" << st.subset << "\tloss_d=" << st.loss_d
     << "\tloss_g=" << st.loss_g << "\tloss_g_d=" << st.loss_g_d << "\tloss_g_c=" << st.loss_g_c
     << "\tloss_g_e=" << st.loss_g_e << "\tloss_en=" << st.loss_en << "\tloss_c=" << st.loss_c
     << "\teps=" << eps_so_far << "\tdiversity=" << diversity;
  return os.str();
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const LabeledDataset& dataset, const RunState* resume,
                  const std::vector<ParamVector>* pretrained_bank, std::ostream* live_log) {
  TrainResult result;
  if (resume) {
    result.state = *resume;
  } else {
    result.state = init_run_state(cfg, dataset);
  }
  RunState& state = result.state;
  SubsetLoader loader(dataset, state.partition);

  if (!resume && state.iteration == 0) {
    if (pretrained_bank) {
      if (static_cast<int64_t>(pretrained_bank->size()) != cfg.k)
        throw std::invalid_argument("train: bank size does not match k");
      state.bundle.disc_params = *pretrained_bank;
    } else if (cfg.n_pre > 0) {
      state.bundle.disc_params = pretrain_discriminators(cfg, loader, state.bundle);
    }
  }

  auto emit = [&](int64_t iter, const IterationStats& st) {
    const double eps_now = to_eps_delta(state.ledger, cfg.delta);
    const double div = sample_diversity(state.bundle.gen_spec, state.bundle.gen_params, cfg.noise(),
                                        std::min<int64_t>(cfg.eval_samples, 32),
                                        RngStream(cfg.seed).substream("eval").seed() +
                                            static_cast<uint64_t>(iter));
    const std::string line = format_log_line(iter, st, eps_now, div);
    result.log_lines.push_back(line);
    if (live_log) (*live_log) << line << "\n" << std::flush;
  };

  IterationStats st;
  while (state.iteration < cfg.iterations) {
    const IterationStatus status = train_iteration(state, cfg, loader, &st);
    if (status == IterationStatus::BudgetExhausted) {
      result.halted_by_budget = true;
      break;
    }
    ++result.completed;
    if (state.iteration % cfg.eval_interval == 0 || state.iteration == cfg.iterations)
      emit(state.iteration, st);
  }
  if (result.log_lines.empty() || result.halted_by_budget) emit(state.iteration, st);
  return result;
}

}  // namespace dpgen
