#include <array>
#include <cmath>

#include "doctest.h"
#include "dpgen/sanitizer.hpp"

using namespace dpgen;

TEST_CASE("clip keeps short vectors and rescales long ones") {
  Tensor g({2}, {3.0, 4.0});
  Tensor kept = clip_to_norm(g, 10.0);
  CHECK(kept.data == g.data);

  Tensor scaled = clip_to_norm(g, 1.0);
  CHECK(scaled.data[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(scaled.data[1] == doctest::Approx(0.8).epsilon(1e-15));

  Tensor zero({2}, {0.0, 0.0});
  CHECK(clip_to_norm(zero, 0.5).data == zero.data);

  CHECK_THROWS_AS(clip_to_norm(g, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(clip_to_norm(g, -1.0), std::invalid_argument);
}

TEST_CASE("clip bound and identity over random vectors") {
  for (int64_t dim : {1, 10, 10000}) {
    for (double c : {0.1, 1.0, 10.0}) {
      RngStream rng(static_cast<uint64_t>(dim * 1000) + static_cast<uint64_t>(c * 10));
      for (int trial = 0; trial < 20; ++trial) {
        Tensor g = gaussian_sample({dim}, 0.0, 1.0, rng);
        Tensor clipped = clip_to_norm(g, c);
        CHECK(l2_norm(clipped) <= c * (1.0 + 1e-12));
        if (l2_norm(g) <= c) CHECK(clipped.data == g.data);
      }
    }
  }
}

TEST_CASE("ef_step without clipping passes gradients through") {
  EfState state = EfState::zeros({3}, EfMode::PerSource);
  SourceGrads grads;
  grads[0] = Tensor({3}, {0.1, 0.0, 0.0});
  grads[1] = Tensor({3}, {0.0, 0.2, 0.0});
  grads[2] = Tensor({3}, {0.0, 0.0, 0.3});
  ClipConfig clip{1.0, 1.0};
  Tensor v = ef_step(state, grads, clip);
  CHECK(v.data[0] == doctest::Approx(0.1));
  CHECK(v.data[1] == doctest::Approx(0.2));
  CHECK(v.data[2] == doctest::Approx(0.3));
  for (const auto& e : state.errors) CHECK(l2_norm(e) == 0.0);
  CHECK(state.step == 1);
}

TEST_CASE("ef_step two-step recursion on a doubled-norm gradient") {
  // ||g|| = 2*C1 and a large C2: step one halves the update and stores g/2,
  // step two re-injects it so the full gradient gets through
  const double c1 = 1.0;
  EfState state = EfState::zeros({2}, EfMode::PerSource);
  Tensor g({2}, {2.0 * c1, 0.0});
  SourceGrads grads;
  grads[0] = g;
  ClipConfig clip{c1, 100.0};

  Tensor v1 = ef_step(state, grads, clip);
  CHECK(v1.data[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(state.errors[0].data[0] == doctest::Approx(1.0).epsilon(1e-15));

  Tensor v2 = ef_step(state, grads, clip);
  CHECK(v2.data[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(state.errors[0].data[0] == doctest::Approx(1.0).epsilon(1e-15));
}

namespace {

// Straight-line replay of the update/error recursions, kept independent of
// the library implementation.
struct ReplayState {
  std::array<std::vector<double>, 3> e;
};

std::vector<double> replay_clip(const std::vector<double>& v, double c) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out = v;
  if (n > c)
    for (double& x : out) x *= c / n;
  return out;
}

std::vector<double> replay_step(ReplayState& st, const std::array<std::vector<double>, 3>& g,
                                double c1, double c2) {
  std::vector<double> v(g[0].size(), 0.0);
  for (int s = 0; s < 3; ++s) {
    std::vector<double> cg = replay_clip(g[static_cast<size_t>(s)], c1);
    std::vector<double> ce = replay_clip(st.e[static_cast<size_t>(s)], c2);
    std::vector<double> vs(v.size());
    for (size_t i = 0; i < v.size(); ++i) vs[i] = cg[i] + ce[i];
    for (size_t i = 0; i < v.size(); ++i)
      st.e[static_cast<size_t>(s)][i] += g[static_cast<size_t>(s)][i] - vs[i];
    for (size_t i = 0; i < v.size(); ++i) v[i] += vs[i];
  }
  return v;
}

}  // namespace

TEST_CASE("ef_step matches the replay oracle over 100 random steps") {
  const int64_t dim = 6;
  const ClipConfig clip{0.7, 0.4};
  EfState state = EfState::zeros({dim}, EfMode::PerSource);
  ReplayState replay;
  for (auto& e : replay.e) e.assign(static_cast<size_t>(dim), 0.0);

  // logged history for the telescoping identity
  std::array<std::vector<double>, 3> sum_g{}, sum_v{};
  for (int s = 0; s < 3; ++s) {
    sum_g[static_cast<size_t>(s)].assign(static_cast<size_t>(dim), 0.0);
    sum_v[static_cast<size_t>(s)].assign(static_cast<size_t>(dim), 0.0);
  }

  RngStream rng(404);
  for (int step = 0; step < 100; ++step) {
    SourceGrads grads;
    std::array<std::vector<double>, 3> g;
    for (int s = 0; s < 3; ++s) {
      Tensor t = gaussian_sample({dim}, 0.0, 1.5, rng);
      grads[static_cast<size_t>(s)] = t;
      g[static_cast<size_t>(s)] = t.data;
      for (int64_t i = 0; i < dim; ++i) sum_g[static_cast<size_t>(s)][static_cast<size_t>(i)] += t.data[static_cast<size_t>(i)];
    }

    // per-source v for the replay bookkeeping
    ReplayState before = replay;
    std::vector<double> v_replay = replay_step(replay, g, clip.c1, clip.c2);
    for (int s = 0; s < 3; ++s) {
      std::vector<double> cg = replay_clip(g[static_cast<size_t>(s)], clip.c1);
      std::vector<double> ce = replay_clip(before.e[static_cast<size_t>(s)], clip.c2);
      for (int64_t i = 0; i < dim; ++i)
        sum_v[static_cast<size_t>(s)][static_cast<size_t>(i)] += cg[static_cast<size_t>(i)] + ce[static_cast<size_t>(i)];
    }

    Tensor v = ef_step(state, grads, clip);
    for (int64_t i = 0; i < dim; ++i)
      CHECK(std::abs(v.data[static_cast<size_t>(i)] - v_replay[static_cast<size_t>(i)]) <= 1e-12);

    // per-source contribution bound: ||clip(g,C1) + clip(e,C2)|| <= C1 + C2
    for (int s = 0; s < 3; ++s) {
      std::vector<double> cg = replay_clip(g[static_cast<size_t>(s)], clip.c1);
      std::vector<double> ce = replay_clip(before.e[static_cast<size_t>(s)], clip.c2);
      double n = 0.0;
      for (int64_t i = 0; i < dim; ++i) {
        const double x = cg[static_cast<size_t>(i)] + ce[static_cast<size_t>(i)];
        n += x * x;
      }
      CHECK(std::sqrt(n) <= clip.c1 + clip.c2 + 1e-12);
    }
  }

  // final errors agree
  for (int s = 0; s < 3; ++s)
    for (int64_t i = 0; i < dim; ++i)
      CHECK(std::abs(state.errors[static_cast<size_t>(s)].data[static_cast<size_t>(i)] -
                     replay.e[static_cast<size_t>(s)][static_cast<size_t>(i)]) <= 1e-12);

  // telescoping: sum v = sum g + e0 - eT, per source (e0 = 0 here)
  for (int s = 0; s < 3; ++s)
    for (int64_t i = 0; i < dim; ++i) {
      const double lhs = sum_v[static_cast<size_t>(s)][static_cast<size_t>(i)];
      const double rhs = sum_g[static_cast<size_t>(s)][static_cast<size_t>(i)] -
                         state.errors[static_cast<size_t>(s)].data[static_cast<size_t>(i)];
      CHECK(std::abs(lhs - rhs) <= 1e-10);
    }
}

TEST_CASE("ef_step error recursion replays from logged history") {
  const int64_t dim = 4;
  const ClipConfig clip{0.5, 0.3};
  EfState state = EfState::zeros({dim}, EfMode::PerSource);
  RngStream rng(505);

  std::vector<Tensor> logged_g, logged_v;
  std::array<Tensor, 3> replayed{Tensor::zeros({dim}), Tensor::zeros({dim}), Tensor::zeros({dim})};
  for (int step = 0; step < 50; ++step) {
    Tensor g = gaussian_sample({dim}, 0.0, 1.0, rng);
    SourceGrads grads;
    grads[0] = g;  // single active source
    Tensor e_before = state.errors[0];
    Tensor v = ef_step(state, grads, clip);
    // e <- e + g - v_s, re-derived outside the implementation
    Tensor vs = add(clip_to_norm(g, clip.c1), clip_to_norm(e_before, clip.c2));
    replayed[0] = add(replayed[0], sub(g, vs));
  }
  for (int64_t i = 0; i < dim; ++i)
    CHECK(std::abs(state.errors[0].data[static_cast<size_t>(i)] -
                   replayed[0].data[static_cast<size_t>(i)]) <= 1e-12);
}

TEST_CASE("aggregate mode tracks one error over the summed gradient") {
  EfState state = EfState::zeros({2}, EfMode::Aggregate);
  SourceGrads grads;
  grads[0] = Tensor({2}, {1.5, 0.0});
  grads[1] = Tensor({2}, {1.5, 0.0});
  grads[2] = Tensor({2}, {1.0, 0.0});
  ClipConfig clip{1.0, 1.0};
  Tensor v = ef_step(state, grads, clip);
  // summed gradient has norm 4 -> clipped to 1; error keeps the rest
  CHECK(v.data[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(state.errors[0].data[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(l2_norm(state.errors[1]) == 0.0);
  CHECK(l2_norm(state.errors[2]) == 0.0);
}

TEST_CASE("dp_noise variance follows the calibrated formula") {
  struct Case {
    double sigma, c1, c2, want;
  };
  const Case cases[] = {{1.0, 1.0, 0.5, 2.0}, {1.0, 1.0, 0.0, 1.0}, {2.0, 0.5, 1.0, 3.0}};
  // c2 = 0 is outside the ClipConfig invariant for training but the noise
  // formula itself is still well-defined there
  for (const Case& tc : cases) {
    RngStream rng(static_cast<uint64_t>(tc.want * 1000));
    Tensor draws = dp_noise({100000}, DpNoiseConfig{tc.sigma, false}, ClipConfig{tc.c1, tc.c2}, rng);
    double m = mean(draws);
    double var = 0.0;
    for (double v : draws.data) var += (v - m) * (v - m);
    var /= static_cast<double>(draws.numel() - 1);
    CHECK(std::abs(var - tc.want) / tc.want <= 0.03);
  }
}

TEST_CASE("dp_noise requires positive sigma") {
  RngStream rng(1);
  CHECK_THROWS_AS(dp_noise({4}, DpNoiseConfig{0.0, false}, ClipConfig{1.0, 1.0}, rng),
                  std::invalid_argument);
}

TEST_CASE("sanitize_hook with test zero-noise equals the ef step") {
  EfState s1 = EfState::zeros({4}, EfMode::PerSource);
  EfState s2 = EfState::zeros({4}, EfMode::PerSource);
  RngStream rng(606), noise_rng(607);
  SourceGrads grads;
  grads[0] = gaussian_sample({4}, 0.0, 1.0, rng);
  grads[1] = gaussian_sample({4}, 0.0, 1.0, rng);
  grads[2] = gaussian_sample({4}, 0.0, 1.0, rng);
  ClipConfig clip{1.0, 1.0};

  Tensor v = ef_step(s1, grads, clip);
  Tensor hooked = sanitize_hook(grads, s2, clip, DpNoiseConfig::disabled_for_tests(), noise_rng);
  CHECK(v.data == hooked.data);
  CHECK(noise_rng.position() == 0);  // zero-noise mode draws nothing
}

TEST_CASE("sanitize_hook on zero gradients emits a pure noise field") {
  EfState state = EfState::zeros({100}, EfMode::PerSource);
  SourceGrads grads;
  grads[0] = Tensor::zeros({100});
  grads[1] = Tensor::zeros({100});
  grads[2] = Tensor::zeros({100});
  const ClipConfig clip{1.0, 0.5};
  const DpNoiseConfig noise{1.0, false};

  RngStream rng(707);
  double sum2 = 0.0;
  int64_t n = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    EfState fresh = EfState::zeros({100}, EfMode::PerSource);
    Tensor out = sanitize_hook(grads, fresh, clip, noise, rng);
    for (double v : out.data) sum2 += v * v;
    n += out.numel();
  }
  const double var = sum2 / static_cast<double>(n);
  CHECK(std::abs(var - 2.0) / 2.0 <= 0.03);
  (void)state;
}

TEST_CASE("sanitize_hook is deterministic for a fixed seed") {
  SourceGrads grads;
  RngStream g_rng(808);
  grads[0] = gaussian_sample({8}, 0.0, 2.0, g_rng);
  grads[1] = gaussian_sample({8}, 0.0, 2.0, g_rng);
  grads[2] = gaussian_sample({8}, 0.0, 2.0, g_rng);
  ClipConfig clip{1.0, 1.0};
  DpNoiseConfig noise{1.5, false};

  EfState s1 = EfState::zeros({8}, EfMode::PerSource);
  EfState s2 = EfState::zeros({8}, EfMode::PerSource);
  RngStream r1(909), r2(909);
  Tensor o1 = sanitize_hook(grads, s1, clip, noise, r1);
  Tensor o2 = sanitize_hook(grads, s2, clip, noise, r2);
  CHECK(o1.data == o2.data);
}

TEST_CASE("sanitize_hook mean-reduces batched gradients to the tracked shape") {
  EfState state = EfState::zeros({2, 2}, EfMode::PerSource);
  // two samples carrying per-sample grads of a batch-mean loss
  Tensor batched({2, 2, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  SourceGrads grads;
  grads[0] = batched;
  RngStream rng(1);
  Tensor v = sanitize_hook(grads, state, ClipConfig{100.0, 1.0},
                           DpNoiseConfig::disabled_for_tests(), rng);
  // batch-mean of per-sample-loss grads = sum of per-sample entries
  CHECK(v.data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(v.data[3] == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("sanitize_hook rejects mismatched shapes") {
  EfState state = EfState::zeros({4}, EfMode::PerSource);
  SourceGrads grads;
  grads[0] = Tensor::zeros({5});
  RngStream rng(1);
  CHECK_THROWS_AS(
      sanitize_hook(grads, state, ClipConfig{1.0, 1.0}, DpNoiseConfig::disabled_for_tests(), rng),
      InvalidStateError);
}

TEST_CASE("apply_update follows x - eta * direction and is linear") {
  ParamVector p;
  p.add("x", {3});
  ParamVector d = ParamVector::like(p);
  for (size_t i = 0; i < d.size(); ++i) d[i] = 1.0;

  ParamVector zero_dir = ParamVector::like(p);
  ParamVector q = p;
  apply_update(q, zero_dir, 0.1);
  CHECK(q.raw() == p.raw());

  apply_update(q, d, 0.1);
  for (size_t i = 0; i < q.size(); ++i) CHECK(q[i] == doctest::Approx(-0.1).epsilon(1e-15));

  // two sequential updates equal one with the summed direction
  ParamVector a = p, b = p;
  ParamVector d2 = ParamVector::like(p);
  for (size_t i = 0; i < d2.size(); ++i) d2[i] = 2.0;
  apply_update(a, d, 0.05);
  apply_update(a, d2, 0.05);
  ParamVector sum_dir = ParamVector::like(p);
  for (size_t i = 0; i < sum_dir.size(); ++i) sum_dir[i] = 3.0;
  apply_update(b, sum_dir, 0.05);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
}
