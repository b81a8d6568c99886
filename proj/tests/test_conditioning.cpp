#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "timecast/conditioning.hpp"
#include "timecast/errors.hpp"
#include "timecast/ops.hpp"

using namespace timecast;
using namespace timecast::cond;

namespace {

ConditioningConfig small_cfg() {
  ConditioningConfig cfg;
  cfg.k_context = 3;
  cfg.l_freqs = 4;
  cfg.d_embed = 8;
  cfg.time_scale = 12.f;
  cfg.image_size = 16;
  return cfg;
}

std::vector<scene::Frame> random_frames(int k, int size, RandomSource& rng) {
  std::vector<scene::Frame> frames;
  for (int i = 0; i < k; ++i) {
    scene::Frame f(static_cast<std::size_t>(size) * size);
    for (float& v : f) v = static_cast<float>(rng.uniform());
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<const scene::Frame*> ptrs(const std::vector<scene::Frame>& frames) {
  std::vector<const scene::Frame*> out;
  for (const auto& f : frames) out.push_back(&f);
  return out;
}

bool tensors_equal_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("encode_timestamp at t = 0 alternates (0, 1)") {
  const auto enc = encode_timestamp(0.f, 6);
  REQUIRE(enc.size() == 12);
  for (std::size_t i = 0; i < enc.size(); i += 2) {
    CHECK(enc[i] == doctest::Approx(0.f));
    CHECK(enc[i + 1] == doctest::Approx(1.f));
  }
}

TEST_CASE("encode_timestamp at t = 0.5 starts with (1, 0)") {
  const auto enc = encode_timestamp(0.5f, 3);
  CHECK(enc[0] == doctest::Approx(1.f));
  CHECK(enc[1] == doctest::Approx(0.f).epsilon(1e-6));
}

TEST_CASE("encode_timestamp entries stay in [-1,1] and length is 2L") {
  RandomSource rng(3);
  for (int i = 0; i < 100; ++i) {
    const float t = rng.uniform_range(-50.f, 50.f);
    const auto enc = encode_timestamp(t, 8);
    CHECK(enc.size() == 16);
    for (float v : enc) {
      CHECK(v >= -1.f);
      CHECK(v <= 1.f);
    }
  }
}

TEST_CASE("encode_timestamp is 2-periodic") {
  RandomSource rng(4);
  for (int i = 0; i < 50; ++i) {
    const float t = rng.uniform_range(-4.f, 4.f);
    const auto a = encode_timestamp(t, 8);
    const auto b = encode_timestamp(t + 2.f, 8);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-4));
    }
  }
}

// Exhaustive pairwise comparison over the grid {-2, -2+1/32, ..., +2}.
// Grid times congruent mod 2 (the encoding's period) necessarily collide;
// all other pairs must be separated. This pins the usable range to one
// period, which is why timestamps are scaled before encoding.
TEST_CASE("grid encodings are distinct within one period") {
  const int L = 8;
  std::vector<float> grid;
  for (int i = -64; i <= 64; ++i) grid.push_back(static_cast<float>(i) / 32.f);
  std::vector<std::vector<float>> encs;
  for (float t : grid) encs.push_back(encode_timestamp(t, L));

  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t b = a + 1; b < grid.size(); ++b) {
      float linf = 0.f;
      for (std::size_t j = 0; j < encs[a].size(); ++j) {
        linf = std::max(linf, std::fabs(encs[a][j] - encs[b][j]));
      }
      const float dt = grid[b] - grid[a];
      const bool congruent = std::fabs(std::remainder(dt, 2.f)) < 1e-6f;
      if (congruent) {
        CHECK(linf < 1e-4f);
      } else {
        CHECK(linf > 1e-6f);
      }
    }
  }
}

TEST_CASE("residual embedding with equal weights is the arithmetic mean") {
  RandomSource rng(5);
  Tensor e = Tensor::randn({3, 6}, rng);
  Tensor w = Tensor::zeros({3});
  Tensor r = residual_embedding(e, w);
  for (std::int64_t d = 0; d < 6; ++d) {
    const float mean = (e.at(d) + e.at(6 + d) + e.at(12 + d)) / 3.f;
    CHECK(r.at(d) == doctest::Approx(mean).epsilon(1e-5));
  }
}

TEST_CASE("residual embedding saturates to a single row at weight 20") {
  RandomSource rng(6);
  Tensor e = Tensor::randn({3, 6}, rng);
  Tensor w = Tensor::from_data({3}, {0.f, 20.f, 0.f});
  Tensor r = residual_embedding(e, w);
  for (std::int64_t d = 0; d < 6; ++d) {
    CHECK(std::fabs(r.at(d) - e.at(6 + d)) < 1e-6f);
  }
}

TEST_CASE("assemble produces K+2 tokens and the expected layout") {
  RandomSource rng(7);
  ConditioningParams params(small_cfg(), rng);
  const auto frames = random_frames(3, 16, rng);
  const std::vector<float> times{-1.f, -0.5f, 0.f};

  const ConditioningBundle b = assemble(ptrs(frames), times, 1.f, params);
  CHECK(b.tokens.shape() == Shape{5, 8 + 2 * 4});
  CHECK(b.concat_channels.shape() == Shape{3, 16, 16});
  CHECK_FALSE(b.is_null);

  // last token is the learned null token
  for (std::int64_t d = 0; d < params.cfg.token_dim(); ++d) {
    CHECK(b.tokens.at(4 * params.cfg.token_dim() + d) ==
          params.null_token.tensor.at(d));
  }
  // K mismatch is an error
  std::vector<const scene::Frame*> two{&frames[0], &frames[1]};
  CHECK_THROWS_AS(assemble(two, {-1.f, 0.f}, 1.f, params), Error);
}

TEST_CASE("two queries differing only in t_query differ only in the target token") {
  RandomSource rng(8);
  ConditioningParams params(small_cfg(), rng);
  const auto frames = random_frames(3, 16, rng);
  const std::vector<float> times{-1.f, -0.5f, 0.f};

  const ConditioningBundle a = assemble(ptrs(frames), times, 1.f, params);
  const ConditioningBundle b = assemble(ptrs(frames), times, 2.f, params);
  const int D = params.cfg.token_dim();
  for (int s = 0; s < 5; ++s) {
    bool row_equal = true;
    for (int d = 0; d < D; ++d) {
      if (a.tokens.at(s * D + d) != b.tokens.at(s * D + d)) row_equal = false;
    }
    if (s == 3) {
      CHECK_FALSE(row_equal);  // residual-target token carries the query
    } else {
      CHECK(row_equal);
    }
  }
  CHECK(tensors_equal_bits(a.concat_channels, b.concat_channels));
}

TEST_CASE("null bundle: zero channels, repeated learned null token, idempotent") {
  RandomSource rng(9);
  ConditioningParams params(small_cfg(), rng);
  const ConditioningBundle null_bundle = make_null_bundle(params);
  CHECK(null_bundle.is_null);
  for (float v : null_bundle.concat_channels.data()) CHECK(v == 0.f);
  const int D = params.cfg.token_dim();
  for (int s = 0; s < 5; ++s) {
    for (int d = 0; d < D; ++d) {
      CHECK(null_bundle.tokens.at(s * D + d) == params.null_token.tensor.at(d));
    }
  }
  const ConditioningBundle again = make_null_bundle(params);
  CHECK(tensors_equal_bits(null_bundle.tokens, again.tokens));
  CHECK(tensors_equal_bits(null_bundle.concat_channels, again.concat_channels));
}

TEST_CASE("drop_for_cfg endpoints and frequency") {
  RandomSource rng(10);
  ConditioningParams params(small_cfg(), rng);
  const auto frames = random_frames(3, 16, rng);
  const ConditioningBundle bundle =
      assemble(ptrs(frames), {-1.f, -0.5f, 0.f}, 1.f, params);

  RandomSource r0(1);
  CHECK_FALSE(drop_for_cfg(bundle, r0, 0.f, params).is_null);
  CHECK(drop_for_cfg(bundle, r0, 1.f, params).is_null);

  RandomSource r1(2);
  int nulls = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    if (drop_for_cfg(bundle, r1, 0.1f, params).is_null) ++nulls;
  }
  CHECK(std::fabs(nulls / static_cast<double>(draws) - 0.10) < 0.01);
}

TEST_CASE("anchoring invariance: shifting all timestamps by a dyadic delta") {
  RandomSource rng(11);
  ConditioningParams params(small_cfg(), rng);
  const auto frames = random_frames(3, 16, rng);

  // anchored once, then shifted by delta and re-anchored: bit-identical
  const std::vector<float> base{-1.f, -0.5f, 0.f};
  const float query = 1.5f;
  for (float delta : {0.5f, 2.f, -4.5f, 128.f}) {
    std::vector<float> shifted = base;
    for (float& t : shifted) t += delta;
    const float anchor = shifted[2];
    std::vector<float> re_anchored = shifted;
    for (float& t : re_anchored) t -= anchor;
    const ConditioningBundle a = assemble(ptrs(frames), base, query, params);
    const ConditioningBundle b =
        assemble(ptrs(frames), re_anchored, (query + delta) - anchor, params);
    CHECK(tensors_equal_bits(a.tokens, b.tokens));
    CHECK(tensors_equal_bits(a.concat_channels, b.concat_channels));
  }
}

TEST_CASE("context encoder is deterministic and per-frame covariant") {
  RandomSource rng(12);
  ConditioningParams params(small_cfg(), rng);
  const auto frames = random_frames(3, 16, rng);

  Tensor stacked = Tensor::zeros({3, 1, 16, 16});
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 256; ++p) {
      stacked.at(i * 256 + p) = frame_to_model(frames[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)]);
    }
  }
  const Tensor e1 = params.encoder.forward(stacked);
  const Tensor e2 = params.encoder.forward(stacked);
  CHECK(tensors_equal_bits(e1, e2));

  // permuting input frames permutes embeddings identically
  Tensor permuted = Tensor::zeros({3, 1, 16, 16});
  const int perm[3] = {2, 0, 1};
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 256; ++p) {
      permuted.at(i * 256 + p) = stacked.at(perm[i] * 256 + p);
    }
  }
  const Tensor ep = params.encoder.forward(permuted);
  for (int i = 0; i < 3; ++i) {
    for (int d = 0; d < 8; ++d) {
      CHECK(ep.at(i * 8 + d) == doctest::Approx(e1.at(perm[i] * 8 + d)).epsilon(1e-6));
    }
  }

  // perturbing one frame changes its embedding (non-degenerate encoder)
  Tensor noisy = stacked.clone();
  RandomSource nrng(13);
  for (int p = 0; p < 256; ++p) {
    noisy.at(p) += 0.1f * nrng.normal();
  }
  const Tensor en = params.encoder.forward(noisy);
  double l2 = 0.0;
  for (int d = 0; d < 8; ++d) {
    const double diff = en.at(d) - e1.at(d);
    l2 += diff * diff;
  }
  CHECK(l2 > 0.0);
}
