#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "scm/attention.hpp"
#include "scm/cost.hpp"
#include "scm/error.hpp"
#include "scm/kernels.hpp"

using namespace scm;

namespace {

Tensor identity(std::size_t c) {
  Tensor t({c, c});
  for (std::size_t i = 0; i < c; ++i) t.at({i, i}) = 1.0;
  return t;
}

ProjectionWeights identity_projection(std::size_t c) { return {identity(c), identity(c), identity(c), identity(c)}; }

std::vector<oracle::Vec> rows_of(const Tensor& t, std::size_t b) {
  std::vector<oracle::Vec> out;
  for (std::size_t i = 0; i < t.dim(1); ++i) out.push_back(oracle::row(t, {b, i}));
  return out;
}

}  // namespace

TEST_CASE("axis_attention symmetric case") {
  const Tensor z({1, 1, 2}, {0.3, -0.7});
  const auto r = axis_attention(z, z, identity_projection(2), 1);
  CHECK(r.prior_weight[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(max_abs_diff(r.out, z) < 1e-15);
}

TEST_CASE("axis_attention annihilated by zero values") {
  Rng rng(1);
  auto w = fixture::random_block(rng, 4).attention;
  w.value = Tensor({4, 4});
  const auto r = axis_attention(randn(rng, {3, 5, 4}), randn(rng, {3, 1, 4}), w, 2);
  CHECK(max_abs(r.out) == 0.0);
}

TEST_CASE("axis_attention against the scalar oracle") {
  SUBCASE("hand built n=2 C=2 one head") {
    ProjectionWeights w{Tensor::from_rows({{1.0, 0.5}, {-0.3, 2.0}}), Tensor::from_rows({{0.2, -1.0}, {0.7, 0.1}}),
                        Tensor::from_rows({{1.5, 0.0}, {0.4, -0.6}}), Tensor::from_rows({{0.9, 0.3}, {-0.2, 1.1}})};
    const Tensor z({1, 2, 2}, {0.5, -1.0, 2.0, 0.25});
    const Tensor k({1, 1, 2}, {-0.4, 0.8});
    const auto r = axis_attention(z, k, w, 1);
    const auto o = oracle::attend(rows_of(z, 0), oracle::row(k, {0, 0}), w, 1);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(r.prior_weight.at({0, i}) == doctest::Approx(o.prior_weight[i]).epsilon(1e-12));
      for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(r.out.at({0, i, c}) - o.out[i][c]) < 1e-12);
    }
  }
  SUBCASE("random batch, two heads, query offset") {
    Rng rng(2);
    const auto w = fixture::random_block(rng, 6).attention;
    const Tensor z = randn(rng, {4, 5, 6}), k = randn(rng, {4, 1, 6}), off = randn(rng, {5, 6});
    const auto r = axis_attention(z, k, w, 2, &off);
    std::vector<oracle::Vec> offs;
    for (std::size_t i = 0; i < 5; ++i) offs.push_back(oracle::row(off, {i}));
    for (std::size_t b = 0; b < 4; ++b) {
      const auto o = oracle::attend(rows_of(z, b), oracle::row(k, {b, 0}), w, 2, &offs);
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(r.prior_weight.at({b, i}) - o.prior_weight[i]) < 1e-12);
        for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(r.out.at({b, i, c}) - o.out[i][c]) < 1e-12);
      }
    }
  }
}

TEST_CASE("axis_attention configuration errors") {
  Rng rng(3);
  const auto w = fixture::random_block(rng, 6).attention;
  CHECK_THROWS_AS(axis_attention(randn(rng, {1, 2, 6}), randn(rng, {1, 1, 6}), w, 4), ConfigError);
}

TEST_CASE("value scaling scales attention linearly") {
  Rng rng(4);
  auto w = fixture::random_block(rng, 4).attention;
  const Tensor z = randn(rng, {3, 4, 4}), k = randn(rng, {3, 1, 4});
  const Tensor base = axis_attention(z, k, w, 2).out;
  for (auto& v : w.value.values()) v *= 0.5;  // power of two keeps it exact
  const Tensor half = axis_attention(z, k, w, 2).out;
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(half[i] == 0.5 * base[i]);
}

TEST_CASE("axis_attention flop formula") {
  CostCounters cc;
  {
    CostScope scope(cc);
    Rng rng(5);
    const auto w = fixture::random_block(rng, 8).attention;
    axis_attention(randn(rng, {7, 3, 8}), randn(rng, {7, 1, 8}), w, 2);
  }
  CHECK(cc.flops_attention == axis_attention_flops(7, 3, 8, 2));
  CHECK(cc.flops_attention == 8u * 7 * 3 * 64 + 4u * 7 * 64 + 4u * 7 * 3 * 4 * 8 + 2u * 7 * 3 * 4);
  CHECK(axis_attention_flops(7, 3, 8, 2) > axis_attention_flops(7, 2, 8, 2));
  CHECK(cc.live_elements == 0);
}

TEST_CASE("ffn") {
  Rng rng(6);
  const auto p = fixture::random_block(rng, 5);
  const Tensor x = randn(rng, {3, 5});
  const Tensor y = ffn(x, p.ffn);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto o = oracle::ffn(oracle::row(x, {i}), p.ffn);
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(y.at({i, c}) - o[c]) < 1e-12);
  }
  FfnWeights zero{Tensor({5, 10}), Tensor({10, 5})};
  CHECK(max_abs(ffn(x, zero)) == 0.0);
}

TEST_CASE("block forwards against transcription oracles") {
  Rng rng(7);
  const LatentDims d{2, 3, 2, 2, 4};
  const auto w = fixture::random_weights(rng, 4, 2);
  const auto pri = fixture::random_priors(rng, d);
  const auto z = fixture::random_latent(rng, d);

  SUBCASE("spatial with semantic map") {
    const auto b = spatial_forward(z, pri.spatial, w.spatial, 2);
    const auto o = oracle::spatial(z.tensor(), pri.spatial, w.spatial, 2);
    CHECK(max_abs_diff(b.attention, o.attention) < 1e-12);
    CHECK(max_abs_diff(b.out.tensor(), o.out) < 1e-12);
    REQUIRE(b.semantic.has_value());
    CHECK(max_abs_diff(b.semantic->weights, o.semantic) < 1e-12);
    for (double q : b.semantic->weights.values()) CHECK((q > 0.0 && q < 1.0));
  }
  SUBCASE("camera with view embedding") {
    const auto b = camera_forward(z, pri.camera, w.camera, 2, pri.view_embedding);
    const auto o = oracle::camera(z.tensor(), pri.camera, w.camera, 2, pri.view_embedding);
    CHECK(max_abs_diff(b.attention, o.attention) < 1e-12);
    CHECK(max_abs_diff(b.out.tensor(), o.out) < 1e-12);
    CHECK_FALSE(b.semantic.has_value());
  }
  SUBCASE("motion") {
    const auto b = motion_forward(z, pri.motion, w.motion, 2);
    const auto o = oracle::motion(z.tensor(), pri.motion, w.motion, 2);
    CHECK(max_abs_diff(b.attention, o.attention) < 1e-12);
    CHECK(max_abs_diff(b.out.tensor(), o.out) < 1e-12);
  }
}

TEST_CASE("spatial F=1 V=1 H=W=2 C=2 transcription") {
  Rng rng(8);
  const LatentDims d{1, 1, 2, 2, 2};
  const auto p = fixture::random_block(rng, 2);
  const auto pri = fixture::random_priors(rng, d, false);
  const auto z = fixture::random_latent(rng, d);
  const auto b = spatial_forward(z, pri.spatial, p, 1);
  const auto o = oracle::spatial(z.tensor(), pri.spatial, p, 1);
  CHECK(max_abs_diff(b.out.tensor(), o.out) < 1e-12);
}

TEST_CASE("degenerate axes") {
  Rng rng(9);
  const auto w = fixture::random_weights(rng, 2, 1);
  SUBCASE("H=W=1 gives one semantic weight per (f, v)") {
    const LatentDims d{2, 2, 1, 1, 2};
    const auto pri = fixture::random_priors(rng, d);
    const auto b = spatial_forward(fixture::random_latent(rng, d), pri.spatial, w.spatial, 1);
    CHECK(b.semantic->weights.shape() == Shape{2, 2, 1, 1});
    for (double q : b.semantic->weights.values()) CHECK((q > 0.0 && q < 1.0));
  }
  SUBCASE("V=1 and F=1 stay finite and deterministic") {
    const LatentDims d{1, 1, 2, 2, 2};
    const auto pri = fixture::random_priors(rng, d);
    const auto z = fixture::random_latent(rng, d);
    const auto c1 = camera_forward(z, pri.camera, w.camera, 1);
    const auto m1 = motion_forward(z, pri.motion, w.motion, 1);
    CHECK(c1.out.tensor().all_finite());
    CHECK(m1.out.tensor().all_finite());
    CHECK(camera_forward(z, pri.camera, w.camera, 1).out == c1.out);
    CHECK(motion_forward(z, pri.motion, w.motion, 1).out == m1.out);
  }
}

TEST_CASE("view and frame permutation equivariance") {
  Rng rng(10);
  const LatentDims d{3, 3, 2, 1, 4};
  const auto w = fixture::random_weights(rng, 4, 2);
  const auto pri = fixture::random_priors(rng, d, false);
  const auto z = fixture::random_latent(rng, d);
  const std::size_t perm[3] = {2, 0, 1};

  auto permute = [&](const Tensor& t, bool views) {
    Tensor out(t.shape());
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t h = 0; h < 2; ++h)
          for (std::size_t c = 0; c < 4; ++c) {
            const std::size_t sf = views ? f : perm[f], sv = views ? perm[v] : v;
            out.at({f, v, h, 0, c}) = t.at({sf, sv, h, 0, c});
          }
    return out;
  };

  SUBCASE("camera over views") {
    const auto base = camera_forward(z, pri.camera, w.camera, 2).out.tensor();
    const auto moved = camera_forward(LatentTensor(permute(z.tensor(), true)), pri.camera, w.camera, 2).out.tensor();
    CHECK(max_abs_diff(moved, permute(base, true)) < 1e-12);
  }
  SUBCASE("motion over frames") {
    const auto base = motion_forward(z, pri.motion, w.motion, 2).out.tensor();
    const auto moved = motion_forward(LatentTensor(permute(z.tensor(), false)), pri.motion, w.motion, 2).out.tensor();
    CHECK(max_abs_diff(moved, permute(base, false)) < 1e-12);
  }
}

TEST_CASE("chain composition") {
  Rng rng(11);
  const LatentDims d{2, 2, 2, 3, 4};
  const auto w = fixture::random_weights(rng, 4, 2);
  const auto pri = fixture::random_priors(rng, d);
  const auto z = fixture::random_latent(rng, d);

  const auto chain = chain_forward(z, pri, w);
  const auto s = spatial_forward(z, pri.spatial, w.spatial, 2);
  const auto c = camera_forward(s.out, pri.camera, w.camera, 2, pri.view_embedding);
  const auto m = motion_forward(c.out, pri.motion, w.motion, 2);
  CHECK(chain.out == m.out);
  CHECK(chain.blocks[0].attention == s.attention);
  CHECK(chain.blocks[1].attention == c.attention);
  CHECK(chain.blocks[2].attention == m.attention);
  CHECK(chain_forward(z, pri, w).out == chain.out);

  const auto replay = chain_from_attention(
      z, {&chain.blocks[0].attention, &chain.blocks[1].attention, &chain.blocks[2].attention}, w);
  CHECK(replay == chain.out);
}

TEST_CASE("chain with zero weights is zero") {
  const LatentDims d{2, 2, 2, 2, 4};
  Rng rng(12);
  BlockWeights w;
  const BlockParams zero{{Tensor({4, 4}), Tensor({4, 4}), Tensor({4, 4}), Tensor({4, 4})},
                         {Tensor({4, 8}), Tensor({8, 4})}};
  w.spatial = w.camera = w.motion = zero;
  CHECK(max_abs(chain_forward(fixture::random_latent(rng, d), fixture::random_priors(rng, d), w).out.tensor()) == 0.0);
}

TEST_CASE("chain flops match the closed form and scale along each axis") {
  auto chain_attention_flops = [](const LatentDims& d) {
    Rng rng(13);
    const auto w = fixture::random_weights(rng, d.channels, 2);
    const auto pri = fixture::random_priors(rng, d);
    const auto z = fixture::random_latent(rng, d);
    CostCounters cc;
    CostScope scope(cc);
    chain_forward(z, pri, w);
    return cc.flops_attention;
  };
  auto closed_form = [](const LatentDims& d) {
    const std::size_t c = d.channels, l = d.positions();
    return axis_attention_flops(d.frames * d.views, l, c, 2) + axis_attention_flops(d.frames * l, d.views, c, 2) +
           axis_attention_flops(d.views * l, d.frames, c, 2);
  };
  const LatentDims base{2, 3, 2, 2, 4};
  CHECK(chain_attention_flops(base) == closed_form(base));
  for (LatentDims grown : {LatentDims{4, 3, 2, 2, 4}, LatentDims{2, 6, 2, 2, 4}, LatentDims{2, 3, 4, 2, 4}}) {
    CHECK(chain_attention_flops(grown) == closed_form(grown));
    CHECK(chain_attention_flops(grown) > chain_attention_flops(base));
  }
}

TEST_CASE("sequence layouts round trip") {
  Rng rng(14);
  const LatentDims d{2, 3, 2, 2, 4};
  const Tensor z = randn(rng, d.shape());
  CHECK(from_camera_sequences(to_camera_sequences(z), d) == z);
  CHECK(from_motion_sequences(to_motion_sequences(z), d) == z);
  const Tensor cs = to_camera_sequences(z);
  CHECK(cs.shape() == Shape{2 * 4, 3, 4});
  CHECK(cs.at({1 * 4 + 3, 2, 1}) == z.at({1, 2, 1, 1, 1}));
}
