// Copyright 2026 The compexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "compexp/encoder.hpp"

#include <cmath>
#include <vector>

#include "compexp/rng.hpp"
#include "doctest.h"

using namespace compexp;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.vocab = 10;
  d.embed = 3;
  d.hidden = 2;
  d.rating_embed = 2;
  d.text_dim = 3;
  d.r_max = 4;
  return d;
}

double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("gru_step matches a hand evaluation") {
  const Tensor w_ih = Tensor::from_vector({0.5, -0.3, 0.8}, {3, 1});
  const Tensor w_hh = Tensor::from_vector({0.2, 0.4, -0.6}, {3, 1});
  const Tensor b_ih = Tensor::from_vector({0.1, 0.0, -0.1}, {3});
  const Tensor b_hh = Tensor::from_vector({0.05, -0.05, 0.2}, {3});
  const Tensor x = Tensor::from_vector({1.0}, {1});
  const Tensor h = Tensor::from_vector({0.5}, {1});

  const Tensor out = gru_step(w_ih, w_hh, b_ih, b_hh, x, h, 1);

  const double r = ref_sigmoid(0.6 + 0.15);
  const double z = ref_sigmoid(-0.3 + 0.15);
  const double n = std::tanh(0.7 + r * (-0.1));
  const double expected = n + z * (0.5 - n);
  REQUIRE(out.shape() == Shape{1});
  CHECK(out.values()[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gru_step interpolates between candidate and previous state") {
  // With w_hh rows for z pushed to +inf, z ~ 1 and h' ~ h.
  const Tensor w_ih = Tensor::from_vector({0, 100, 0}, {3, 1});
  const Tensor w_hh = Tensor::zeros({3, 1});
  const Tensor b = Tensor::zeros({3});
  const Tensor x = Tensor::from_vector({1.0}, {1});
  const Tensor h = Tensor::from_vector({0.37}, {1});
  const Tensor out = gru_step(w_ih, w_hh, b, b, x, h, 1);
  CHECK(out.values()[0] == doctest::Approx(0.37).epsilon(1e-6));
}

TEST_CASE("register_params creates the documented tensors") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(1, "enc-init"));
  EncoderNet::register_params(store, d, rng);

  CHECK(store.get("enc.embed").shape() == Shape{10, 3});
  CHECK(store.get("enc.fwd.w_ih").shape() == Shape{6, 3});
  CHECK(store.get("enc.fwd.w_hh").shape() == Shape{6, 2});
  CHECK(store.get("enc.bwd.b_ih").shape() == Shape{6});
  CHECK(store.get("enc.proj.w").shape() == Shape{3, 4});
  CHECK(store.get("enc.attn.w").shape() == Shape{3, 3});
  CHECK(store.get("enc.attn.v").shape() == Shape{3});
  CHECK(store.get("enc.rating.embed").shape() == Shape{9, 2});  // 2*r_max+1 rows
  CHECK(store.get("enc.transform.w1").shape() == Shape{3, 5});
  CHECK(store.get("enc.transform.w2").shape() == Shape{3, 3});
}

TEST_CASE("pretrained vectors override random embedding rows") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(2, "enc-init"));
  std::map<int, std::vector<double>> pre;
  pre[5] = {1.5, -2.5, 3.5};
  pre[-1] = {9, 9, 9};   // ignored: out of range
  pre[99] = {9, 9, 9};   // ignored: out of range
  EncoderNet::register_params(store, d, rng, pre);

  const auto& vals = store.get("enc.embed").values();
  CHECK(vals[5 * 3 + 0] == 1.5);
  CHECK(vals[5 * 3 + 1] == -2.5);
  CHECK(vals[5 * 3 + 2] == 3.5);
  // Random rows stay within the uniform init range, so they differ.
  CHECK(std::abs(vals[0]) <= 0.1);

  ParamStore bad;
  std::map<int, std::vector<double>> wrong;
  wrong[1] = {1.0, 2.0};  // width 2 != embed 3
  auto rng2 = make_rng(3);
  CHECK_THROWS_AS(EncoderNet::register_params(bad, d, rng2, wrong), std::invalid_argument);
}

TEST_CASE("glorot_init respects its bound") {
  auto rng = make_rng(17);
  const auto vals = glorot_init(20, 30, 600, rng);
  REQUIRE(vals.size() == 600);
  const double limit = std::sqrt(6.0 / (20 + 30));
  double min = 1e9, max = -1e9;
  for (double v : vals) {
    CHECK(std::abs(v) <= limit);
    min = std::min(min, v);
    max = std::max(max, v);
  }
  // Spread sanity: both signs actually occur.
  CHECK(min < 0);
  CHECK(max > 0);
}

TEST_CASE("encode_sentence produces a convex attention pooling") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(4, "enc-init"));
  EncoderNet::register_params(store, d, rng);
  const EncoderNet enc(store, d);

  const std::vector<int> tokens{4, 7, 4, 9};
  const SentenceEncoding se = enc.encode_sentence(tokens);

  REQUIRE(se.pooled.shape() == Shape{3});
  REQUIRE(se.token_states.shape() == Shape{4, 3});
  REQUIRE(se.attn_weights.shape() == Shape{4});

  double sum = 0.0;
  for (double w : se.attn_weights.values()) {
    CHECK(w >= 0.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // pooled = sum_i attn_i * token_states[i].
  for (std::size_t c = 0; c < 3; ++c) {
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      expect += se.attn_weights.values()[i] * se.token_states.values()[i * 3 + c];
    CHECK(se.pooled.values()[c] == doctest::Approx(expect).epsilon(1e-12));
  }

  // Same input, same encoder: identical values.
  const SentenceEncoding again = enc.encode_sentence(tokens);
  CHECK(again.pooled.values() == se.pooled.values());

  CHECK_THROWS_AS(enc.encode_sentence(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("single-token sentences pool to that token's state") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(5, "enc-init"));
  EncoderNet::register_params(store, d, rng);
  const EncoderNet enc(store, d);

  const SentenceEncoding se = enc.encode_sentence(std::vector<int>{6});
  CHECK(se.attn_weights.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(se.pooled.values()[c] == doctest::Approx(se.token_states.values()[c]).epsilon(1e-12));
}

TEST_CASE("rating-difference embedding rows") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(6, "enc-init"));
  EncoderNet::register_params(store, d, rng);
  const EncoderNet enc(store, d);

  const auto& table = store.get("enc.rating.embed").values();
  for (int delta = -4; delta <= 4; ++delta) {
    const Tensor e = enc.encode_rating_diff(delta);
    REQUIRE(e.shape() == Shape{2});
    const std::size_t row_idx = static_cast<std::size_t>(delta + 4);
    CHECK(e.values()[0] == table[row_idx * 2]);
    CHECK(e.values()[1] == table[row_idx * 2 + 1]);
  }
  CHECK_THROWS_AS(enc.encode_rating_diff(5), std::out_of_range);
  CHECK_THROWS_AS(enc.encode_rating_diff(-5), std::out_of_range);
}

TEST_CASE("transform_reference applies the two-layer fusion") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(7, "enc-init"));
  EncoderNet::register_params(store, d, rng);
  const EncoderNet enc(store, d);

  const Tensor ref = Tensor::from_vector({0.3, -0.2, 0.7}, {3});
  const Tensor diff = enc.encode_rating_diff(2);
  const Tensor out = enc.transform_reference(ref, diff);
  REQUIRE(out.shape() == Shape{3});

  const Tensor joined = concat(ref, diff);
  const Tensor manual = add(
      matmul(store.get("enc.transform.w2"),
             tanh_op(add(matmul(store.get("enc.transform.w1"), joined),
                         store.get("enc.transform.b1")))),
      store.get("enc.transform.b2"));
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(out.values()[c] == doctest::Approx(manual.values()[c]).epsilon(1e-14));
}

TEST_CASE("encoder outputs carry gradients back to the parameters") {
  const ModelDims d = small_dims();
  ParamStore store;
  auto rng = make_rng(derive_seed(8, "enc-init"));
  EncoderNet::register_params(store, d, rng);
  const EncoderNet enc(store, d);

  const SentenceEncoding se = enc.encode_sentence(std::vector<int>{1, 2, 3});
  const Tensor diff = enc.encode_rating_diff(-1);
  backward(sum(enc.transform_reference(se.pooled, diff)));

  CHECK(store.grad_norm() > 0.0);
  // The used embedding rows receive gradient; an unused row does not.
  const auto& g = store.get("enc.embed").grad();
  double used = 0.0, unused = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    used += std::abs(g[1 * 3 + c]) + std::abs(g[2 * 3 + c]) + std::abs(g[3 * 3 + c]);
    unused += std::abs(g[7 * 3 + c]);
  }
  CHECK(used > 0.0);
  CHECK(unused == 0.0);

  // Rating row for delta=-1 trained, others untouched.
  const auto& rg = store.get("enc.rating.embed").grad();
  double row3 = 0.0, row0 = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    row3 += std::abs(rg[3 * 2 + c]);
    row0 += std::abs(rg[0 * 2 + c]);
  }
  CHECK(row3 > 0.0);
  CHECK(row0 == 0.0);
}
