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

#include "compexp/extractor.hpp"

#include <cmath>
#include <vector>

#include "compexp/rng.hpp"
#include "doctest.h"

using namespace compexp;

namespace {

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from_vector(std::move(v), {n});
}

ExtractionContext toy_context(double kappa) {
  ExtractionContext ctx;
  ctx.kappa = kappa;
  ctx.candidates = {vec({1.0, 0.0}), vec({0.0, 1.0}), vec({-1.0, 0.0})};
  ctx.references = {vec({2.0, 0.0}), vec({1.0, 1.0})};
  return ctx;
}

ExtractionContext random_context(std::mt19937_64& rng, std::size_t n_cand, std::size_t n_ref,
                                 double kappa) {
  ExtractionContext ctx;
  ctx.kappa = kappa;
  for (std::size_t j = 0; j < n_cand; ++j) {
    std::vector<double> v(4);
    for (auto& x : v) x = uniform_real(rng, -1.0, 1.0) + 0.05;  // keep away from zero norm
    ctx.candidates.push_back(vec(std::move(v)));
  }
  for (std::size_t i = 0; i < n_ref; ++i) {
    std::vector<double> v(4);
    for (auto& x : v) x = uniform_real(rng, -1.0, 1.0) + 0.05;
    ctx.references.push_back(vec(std::move(v)));
  }
  return ctx;
}

}  // namespace

TEST_CASE("logits are logsumexp of scaled cosines") {
  const ExtractionContext ctx = toy_context(3.0);
  const Tensor logits = extraction_logits(ctx);
  REQUIRE(logits.shape() == Shape{3});

  // Hand evaluation per candidate.
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const std::vector<std::vector<double>> cosines{
      {1.0, inv_sqrt2}, {0.0, inv_sqrt2}, {-1.0, -inv_sqrt2}};
  for (std::size_t j = 0; j < 3; ++j) {
    const double a = 3.0 * cosines[j][0];
    const double b = 3.0 * cosines[j][1];
    const double m = std::max(a, b);
    const double expected = m + std::log(std::exp(a - m) + std::exp(b - m));
    CHECK(logits.values()[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("distribution is a proper probability vector") {
  auto rng = make_rng(derive_seed(21, "ext-dist"));
  for (int trial = 0; trial < 50; ++trial) {
    const auto ctx = random_context(rng, 2 + bounded_uint(rng, 6), 1 + bounded_uint(rng, 4),
                                    uniform_real(rng, 0.0, 10.0));
    const Tensor dist = extraction_distribution(ctx);
    double sum = 0.0;
    for (double p : dist.values()) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("kappa zero gives the uniform distribution") {
  const ExtractionContext ctx = toy_context(0.0);
  const Tensor dist = extraction_distribution(ctx);
  for (double p : dist.values()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("raising kappa sharpens toward the aligned candidate") {
  // Candidate 0 is best-aligned with the references in toy_context.
  double prev = extraction_distribution(toy_context(0.0)).values()[0];
  for (double kappa : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double p0 = extraction_distribution(toy_context(kappa)).values()[0];
    CHECK(p0 > prev);
    prev = p0;
  }
  CHECK(prev > 0.9);
}

TEST_CASE("extreme kappa stays finite and picks the argmax") {
  const Tensor dist = extraction_distribution(toy_context(500.0));
  for (double p : dist.values()) {
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
  }
  CHECK(dist.values()[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("context validation") {
  ExtractionContext ctx = toy_context(1.0);
  ctx.kappa = -0.5;
  CHECK_THROWS_AS(extraction_logits(ctx), std::invalid_argument);

  ExtractionContext no_cand = toy_context(1.0);
  no_cand.candidates.clear();
  CHECK_THROWS_AS(extraction_logits(no_cand), std::invalid_argument);

  ExtractionContext no_ref = toy_context(1.0);
  no_ref.references.clear();
  CHECK_THROWS_AS(extraction_logits(no_ref), std::invalid_argument);
}

TEST_CASE("sample_prototype argmax breaks ties low") {
  auto rng = make_rng(1);
  const PrototypeChoice c = sample_prototype({0.25, 0.4, 0.4}, SampleMode::kArgmax, rng);
  CHECK(c.index == 1);
  CHECK(c.log_prob == doctest::Approx(std::log(0.4)).epsilon(1e-12));
  CHECK_THROWS_AS(sample_prototype({}, SampleMode::kArgmax, rng), std::invalid_argument);
}

TEST_CASE("sample_prototype sampling follows the distribution") {
  auto rng = make_rng(derive_seed(22, "ext-sample"));
  const std::vector<double> probs{0.1, 0.6, 0.3};
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) {
    const PrototypeChoice c = sample_prototype(probs, SampleMode::kSample, rng);
    counts[c.index]++;
    CHECK(c.log_prob == doctest::Approx(std::log(probs[c.index])).epsilon(1e-12));
  }
  CHECK(counts[1] / 30000.0 == doctest::Approx(0.6).epsilon(0.05));
  CHECK(counts[0] / 30000.0 == doctest::Approx(0.1).epsilon(0.15));
}

TEST_CASE("extractor_nll equals the negative log of the distribution entry") {
  const ExtractionContext ctx = toy_context(2.0);
  const Tensor dist = extraction_distribution(ctx);
  for (std::size_t j = 0; j < 3; ++j) {
    const Tensor nll = extractor_nll(ctx, j);
    REQUIRE(nll.shape() == Shape{1});
    CHECK(nll.values()[0] == doctest::Approx(-std::log(dist.values()[j])).epsilon(1e-12));
  }
  CHECK_THROWS_AS(extractor_nll(ctx, 3), std::out_of_range);
}

TEST_CASE("extractor_nll backpropagates into candidates and references") {
  ExtractionContext ctx;
  ctx.kappa = 2.0;
  Tensor c0 = Tensor::leaf({0.8, 0.1}, {2});
  Tensor c1 = Tensor::leaf({-0.4, 0.9}, {2});
  Tensor r0 = Tensor::leaf({0.5, 0.5}, {2});
  ctx.candidates = {c0, c1};
  ctx.references = {r0};

  backward(extractor_nll(ctx, 0));
  CHECK(c0.has_grad());
  CHECK(c1.has_grad());
  CHECK(r0.has_grad());
  double norm = 0.0;
  for (double g : c0.grad()) norm += g * g;
  for (double g : r0.grad()) norm += g * g;
  CHECK(norm > 0.0);
}
