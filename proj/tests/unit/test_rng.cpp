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

#include "compexp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"

using namespace compexp;

TEST_CASE("derive_seed is deterministic and tag-sensitive") {
  const std::uint64_t a = derive_seed(7, "epoch", 0);
  CHECK(a == derive_seed(7, "epoch", 0));
  CHECK(a != derive_seed(7, "epoch", 1));
  CHECK(a != derive_seed(7, "batch", 0));
  CHECK(a != derive_seed(8, "epoch", 0));
}

TEST_CASE("identical seeds give identical streams") {
  auto r1 = make_rng(derive_seed(42, "x"));
  auto r2 = make_rng(derive_seed(42, "x"));
  for (int i = 0; i < 100; ++i) CHECK(r1() == r2());
}

TEST_CASE("bounded_uint stays in range and covers it") {
  auto rng = make_rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = bounded_uint(rng, 7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
  CHECK_THROWS_AS(bounded_uint(rng, 0), std::invalid_argument);
}

TEST_CASE("uniform_real lies in [0,1) with sane mean") {
  auto rng = make_rng(11);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = uniform_real(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));

  const double v = uniform_real(rng, -2.0, 3.0);
  CHECK(v >= -2.0);
  CHECK(v < 3.0);
}

TEST_CASE("normal has near-zero mean and unit variance") {
  auto rng = make_rng(19);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = normal(rng);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(sq / n - mean * mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("normal consumes a fixed number of draws per call") {
  auto a = make_rng(5);
  auto b = make_rng(5);
  (void)normal(a);
  b();
  b();
  CHECK(a() == b());  // exactly two raw draws per normal()
}

TEST_CASE("shuffle_vec permutes and is seed-stable") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto rng = make_rng(derive_seed(9, "shuffle"));
  shuffle_vec(v, rng);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

  std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7};
  auto rng2 = make_rng(derive_seed(9, "shuffle"));
  shuffle_vec(w, rng2);
  CHECK(v == w);
}

TEST_CASE("sample_index respects the weights") {
  auto rng = make_rng(23);
  std::map<std::size_t, int> counts;
  const std::vector<double> w{1.0, 0.0, 3.0};
  for (int i = 0; i < 40000; ++i) counts[sample_index(w, rng)]++;
  CHECK(counts[1] == 0);
  CHECK(counts[0] + counts[2] == 40000);
  CHECK(static_cast<double>(counts[2]) / counts[0] == doctest::Approx(3.0).epsilon(0.1));

  CHECK_THROWS_AS(sample_index({}, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_index({0.0, 0.0}, rng), std::invalid_argument);
}

TEST_CASE("sample_index on a point mass always picks it") {
  auto rng = make_rng(1);
  for (int i = 0; i < 50; ++i) CHECK(sample_index({0.0, 1.0, 0.0}, rng) == 1);
}

TEST_CASE("sample_subset draws k distinct sorted indices") {
  auto rng = make_rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = sample_subset(10, 4, rng);
    REQUIRE(s.size() == 4);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 4);
    for (std::size_t i : s) CHECK(i < 10);
  }
  CHECK(sample_subset(5, 5, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(sample_subset(3, 4, rng) == std::vector<std::size_t>{0, 1, 2});
  CHECK(sample_subset(5, 0, rng).empty());
}

TEST_CASE("sample_subset covers all indices over many draws") {
  auto rng = make_rng(37);
  std::set<std::size_t> seen;
  for (int i = 0; i < 300; ++i)
    for (std::size_t v : sample_subset(6, 2, rng)) seen.insert(v);
  CHECK(seen.size() == 6);
}
