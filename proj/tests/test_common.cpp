#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <set>
#include <vector>

#include "twinopt/common.hpp"

using namespace twinopt;

TEST_CASE("splitmix64 matches the reference stream") {
  // first three outputs of the canonical generator seeded with 0
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(0x9e3779b97f4a7c15ULL) == 0x6E789E6AA1B965F4ULL);
  CHECK(splitmix64(2 * 0x9e3779b97f4a7c15ULL) == 0x06C45D188009454FULL);
}

TEST_CASE("rng is deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  bool diverged = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t va = a.next();
    CHECK(va == b.next());
    if (va != c.next()) diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("uniform draws live in the half-open unit interval") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("bounded integers cover the whole range without bias spikes") {
  Rng rng(11);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) {
    const int64_t v = rng.uniform_int(10);
    REQUIRE(v >= 0);
    REQUIRE(v < 10);
    counts[static_cast<size_t>(v)]++;
  }
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("normal draws have the requested moments") {
  Rng rng(3);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal(2.0, 3.0);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
  CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("forked streams are independent of the parent and each other") {
  Rng parent(99);
  Rng f1 = parent.fork(1);
  Rng f2 = parent.fork(2);
  Rng f1_again = Rng(99).fork(1);
  bool f1_differs_f2 = false;
  for (int i = 0; i < 50; ++i) {
    const uint64_t a = f1.next();
    CHECK(a == f1_again.next());  // forks are reproducible
    if (a != f2.next()) f1_differs_f2 = true;
  }
  CHECK(f1_differs_f2);
}

TEST_CASE("format_double round-trips exactly through parsing") {
  const std::vector<double> cases = {0.0,   -0.0,       0.1,   1.0 / 3.0, 1e-300, 1e300,
                                     -42.5, 6.02214076e23, 1e-17, 2.0,       100011.0};
  for (double v : cases) {
    const std::string s = format_double(v);
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(back == v);
  }
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5) == "-2.5");
}

TEST_CASE("content hashes are stable and collision-sensitive") {
  CHECK(content_hash("abc") == content_hash("abc"));
  CHECK(content_hash("abc") != content_hash("abd"));
  CHECK(content_hash("") != content_hash("\x1f"));
  CHECK(content_hash("abc").size() == 16);  // 64-bit hex
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);  // offset basis
}
