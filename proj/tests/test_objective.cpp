#include <doctest.h>

#include <cmath>
#include <vector>

#include "twinopt/gbdt.hpp"
#include "twinopt/objective.hpp"

using namespace twinopt;

namespace {

// plain-softmax cross entropy written independently of the objective classes
double reference_ce(const std::vector<double>& scores, int label) {
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  return -(scores[static_cast<size_t>(label)] - mx - std::log(z));
}

std::vector<double> random_scores(Rng& rng, int k) {
  std::vector<double> s(static_cast<size_t>(k));
  for (double& v : s) v = rng.normal(0.0, 2.0);
  return s;
}

}  // namespace

TEST_CASE("focal values match high-precision references") {
  // reference numbers computed by 60-digit numeric differentiation of the
  // loss definition -alpha_y * (1-p_y)^gamma * ln p_y
  std::vector<double> g(3), h(3);

  SUBCASE("two symmetric classes at gamma 2") {
    const MulticlassFocal f(2, 2.0);
    const std::vector<double> s = {0.0, 0.0};
    CHECK(f.loss(s, 0) == doctest::Approx(0.17328679513998633).epsilon(1e-14));
    f.grad_hess(s, 0, std::span<double>(g.data(), 2), std::span<double>(h.data(), 2));
    CHECK(g[0] == doctest::Approx(-0.29828679513998633).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(0.29828679513998633).epsilon(1e-14));
    CHECK(h[0] == doctest::Approx(0.39914339756999316).epsilon(1e-14));
    CHECK(h[1] == doctest::Approx(0.39914339756999316).epsilon(1e-14));
  }

  SUBCASE("three classes with per-class weights at gamma 1") {
    const MulticlassFocal f(3, 1.0, {0.25, 0.5, 0.25});
    const std::vector<double> s = {1.0, 0.0, -1.0};
    CHECK(f.loss(s, 1) == doctest::Approx(0.53156235445914662).epsilon(1e-14));
    f.grad_hess(s, 1, g, h);
    CHECK(g[0] == doctest::Approx(0.36580029672885113).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(-0.41530598349468717).epsilon(1e-14));
    CHECK(g[2] == doctest::Approx(0.049505686765836035).epsilon(1e-14));
    CHECK(h[0] == doctest::Approx(0.15453412868326666).epsilon(1e-14));
    CHECK(h[1] == doctest::Approx(0.14298680722424716).epsilon(1e-14));
    CHECK(h[2] == doctest::Approx(0.045636211922506478).epsilon(1e-14));
  }

  SUBCASE("gamma zero reduces to plain cross entropy") {
    const MulticlassFocal f(3, 0.0);
    const std::vector<double> s = {0.5, -0.2, 0.1};
    CHECK(f.loss(s, 2) == doctest::Approx(1.1733000436247918).epsilon(1e-14));
    f.grad_hess(s, 2, g, h);
    CHECK(g[0] == doctest::Approx(0.46148762338872569).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(0.22916797165646593).epsilon(1e-14));
    CHECK(g[2] == doctest::Approx(-0.69065559504519162).epsilon(1e-14));
    CHECK(h[0] == doctest::Approx(0.24851679684775137).epsilon(1e-14));
    CHECK(h[1] == doctest::Approx(0.17665001242332716).epsilon(1e-14));
    CHECK(h[2] == doctest::Approx(0.2136504440779639).epsilon(1e-14));
  }
}

TEST_CASE("gamma zero agrees with softmax cross entropy on random samples") {
  Rng rng(123);
  std::vector<double> gf(4), hf(4), gc(4), hc(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    const MulticlassFocal focal(k, 0.0);
    const SoftmaxCrossEntropy ce(k);
    const std::vector<double> s = random_scores(rng, k);
    const int label = static_cast<int>(rng.uniform_int(k));

    CHECK(std::abs(focal.loss(s, label) - ce.loss(s, label)) <= 1e-12);
    CHECK(std::abs(focal.loss(s, label) - reference_ce(s, label)) <= 1e-12);

    focal.grad_hess(s, label, std::span<double>(gf.data(), static_cast<size_t>(k)),
                    std::span<double>(hf.data(), static_cast<size_t>(k)));
    ce.grad_hess(s, label, std::span<double>(gc.data(), static_cast<size_t>(k)),
                 std::span<double>(hc.data(), static_cast<size_t>(k)));
    for (int i = 0; i < k; ++i) {
      CHECK(std::abs(gf[static_cast<size_t>(i)] - gc[static_cast<size_t>(i)]) <= 1e-12);
      CHECK(std::abs(hf[static_cast<size_t>(i)] - hc[static_cast<size_t>(i)]) <= 1e-12);
    }
  }
}

TEST_CASE("analytic derivatives agree with central finite differences") {
  // Gradient is checked against a central difference of the loss. The hessian
  // is checked against a central difference of the analytic gradient: a second
  // difference of the loss at step 1e-6 amplifies double roundoff by 1e12 and
  // cannot resolve 1e-3. The returned hessian is floored, so the reference
  // value gets the same floor before comparing.
  Rng rng(77);
  const double gammas[3] = {0.5, 1.0, 2.0};
  const double step = 1e-6;
  std::vector<double> g(4), h(4), gp(4), gm(4), scratch(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    const double gamma = gammas[trial % 3];
    const MulticlassFocal f(k, gamma);
    std::vector<double> s = random_scores(rng, k);
    const int label = static_cast<int>(rng.uniform_int(k));
    const auto span_k = [&](std::vector<double>& v) {
      return std::span<double>(v.data(), static_cast<size_t>(k));
    };
    f.grad_hess(s, label, span_k(g), span_k(h));
    for (int i = 0; i < k; ++i) {
      const double keep = s[static_cast<size_t>(i)];
      s[static_cast<size_t>(i)] = keep + step;
      const double up = f.loss(s, label);
      f.grad_hess(s, label, span_k(gp), span_k(scratch));
      s[static_cast<size_t>(i)] = keep - step;
      const double dn = f.loss(s, label);
      f.grad_hess(s, label, span_k(gm), span_k(scratch));
      s[static_cast<size_t>(i)] = keep;

      const double fd_g = (up - dn) / (2 * step);
      const double fd_h = std::max(
          kHessFloor, (gp[static_cast<size_t>(i)] - gm[static_cast<size_t>(i)]) / (2 * step));
      const double gi = g[static_cast<size_t>(i)];
      const double hi = h[static_cast<size_t>(i)];
      CHECK(std::abs(gi - fd_g) / std::max(1.0, std::abs(fd_g)) < 1e-4);
      CHECK(std::abs(hi - fd_h) / std::max(1.0, std::abs(fd_h)) < 1e-3);
    }
  }
}

TEST_CASE("per-class weights scale the loss and derivatives linearly") {
  const MulticlassFocal unweighted(3, 2.0);
  const MulticlassFocal weighted(3, 2.0, {2.0, 1.0, 1.0});
  const std::vector<double> s = {0.4, -0.1, 0.2};
  CHECK(weighted.loss(s, 0) == doctest::Approx(2.0 * unweighted.loss(s, 0)).epsilon(1e-15));
  CHECK(weighted.loss(s, 1) == doctest::Approx(unweighted.loss(s, 1)).epsilon(1e-15));

  std::vector<double> gu(3), hu(3), gw(3), hw(3);
  unweighted.grad_hess(s, 0, gu, hu);
  weighted.grad_hess(s, 0, gw, hw);
  for (int i = 0; i < 3; ++i) {
    CHECK(gw[static_cast<size_t>(i)] ==
          doctest::Approx(2.0 * gu[static_cast<size_t>(i)]).epsilon(1e-15));
  }
}

TEST_CASE("extreme scores stay finite through the probability clamp") {
  const MulticlassFocal f(2, 2.0);
  const std::vector<double> s = {-800.0, 800.0};  // p_label underflows to 0
  const double loss = f.loss(s, 0);
  CHECK(std::isfinite(loss));
  CHECK(loss <= -std::log(1e-15) + 1e-9);

  std::vector<double> g(2), h(2);
  f.grad_hess(s, 0, g, h);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::isfinite(g[static_cast<size_t>(i)]));
    CHECK(std::isfinite(h[static_cast<size_t>(i)]));
    CHECK(h[static_cast<size_t>(i)] >= 1e-16);  // hessian floor
  }
}

TEST_CASE("the objective factory maps parameter names to objectives") {
  GbdtParams p;
  p.objective = "focal";
  p.focal_gamma = 1.5;
  auto focal = make_objective(p, 4);
  CHECK(focal->num_classes() == 4);
  CHECK(focal->name().find("focal") != std::string::npos);

  p.objective = "cross_entropy";
  auto ce = make_objective(p, 3);
  CHECK(ce->num_classes() == 3);

  p.objective = "nonsense";
  CHECK_THROWS_AS(make_objective(p, 3), Error);
}
