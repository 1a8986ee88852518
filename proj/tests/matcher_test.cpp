#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "affmatch/matcher.hpp"
#include "affmatch/rng.hpp"
#include "fd_check.hpp"

using namespace affmatch;

namespace {

MatcherDims small_dims() {
  MatcherDims d;
  d.signifier_width = 4;
  d.region_width = 3;
  d.shared_dim = 5;
  d.match_dim = 4;
  d.head_count = 2;
  return d;
}

ParamStore make_params(const MatcherDims& dims, std::uint64_t seed) {
  ParamStore store;
  ParamInit init(seed);
  create_matcher_params(store, dims, init);
  return store;
}

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                     double hi = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(r, c, std::move(v));
}

void set_param(ParamStore& store, const std::string& name, const std::vector<double>& v) {
  Tensor t = store.at(name);
  REQUIRE(t.data().size() == v.size());
  t.mutable_data() = v;
}

}  // namespace

TEST_CASE("single-pair attention returns the value row verbatim") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 1);
  Rng rng(10);
  Tensor f_i = random_tensor(rng, 1, 4);
  Tensor f_p = random_tensor(rng, 1, 3);
  auto [w_m, w_r] = cross_modal_attention(store, dims, f_i, f_p);
  // Softmax over one logit is exactly 1, so w_m is the projected value row.
  Tensor v_p = matmul(f_p, store.at("matcher.wv_reg"));
  Tensor v_i = matmul(f_i, store.at("matcher.wv_sig"));
  for (std::size_t j = 0; j < dims.shared_dim; ++j) {
    CHECK(w_m.at(0, j) == v_p.at(0, j));
    CHECK(w_r.at(0, j) == v_i.at(0, j));
  }
}

TEST_CASE("equal keys average the value rows") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 2);
  set_param(store, "matcher.wk_reg", std::vector<double>(3 * 5, 0.0));  // all keys equal
  Rng rng(11);
  Tensor f_i = random_tensor(rng, 1, 4);
  Tensor f_p = random_tensor(rng, 2, 3);
  auto [w_m, w_r] = cross_modal_attention(store, dims, f_i, f_p);
  Tensor v_p = matmul(f_p, store.at("matcher.wv_reg"));
  for (std::size_t j = 0; j < dims.shared_dim; ++j)
    CHECK_THAT(w_m.at(0, j),
               Catch::Matchers::WithinAbs(0.5 * (v_p.at(0, j) + v_p.at(1, j)), 1e-15));
}

TEST_CASE("attention matches a hand-computed pass") {
  MatcherDims dims;
  dims.signifier_width = 2;
  dims.region_width = 2;
  dims.shared_dim = 2;
  dims.match_dim = 4;
  dims.head_count = 2;
  ParamStore store = make_params(dims, 3);
  set_param(store, "matcher.wq_sig", {1.0, 0.0, 0.0, 1.0});
  set_param(store, "matcher.wk_reg", {1.0, 0.5, -0.5, 1.0});
  set_param(store, "matcher.wv_reg", {0.2, -0.3, 0.7, 0.4});
  Tensor f_i = Tensor::from(2, 2, {1.0, 0.0, 0.0, 1.0});
  Tensor f_p = Tensor::from(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
  auto [w_m, w_r] = cross_modal_attention(store, dims, f_i, f_p);

  // Plain-loop oracle for w_m only (w_r follows the mirrored formula).
  const double q[2][2] = {{1, 0}, {0, 1}};                       // f_i * wq_sig
  const double k[3][2] = {{1, 0.5}, {-0.5, 1}, {0.5, 1.5}};      // f_p * wk_reg
  const double v[3][2] = {{0.2, -0.3}, {0.7, 0.4}, {0.9, 0.1}};  // f_p * wv_reg
  for (int i = 0; i < 2; ++i) {
    double logits[3], mx = -1e300;
    for (int j = 0; j < 3; ++j) {
      logits[j] = q[i][0] * k[j][0] + q[i][1] * k[j][1];
      mx = std::max(mx, logits[j]);
    }
    double weights[3], total = 0;
    for (int j = 0; j < 3; ++j) {
      weights[j] = std::exp(logits[j] - mx);
      total += weights[j];
    }
    for (int c = 0; c < 2; ++c) {
      double acc = 0;
      for (int j = 0; j < 3; ++j) acc += weights[j] / total * v[j][c];
      CHECK_THAT(w_m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)),
                 Catch::Matchers::WithinAbs(acc, 1e-14));
    }
  }
  CHECK(w_r.rows() == 3);
}

TEST_CASE("logit scaling flag changes the attention spread") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 4);
  Rng rng(12);
  Tensor f_i = random_tensor(rng, 2, 4, 1.0, 3.0);
  Tensor f_p = random_tensor(rng, 3, 3, 1.0, 3.0);
  auto [plain, _pr] = cross_modal_attention(store, dims, f_i, f_p);
  dims.scale_logits = true;
  auto [scaled, _sr] = cross_modal_attention(store, dims, f_i, f_p);
  bool differs = false;
  for (std::size_t i = 0; i < plain.rows() && !differs; ++i)
    for (std::size_t j = 0; j < plain.cols() && !differs; ++j)
      if (plain.at(i, j) != scaled.at(i, j)) differs = true;
  CHECK(differs);
}

TEST_CASE("dissimilarity endpoints are exact") {
  Tensor w_m = Tensor::from(3, 3, {1.0, 2.0, 3.0, 1.0, 0.0, 0.0, 2.0, -1.0, 0.5});
  Tensor w_r = Tensor::from(3, 3, {1.0, 2.0, 3.0, 0.0, 5.0, 0.0, -2.0, 1.0, -0.5});
  Tensor d = dissimilarity(w_m, w_r);
  CHECK_THAT(d.at(0, 0), Catch::Matchers::WithinAbs(0.0, 1e-12));  // identical rows
  CHECK(d.at(1, 1) == 1.0);                                       // orthogonal
  CHECK(d.at(2, 2) == 1.0);                                       // antiparallel
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(d.at(i, j) >= 0.0);
      CHECK(d.at(i, j) <= 1.0);
    }
}

TEST_CASE("dissimilarity stays inside the unit interval", "[property]") {
  Rng rng(77);
  for (int iter = 0; iter < 2000; ++iter) {
    Tensor a = random_tensor(rng, 1, 4, -10.0, 10.0);
    Tensor b = random_tensor(rng, 1, 4, -10.0, 10.0);
    const double d = dissimilarity(a, b).at(0, 0);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("zero feature rows are rejected by name") {
  Tensor w_m = Tensor::from(2, 2, {1.0, 1.0, 0.0, 0.0});
  Tensor w_r = Tensor::from(1, 2, {1.0, 0.0});
  CHECK_THROWS_MATCHES(dissimilarity(w_m, w_r), DegenerateError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("row 1")));
}

TEST_CASE("zero queries collapse the pair features to the output bias") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 5);
  set_param(store, "matcher.ff_wq", std::vector<double>(16, 0.0));
  set_param(store, "matcher.b_h", {0.37});
  Tensor d = Tensor::from(2, 2, {0.1, 0.4, 0.6, 0.9});
  auto [m_ff, match_map] = match2match(store, dims, d);
  for (double v : m_ff.data()) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(match_map.at(i, j) == 0.37);
}

TEST_CASE("single-pair match head equals the hand-computed chain") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 6);
  Tensor d = Tensor::from(1, 1, {0.3});
  auto [m_ff, match_map] = match2match(store, dims, d);

  // Plain-loop oracle over the full additive-attention chain.
  auto get = [&](const char* name) { return store.at(name); };
  double x[4], q[4], k[4], v[4];
  for (int c = 0; c < 4; ++c) x[c] = 0.3 * get("matcher.wx").at(0, static_cast<std::size_t>(c));
  for (int c = 0; c < 4; ++c) {
    q[c] = k[c] = v[c] = 0;
    for (int r = 0; r < 4; ++r) {
      q[c] += x[r] * get("matcher.ff_wq").at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      k[c] += x[r] * get("matcher.ff_wk").at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      v[c] += x[r] * get("matcher.ff_wv").at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    }
  }
  double q_logit = 0;
  for (int c = 0; c < 4; ++c) q_logit += q[c] * get("matcher.w_qvec").at(static_cast<std::size_t>(c), 0);
  const double qw = 1.0 / (1.0 + std::exp(-q_logit));
  double z[4];
  for (int c = 0; c < 4; ++c) z[c] = k[c] * (qw * q[c]);
  double k_logit = 0;
  for (int c = 0; c < 4; ++c) k_logit += z[c] * get("matcher.w_kvec").at(static_cast<std::size_t>(c), 0);
  const double kw = 1.0 / (1.0 + std::exp(-k_logit));
  double ff[4];
  for (int c = 0; c < 4; ++c) ff[c] = v[c] * (kw * z[c]);
  double mixed[4];
  for (int h = 0; h < 2; ++h) {
    const Tensor mix = get(h == 0 ? "matcher.head_mix_0" : "matcher.head_mix_1");
    for (int c = 0; c < 2; ++c) {
      mixed[2 * h + c] = 0;
      for (int r = 0; r < 2; ++r)
        mixed[2 * h + c] += ff[2 * h + r] * mix.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    }
  }
  double score = get("matcher.b_h").at(0, 0);
  for (int c = 0; c < 4; ++c) score += mixed[c] * get("matcher.w_h").at(static_cast<std::size_t>(c), 0);

  for (int c = 0; c < 4; ++c)
    CHECK_THAT(m_ff.at(0, static_cast<std::size_t>(c)),
               Catch::Matchers::WithinAbs(ff[c], 1e-14));
  CHECK_THAT(match_map.at(0, 0), Catch::Matchers::WithinAbs(score, 1e-14));
}

TEST_CASE("match head is bitwise deterministic across calls") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 7);
  Rng rng(13);
  Tensor d = random_tensor(rng, 3, 4, 0.0, 1.0);
  auto [a1, m1] = match2match(store, dims, d);
  auto [a2, m2] = match2match(store, dims, d);
  CHECK(a1.data() == a2.data());
  CHECK(m1.data() == m2.data());
  Tensor doubled = scale(d, 2.0);
  auto [a3, m3] = match2match(store, dims, doubled);
  for (double v : m3.data()) CHECK(std::isfinite(v));
}

TEST_CASE("default output stage ranks the least dissimilar pair highest") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 8);
  // Hand-set pair projections make every pair feature nonnegative in D, so
  // the uniform negative output projection orders scores opposite to D.
  set_param(store, "matcher.wx", {1.0, 1.0, 1.0, 1.0});
  std::vector<double> identity16(16, 0.0);
  for (int i = 0; i < 4; ++i) identity16[static_cast<std::size_t>(i * 4 + i)] = 1.0;
  set_param(store, "matcher.ff_wq", identity16);
  set_param(store, "matcher.ff_wk", identity16);
  set_param(store, "matcher.ff_wv", identity16);
  Rng rng(14);
  for (int iter = 0; iter < 20; ++iter) {
    Tensor d = random_tensor(rng, 2, 3, 0.05, 0.95);
    auto [m_ff, match_map] = match2match(store, dims, d);
    Assignment asg = assign(d, match_map, 0.2);
    for (std::size_t i = 0; i < 2; ++i) {
      std::size_t argmin_d = 0;
      for (std::size_t j = 1; j < 3; ++j)
        if (d.at(i, j) < d.at(i, argmin_d)) argmin_d = j;
      std::size_t argmax_a = 0;
      for (std::size_t j = 1; j < 3; ++j)
        if (asg.a.at(i, j) > asg.a.at(i, argmax_a)) argmax_a = j;
      CHECK(argmax_a == argmin_d);
    }
  }
}

TEST_CASE("predicted assignment rows are stochastic", "[property]") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 9);
  Rng rng(15);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 8));
    Tensor d = random_tensor(rng, n, m, 0.0, 1.0);
    auto [m_ff, match_map] = match2match(store, dims, d);
    Assignment asg = assign(d, match_map, 0.2);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < m; ++j) row += asg.a.at(i, j);
      CHECK_THAT(row, Catch::Matchers::WithinAbs(1.0, 1e-9));
      CHECK(!asg.match_sets[i].empty());
    }
  }
}

TEST_CASE("assignment argmax ignores constant row shifts") {
  Tensor d = Tensor::from(2, 3, {0.5, 0.6, 0.7, 0.9, 0.4, 0.8});
  Tensor map = Tensor::from(2, 3, {1.2, -0.3, 0.4, 0.0, 2.0, -1.0});
  Assignment base = assign(d, map, 0.2);
  Tensor shifted = Tensor::from(2, 3, {1.2 + 5.0, -0.3 + 5.0, 0.4 + 5.0,
                                       0.0 - 2.5, 2.0 - 2.5, -1.0 - 2.5});
  Assignment moved = assign(d, shifted, 0.2);
  for (std::size_t i = 0; i < 2; ++i) {
    std::size_t b = 0, m = 0;
    for (std::size_t j = 1; j < 3; ++j) {
      if (base.a.at(i, j) > base.a.at(i, b)) b = j;
      if (moved.a.at(i, j) > moved.a.at(i, m)) m = j;
    }
    CHECK(b == m);
  }
}

TEST_CASE("match sets honor the threshold rule") {
  SECTION("no entry under threshold keeps only the argmax") {
    Tensor d = Tensor::from(1, 3, {0.5, 0.6, 0.7});
    Tensor map = Tensor::from(1, 3, {0.1, 0.9, 0.3});
    Assignment asg = assign(d, map, 0.2);
    CHECK(asg.match_sets[0] == std::vector<std::size_t>{1});
  }
  SECTION("every entry under threshold is retained") {
    Tensor d = Tensor::from(1, 3, {0.1, 0.15, 0.9});
    Tensor map = Tensor::from(1, 3, {2.0, 0.5, 0.1});
    Assignment asg = assign(d, map, 0.2);
    CHECK(asg.match_sets[0].size() >= 2);
    CHECK(asg.match_sets[0] == std::vector<std::size_t>{0, 1});
  }
  SECTION("single pair is a forced match") {
    Tensor d = Tensor::from(1, 1, {0.99});
    Tensor map = Tensor::from(1, 1, {-3.0});
    Assignment asg = assign(d, map, 0.2);
    CHECK(asg.match_sets[0] == std::vector<std::size_t>{0});
    CHECK(asg.a.at(0, 0) == 1.0);
  }
  SECTION("threshold bounds are enforced") {
    Tensor d = Tensor::from(1, 1, {0.5});
    CHECK_THROWS_AS(assign(d, d, 0.0), ConfigError);
    CHECK_THROWS_AS(assign(d, d, 1.0), ConfigError);
  }
}

TEST_CASE("permuting signifiers permutes the match map rows", "[property]") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 20);
  Rng rng(16);
  Tensor f_i = random_tensor(rng, 3, 4);
  Tensor f_p = random_tensor(rng, 4, 3);
  MatchState base = match_forward(store, dims, f_i, f_p);

  const std::size_t perm[3] = {2, 0, 1};
  std::vector<double> rows;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) rows.push_back(f_i.at(perm[r], c));
  Tensor f_i_perm = Tensor::from(3, 4, std::move(rows));
  MatchState moved = match_forward(store, dims, f_i_perm, f_p);

  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK_THAT(moved.d.at(r, j), Catch::Matchers::WithinAbs(base.d.at(perm[r], j), 1e-12));
      CHECK_THAT(moved.match_map.at(r, j),
                 Catch::Matchers::WithinAbs(base.match_map.at(perm[r], j), 1e-12));
    }
}

TEST_CASE("matcher gradients match finite differences", "[grad]") {
  MatcherDims dims = small_dims();
  ParamStore store = make_params(dims, 21);
  Rng rng(17);
  Tensor f_i = random_tensor(rng, 2, 4);
  Tensor f_p = random_tensor(rng, 3, 3);
  Tensor weights = random_tensor(rng, 2, 3);

  auto forward = [&]() {
    MatchState state = match_forward(store, dims, f_i, f_p);
    return sum(hadamard(state.match_map, weights));
  };
  Tensor loss = forward();
  zero_grads(loss);
  backward(loss);
  std::map<std::string, std::vector<double>> analytic;
  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto& [name, tensor] : store.all()) {
    analytic[name] = tensor.grad();
    params.emplace_back(name, tensor);
  }
  auto bad = fdcheck::compare_gradients([&]() { return forward().value(); }, params,
                                        analytic, 1e-4);
  for (const auto& miss : bad)
    UNSCOPED_INFO(miss.param << "[" << miss.index << "] analytic=" << miss.analytic
                             << " numeric=" << miss.numeric << " err=" << miss.rel_err);
  CHECK(bad.empty());
}

TEST_CASE("invalid matcher configurations are rejected") {
  MatcherDims dims = small_dims();
  dims.head_count = 3;  // does not divide match_dim = 4
  ParamStore store;
  ParamInit init(1);
  CHECK_THROWS_AS(create_matcher_params(store, dims, init), ConfigError);

  dims = small_dims();
  ParamStore ok = make_params(dims, 1);
  Rng rng(18);
  Tensor wrong = random_tensor(rng, 2, 5);  // signifier width should be 4
  Tensor f_p = random_tensor(rng, 2, 3);
  CHECK_THROWS_AS(cross_modal_attention(ok, dims, wrong, f_p), ConfigError);
}
