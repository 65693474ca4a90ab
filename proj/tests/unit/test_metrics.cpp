#include <cmath>

#include "bwn/metrics.hpp"
#include "bwn/network.hpp"
#include "bwn/oracles.hpp"
#include "helpers.hpp"

using namespace bwn;
using bwn::test::random_tensor;
using bwn::test::TempDir;

namespace {

std::vector<double> random_scores(Rng& rng, std::size_t n, double mean) {
  std::vector<double> s(n);
  for (double& v : s) v = mean + rng.normal();
  return s;
}

// Embedding is the (normalised) input itself.
Model identity_model(std::size_t dim) {
  NetworkSpec spec;
  spec.input_shape = {1, 1, dim};
  spec.embedding_dim = dim;
  spec.num_classes = 2;
  spec.layers = {LayerSpec::binary_conv2d(1, 1), LayerSpec::flatten()};
  Model m = init_model(spec, 1);
  m.weights[0][0] = 1.0f;
  return m;
}

UtteranceStore random_store(Rng& rng, std::size_t count, std::size_t dim) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < count; ++i) ids.push_back("u" + std::to_string(i));
  return UtteranceStore(ids, random_tensor(rng, {count, 1, 1, dim}));
}

}  // namespace

TEST_CASE("cosine_score") {
  const std::vector<float> a{1, 1}, b{1, 0}, c{0, 1}, zero{0, 0}, three{1, 2, 3};
  CHECK(cosine_score(a, a) == doctest::Approx(1.0));
  CHECK(cosine_score(b, c) == 0.0);
  CHECK(cosine_score(a, b) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(test::error_code_of([&] { (void)cosine_score(a, zero); }) == Errc::invalid_argument);
  CHECK(test::error_code_of([&] { (void)cosine_score(a, three); }) == Errc::shape_mismatch);
}

TEST_CASE("compute_eer worked examples") {
  const std::vector<double> hi(5, 0.9), lo(7, 0.1);
  CHECK(compute_eer(hi, lo).eer == 0.0);

  const std::vector<double> same{0.1, 0.5, 0.5, 0.9};
  CHECK(compute_eer(same, same).eer == doctest::Approx(0.5));

  const std::vector<double> t{0.8, 0.6, 0.4}, n{0.7, 0.3, 0.1};
  const double eer = compute_eer(t, n).eer;
  CHECK(eer == doctest::Approx(1.0 / 3.0));
  CHECK(std::fabs(eer - oracle::eer_sweep(t, n)) <= 1e-9);

  const std::vector<double> empty;
  CHECK(test::error_code_of([&] { (void)compute_eer(empty, n); }) == Errc::invalid_argument);
  const std::vector<double> nan{NAN};
  CHECK(test::error_code_of([&] { (void)compute_eer(nan, n); }) == Errc::invalid_argument);
}

TEST_CASE("compute_min_dcf worked examples") {
  const std::vector<double> hi(5, 0.9), lo(7, 0.1);
  CHECK(compute_min_dcf(hi, lo).min_dcf == 0.0);

  // A single inverted pair only has the accept-all and reject-all points.
  const std::vector<double> t{0.2}, n{0.8};
  const DcfParams p{0.3, 2.0, 1.0};
  const double accept_all = (1 - p.p_target) * p.c_fa;
  const double reject_all = p.p_target * p.c_miss;
  CHECK(compute_min_dcf(t, n, p).min_dcf ==
        doctest::Approx(std::min(accept_all, reject_all) / std::min(reject_all, accept_all)));
  CHECK(compute_min_dcf(n, t, p).min_dcf == 0.0);

  const DcfParams bad{1.0, 1.0, 1.0};
  CHECK(test::error_code_of([&] { bad.validate(); }) == Errc::invalid_argument);
}

TEST_CASE("metrics match the midpoint sweep oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t nt = 1 + rng.below(100), nn = 1 + rng.below(100);
    std::vector<double> t = random_scores(rng, nt, rng.uniform(0.0, 2.0));
    std::vector<double> n = random_scores(rng, nn, 0.0);
    if (trial % 3 == 0) {
      for (double& v : t) v = std::round(v * 2) / 2;
      for (double& v : n) v = std::round(v * 2) / 2;
    }
    CHECK(std::fabs(compute_eer(t, n).eer - oracle::eer_sweep(t, n)) <= 1e-9);
    const DcfParams p{rng.uniform(0.01, 0.5), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
    CHECK(std::fabs(compute_min_dcf(t, n, p).min_dcf - oracle::min_dcf_sweep(t, n, p)) <= 1e-9);
  }
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> t = random_scores(rng, 40, 1.0), n = random_scores(rng, 60, 0.0);
    const EerResult e = compute_eer(t, n);
    const DcfResult d = compute_min_dcf(t, n);
    for (double& v : t) v = std::atan(3 * v) + v;
    for (double& v : n) v = std::atan(3 * v) + v;
    CHECK(std::fabs(compute_eer(t, n).eer - e.eer) <= 1e-12);
    CHECK(std::fabs(compute_min_dcf(t, n).min_dcf - d.min_dcf) <= 1e-12);
  }
}

TEST_CASE("negating scores and swapping labels keeps the EER") {
  Rng rng(5);
  std::vector<double> t = random_scores(rng, 30, 0.8), n = random_scores(rng, 50, 0.0);
  const double e = compute_eer(t, n).eer;
  for (double& v : t) v = -v;
  for (double& v : n) v = -v;
  CHECK(std::fabs(compute_eer(n, t).eer - e) <= 1e-12);
}

TEST_CASE("trial list text form") {
  const std::string text = "# header\n1 a b\n0 a c\n\n  1   c   d  # trailing\n";
  const std::vector<Trial> trials = parse_trials(text);
  REQUIRE(trials.size() == 3);
  CHECK(trials[0] == Trial{"a", "b", true});
  CHECK(trials[1] == Trial{"a", "c", false});
  CHECK(trials[2] == Trial{"c", "d", true});
  CHECK(parse_trials(format_trials(trials)) == trials);

  for (const char* bad : {"2 a b\n", "1 a\n", "1 a b c\n", "x a b\n"}) {
    try {
      (void)parse_trials(std::string("1 a b\n") + bad);
      FAIL("expected config error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::config);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  TempDir dir("trials");
  write_trials(dir / "t.txt", trials);
  CHECK(read_trials(dir / "t.txt") == trials);
}

TEST_CASE("UtteranceStore") {
  Rng rng(6);
  const UtteranceStore store = random_store(rng, 4, 3);
  CHECK(store.size() == 4);
  CHECK(store.contains("u2"));
  CHECK_FALSE(store.contains("u9"));
  CHECK(store.index_of("u3") == 3);
  try {
    (void)store.index_of("ghost");
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_found);
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
  const std::vector<std::size_t> rows{2, 0};
  const Tensor g = store.gather(rows);
  CHECK(g.shape() == Extents{2, 1, 1, 3});
  CHECK(g[0] == store.features()[6]);
  CHECK(test::error_code_of([&] {
          UtteranceStore({"a", "a"}, Tensor({2, 1, 1, 1}));
        }) == Errc::invalid_argument);
}

TEST_CASE("evaluate with an identity embedding") {
  Rng rng(7);
  const std::size_t dim = 8;
  const UtteranceStore store = random_store(rng, 20, dim);
  const Model model = identity_model(dim);

  std::vector<Trial> trials;
  for (std::size_t i = 0; i < 10; ++i) {
    trials.push_back({"u" + std::to_string(i), "u" + std::to_string(i), true});
    trials.push_back({"u" + std::to_string(i), "u" + std::to_string(10 + i), false});
  }
  const EvalReport r = evaluate(model, trials, store);
  CHECK(r.eer < 0.5);
  CHECK(r.targets == 10);
  CHECK(r.nontargets == 10);
  CHECK(r.embeddings == 20);

  std::vector<Trial> shuffled = trials;
  rng.shuffle(shuffled.begin(), shuffled.end());
  const EvalReport s = evaluate(model, shuffled, store);
  CHECK(s.eer == r.eer);
  CHECK(s.min_dcf == r.min_dcf);
  CHECK(s.eer_threshold == r.eer_threshold);

  const std::vector<Trial> two{{"u0", "u0", true}, {"u0", "u1", false}};
  const EvalReport t = evaluate(model, two, store);
  CHECK(t.eer == 0.0);
  CHECK(t.min_dcf == 0.0);

  const std::vector<Trial> missing{{"u0", "nobody", true}, {"u0", "u1", false}};
  CHECK(test::error_code_of([&] { (void)evaluate(model, missing, store); }) == Errc::not_found);
}

TEST_CASE("report formats") {
  const std::vector<double> scores{0.9, 0.1, 0.8, 0.2};
  const std::vector<Trial> trials{{"a", "b", true}, {"a", "c", false}, {"b", "d", true}, {"c", "d", false}};
  const EvalReport r = evaluate_scores(scores, trials);
  const std::string kv = format_report_kv(r);
  for (const char* key : {"eer=", "eer_threshold=", "min_dcf=", "min_dcf_threshold=", "p_target=0.01",
                          "c_miss=1", "c_fa=1", "targets=2", "nontargets=2"}) {
    CHECK(kv.find(key) != std::string::npos);
  }
  const std::string text = format_report_text(r);
  CHECK(text.find("EER") != std::string::npos);
  CHECK(text.find("p_target=0.01") != std::string::npos);
}
