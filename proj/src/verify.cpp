#include "bwn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>

#include "bwn/binarization.hpp"
#include "bwn/error.hpp"
#include "bwn/model_io.hpp"
#include "bwn/network.hpp"
#include "bwn/oracles.hpp"
#include "bwn/ops.hpp"
#include "bwn/rng.hpp"
#include "bwn/training.hpp"

namespace bwn::verify {

bool SuiteResult::passed() const noexcept {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void SuiteResult::add(std::string name, bool ok, std::string detail) {
  checks.push_back({std::move(name), ok, std::move(detail)});
}

void print(std::ostream& os, const SuiteResult& r) {
  os << "[" << r.suite << "]\n";
  for (const Check& c : r.checks) {
    os << (c.passed ? "  PASS " : "  FAIL ") << c.name;
    if (!c.detail.empty()) os << ": " << c.detail;
    os << '\n';
  }
  std::ostringstream secs;
  secs.precision(2);
  secs << std::fixed << r.seconds;
  os << "  " << (r.passed() ? "suite passed" : "suite FAILED") << " in " << secs.str() << " s\n";
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

Tensor random_tensor(Rng& rng, Extents shape, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(stddev * rng.normal());
  return t;
}

}  // namespace

SuiteResult binarize_oracle(std::size_t filters, std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteResult r{"binarize-oracle", {}, 0.0};
  Rng rng(seed);
  std::size_t matched = 0;
  double worst_j = 0.0, worst_scale = 0.0;
  std::string first_failure;
  for (std::size_t i = 0; i < filters; ++i) {
    const std::size_t n = 4 + rng.below(9);
    const double spread = std::exp(rng.uniform(-3.0, 1.0));
    std::vector<float> w(n);
    for (float& v : w) v = static_cast<float>(spread * rng.normal());
    if (rng.uniform() < 0.1) w[rng.below(n)] = 0.0f;  // exercise the zero tie

    const FilterBinarization closed = binarize_filter(w);
    const BruteForceOptimum best = brute_force_optimum(w);
    const double j = objective_j(w, closed.signs, closed.scale);
    const double dj = std::fabs(j - best.objective);
    const double ds = std::fabs(static_cast<double>(closed.scale) - best.scale);
    bool signs_ok = true;
    for (std::size_t k = 0; k < n; ++k) {
      if (w[k] != 0.0f && closed.signs[k] != best.signs[k]) signs_ok = false;
    }
    worst_j = std::max(worst_j, dj);
    worst_scale = std::max(worst_scale, ds);
    if (dj <= 1e-6 && ds <= 1e-6 && signs_ok) {
      ++matched;
    } else if (first_failure.empty()) {
      first_failure = "filter " + std::to_string(i) + " (n=" + std::to_string(n) + ")";
    }
  }
  r.add("closed form equals exhaustive optimum",
        matched == filters,
        std::to_string(matched) + "/" + std::to_string(filters) + " filters, max |dJ| " +
            fmt(worst_j) + ", max |da| " + fmt(worst_scale) +
            (first_failure.empty() ? "" : ", first mismatch " + first_failure));
  r.seconds = since(start);
  r.add("runtime under 30 s", r.seconds < 30.0, fmt(r.seconds) + " s");
  return r;
}

SuiteResult conv_equivalence(std::size_t pairs, std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteResult r{"conv-equivalence", {}, 0.0};
  Rng rng(seed);
  double worst = 0.0;
  std::uint64_t inner_multiplies = 0, additions = 0;
  bool scale_count_ok = true;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t N = 1 + rng.below(2), C = 1 + rng.below(4), F = 1 + rng.below(5);
    const std::size_t K = 1 + rng.below(3), stride = 1 + rng.below(2), pad = rng.below(2);
    const std::size_t H = K + rng.below(8), W = K + rng.below(8);
    const Tensor input = random_tensor(rng, {N, C, H, W});
    const BinaryFilterBank bank =
        binarize_bank(random_tensor(rng, {F, C, K, K}, std::exp(rng.uniform(-2.0, 1.0))));

    OpCounter counter;
    const Tensor fast = binary_conv2d_forward(input, bank, stride, pad, &counter);
    const Tensor ref = conv2d_reference(input, expand(bank), stride, pad);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const double denom = std::max(std::fabs(static_cast<double>(ref[k])),
                                    std::fabs(static_cast<double>(fast[k])));
      if (denom > 0.0) worst = std::max(worst, std::fabs(fast[k] - ref[k]) / denom);
    }
    inner_multiplies += counter.inner_multiplies;
    additions += counter.additions;
    if (counter.scale_multiplies != fast.size()) scale_count_ok = false;
  }
  r.add("binary kernel equals reference on expanded weights", worst <= 1e-4,
        std::to_string(pairs) + " pairs, max relative deviation " + fmt(worst));
  r.add("no multiplications in the inner loop", inner_multiplies == 0 && additions > 0,
        "inner multiplies " + std::to_string(inner_multiplies) + ", additions " +
            std::to_string(additions));
  r.add("one scale multiply per output element", scale_count_ok);
  r.seconds = since(start);
  r.add("runtime under 30 s", r.seconds < 30.0, fmt(r.seconds) + " s");
  return r;
}

namespace {

double cross_entropy_d(const TensorD& logits, const std::vector<std::size_t>& labels,
                       TensorD* grad) {
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  double total = 0.0;
  if (grad) *grad = TensorD(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double zmax = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) zmax = std::max(zmax, logits[n * K + k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(logits[n * K + k] - zmax);
    total += std::log(sum) + zmax - logits[n * K + labels[n]];
    if (grad) {
      for (std::size_t k = 0; k < K; ++k) {
        (*grad)[n * K + k] = (std::exp(logits[n * K + k] - zmax) / sum -
                              (k == labels[n] ? 1.0 : 0.0)) /
                             static_cast<double>(N);
      }
    }
  }
  return total / static_cast<double>(N);
}

struct GradcheckStats {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
};

// Relative error with an absolute floor below which finite differences in
// double are dominated by rounding.
constexpr double kGradFloor = 1e-7;

void gradcheck_network(const NetworkSpec& spec, std::uint64_t seed, std::size_t samples,
                       GradcheckStats& stats) {
  Rng rng(seed);
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  const Model model = init_model(spec, seed);
  std::vector<TensorD> weights;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    // Binarized weights are frozen at aB; finite differences perturb the expanded values.
    weights.push_back(layout[i].binarizable ? expand(binarize_bank(model.weights[i])).cast<double>()
                                            : model.weights[i].cast<double>());
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].role == ParamRole::bias) {
      for (double& v : weights[i].data()) v = 0.1 * rng.normal();
    }
  }
  const std::size_t N = 3;
  Extents in_shape{N};
  in_shape.insert(in_shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  TensorD input(in_shape);
  for (double& v : input.data()) v = rng.normal();
  std::vector<std::size_t> labels(N);
  for (auto& l : labels) l = rng.below(spec.num_classes);

  auto loss_of = [&](const std::vector<TensorD>& w, ForwardTrace<double>* trace,
                     TensorD* grad) {
    std::vector<ParamRef<double>> refs(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) refs[i].dense = &w[i];
    const NetworkOutput<double> out = run_network<double>(spec, refs, input, trace);
    return cross_entropy_d(out.logits, labels, grad);
  };

  ForwardTrace<double> trace;
  TensorD grad_logits;
  loss_of(weights, &trace, &grad_logits);
  const NetworkGrads<double> analytic = backprop_network<double>(spec, weights, trace, grad_logits);

  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    for (std::size_t k = 0; k < weights[i].size(); ++k) candidates.emplace_back(i, k);
  }
  rng.shuffle(candidates.begin(), candidates.end());
  candidates.resize(std::min(samples, candidates.size()));

  std::vector<TensorD> probe = weights;
  for (const auto& [p, k] : candidates) {
    const double x0 = weights[p][k];
    const double numeric = oracle::central_difference(
        [&](double x) {
          probe[p][k] = x;
          return loss_of(probe, nullptr, nullptr);
        },
        x0, 1e-6);
    probe[p][k] = x0;
    const double a = analytic.params[p][k];
    const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), kGradFloor});
    stats.worst = std::max(stats.worst, rel);
    ++stats.checked;
    if (rel > 1e-3) ++stats.failed;
  }
}

}  // namespace

SuiteResult gradcheck(std::size_t samples, std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteResult r{"gradcheck", {}, 0.0};

  {
    const Tensor up({2}, std::vector<float>{1.0f, 1.0f});
    const Tensor pre({2}, std::vector<float>{0.5f, -2.0f});
    const Tensor g = ste_gradient(up, pre, 1.0);
    r.add("indicator 1{|r|<=1} on [0.5, -2.0]", g[0] == 1.0f && g[1] == 0.0f,
          "got [" + std::to_string(g[0]) + ", " + std::to_string(g[1]) + "]");
    const Tensor edge({3}, std::vector<float>{1.0f, -1.0f, std::nextafter(1.0f, 2.0f)});
    const Tensor ge = ste_gradient(Tensor({3}, 1.0f), edge, 1.0);
    r.add("indicator boundary: |r| = 1 passes, next float above is clipped",
          ge[0] == 1.0f && ge[1] == 1.0f && ge[2] == 0.0f);
  }
  {
    // 1x1 convolution with one weight inside the clip region.
    const LayerSpec conv = LayerSpec::binary_conv2d(1, 1);
    const Tensor shadow({1, 1, 1, 1}, std::vector<float>{0.375f});
    const Tensor input({1, 1, 2, 2}, std::vector<float>{1.0f, -2.0f, 0.5f, 3.0f});
    const Tensor up({1, 1, 2, 2}, std::vector<float>{0.25f, 1.0f, -1.0f, 0.5f});
    const BinaryLayerGrads g = backward_binary_layer(conv, shadow, &input, up);
    const double raw = 0.25 * 1.0 + 1.0 * -2.0 + -1.0 * 0.5 + 0.5 * 3.0;
    const double expect = raw * (1.0 + 0.375);
    r.add("n=1 inside clip: grad_shadow = grad_W~ * (1 + a)",
          std::fabs(g.shadow[0] - expect) <= 1e-6, "got " + std::to_string(g.shadow[0]) +
                                                       ", expected " + std::to_string(expect));
    const Tensor big({1, 1, 1, 1}, std::vector<float>{1.5f});
    const BinaryLayerGrads gb = backward_binary_layer(conv, big, &input, up);
    r.add("|W| > 1: grad_shadow = grad_W~ / n", gb.shadow[0] == gb.raw_weights[0]);
  }
  {
    Rng rng(seed);
    const LayerSpec conv = LayerSpec::binary_conv2d(3, 3, 1, 1);
    Tensor shadow = random_tensor(rng, {3, 2, 3, 3}, 0.7);
    shadow[0] = 1.75f;
    shadow[20] = -3.0f;
    const Tensor input = random_tensor(rng, {2, 2, 5, 5});
    const Tensor up = random_tensor(rng, {2, 3, 5, 5});
    const BinaryLayerGrads g = backward_binary_layer(conv, shadow, &input, up);
    const BinaryFilterBank bank = binarize_bank(shadow);
    double worst = 0.0;
    bool exact = true;
    const std::size_t n = 18;
    for (std::size_t i = 0; i < shadow.size(); ++i) {
      const double a = bank.scale(i / n);
      const double inside = std::fabs(shadow[i]) <= 1.0f ? 1.0 : 0.0;
      const double expect = g.raw_weights[i] * (1.0 / n + inside * a);
      worst = std::max(worst, std::fabs(g.shadow[i] - expect));
      if (!inside && g.shadow[i] != static_cast<float>(g.raw_weights[i] * (1.0 / n))) exact = false;
    }
    r.add("scaled straight-through rule per weight", worst <= 1e-6, "max deviation " + fmt(worst));
    r.add("clipped weights receive exactly the 1/n component", exact);
    const Tensor ref = conv2d_backward_input(up, expand(bank), input.shape(), 1, 1);
    double dev = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) dev = std::max(dev, double(std::fabs(ref[i] - g.input[i])));
    r.add("grad_input equals float conv backward on expand(bank)", dev <= 1e-5,
          "max deviation " + fmt(dev));
  }

  GradcheckStats stats;
  const std::size_t half = samples / 2;
  gradcheck_network(random_network_spec(seed + 100), seed, half, stats);
  MicroResNetOptions micro;
  micro.depth_blocks = 1;
  micro.channels = {3, 5};
  micro.embedding_dim = 6;
  micro.activation = Activation::prelu;
  micro.input_shape = {2, 8, 8};
  micro.num_classes = 4;
  gradcheck_network(build_micro_resnet(micro), seed + 1, samples - stats.checked, stats);
  r.add("finite differences on sampled parameters", stats.failed == 0 && stats.checked >= 200,
        std::to_string(stats.checked) + " parameters, " + std::to_string(stats.failed) +
            " above 1e-3, max relative error " + fmt(stats.worst));
  r.seconds = since(start);
  r.add("runtime under 2 min", r.seconds < 120.0, fmt(r.seconds) + " s");
  return r;
}

SuiteResult metrics_oracle(std::size_t score_sets, std::size_t invariance_sets,
                           std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteResult r{"metrics-oracle", {}, 0.0};
  Rng rng(seed);
  const DcfParams dcf;
  auto random_scores = [&](std::size_t n, double mean, bool coarse) {
    std::vector<double> s(n);
    for (double& v : s) {
      v = mean + rng.normal();
      if (coarse) v = std::round(v * 4.0) / 4.0;  // forces ties
    }
    return s;
  };

  double worst_eer = 0.0, worst_dcf = 0.0;
  for (std::size_t i = 0; i < score_sets; ++i) {
    const bool coarse = rng.uniform() < 0.3;
    const double shift = rng.uniform(-1.0, 3.0);
    const auto tar = random_scores(1 + rng.below(100), shift, coarse);
    const auto non = random_scores(1 + rng.below(100), 0.0, coarse);
    worst_eer = std::max(worst_eer, std::fabs(compute_eer(tar, non).eer - oracle::eer_sweep(tar, non)));
    worst_dcf = std::max(worst_dcf, std::fabs(compute_min_dcf(tar, non, dcf).min_dcf -
                                              oracle::min_dcf_sweep(tar, non, dcf)));
  }
  r.add("EER equals midpoint sweep", worst_eer <= 1e-9,
        std::to_string(score_sets) + " score sets, max deviation " + fmt(worst_eer));
  r.add("minDCF equals midpoint sweep", worst_dcf <= 1e-9,
        std::to_string(score_sets) + " score sets, max deviation " + fmt(worst_dcf));

  double worst_mono = 0.0, worst_sym = 0.0;
  for (std::size_t i = 0; i < invariance_sets; ++i) {
    const auto tar = random_scores(1 + rng.below(60), 1.0, rng.uniform() < 0.3);
    const auto non = random_scores(1 + rng.below(60), 0.0, rng.uniform() < 0.3);
    auto transform = [](std::vector<double> s) {
      for (double& v : s) v = std::exp(0.5 * v) + v * v * v;  // strictly increasing
      return s;
    };
    const auto t2 = transform(tar), n2 = transform(non);
    worst_mono = std::max(
        {worst_mono, std::fabs(compute_eer(tar, non).eer - compute_eer(t2, n2).eer),
         std::fabs(compute_min_dcf(tar, non, dcf).min_dcf - compute_min_dcf(t2, n2, dcf).min_dcf)});
    std::vector<double> neg_tar(non.size()), neg_non(tar.size());
    std::transform(non.begin(), non.end(), neg_tar.begin(), [](double v) { return -v; });
    std::transform(tar.begin(), tar.end(), neg_non.begin(), [](double v) { return -v; });
    worst_sym = std::max(worst_sym,
                         std::fabs(compute_eer(tar, non).eer - compute_eer(neg_tar, neg_non).eer));
  }
  r.add("monotone transform leaves EER and minDCF unchanged", worst_mono <= 1e-12,
        std::to_string(invariance_sets) + " score sets, max deviation " + fmt(worst_mono));
  r.add("negating scores and swapping labels leaves EER unchanged", worst_sym <= 1e-12,
        "max deviation " + fmt(worst_sym));
  r.seconds = since(start);
  return r;
}

NetworkSpec storage_layer_set() {
  NetworkSpec spec;
  spec.input_shape = {500, 1, 1};
  for (int pair = 0; pair < 5; ++pair) {
    spec.layers.push_back(LayerSpec::binary_conv2d(480, 3, 1, 1));  // n = 4500
    spec.layers.push_back(LayerSpec::binary_conv2d(500, 3, 1, 1));  // n = 4320
  }
  spec.layers.push_back(LayerSpec::global_average_pool());
  spec.layers.push_back(LayerSpec::linear(4));
  spec.embedding_dim = 4;
  spec.num_classes = 2;
  return spec;
}

NetworkSpec random_network_spec(std::uint64_t seed) {
  Rng rng(seed);
  for (;;) {
    NetworkSpec spec;
    spec.input_shape = {1 + rng.below(3), 6 + rng.below(5), 6 + rng.below(5)};
    const std::size_t convs = 1 + rng.below(2);
    for (std::size_t i = 0; i < convs; ++i) {
      const std::size_t k = 1 + rng.below(3);
      const std::size_t filters = 1 + rng.below(5);
      spec.layers.push_back(rng.below(2) ? LayerSpec::binary_conv2d(filters, k, 1, rng.below(2))
                                         : LayerSpec::float_conv2d(filters, k, 1, rng.below(2)));
      const std::uint64_t act = rng.below(3);
      if (act == 1) spec.layers.push_back(LayerSpec::relu());
      if (act == 2) spec.layers.push_back(LayerSpec::prelu(static_cast<float>(rng.uniform(0.1, 0.4))));
    }
    const std::size_t blocks = rng.below(3);
    for (std::size_t b = 0; b < blocks; ++b) {
      spec.layers.push_back(LayerSpec::residual_block(
          2 + rng.below(4), 1 + rng.below(2), rng.below(2) ? Activation::prelu : Activation::relu,
          static_cast<float>(rng.uniform(0.1, 0.4))));
    }
    if (rng.below(2)) {
      spec.layers.push_back(LayerSpec::global_average_pool());
    } else {
      spec.layers.push_back(LayerSpec::max_pool(2));
      spec.layers.push_back(LayerSpec::flatten());
    }
    spec.embedding_dim = 2 + rng.below(6);
    spec.layers.push_back(LayerSpec::linear(spec.embedding_dim, rng.below(2) == 1));
    if (rng.below(2)) spec.layers.push_back(LayerSpec::prelu());
    spec.num_classes = 2 + rng.below(3);
    try {
      infer_shapes(spec);
      return spec;
    } catch (const Error&) {
      // Shrunk below a kernel or pool window; draw again.
    }
  }
}

SuiteResult storage(std::size_t round_trips, std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteResult r{"storage", {}, 0.0};

  const NetworkSpec big = storage_layer_set();
  const SizeReport report = size_report(big);
  r.add("layer set holds 21.6M binarizable parameters", report.binarized_params == 21'600'000,
        std::to_string(report.binarized_params));
  r.add("sign-bit storage ratio is exactly 32x", report.sign_bit_ratio() == 32.0,
        std::to_string(report.sign_bit_ratio()));
  {
    Model model = init_model(big, seed);
    binarize_model(model);
    const std::vector<std::uint8_t> packed = serialize_model(model, Encoding::packed);
    const std::size_t float_bytes = encoded_size(big, Encoding::float32);
    const double ratio = static_cast<double>(float_bytes) / static_cast<double>(packed.size());
    r.add("packed file size matches the size report", packed.size() == report.packed_file_bytes,
          std::to_string(packed.size()) + " bytes");
    r.add("whole-file ratio at least 30x", ratio >= 30.0,
          std::to_string(float_bytes) + " / " + std::to_string(packed.size()) + " = " +
              std::to_string(ratio) + "x");
    const std::vector<std::uint8_t> dense = serialize_model(model, Encoding::float32);
    r.add("float32 file size matches the size report", dense.size() == report.float_file_bytes,
          std::to_string(dense.size()) + " bytes");
  }

  Rng rng(seed);
  std::size_t pack_ok = 0, float_ok = 0, packed_ok = 0, forward_ok = 0;
  const std::filesystem::path tmp =
      std::filesystem::temp_directory_path() / ("bwn_storage_" + std::to_string(seed) + ".bwn");
  for (std::size_t i = 0; i < round_trips; ++i) {
    const NetworkSpec spec = random_network_spec(rng.next());
    Model model = init_model(spec, rng.next());
    for (Tensor& w : model.weights) {
      for (float& v : w.data()) {
        if (rng.uniform() < 0.05) v = 0.0f;
      }
    }
    binarize_model(model);

    bool banks_ok = true;
    for (const auto& bank : model.banks) {
      if (!bank) continue;
      const auto signs = unpack_weights(pack_weights(*bank), bank->bits_per_filter(),
                                        bank->num_filters());
      if (BinaryFilterBank::from_signs(bank->filter_shape(), signs,
                                       {bank->scales().begin(), bank->scales().end()}) != *bank) {
        banks_ok = false;
      }
    }
    pack_ok += banks_ok;

    // Every fifth model goes through the file system, the rest stay in memory.
    auto round_trip = [&](Encoding enc) {
      const std::vector<std::uint8_t> bytes = serialize_model(model, enc);
      Model back;
      if (i % 5 == 0) {
        save_model(tmp, model, enc);
        back = load_model(tmp);
      } else {
        back = parse_model(bytes);
      }
      return std::make_pair(back, serialize_model(back, enc) == bytes);
    };
    const auto [dense, dense_same] = round_trip(Encoding::float32);
    float_ok += dense_same && dense.spec == spec;
    const auto [packed, packed_same] = round_trip(Encoding::packed);
    bool same_banks = true;
    for (std::size_t p = 0; p < model.banks.size(); ++p) {
      if (model.banks[p] != packed.banks[p]) same_banks = false;
    }
    packed_ok += packed_same && same_banks && packed.spec == spec;

    Tensor input = random_tensor(rng, [&] {
      Extents s{2};
      s.insert(s.end(), spec.input_shape.begin(), spec.input_shape.end());
      return s;
    }());
    const auto a = forward_network(model, input, ForwardMode::binary);
    const auto b = forward_network(packed, input, ForwardMode::binary);
    forward_ok += a.logits == b.logits && a.embedding == b.embedding;
  }
  std::filesystem::remove(tmp);
  const std::string of = "/" + std::to_string(round_trips);
  r.add("pack/unpack bit-exact", pack_ok == round_trips, std::to_string(pack_ok) + of);
  r.add("float32 save/load bit-exact", float_ok == round_trips, std::to_string(float_ok) + of);
  r.add("packed save/load bit-exact", packed_ok == round_trips, std::to_string(packed_ok) + of);
  r.add("binary forward identical after packed round trip", forward_ok == round_trips,
        std::to_string(forward_ok) + of);
  r.seconds = since(start);
  return r;
}

SuiteResult optimizer() {
  const auto start = Clock::now();
  SuiteResult r{"optimizer", {}, 0.0};
  r.add("lr_schedule(0) = 0.01", lr_schedule(0, 0.01) == 0.01);
  r.add("lr_schedule(10) = 0.001", lr_schedule(10, 0.01) == 0.001);
  r.add("lr_schedule(25) = 0.0001", std::fabs(lr_schedule(25, 0.01) - 0.0001) <= 1e-18);

  TrainState state;
  state.weights = {Tensor({1}, 1.0f)};
  state.momentum = {Tensor({1})};
  state.learning_rate = 0.1;
  const std::vector<Tensor> g{Tensor({1}, 1.0f)};
  sgd_momentum_step(state, g, 0.95);
  sgd_momentum_step(state, g, 0.95);
  const double expect = 1.0 - 0.1 * 1.0 - 0.1 * 1.95;
  const double got = state.weights[0][0];
  r.add("two momentum steps follow the hand recurrence",
        std::fabs(got - expect) <= 4.0 * std::numeric_limits<float>::epsilon(),
        "W = " + std::to_string(got) + ", expected " + std::to_string(expect));
  r.add("velocity after two steps is 1.95",
        std::fabs(state.momentum[0][0] - 1.95) <= 4.0 * std::numeric_limits<float>::epsilon());
  r.seconds = since(start);
  return r;
}

std::vector<SuiteResult> run_scope(std::string_view scope) {
  using Suite = std::function<SuiteResult()>;
  const std::pair<std::string_view, Suite> suites[] = {
      {"binarize-oracle", [] { return binarize_oracle(); }},
      {"conv-equivalence", [] { return conv_equivalence(); }},
      {"gradcheck", [] { return gradcheck(); }},
      {"metrics-oracle", [] { return metrics_oracle(); }},
      {"storage", [] { return storage(); }},
      {"optimizer", [] { return optimizer(); }},
  };
  std::vector<SuiteResult> results;
  for (const auto& [name, run] : suites) {
    if (scope == "all" || scope == name) results.push_back(run());
  }
  if (results.empty()) {
    throw Error(Errc::config, "unknown verify scope '" + std::string(scope) +
                                  "' (expected binarize-oracle, conv-equivalence, gradcheck, "
                                  "metrics-oracle, storage, optimizer or all)");
  }
  return results;
}

}  // namespace bwn::verify
