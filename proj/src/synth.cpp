#include "bwn/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bwn/error.hpp"
#include "bwn/model_io.hpp"
#include "bwn/rng.hpp"

namespace bwn {

void SyntheticSpeakerConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::config, "synthetic data: " + what); };
  if (num_speakers < 2) fail("num_speakers must be >= 2");
  if (utterances_per_speaker < 2) {
    fail("utterances_per_speaker must be >= 2 to form target trials");
  }
  if (feature_shape.size() != 3 || element_count(feature_shape) == 0) {
    fail("feature shape must be a nonempty [C,H,W], got " + shape_string(feature_shape));
  }
  if (!(sigma_within >= 0.0) || !std::isfinite(sigma_within)) fail("sigma_within must be >= 0");
  if (!(separation > 0.0) || !std::isfinite(separation)) fail("separation must be > 0");
  if (max_shift >= feature_shape[2]) fail("max_shift must be smaller than the frame count");
}

std::size_t held_out_count(std::size_t u) {
  const auto fifth = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(u)));
  return std::clamp<std::size_t>(fifth, 2, u);
}

std::size_t LabeledUtterances::num_speakers() const {
  return speakers.empty() ? 0 : *std::max_element(speakers.begin(), speakers.end()) + 1;
}

Dataset LabeledUtterances::training_set() const {
  std::vector<std::size_t> rows;
  Dataset d;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    if (held_out[i]) continue;
    rows.push_back(i);
    d.labels.push_back(speakers[i]);
  }
  d.inputs = store.gather(rows);
  return d;
}

namespace {

// Circular box filter of radius r along H and W of every channel plane.
void box_smooth(std::vector<double>& v, std::size_t C, std::size_t H, std::size_t W,
                std::size_t r) {
  if (r == 0) return;
  std::vector<double> tmp(v.size());
  const double norm = 1.0 / static_cast<double>(2 * r + 1);
  for (std::size_t c = 0; c < C; ++c) {
    double* p = v.data() + c * H * W;
    double* q = tmp.data() + c * H * W;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        double s = 0.0;
        for (std::size_t k = 0; k <= 2 * r; ++k) s += p[h * W + (w + W * (r + 1) + k - r) % W];
        q[h * W + w] = s * norm;
      }
    }
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        double s = 0.0;
        for (std::size_t k = 0; k <= 2 * r; ++k) s += q[((h + H * (r + 1) + k - r) % H) * W + w];
        p[h * W + w] = s * norm;
      }
    }
  }
}

}  // namespace

SyntheticDataset generate_dataset(const SyntheticSpeakerConfig& config) {
  config.validate();
  const std::size_t S = config.num_speakers, U = config.utterances_per_speaker;
  const std::size_t C = config.feature_shape[0], H = config.feature_shape[1],
                    W = config.feature_shape[2];
  const std::size_t D = C * H * W;
  const std::uint64_t proto_seed = derive_seed(config.seed, "prototype");
  const std::uint64_t utt_seed = derive_seed(config.seed, "utterance");
  const std::uint64_t shift_seed = derive_seed(config.seed, "shift");

  SyntheticDataset ds;
  ds.prototypes = Tensor({S, C, H, W});
  for (std::size_t s = 0; s < S; ++s) {
    Rng rng(derive_seed(proto_seed, s));
    std::vector<double> v(D);
    for (double& x : v) x = rng.normal();
    box_smooth(v, C, H, W, config.smoothing);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(D);
    double ss = 0.0;
    for (double& x : v) {
      x -= mean;
      ss += x * x;
    }
    const double k = config.separation / std::sqrt(ss / static_cast<double>(D));
    for (std::size_t i = 0; i < D; ++i) ds.prototypes[s * D + i] = static_cast<float>(v[i] * k);
  }

  std::vector<std::string> ids;
  Tensor features({S * U, C, H, W});
  const std::size_t h = held_out_count(U);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t u = 0; u < U; ++u) {
      const std::size_t row = s * U + u;
      Rng noise(derive_seed(utt_seed, row));
      Rng shift_rng(derive_seed(shift_seed, row));
      const std::size_t shift = config.max_shift == 0
                                    ? 0
                                    : static_cast<std::size_t>(shift_rng.below(2 * config.max_shift + 1));
      // Output frame w reads prototype frame w - (shift - max_shift), circularly.
      const std::size_t offset = W + config.max_shift - shift;
      float* dst = features.data().data() + row * D;
      const float* proto = ds.prototypes.data().data() + s * D;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t w = 0; w < W; ++w) {
            const double base = proto[(c * H + y) * W + (w + offset) % W];
            dst[(c * H + y) * W + w] =
                static_cast<float>(base + config.sigma_within * noise.normal());
          }
        }
      }
      ids.push_back("spk" + std::to_string(s) + "_utt" + std::to_string(u));
      ds.utterances.speakers.push_back(s);
      ds.utterances.held_out.push_back(u >= U - h);
    }
  }
  ds.utterances.store = UtteranceStore(std::move(ids), std::move(features));

  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < S * U; ++i) {
    if (ds.utterances.held_out[i]) held.push_back(i);
  }
  const auto& names = ds.utterances.store.ids();
  const auto& spk = ds.utterances.speakers;
  std::vector<Trial> targets, cross;
  for (std::size_t a = 0; a < held.size(); ++a) {
    for (std::size_t b = a + 1; b < held.size(); ++b) {
      Trial t{names[held[a]], names[held[b]], spk[held[a]] == spk[held[b]]};
      (t.target ? targets : cross).push_back(std::move(t));
    }
  }
  Rng pick(derive_seed(config.seed, "trials"));
  pick.shuffle(cross.begin(), cross.end());
  cross.resize(std::min(cross.size(), targets.size()));
  ds.trials = std::move(targets);
  ds.trials.insert(ds.trials.end(), cross.begin(), cross.end());
  pick.shuffle(ds.trials.begin(), ds.trials.end());
  return ds;
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  std::vector<std::uint8_t> out{'B', 'W', 'T', '1'};
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) u32(static_cast<std::uint32_t>(e));
  for (float v : t.data()) u32(std::bit_cast<std::uint32_t>(v));
  write_file_atomic(path, out);
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> b = read_file(path);
  std::size_t pos = 0;
  auto u32 = [&]() {
    if (b.size() - pos < 4) throw Error(Errc::truncated, path.string() + ": truncated tensor file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[pos + i]} << (8 * i);
    pos += 4;
    return v;
  };
  if (b.size() < 4 || !std::equal(b.begin(), b.begin() + 4, "BWT1")) {
    throw Error(Errc::bad_magic, path.string() + ": not a tensor file");
  }
  pos = 4;
  const std::uint32_t rank = u32();
  Extents shape;
  for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(u32());
  const std::size_t count = element_count(shape);
  if ((b.size() - pos) / 4 != count || (b.size() - pos) % 4 != 0) {
    throw Error(Errc::length_mismatch, path.string() + ": payload of " +
                                           std::to_string(b.size() - pos) + " bytes for shape " +
                                           shape_string(shape));
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < count; ++i) t[i] = std::bit_cast<float>(u32());
  return t;
}

void save_utterances(const std::filesystem::path& dir, const LabeledUtterances& data) {
  std::filesystem::create_directories(dir);
  write_tensor_file(dir / kFeatureFile, data.store.features());
  std::ofstream index(dir / kIndexFile);
  for (std::size_t i = 0; i < data.store.size(); ++i) {
    index << data.store.ids()[i] << ' ' << data.speakers[i] << ' '
          << (data.held_out[i] ? "heldout" : "train") << '\n';
  }
  if (!index) throw Error(Errc::io, "cannot write " + (dir / kIndexFile).string());
}

LabeledUtterances load_utterances(const std::filesystem::path& dir) {
  Tensor features = read_tensor_file(dir / kFeatureFile);
  std::ifstream in(dir / kIndexFile);
  if (!in) throw Error(Errc::io, "cannot open " + (dir / kIndexFile).string());
  LabeledUtterances data;
  std::vector<std::string> ids;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream fields(line);
    std::string id, split;
    std::size_t speaker = 0;
    if (!(fields >> id)) continue;
    if (!(fields >> speaker >> split) || (split != "train" && split != "heldout")) {
      throw Error(Errc::config, (dir / kIndexFile).string() + " line " + std::to_string(lineno) +
                                    ": expected \"id speaker train|heldout\"");
    }
    ids.push_back(std::move(id));
    data.speakers.push_back(speaker);
    data.held_out.push_back(split == "heldout");
  }
  data.store = UtteranceStore(std::move(ids), std::move(features));
  return data;
}

}  // namespace bwn
