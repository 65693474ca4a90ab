#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bwn/metrics.hpp"
#include "bwn/tensor.hpp"
#include "bwn/training.hpp"

namespace bwn {

struct SyntheticSpeakerConfig {
  std::size_t num_speakers = 10;
  std::size_t utterances_per_speaker = 20;
  Extents feature_shape{1, 32, 32};  // channels, frequency bins, frames
  double sigma_within = 0.5;         // per-element Gaussian jitter
  double separation = 1.0;           // RMS of every speaker prototype
  std::size_t max_shift = 2;         // circular time shift drawn from [-max_shift, max_shift]
  std::size_t smoothing = 2;         // box-filter radius applied to prototype noise
  std::uint64_t seed = 0;

  /// Throws config on fewer than 2 speakers or utterances per speaker, a
  /// negative sigma and similar.
  void validate() const;
};

/// The last clamp(ceil(0.2 u), 2, u) utterances of each speaker are held out
/// for verification trials.
std::size_t held_out_count(std::size_t utterances_per_speaker);

struct LabeledUtterances {
  UtteranceStore store;
  std::vector<std::size_t> speakers;  // per utterance
  std::vector<bool> held_out;         // per utterance

  std::size_t num_speakers() const;
  /// Utterances not held out, labelled by speaker.
  Dataset training_set() const;
};

struct SyntheticDataset {
  LabeledUtterances utterances;
  std::vector<Trial> trials;
  Tensor prototypes;  // [num_speakers, C, H, W]
};

/// Pure function of the config. Targets are every same-speaker pair of held
/// out utterances; the same number of cross-speaker pairs are drawn as
/// nontargets.
SyntheticDataset generate_dataset(const SyntheticSpeakerConfig& config);

// Flat tensor file: "BWT1" | u32 rank | u32 extents | float32 payload, all
// little-endian.
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);

inline constexpr const char* kFeatureFile = "features.bwt";
inline constexpr const char* kIndexFile = "utterances.txt";  // "id speaker split" per line

void save_utterances(const std::filesystem::path& dir, const LabeledUtterances& data);
LabeledUtterances load_utterances(const std::filesystem::path& dir);

}  // namespace bwn
