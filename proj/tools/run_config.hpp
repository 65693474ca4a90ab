#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "bwn/layers.hpp"
#include "bwn/metrics.hpp"
#include "bwn/synth.hpp"
#include "bwn/training.hpp"

namespace bwn {

/// Everything a training run depends on. Text form is one `key = value` per
/// line with '#' comments; unknown keys and malformed values are config
/// errors.
struct RunConfig {
  MicroResNetOptions network;
  TrainConfig train;
  SyntheticSpeakerConfig data;
  DcfParams dcf;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "runs/default";

  /// Resolved form listing every key; parse_config(to_text()) reproduces it.
  std::string to_text() const;
  /// Cross-field checks (training, data and DCF ranges).
  void validate() const;
  NetworkSpec network_spec() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace bwn
