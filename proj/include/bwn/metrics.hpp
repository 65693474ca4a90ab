#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bwn/network.hpp"
#include "bwn/tensor.hpp"

namespace bwn {

/// dot(a, b) / (|a| |b|). Throws invalid_argument on a zero vector and
/// shape_mismatch on a length mismatch.
double cosine_score(std::span<const float> a, std::span<const float> b);

// Operating points are taken at every distinct score and at +infinity, with
// false acceptance FAR(t) = #{nontarget >= t} / Nn and false rejection
// FRR(t) = #{target < t} / Nt.

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Rate where FAR and FRR meet, linearly interpolated between the two
/// operating points around the first crossing. Throws invalid_argument on an
/// empty score set or a non-finite score.
EerResult compute_eer(std::span<const double> target_scores,
                      std::span<const double> nontarget_scores);

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void validate() const;
};

struct DcfResult {
  double min_dcf = 0.0;
  double threshold = 0.0;
};

/// min_t [p c_miss FRR(t) + (1-p) c_fa FAR(t)] / min(p c_miss, (1-p) c_fa).
DcfResult compute_min_dcf(std::span<const double> target_scores,
                          std::span<const double> nontarget_scores,
                          const DcfParams& params = {});

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;

  friend bool operator==(const Trial&, const Trial&) = default;
};

/// Text form: one "label enroll_id test_id" per line, label 1 (target) or 0,
/// '#' starts a comment. Parse errors throw config with the line number.
std::vector<Trial> parse_trials(std::string_view text);
std::string format_trials(std::span<const Trial> trials);
std::vector<Trial> read_trials(const std::filesystem::path& path);
void write_trials(const std::filesystem::path& path, std::span<const Trial> trials);

/// Utterance features addressable by id.
class UtteranceStore {
 public:
  UtteranceStore() = default;
  /// features is [N, C, H, W] with one row per id; ids must be unique.
  UtteranceStore(std::vector<std::string> ids, Tensor features);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Tensor& features() const noexcept { return features_; }
  bool contains(std::string_view id) const;
  /// Throws not_found naming the id.
  std::size_t index_of(std::string_view id) const;
  /// [k, C, H, W] batch of the given rows.
  Tensor gather(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> ids_;
  Tensor features_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EvalReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double min_dcf = 0.0;
  double min_dcf_threshold = 0.0;
  DcfParams dcf;
  std::size_t targets = 0;
  std::size_t nontargets = 0;
  std::size_t embeddings = 0;
};

/// Embeds every referenced utterance once with a binary-mode forward pass,
/// scores each trial by cosine similarity and computes both metrics.
EvalReport evaluate(const Model& model, std::span<const Trial> trials,
                    const UtteranceStore& store, const DcfParams& dcf = {});

/// Metrics from precomputed trial scores.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const Trial> trials,
                           const DcfParams& dcf = {});

std::string format_report_text(const EvalReport& report);
std::string format_report_kv(const EvalReport& report);

}  // namespace bwn
