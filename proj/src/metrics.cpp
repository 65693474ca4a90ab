#include "bwn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "bwn/error.hpp"

namespace bwn {

double cosine_score(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::shape_mismatch, "cosine_score: lengths " + std::to_string(a.size()) +
                                          " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(Errc::invalid_argument, "cosine_score: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

struct Sweep {
  std::vector<double> thresholds;  // ascending, last is +inf
  std::vector<double> far;
  std::vector<double> frr;
};

std::vector<double> sorted_checked(std::span<const double> scores, const char* what) {
  if (scores.empty()) {
    throw Error(Errc::invalid_argument, std::string("empty ") + what + " score set");
  }
  std::vector<double> s(scores.begin(), scores.end());
  for (double v : s) {
    if (!std::isfinite(v)) throw Error(Errc::invalid_argument, std::string("non-finite ") + what + " score");
  }
  std::sort(s.begin(), s.end());
  return s;
}

Sweep sweep(std::span<const double> target_scores, std::span<const double> nontarget_scores) {
  const std::vector<double> tar = sorted_checked(target_scores, "target");
  const std::vector<double> non = sorted_checked(nontarget_scores, "nontarget");
  Sweep s;
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(), std::back_inserter(s.thresholds));
  s.thresholds.erase(std::unique(s.thresholds.begin(), s.thresholds.end()), s.thresholds.end());
  s.thresholds.push_back(std::numeric_limits<double>::infinity());
  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());
  for (double t : s.thresholds) {
    const auto below_t = std::lower_bound(tar.begin(), tar.end(), t) - tar.begin();
    const auto below_n = std::lower_bound(non.begin(), non.end(), t) - non.begin();
    s.frr.push_back(static_cast<double>(below_t) / nt);
    s.far.push_back((nn - static_cast<double>(below_n)) / nn);
  }
  return s;
}

}  // namespace

EerResult compute_eer(std::span<const double> target_scores,
                      std::span<const double> nontarget_scores) {
  const Sweep s = sweep(target_scores, nontarget_scores);
  // FRR - FAR rises from -1 at the lowest score to +1 at +inf.
  std::size_t k = 0;
  while (s.frr[k] < s.far[k]) ++k;
  EerResult r;
  const double dk = s.frr[k] - s.far[k];
  if (dk == 0.0 || k == 0) {
    r.eer = s.far[k];
    r.threshold = s.thresholds[k];
    return r;
  }
  const double dp = s.frr[k - 1] - s.far[k - 1];
  const double lambda = dp / (dp - dk);
  r.eer = s.far[k - 1] + lambda * (s.far[k] - s.far[k - 1]);
  r.threshold = std::isfinite(s.thresholds[k])
                    ? s.thresholds[k - 1] + lambda * (s.thresholds[k] - s.thresholds[k - 1])
                    : s.thresholds[k - 1];
  return r;
}

void DcfParams::validate() const {
  if (!(p_target > 0.0 && p_target < 1.0)) {
    throw Error(Errc::invalid_argument, "p_target must lie in (0, 1)");
  }
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) {
    throw Error(Errc::invalid_argument, "c_miss and c_fa must be > 0");
  }
}

DcfResult compute_min_dcf(std::span<const double> target_scores,
                          std::span<const double> nontarget_scores, const DcfParams& params) {
  params.validate();
  const Sweep s = sweep(target_scores, nontarget_scores);
  const double wm = params.p_target * params.c_miss;
  const double wf = (1.0 - params.p_target) * params.c_fa;
  const double norm = std::min(wm, wf);
  DcfResult r;
  r.min_dcf = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    const double dcf = (wm * s.frr[k] + wf * s.far[k]) / norm;
    if (dcf < r.min_dcf) {
      r.min_dcf = dcf;
      r.threshold = s.thresholds[k];
    }
  }
  return r;
}

std::vector<Trial> parse_trials(std::string_view text) {
  std::vector<Trial> trials;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string label;
    Trial t;
    if (!(fields >> label)) continue;
    std::string extra;
    if (!(fields >> t.enroll >> t.test) || (fields >> extra)) {
      throw Error(Errc::config, "trial list line " + std::to_string(lineno) +
                                    ": expected \"label enroll_id test_id\"");
    }
    if (label != "0" && label != "1") {
      throw Error(Errc::config, "trial list line " + std::to_string(lineno) + ": label '" +
                                    label + "' is not 0 or 1");
    }
    t.target = label == "1";
    trials.push_back(std::move(t));
  }
  return trials;
}

std::string format_trials(std::span<const Trial> trials) {
  std::string out;
  for (const Trial& t : trials) {
    out += t.target ? '1' : '0';
    out += ' ' + t.enroll + ' ' + t.test + '\n';
  }
  return out;
}

std::vector<Trial> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open trial list " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_trials(text.str());
}

void write_trials(const std::filesystem::path& path, std::span<const Trial> trials) {
  std::ofstream out(path);
  out << format_trials(trials);
  if (!out) throw Error(Errc::io, "cannot write trial list " + path.string());
}

UtteranceStore::UtteranceStore(std::vector<std::string> ids, Tensor features)
    : ids_(std::move(ids)), features_(std::move(features)) {
  if (features_.rank() != 4 || features_.dim(0) != ids_.size()) {
    throw Error(Errc::shape_mismatch, "utterance store: " + std::to_string(ids_.size()) +
                                          " ids for features " +
                                          shape_string(features_.shape()));
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error(Errc::invalid_argument, "utterance store: duplicate id " + ids_[i]);
    }
  }
}

bool UtteranceStore::contains(std::string_view id) const {
  return index_.count(std::string(id)) != 0;
}

std::size_t UtteranceStore::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw Error(Errc::not_found, "unknown utterance id '" + std::string(id) + "'");
  return it->second;
}

Tensor UtteranceStore::gather(std::span<const std::size_t> rows) const {
  Extents shape = features_.shape();
  const std::size_t sample = features_.size() / shape[0];
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw Error(Errc::out_of_range, "utterance row out of range");
    std::copy_n(features_.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * sample), sample,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * sample));
  }
  return out;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const Trial> trials,
                           const DcfParams& dcf) {
  if (scores.size() != trials.size()) {
    throw Error(Errc::shape_mismatch, "evaluate: " + std::to_string(scores.size()) +
                                          " scores for " + std::to_string(trials.size()) +
                                          " trials");
  }
  std::vector<double> tar, non;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    (trials[i].target ? tar : non).push_back(scores[i]);
  }
  if (tar.empty() || non.empty()) {
    throw Error(Errc::invalid_argument,
                "evaluate: trial list needs at least one target and one nontarget trial");
  }
  EvalReport r;
  const EerResult e = compute_eer(tar, non);
  const DcfResult d = compute_min_dcf(tar, non, dcf);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.min_dcf = d.min_dcf;
  r.min_dcf_threshold = d.threshold;
  r.dcf = dcf;
  r.targets = tar.size();
  r.nontargets = non.size();
  return r;
}

EvalReport evaluate(const Model& model, std::span<const Trial> trials,
                    const UtteranceStore& store, const DcfParams& dcf) {
  dcf.validate();
  // Unique ids in order of first use; each is embedded exactly once.
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::size_t> rows;
  for (const Trial& t : trials) {
    for (const std::string* id : {&t.enroll, &t.test}) {
      if (slot.count(*id)) continue;
      rows.push_back(store.index_of(*id));
      slot.emplace(*id, rows.size() - 1);
    }
  }

  constexpr std::size_t kBatch = 64;
  Tensor emb;
  std::size_t dim = 0;
  for (std::size_t start = 0; start < rows.size(); start += kBatch) {
    const std::size_t count = std::min(kBatch, rows.size() - start);
    const Tensor batch = store.gather(std::span(rows).subspan(start, count));
    NetworkOutput<float> out = forward_network(model, batch, ForwardMode::binary);
    if (emb.empty()) {
      dim = out.embedding.dim(1);
      emb = Tensor({rows.size(), dim});
    }
    std::copy(out.embedding.data().begin(), out.embedding.data().end(),
              emb.data().begin() + static_cast<std::ptrdiff_t>(start * dim));
  }

  std::vector<double> scores;
  scores.reserve(trials.size());
  for (const Trial& t : trials) {
    const auto a = emb.data().subspan(slot.at(t.enroll) * dim, dim);
    const auto b = emb.data().subspan(slot.at(t.test) * dim, dim);
    scores.push_back(cosine_score(a, b));
  }
  EvalReport r = evaluate_scores(scores, trials, dcf);
  r.embeddings = rows.size();
  return r;
}

namespace {

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

std::string format_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "EER: " << 100.0 * r.eer << "% (threshold " << num(r.eer_threshold) << ")\n"
     << "minDCF (p_target=" << num(r.dcf.p_target) << ", c_miss=" << num(r.dcf.c_miss)
     << ", c_fa=" << num(r.dcf.c_fa) << "): " << std::setprecision(4) << r.min_dcf
     << " (threshold " << num(r.min_dcf_threshold) << ")\n"
     << "trials: " << r.targets << " target, " << r.nontargets << " nontarget; "
     << r.embeddings << " utterances embedded\n";
  return os.str();
}

std::string format_report_kv(const EvalReport& r) {
  std::ostringstream os;
  os << "eer=" << num(r.eer, 10) << '\n'
     << "eer_threshold=" << num(r.eer_threshold, 10) << '\n'
     << "min_dcf=" << num(r.min_dcf, 10) << '\n'
     << "min_dcf_threshold=" << num(r.min_dcf_threshold, 10) << '\n'
     << "p_target=" << num(r.dcf.p_target) << '\n'
     << "c_miss=" << num(r.dcf.c_miss) << '\n'
     << "c_fa=" << num(r.dcf.c_fa) << '\n'
     << "targets=" << r.targets << '\n'
     << "nontargets=" << r.nontargets << '\n'
     << "embeddings=" << r.embeddings << '\n';
  return os.str();
}

}  // namespace bwn
