#include "bwn/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bwn/error.hpp"

namespace bwn::oracle {

TensorD conv2d_naive(const TensorD& input, const TensorD& weights, std::size_t stride,
                     std::size_t padding) {
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = weights.dim(0), KH = weights.dim(2), KW = weights.dim(3);
  if (weights.dim(1) != C) throw Error(Errc::shape_mismatch, "conv2d_naive: channel mismatch");
  const std::size_t PH = H + 2 * padding, PW = W + 2 * padding;
  TensorD padded({N, C, PH, PW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          padded.at(n, c, h + padding, w + padding) = input.at(n, c, h, w);

  const std::size_t OH = (PH - KH) / stride + 1, OW = (PW - KW) / stride + 1;
  TensorD out({N, F, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double s = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t kh = 0; kh < KH; ++kh)
              for (std::size_t kw = 0; kw < KW; ++kw)
                s += padded.at(n, c, oh * stride + kh, ow * stride + kw) *
                     weights.at(f, c, kh, kw);
          out.at(n, f, oh, ow) = s;
        }
  return out;
}

std::vector<OperatingPoint> sweep_midpoints(std::span<const double> targets,
                                            std::span<const double> nontargets) {
  if (targets.empty() || nontargets.empty()) {
    throw Error(Errc::invalid_argument, "sweep: empty score set");
  }
  std::vector<double> all(targets.begin(), targets.end());
  all.insert(all.end(), nontargets.begin(), nontargets.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) thresholds.push_back(0.5 * (all[i] + all[i + 1]));
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<OperatingPoint> points;
  for (double t : thresholds) {
    std::size_t accepted = 0, rejected = 0;
    for (double s : nontargets) accepted += s >= t ? 1 : 0;
    for (double s : targets) rejected += s < t ? 1 : 0;
    points.push_back({t, static_cast<double>(accepted) / static_cast<double>(nontargets.size()),
                      static_cast<double>(rejected) / static_cast<double>(targets.size())});
  }
  return points;
}

double eer_sweep(std::span<const double> targets, std::span<const double> nontargets) {
  const std::vector<OperatingPoint> p = sweep_midpoints(targets, nontargets);
  for (std::size_t k = 1; k < p.size(); ++k) {
    const double before = p[k - 1].frr - p[k - 1].far;
    const double after = p[k].frr - p[k].far;
    if (before < 0.0 && after >= 0.0) {
      if (after == 0.0) return p[k].far;
      const double lambda = before / (before - after);
      return p[k - 1].far + lambda * (p[k].far - p[k - 1].far);
    }
  }
  return p.front().far;  // unreachable: the sweep always runs from FAR 1 to FRR 1
}

double min_dcf_sweep(std::span<const double> targets, std::span<const double> nontargets,
                     const DcfParams& params) {
  const double wm = params.p_target * params.c_miss;
  const double wf = (1.0 - params.p_target) * params.c_fa;
  double best = std::numeric_limits<double>::infinity();
  for (const OperatingPoint& p : sweep_midpoints(targets, nontargets)) {
    best = std::min(best, (wm * p.frr + wf * p.far) / std::min(wm, wf));
  }
  return best;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace bwn::oracle
