#include "noisegate/detection.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "noisegate/errors.h"
#include "noisegate/seed.h"

namespace noisegate {

double change_rate(const std::string& before, const std::string& after, CrMode mode) {
  if (mode == CrMode::kLabelFlip) return before == after ? 0.0 : 1.0;
  const size_t length = before.size();
  if (length == 0) {
    throw UndefinedChangeRate("change rate undefined: baseline transcript is empty");
  }
  const size_t d = levenshtein(after, before);
  return static_cast<double>(std::min(d, length)) / static_cast<double>(length);
}

double change_rate(const Recognizer& recognizer, const AudioClip& clip, const NoiseSpec& noise,
                   CrMode mode) {
  const auto before = recognizer.transcribe(clip).text;
  if (mode == CrMode::kEditDistance && before.empty()) {
    throw UndefinedChangeRate("change rate undefined: baseline transcript is empty");
  }
  const auto after = recognizer.transcribe(add_noise(clip, noise)).text;
  return change_rate(before, after, mode);
}

void DetectionConfig::validate() const {
  if (threshold < 0.0 || threshold > 1.0) throw InvalidArgument("threshold K must lie in [0, 1]");
  if (votes < 1 || votes % 2 == 0) throw InvalidArgument("votes must be a positive odd number");
  noisegate::validate(noise);
}

const char* to_string(Verdict v) { return v == Verdict::kAdversarial ? "adversarial" : "normal"; }

DetectionOutcome detect(const DetectionConfig& cfg, const Recognizer& recognizer,
                        const AudioClip& clip) {
  cfg.validate();
  DetectionOutcome out;
  out.transcript_before = recognizer.transcribe(clip).text;
  if (cfg.mode == CrMode::kEditDistance && out.transcript_before.empty()) {
    throw UndefinedChangeRate("change rate undefined: baseline transcript is empty");
  }
  std::vector<double> crs;
  for (int v = 0; v < cfg.votes; ++v) {
    NoiseSpec noise = cfg.noise;
    // The first draw uses the configured seed so single-draw detection matches
    // change_rate() exactly.
    if (v > 0) noise.seed = derive_seed(cfg.noise.seed, "detect/vote", static_cast<uint64_t>(v));
    const auto after = recognizer.transcribe(add_noise(clip, noise)).text;
    if (v == 0) out.transcript_after = after;
    crs.push_back(change_rate(out.transcript_before, after, cfg.mode));
  }
  std::nth_element(crs.begin(), crs.begin() + crs.size() / 2, crs.end());
  out.cr = crs[crs.size() / 2];
  out.verdict = out.cr > cfg.threshold ? Verdict::kAdversarial : Verdict::kNormal;
  return out;
}

RocResult roc(const std::vector<ScoredExample>& scores) {
  size_t positives = 0;
  for (const auto& s : scores) positives += s.positive;
  const size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw SingleClass("ROC needs at least one positive and one negative example");
  }
  std::vector<ScoredExample> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredExample& a, const ScoredExample& b) { return a.score > b.score; });

  RocResult r;
  r.points.push_back({sorted.front().score, 0.0, 0.0});
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    const double value = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == value) {
      tp += sorted[i].positive;
      fp += !sorted[i].positive;
      ++i;
    }
    // Everything scored >= value is now positive, i.e. score > next threshold.
    const double next = i < sorted.size() ? sorted[i].score
                                          : -std::numeric_limits<double>::infinity();
    r.points.push_back({next, static_cast<double>(fp) / negatives,
                        static_cast<double>(tp) / positives});
  }
  for (size_t k = 1; k < r.points.size(); ++k) {
    const auto& a = r.points[k - 1];
    const auto& b = r.points[k];
    r.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : r.points) {
    if (!std::isfinite(p.threshold)) continue;
    const double j = p.tpr - p.fpr;
    // Points run from high to low thresholds, so >= keeps the lower one on ties.
    if (j >= best) {
      best = j;
      r.youden_threshold = p.threshold;
      r.youden_tpr = p.tpr;
      r.youden_fpr = p.fpr;
    }
  }
  return r;
}

}  // namespace noisegate
