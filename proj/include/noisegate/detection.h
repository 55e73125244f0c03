#pragma once

#include <string>
#include <vector>

#include "noisegate/audio.h"
#include "noisegate/recognition.h"
#include "noisegate/transforms.h"

namespace noisegate {

// How the before/after transcripts are turned into a score.
enum class CrMode {
  kEditDistance,  // min(D(g(x^), g(x)), L) / L with L = |g(x)|
  kLabelFlip,     // 1 if the transcripts differ, else 0
};

// Change rate from two transcripts. Throws UndefinedChangeRate for an empty
// baseline under kEditDistance.
double change_rate(const std::string& before, const std::string& after,
                   CrMode mode = CrMode::kEditDistance);

// Recognizes `clip` and its noised copy and compares the transcripts.
double change_rate(const Recognizer& recognizer, const AudioClip& clip, const NoiseSpec& noise,
                   CrMode mode = CrMode::kEditDistance);

struct DetectionConfig {
  NoiseSpec noise;
  double threshold = 0.5;  // K
  CrMode mode = CrMode::kEditDistance;
  // Independent noise draws; with votes > 1 the reported CR is the median of
  // the draws, so the verdict is a majority vote. Must be odd.
  int votes = 1;

  void validate() const;
};

enum class Verdict { kNormal, kAdversarial };

const char* to_string(Verdict v);

struct DetectionOutcome {
  double cr = 0.0;
  Verdict verdict = Verdict::kNormal;  // adversarial iff cr > threshold
  std::string transcript_before;
  std::string transcript_after;
};

DetectionOutcome detect(const DetectionConfig& cfg, const Recognizer& recognizer,
                        const AudioClip& clip);

struct RocPoint {
  double threshold = 0.0;  // verdict rule: score > threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;
  double youden_threshold = 0.0;
  double youden_tpr = 0.0;
  double youden_fpr = 0.0;
};

struct ScoredExample {
  double score = 0.0;
  bool positive = false;
};

// Threshold sweep over the distinct scores (rule: score > threshold), plus a
// final all-positive point at threshold -inf. AUC by the trapezoid rule. The
// Youden threshold maximizes TPR - FPR over the finite thresholds, ties going
// to the lower threshold. Throws SingleClass without both labels present.
RocResult roc(const std::vector<ScoredExample>& scores);

}  // namespace noisegate
