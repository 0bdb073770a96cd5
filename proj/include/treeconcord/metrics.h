#ifndef TREECONCORD_METRICS_H_
#define TREECONCORD_METRICS_H_

#include <cstdint>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace treeconcord {

// Class 1 is the positive class.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const Eigen::Ref<const Eigen::VectorXi>& preds,
                          const Eigen::Ref<const Eigen::VectorXi>& labels);

enum class Averaging { kWeighted, kMacro, kPositiveClass };

std::string to_string(Averaging a);
Averaging averaging_from_string(const std::string& text);

struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Averaging averaging = Averaging::kWeighted;
  // Set when some precision or recall was 0/0 and therefore reported as 0.
  bool undefined_ratio = false;
  ConfusionMatrix confusion;
};

// Per-class precision, recall and F1 combined by `averaging`. Weighted
// averaging uses class support as weights, which makes weighted recall equal
// to accuracy.
EvalReport evaluate(const ConfusionMatrix& cm,
                    Averaging averaging = Averaging::kWeighted);

// Machine fields at full precision plus a "summary" block rounded to four
// decimals.
nlohmann::ordered_json to_json(const EvalReport& report);

}  // namespace treeconcord

#endif  // TREECONCORD_METRICS_H_
