#include "treeconcord/metrics.h"

#include <array>
#include <cstdio>

#include "treeconcord/error.h"

namespace treeconcord {

ConfusionMatrix confusion(const Eigen::Ref<const Eigen::VectorXi>& preds,
                          const Eigen::Ref<const Eigen::VectorXi>& labels) {
  if (preds.size() != labels.size()) {
    throw ValidationError("predictions and labels differ in length");
  }
  if (preds.size() == 0) throw ValidationError("confusion matrix of empty input");
  ConfusionMatrix cm;
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      throw ValidationError("class labels must be 0 or 1");
    }
    if (p == 1) {
      (y == 1 ? cm.tp : cm.fp) += 1;
    } else {
      (y == 1 ? cm.fn : cm.tn) += 1;
    }
  }
  return cm;
}

std::string to_string(Averaging a) {
  switch (a) {
    case Averaging::kWeighted:
      return "weighted";
    case Averaging::kMacro:
      return "macro";
    case Averaging::kPositiveClass:
      return "positive_class";
  }
  return "?";
}

Averaging averaging_from_string(const std::string& text) {
  if (text == "weighted") return Averaging::kWeighted;
  if (text == "macro") return Averaging::kMacro;
  if (text == "positive_class" || text == "binary") return Averaging::kPositiveClass;
  throw ValidationError("unknown averaging '" + text + "'");
}

namespace {

// num / den kept apart so that support-weighted sums cancel exactly when the
// weight equals the denominator.
struct Ratio {
  double num = 0.0;
  double den = 0.0;
  double value() const { return den > 0.0 ? num / den : 0.0; }
  double weighted(double weight) const { return den > 0.0 ? weight / den * num : 0.0; }
};

struct ClassScores {
  Ratio precision;
  Ratio recall;
  double f1 = 0.0;
  double support = 0.0;
  double predicted = 0.0;
};

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

EvalReport evaluate(const ConfusionMatrix& cm, Averaging averaging) {
  const auto total = static_cast<double>(cm.total());
  if (!(total > 0.0)) throw ValidationError("evaluate needs at least one row");

  // Index 0: class 0 as positive; index 1: class 1 as positive.
  const auto tp = static_cast<double>(cm.tp);
  const auto tn = static_cast<double>(cm.tn);
  const auto fp = static_cast<double>(cm.fp);
  const auto fn = static_cast<double>(cm.fn);
  std::array<ClassScores, 2> cls;
  cls[0].precision = {tn, tn + fn};
  cls[0].recall = {tn, tn + fp};
  cls[0].support = tn + fp;
  cls[0].predicted = tn + fn;
  cls[1].precision = {tp, tp + fp};
  cls[1].recall = {tp, tp + fn};
  cls[1].support = tp + fn;
  cls[1].predicted = tp + fp;

  EvalReport report;
  report.averaging = averaging;
  report.confusion = cm;
  report.accuracy = (tp + tn) / total;
  for (auto& c : cls) {
    c.f1 = harmonic(c.precision.value(), c.recall.value());
  }

  auto flag_if_undefined = [&](const ClassScores& c) {
    if (c.precision.den == 0.0 || c.recall.den == 0.0) report.undefined_ratio = true;
  };

  switch (averaging) {
    case Averaging::kWeighted: {
      for (const auto& c : cls) {
        if (c.support == 0.0) continue;
        flag_if_undefined(c);
        report.precision += c.precision.weighted(c.support);
        report.recall += c.recall.weighted(c.support);
        report.f1 += c.support * c.f1;
      }
      report.precision /= total;
      report.recall /= total;
      report.f1 /= total;
      break;
    }
    case Averaging::kMacro: {
      double n_classes = 0.0;
      for (const auto& c : cls) {
        if (c.support == 0.0 && c.predicted == 0.0) continue;
        flag_if_undefined(c);
        n_classes += 1.0;
        report.precision += c.precision.value();
        report.recall += c.recall.value();
        report.f1 += c.f1;
      }
      report.precision /= n_classes;
      report.recall /= n_classes;
      report.f1 /= n_classes;
      break;
    }
    case Averaging::kPositiveClass:
      flag_if_undefined(cls[1]);
      report.precision = cls[1].precision.value();
      report.recall = cls[1].recall.value();
      report.f1 = cls[1].f1;
      break;
  }
  return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  auto round4 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  nlohmann::ordered_json doc;
  doc["averaging"] = to_string(report.averaging);
  doc["accuracy"] = report.accuracy;
  doc["precision"] = report.precision;
  doc["recall"] = report.recall;
  doc["f1"] = report.f1;
  doc["undefined_ratio"] = report.undefined_ratio;
  doc["confusion"] = {{"tp", report.confusion.tp},
                      {"fp", report.confusion.fp},
                      {"tn", report.confusion.tn},
                      {"fn", report.confusion.fn}};
  doc["summary"] = {{"accuracy", round4(report.accuracy)},
                    {"precision", round4(report.precision)},
                    {"recall", round4(report.recall)},
                    {"f1", round4(report.f1)}};
  return doc;
}

}  // namespace treeconcord
