#include "msinet/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "msinet/errors.hpp"

namespace msinet {

ConfusionCounts confusion_matrix(const std::vector<int>& predicted,
                                 const std::vector<int>& actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw ValueError("confusion_matrix needs equal-length non-empty inputs");
  }
  ConfusionCounts c;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i], a = actual[i];
    if ((p != 0 && p != 1) || (a != 0 && a != 1)) {
      throw ValueError("confusion_matrix entries must be 0 or 1 (index " +
                       std::to_string(i) + ")");
    }
    if (p == 0 && a == 0) ++c.tp;
    else if (p == 0 && a == 1) ++c.fp;
    else if (p == 1 && a == 0) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) {
    throw UndefinedMetricError("accuracy undefined: total count is zero");
  }
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

PrecisionRecallF1 f1_score(const ConfusionCounts& c, int positive_class) {
  if (positive_class != 0 && positive_class != 1) {
    throw ValueError("positive_class must be 0 or 1");
  }
  // remap counts so the chosen class is positive
  const int64_t tp = positive_class == 0 ? c.tp : c.tn;
  const int64_t fp = positive_class == 0 ? c.fp : c.fn;
  const int64_t fn = positive_class == 0 ? c.fn : c.fp;

  if (tp + fp == 0) {
    throw UndefinedMetricError(
        "precision undefined: no predicted instances of the positive class");
  }
  if (tp + fn == 0) {
    throw UndefinedMetricError(
        "recall undefined: no actual instances of the positive class");
  }
  PrecisionRecallF1 out;
  out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall /
                     (out.precision + out.recall)
               : 0.0;
  return out;
}

std::string report_csv(
    const std::vector<std::pair<std::string, ConfusionCounts>>& rows) {
  std::string out = "model,tp,fp,fn,tn,accuracy,precision,recall,f1\n";
  char buf[256];
  for (const auto& [name, c] : rows) {
    const double acc = accuracy(c);
    double precision = std::nan(""), recall = std::nan(""), f1 = std::nan("");
    try {
      const auto prf = f1_score(c, 1);
      precision = prf.precision;
      recall = prf.recall;
      f1 = prf.f1;
    } catch (const UndefinedMetricError&) {
      // leave the degenerate columns as nan
    }
    std::snprintf(buf, sizeof(buf),
                  "%s,%lld,%lld,%lld,%lld,%.4f,%.4f,%.4f,%.4f\n", name.c_str(),
                  static_cast<long long>(c.tp), static_cast<long long>(c.fp),
                  static_cast<long long>(c.fn), static_cast<long long>(c.tn),
                  acc, precision, recall, f1);
    out += buf;
  }
  return out;
}

}  // namespace msinet
