#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace msinet {

// Counts follow the MSI-positive convention: tp = predicted MSI (0) and
// actual MSI, fp = predicted MSI but actual MSS (1), fn = predicted MSS but
// actual MSI, tn = predicted MSS and actual MSS.
struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion_matrix(const std::vector<int>& predicted,
                                 const std::vector<int>& actual);

double accuracy(const ConfusionCounts& c);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Counts are remapped so `positive_class` plays the positive role. The
// default is 1 (MSS); that is the convention the headline F1 uses.
PrecisionRecallF1 f1_score(const ConfusionCounts& c, int positive_class = 1);

// Header `model,tp,fp,fn,tn,accuracy,precision,recall,f1`; metrics at 4
// decimal places, F1 taken with MSS positive.
std::string report_csv(
    const std::vector<std::pair<std::string, ConfusionCounts>>& rows);

}  // namespace msinet
