// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace relmoss {

// Label 1 is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0, fn = 0, tn = 0, fp = 0;

  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }
  std::uint64_t total() const { return tp + fn + tn + fp; }

  void add(int label, int predicted) {
    if (label == 1) {
      (predicted == 1 ? tp : fn)++;
    } else {
      (predicted == 1 ? fp : tn)++;
    }
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Recall of a class; 0 when the class is absent.
inline double positive_recall(const ConfusionMatrix& cm) {
  return cm.positives() ? static_cast<double>(cm.tp) / static_cast<double>(cm.positives()) : 0.0;
}
inline double negative_recall(const ConfusionMatrix& cm) {
  return cm.negatives() ? static_cast<double>(cm.tn) / static_cast<double>(cm.negatives()) : 0.0;
}
inline bool degenerate(const ConfusionMatrix& cm) { return cm.positives() == 0 || cm.negatives() == 0; }

inline double balanced_accuracy(const ConfusionMatrix& cm) {
  return 0.5 * (positive_recall(cm) + negative_recall(cm));
}

inline double g_mean(const ConfusionMatrix& cm) { return std::sqrt(positive_recall(cm) * negative_recall(cm)); }

inline ConfusionMatrix confusion_from_logits(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) throw std::invalid_argument("confusion_from_logits: size mismatch");
  ConfusionMatrix cm;
  // sigmoid(z) >= 0.5  <=>  z >= 0
  for (std::size_t i = 0; i < logits.size(); ++i) cm.add(labels[i], logits[i] >= 0.0 ? 1 : 0);
  return cm;
}

struct MetricsReport {
  int epoch = 0;
  std::string split;
  ConfusionMatrix cm;
  double b_acc = 0.0;
  double g_mean = 0.0;
  double recall_pos = 0.0;
  double recall_neg = 0.0;
  bool degenerate = false;
  double loss_cls = 0.0;
  double loss_syn = 0.0;
};

inline MetricsReport make_report(int epoch, std::string split, const ConfusionMatrix& cm, double loss_cls = 0.0,
                                 double loss_syn = 0.0) {
  MetricsReport r;
  r.epoch = epoch;
  r.split = std::move(split);
  r.cm = cm;
  r.b_acc = balanced_accuracy(cm);
  r.g_mean = g_mean(cm);
  r.recall_pos = positive_recall(cm);
  r.recall_neg = negative_recall(cm);
  r.degenerate = degenerate(cm);
  r.loss_cls = loss_cls;
  r.loss_syn = loss_syn;
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["tp"] = r.cm.tp;
  j["fn"] = r.cm.fn;
  j["tn"] = r.cm.tn;
  j["fp"] = r.cm.fp;
  j["b_acc"] = r.b_acc;
  j["g_mean"] = r.g_mean;
  j["loss_cls"] = r.loss_cls;
  j["loss_syn"] = r.loss_syn;
  return j;
}

inline constexpr const char* kMetricsCsvHeader = "epoch,split,tp,fn,tn,fp,b_acc,g_mean,loss_cls,loss_syn";

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : reports) {
    const auto j = to_json(r);
    out << r.epoch << ',' << r.split << ',' << r.cm.tp << ',' << r.cm.fn << ',' << r.cm.tn << ',' << r.cm.fp << ','
        << j["b_acc"].dump() << ',' << j["g_mean"].dump() << ',' << j["loss_cls"].dump() << ','
        << j["loss_syn"].dump() << '\n';
  }
}

}  // namespace relmoss
