#include "slsnet/metrics.hpp"

#include <cstdio>
#include <ostream>

#include "slsnet/error.hpp"

namespace slsnet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts confusion(const Tensor& gt, const Tensor& pred) {
  if (!(gt.shape() == pred.shape())) {
    throw DimensionError("confusion: shape mismatch " + gt.shape().str() + " vs " +
                         pred.shape().str());
  }
  ConfusionCounts c;
  auto g = gt.data();
  auto p = pred.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if ((g[i] != 0 && g[i] != 1) || (p[i] != 0 && p[i] != 1)) {
      throw DomainError("confusion: masks must be binary");
    }
    const bool gi = g[i] != 0;
    const bool pi = p[i] != 0;
    if (gi && pi) ++c.tp;
    else if (pi) ++c.fp;
    else if (gi) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

double ratio_or_one(double num, double den) { return den == 0 ? 1.0 : num / den; }

}  // namespace

Metrics compute_metrics(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  const double tn = static_cast<double>(c.tn);
  Metrics m;
  m.acc = ratio_or_one(tp + tn, tp + tn + fp + fn);
  m.dsc = ratio_or_one(2 * tp, 2 * tp + fp + fn);
  m.jsc = ratio_or_one(tp, tp + fp + fn);
  m.sen = ratio_or_one(tp, tp + fn);
  m.spe = ratio_or_one(tn, tn + fp);
  return m;
}

double thresholded_jsc(double jsc) { return jsc < kJscThreshold ? 0.0 : jsc; }

void MetricsReport::add(std::string id, const ConfusionCounts& c) {
  MetricsRow row{std::move(id), compute_metrics(c), 0};
  row.jsc_th = thresholded_jsc(row.m.jsc);
  rows_.push_back(std::move(row));
  total_ += c;
}

MetricsRow MetricsReport::mean() const {
  MetricsRow out{"MEAN", {}, 0};
  if (rows_.empty()) return out;
  for (const auto& r : rows_) {
    out.m.acc += r.m.acc;
    out.m.dsc += r.m.dsc;
    out.m.jsc += r.m.jsc;
    out.m.sen += r.m.sen;
    out.m.spe += r.m.spe;
    out.jsc_th += r.jsc_th;
  }
  const double n = static_cast<double>(rows_.size());
  out.m.acc /= n;
  out.m.dsc /= n;
  out.m.jsc /= n;
  out.m.sen /= n;
  out.m.spe /= n;
  out.jsc_th /= n;
  return out;
}

MetricsRow MetricsReport::pooled() const {
  MetricsRow out{"MEAN", compute_metrics(total_), 0};
  out.jsc_th = thresholded_jsc(out.m.jsc);
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void csv_row(std::ostream& out, const MetricsRow& r) {
  out << r.id << ',' << fmt(r.m.acc) << ',' << fmt(r.m.dsc) << ',' << fmt(r.m.jsc) << ','
      << fmt(r.m.sen) << ',' << fmt(r.m.spe) << ',' << fmt(r.jsc_th) << '\n';
}

void table_row(std::ostream& out, const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", r.id.c_str(),
                r.m.acc, r.m.dsc, r.m.jsc, r.m.sen, r.m.spe, r.jsc_th);
  out << buf;
}

}  // namespace

void MetricsReport::write_csv(std::ostream& out, bool pooled_aggregate) const {
  out << "id,acc,dsc,jsc,sen,spe,jsc_th\n";
  for (const auto& r : rows_) csv_row(out, r);
  csv_row(out, pooled_aggregate ? pooled() : mean());
}

void MetricsReport::write_table(std::ostream& out, bool pooled_aggregate) const {
  char header[256];
  std::snprintf(header, sizeof header, "%-24s %8s %8s %8s %8s %8s %8s\n", "id", "acc", "dsc", "jsc",
                "sen", "spe", "jsc_th");
  out << header;
  for (const auto& r : rows_) table_row(out, r);
  table_row(out, pooled_aggregate ? pooled() : mean());
}

}  // namespace slsnet
