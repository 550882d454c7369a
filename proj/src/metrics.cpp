// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace avsep {

double si_sdr_db(const Waveform& reference, const Waveform& estimate, double eps) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument("si_sdr_db: length mismatch " +
                                std::to_string(reference.size()) + " vs " +
                                std::to_string(estimate.size()));
  double rr = 0, re = 0;
  for (int i = 0; i < reference.size(); ++i) {
    rr += reference.samples[i] * reference.samples[i];
    re += reference.samples[i] * estimate.samples[i];
  }
  if (rr <= 0) throw std::invalid_argument("si_sdr_db: zero reference");
  const double a = re / rr;
  double sig = 0, err = 0;
  for (int i = 0; i < reference.size(); ++i) {
    const double t = a * reference.samples[i];
    const double d = t - estimate.samples[i];
    sig += t * t;
    err += d * d;
  }
  return 10.0 * std::log10(sig / (err + eps));
}

std::vector<OffsetAggregate> EvalReport::aggregates() const {
  std::map<int, std::vector<const EvalRow*>> buckets;
  for (const auto& r : rows) buckets[r.true_offset].push_back(&r);
  std::vector<OffsetAggregate> out;
  for (auto& [offset, rs] : buckets) {
    OffsetAggregate a;
    a.offset = offset;
    a.count = int(rs.size());
    std::vector<double> imps;
    for (const auto* r : rs) {
      a.mean_si_sdri += r->si_sdri;
      imps.push_back(r->si_sdri);
      if (r->est_offset == r->true_offset) ++a.offset_correct;
    }
    a.mean_si_sdri /= a.count;
    std::sort(imps.begin(), imps.end());
    a.median_si_sdri = imps.size() % 2 ? imps[imps.size() / 2]
                                       : 0.5 * (imps[imps.size() / 2 - 1] + imps[imps.size() / 2]);
    out.push_back(a);
  }
  return out;
}

double EvalReport::mean_si_sdri() const {
  if (rows.empty()) return 0;
  double s = 0;
  for (const auto& r : rows) s += r.si_sdri;
  return s / double(rows.size());
}

double EvalReport::offset_accuracy() const {
  if (rows.empty()) return 0;
  int ok = 0;
  for (const auto& r : rows)
    if (r.est_offset == r.true_offset) ++ok;
  return double(ok) / double(rows.size());
}

void EvalReport::to_csv(std::ostream& out) const {
  out << "# waveform metric: SI-SDR (dB), not BSS-eval SDR\n";
  out << "offset,count,mean_si_sdri,median_si_sdri,offset_accuracy\n";
  char buf[128];
  for (const auto& a : aggregates()) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.3f,%.3f,%.3f\n", a.offset, a.count, a.mean_si_sdri,
                  a.median_si_sdri, double(a.offset_correct) / a.count);
    out << buf;
  }
}

double offset_accuracy(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) return 0;
  int ok = 0;
  for (auto [t, e] : pairs)
    if (t == e) ++ok;
  return double(ok) / double(pairs.size());
}

}  // namespace avsep
