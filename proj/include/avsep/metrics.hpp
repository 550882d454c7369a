// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "avsep/dsp.hpp"

#include <iosfwd>
#include <map>
#include <vector>

namespace avsep {

/// Scale-invariant SDR in dB: project the estimate onto the reference,
/// then compare target energy to residual energy.
double si_sdr_db(const Waveform& reference, const Waveform& estimate, double eps = 1e-12);

struct EvalRow {
  int true_offset = 0;
  int est_offset = 0;
  double si_sdr_in = 0;   // mixture vs target, dB
  double si_sdr_out = 0;  // enhanced vs target, dB
  double si_sdri = 0;     // out - in
};

struct OffsetAggregate {
  int offset = 0;
  int count = 0;
  double mean_si_sdri = 0;
  double median_si_sdri = 0;
  int offset_correct = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::vector<OffsetAggregate> aggregates() const;
  double mean_si_sdri() const;
  double offset_accuracy() const;
  // one line per (offset, aggregate), 3 decimal places; the header names
  // SI-SDR as the metric so numbers are not read as BSS-eval SDR
  void to_csv(std::ostream& out) const;
};

/// Fraction of (true, estimated) offset pairs that match.
double offset_accuracy(const std::vector<std::pair<int, int>>& pairs);

}  // namespace avsep
