// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/affinity.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace avsep {

void affinity_to_csv(const std::string& path, const RowMatrixXd& A) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  char buf[32];
  for (int i = 0; i < A.rows(); ++i) {
    for (int j = 0; j < A.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6g", A(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void affinity_to_pgm(const std::string& path, const RowMatrixXd& A) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  const double mx = A.maxCoeff();
  out << "P5\n" << A.cols() << ' ' << A.rows() << "\n255\n";
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) {
      const double v = mx > 0 ? A(i, j) / mx : 0.0;
      const int q = std::clamp(int(std::lround(v * 255.0)), 0, 255);
      out.put(char(q));
    }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace avsep
