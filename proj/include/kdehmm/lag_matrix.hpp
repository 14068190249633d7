#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kdehmm {

// Delay embedding of a scalar series. Row i holds the target value at lag 0
// and its p predecessors at lags 1..p. Storage is lag-major so that a single
// lag is contiguous across rows.
class LagMatrix {
 public:
  LagMatrix() = default;

  // Rows for t = p..N-1 (first p points only serve as context).
  static LagMatrix truncated(std::span<const double> series, int order);
  // Rows for t = 0..N-1 with indices before the start wrapped around to the
  // end of the series.
  static LagMatrix periodic(std::span<const double> series, int order);
  // One row from a chronological context (x_{t-p}, ..., x_{t-1}) and target x.
  static LagMatrix single(std::span<const double> context, double target);

  int order() const noexcept { return order_; }
  std::size_t rows() const noexcept { return rows_; }
  std::span<const double> lag(int l) const {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(l) * rows_, rows_);
  }
  double at(std::size_t row, int l) const { return data_[static_cast<std::size_t>(l) * rows_ + row]; }

 private:
  LagMatrix(int order, std::size_t rows) : order_(order), rows_(rows), data_((order + 1) * rows) {}
  double& ref(std::size_t row, int l) { return data_[static_cast<std::size_t>(l) * rows_ + row]; }

  int order_ = 0;
  std::size_t rows_ = 0;
  std::vector<double> data_;
};

}  // namespace kdehmm
