#include "kdehmm/lag_matrix.hpp"

#include "kdehmm/error.hpp"

namespace kdehmm {

LagMatrix LagMatrix::truncated(std::span<const double> series, int order) {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "order must be non-negative");
  const std::size_t p = static_cast<std::size_t>(order);
  if (series.size() <= p)
    throw Error(ErrorKind::kSequenceTooShort, "series must be longer than the model order");
  LagMatrix m(order, series.size() - p);
  for (int l = 0; l <= order; ++l)
    for (std::size_t i = 0; i < m.rows_; ++i) m.ref(i, l) = series[i + p - static_cast<std::size_t>(l)];
  return m;
}

LagMatrix LagMatrix::periodic(std::span<const double> series, int order) {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "order must be non-negative");
  const std::size_t n = series.size();
  if (n == 0) throw Error(ErrorKind::kSequenceTooShort, "series is empty");
  LagMatrix m(order, n);
  for (int l = 0; l <= order; ++l) {
    const std::size_t shift = static_cast<std::size_t>(l) % n;
    for (std::size_t i = 0; i < n; ++i) m.ref(i, l) = series[(i + n - shift) % n];
  }
  return m;
}

LagMatrix LagMatrix::single(std::span<const double> context, double target) {
  const int order = static_cast<int>(context.size());
  LagMatrix m(order, 1);
  m.ref(0, 0) = target;
  for (int l = 1; l <= order; ++l) m.ref(0, l) = context[context.size() - static_cast<std::size_t>(l)];
  return m;
}

}  // namespace kdehmm
