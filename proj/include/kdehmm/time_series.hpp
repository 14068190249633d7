#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kdehmm {

// Ordered scalar observations. `source` is free-form provenance (file path,
// generator description) and never affects computations.
struct TimeSeries {
  std::vector<double> values;
  std::string source;

  TimeSeries() = default;
  explicit TimeSeries(std::vector<double> v, std::string src = {})
      : values(std::move(v)), source(std::move(src)) {}

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> view() const noexcept { return values; }

  // Contiguous sub-range [first, first + count).
  TimeSeries slice(std::size_t first, std::size_t count) const;
};

inline TimeSeries TimeSeries::slice(std::size_t first, std::size_t count) const {
  auto begin = values.begin() + static_cast<std::ptrdiff_t>(first);
  return TimeSeries({begin, begin + static_cast<std::ptrdiff_t>(count)}, source);
}

}  // namespace kdehmm
