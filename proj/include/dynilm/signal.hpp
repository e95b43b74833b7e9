#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dynilm {

/// Integer sample index. Time is never used as a key; k <-> position is exact.
using Index = std::int64_t;

/// Uniformly sampled scalar series covering [start_index, start_index + size).
class SignalSeries {
 public:
  SignalSeries() = default;
  explicit SignalSeries(std::vector<double> values, double sample_period = 1.0, Index start_index = 0);

  const std::vector<double>& values() const noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  double sample_period() const noexcept { return sample_period_; }
  Index start_index() const noexcept { return start_index_; }
  Index end_index() const noexcept { return start_index_ + static_cast<Index>(values_.size()); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  bool contains(Index k) const noexcept { return k >= start_index_ && k < end_index(); }
  /// Sample at absolute index k; throws ValidationError when out of range.
  double at(Index k) const;
  double operator[](std::size_t pos) const noexcept { return values_[pos]; }

  /// Sub-series over [from, to) in absolute indices, clamped to the covered range.
  SignalSeries slice(Index from, Index to) const;

  bool operator==(const SignalSeries&) const = default;

 private:
  std::vector<double> values_;
  double sample_period_ = 1.0;
  Index start_index_ = 0;
};

/// One switch of a piecewise-constant input: from sample k on, the level is `level`.
struct SwitchPoint {
  Index k = 0;
  double level = 0.0;

  bool operator==(const SwitchPoint&) const = default;
};

/// Piecewise-constant, nonnegative device input stored as its switch events.
/// The level is 0 before the first event, and every event changes the level,
/// so the support of the first difference is exactly the event set.
class PiecewiseInput {
 public:
  PiecewiseInput() = default;
  explicit PiecewiseInput(std::vector<SwitchPoint> events);

  const std::vector<SwitchPoint>& events() const noexcept { return events_; }
  bool empty() const noexcept { return events_.empty(); }
  /// Number of nonzero entries of the input's first difference.
  std::size_t cardinality() const noexcept { return events_.size(); }

  double level_at(Index k) const noexcept;
  double final_level() const noexcept { return events_.empty() ? 0.0 : events_.back().level; }
  std::vector<double> expand(Index start, std::size_t length) const;
  SignalSeries to_signal(Index start, std::size_t length, double sample_period = 1.0) const;

  /// Copy with one more event appended; the event must come after the last one.
  PiecewiseInput with_event(SwitchPoint event) const;
  /// Copy with every level replaced, keeping event times.
  PiecewiseInput with_levels(std::span<const double> levels) const;

  bool operator==(const PiecewiseInput&) const = default;

 private:
  std::vector<SwitchPoint> events_;
};

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);
/// Strict decimal parse of the whole token; throws ValidationError.
double parse_double(std::string_view token);
Index parse_index(std::string_view token);

/// Signal CSV: header `k,value`, consecutive integer k.
void write_signal_csv(std::ostream& out, const SignalSeries& series);
SignalSeries read_signal_csv(std::istream& in, double sample_period = 1.0);
void write_signal_csv(const std::filesystem::path& path, const SignalSeries& series);
SignalSeries read_signal_csv(const std::filesystem::path& path, double sample_period = 1.0);

std::vector<std::string_view> split_csv_line(std::string_view line);

}  // namespace dynilm
