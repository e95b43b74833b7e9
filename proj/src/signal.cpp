#include "dynilm/signal.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "dynilm/error.hpp"

namespace dynilm {

SignalSeries::SignalSeries(std::vector<double> values, double sample_period, Index start_index)
    : values_(std::move(values)), sample_period_(sample_period), start_index_(start_index) {
  if (!(sample_period_ > 0.0) || !std::isfinite(sample_period_)) {
    throw ValidationError("sample period must be positive and finite");
  }
}

double SignalSeries::at(Index k) const {
  if (!contains(k)) {
    throw ValidationError("index " + std::to_string(k) + " outside series [" + std::to_string(start_index_) +
                          ", " + std::to_string(end_index()) + ")");
  }
  return values_[static_cast<std::size_t>(k - start_index_)];
}

SignalSeries SignalSeries::slice(Index from, Index to) const {
  from = std::clamp(from, start_index_, end_index());
  to = std::clamp(to, from, end_index());
  const auto first = values_.begin() + (from - start_index_);
  return SignalSeries(std::vector<double>(first, first + (to - from)), sample_period_, from);
}

PiecewiseInput::PiecewiseInput(std::vector<SwitchPoint> events) : events_(std::move(events)) {
  double previous = 0.0;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if (!std::isfinite(e.level) || e.level < 0.0) {
      throw ValidationError("input level at k=" + std::to_string(e.k) + " must be finite and nonnegative");
    }
    if (i > 0 && e.k <= events_[i - 1].k) {
      throw ValidationError("switch events must be strictly increasing in time (k=" + std::to_string(e.k) + ")");
    }
    if (e.level == previous) {
      throw ValidationError("null switch event at k=" + std::to_string(e.k));
    }
    previous = e.level;
  }
}

double PiecewiseInput::level_at(Index k) const noexcept {
  auto it = std::upper_bound(events_.begin(), events_.end(), k,
                             [](Index key, const SwitchPoint& e) { return key < e.k; });
  return it == events_.begin() ? 0.0 : std::prev(it)->level;
}

std::vector<double> PiecewiseInput::expand(Index start, std::size_t length) const {
  std::vector<double> out(length, 0.0);
  double level = level_at(start);
  auto it = std::upper_bound(events_.begin(), events_.end(), start,
                             [](Index key, const SwitchPoint& e) { return key < e.k; });
  for (std::size_t pos = 0; pos < length; ++pos) {
    const Index k = start + static_cast<Index>(pos);
    while (it != events_.end() && it->k <= k) {
      level = it->level;
      ++it;
    }
    out[pos] = level;
  }
  return out;
}

SignalSeries PiecewiseInput::to_signal(Index start, std::size_t length, double sample_period) const {
  return SignalSeries(expand(start, length), sample_period, start);
}

PiecewiseInput PiecewiseInput::with_event(SwitchPoint event) const {
  auto events = events_;
  events.push_back(event);
  return PiecewiseInput(std::move(events));
}

PiecewiseInput PiecewiseInput::with_levels(std::span<const double> levels) const {
  if (levels.size() != events_.size()) {
    throw ValidationError("level count does not match event count");
  }
  auto events = events_;
  for (std::size_t i = 0; i < events.size(); ++i) events[i].level = levels[i];
  return PiecewiseInput(std::move(events));
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw ValidationError("cannot format value");
  return std::string(buf.data(), ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ValidationError("not a number: '" + std::string(token) + "'");
  }
  return value;
}

Index parse_index(std::string_view token) {
  token = trim(token);
  Index value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ValidationError("not an integer: '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  while (true) {
    const auto comma = line.find(',', begin);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(begin)));
      return fields;
    }
    fields.push_back(trim(line.substr(begin, comma - begin)));
    begin = comma + 1;
  }
}

void write_signal_csv(std::ostream& out, const SignalSeries& series) {
  out << "k,value\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << (series.start_index() + static_cast<Index>(i)) << ',' << format_double(series[i]) << '\n';
  }
}

SignalSeries read_signal_csv(std::istream& in, double sample_period) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<double> values;
  Index start = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    if (!have_header) {
      if (view != "k,value") throw ParseError(line_no, "expected header 'k,value'");
      have_header = true;
      continue;
    }
    const auto fields = split_csv_line(view);
    if (fields.size() != 2) throw ParseError(line_no, "expected 2 fields");
    Index k = 0;
    double v = 0.0;
    try {
      k = parse_index(fields[0]);
      v = parse_double(fields[1]);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    if (values.empty()) {
      start = k;
    } else if (k != start + static_cast<Index>(values.size())) {
      throw ParseError(line_no, "sample indices must be consecutive");
    }
    values.push_back(v);
  }
  if (!have_header) throw ParseError(line_no, "missing header 'k,value'");
  return SignalSeries(std::move(values), sample_period, start);
}

void write_signal_csv(const std::filesystem::path& path, const SignalSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_signal_csv(out, series);
  if (!out) throw IoError("write failed: " + path.string());
}

SignalSeries read_signal_csv(const std::filesystem::path& path, double sample_period) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_signal_csv(in, sample_period);
}

}  // namespace dynilm
