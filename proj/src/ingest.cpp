#include "dynilm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "dynilm/error.hpp"

namespace dynilm {

namespace {

constexpr double kPfTolerance = 1e-6;
constexpr double kLongGapPeriods = 10.0;
constexpr double kGapPeriods = 1.5;
// Grid alignment slack in samples; absorbs the ~1e-7 s resolution of epoch doubles.
constexpr double kGridSlack = 1e-3;

double channel_value(const EmonRecord& r, Channel channel) {
  switch (channel) {
    case Channel::irms:
      return r.irms;
    case Channel::pw:
      return r.pw;
    case Channel::pva:
      return r.pva;
  }
  return r.irms;
}

}  // namespace

Channel parse_channel(std::string_view name) {
  if (name == "irms") return Channel::irms;
  if (name == "pw") return Channel::pw;
  if (name == "pva") return Channel::pva;
  throw ValidationError("unknown channel '" + std::string(name) + "' (expected irms, pw or pva)");
}

std::string_view channel_name(Channel channel) {
  switch (channel) {
    case Channel::irms:
      return "irms";
    case Channel::pw:
      return "pw";
    case Channel::pva:
      return "pva";
  }
  return "irms";
}

std::vector<EmonRecord> parse_emontx_csv(std::istream& in) {
  std::vector<EmonRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      if (line != kEmonHeader) throw ParseError(line_no, "expected header '" + std::string(kEmonHeader) + "'");
      have_header = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 6) throw ParseError(line_no, "expected 6 fields, found " + std::to_string(fields.size()));
    EmonRecord r;
    try {
      r.timestamp_utc = parse_double(fields[0]);
      r.irms = parse_double(fields[1]);
      r.vrms = parse_double(fields[2]);
      r.pva = parse_double(fields[3]);
      r.pw = parse_double(fields[4]);
      r.pf = parse_double(fields[5]);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    if (!std::isfinite(r.timestamp_utc) || !std::isfinite(r.irms) || !std::isfinite(r.vrms) ||
        !std::isfinite(r.pva) || !std::isfinite(r.pw) || !std::isfinite(r.pf)) {
      throw ParseError(line_no, "non-finite field");
    }
    if (std::abs(r.pf) > 1.0 + kPfTolerance) throw ParseError(line_no, "power factor outside [-1, 1]");
    if (r.irms < 0.0 || r.vrms < 0.0 || r.pva < 0.0) throw ParseError(line_no, "negative RMS or apparent power");
    if (!records.empty() && !(r.timestamp_utc > records.back().timestamp_utc)) {
      throw ParseError(line_no, "timestamps must be strictly increasing");
    }
    records.push_back(r);
  }
  if (!have_header) throw ParseError(line_no, "missing header");
  return records;
}

std::vector<EmonRecord> parse_emontx_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_emontx_csv(in);
}

void write_emontx_csv(std::ostream& out, const std::vector<EmonRecord>& records) {
  out << kEmonHeader << '\n';
  for (const auto& r : records) {
    out << format_double(r.timestamp_utc) << ',' << format_double(r.irms) << ',' << format_double(r.vrms) << ','
        << format_double(r.pva) << ',' << format_double(r.pw) << ',' << format_double(r.pf) << '\n';
  }
}

void write_emontx_csv(const std::filesystem::path& path, const std::vector<EmonRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_emontx_csv(out, records);
  if (!out) throw IoError("write failed: " + path.string());
}

ResampledSignal to_signal(const std::vector<EmonRecord>& records, Channel channel, double nominal_rate) {
  if (records.empty()) throw ValidationError("cannot resample an empty record list");
  if (records.size() < 2) throw ValidationError("resampling needs at least two records");
  if (!(nominal_rate > 0.0)) throw ValidationError("nominal rate must be positive");

  const double t0 = records.front().timestamp_utc;
  const double span = (records.back().timestamp_utc - t0) * nominal_rate;
  const auto length = static_cast<std::size_t>(std::ceil(span - kGridSlack)) + 1;

  std::vector<double> values(length);
  std::size_t r = 0;
  for (std::size_t i = 0; i < length; ++i) {
    const double grid = static_cast<double>(i);
    while (r + 1 < records.size() && (records[r + 1].timestamp_utc - t0) * nominal_rate <= grid + kGridSlack) ++r;
    values[i] = channel_value(records[r], channel);
  }

  ResampledSignal out{SignalSeries(std::move(values), 1.0 / nominal_rate, 0), {}};
  for (std::size_t j = 0; j + 1 < records.size(); ++j) {
    const double a = (records[j].timestamp_utc - t0) * nominal_rate;
    const double b = (records[j + 1].timestamp_utc - t0) * nominal_rate;
    if (b - a <= kGapPeriods) continue;
    const auto first = static_cast<Index>(std::ceil(a - kGridSlack));
    const auto last = static_cast<Index>(std::ceil(b - kGridSlack));  // first grid sample of the next record
    out.gaps.push_back({first, last - first, b - a > kLongGapPeriods});
  }
  return out;
}

SignalSeries sum_aligned(const std::vector<SignalSeries>& signals) {
  if (signals.empty()) throw ValidationError("nothing to sum");
  const double period = signals.front().sample_period();
  Index from = signals.front().start_index();
  Index to = signals.front().end_index();
  for (const auto& s : signals) {
    if (s.sample_period() != period) throw ValidationError("cannot sum signals with different sample periods");
    from = std::max(from, s.start_index());
    to = std::min(to, s.end_index());
  }
  if (from >= to) throw ValidationError("signals do not overlap");

  std::vector<const SignalSeries*> order;
  for (const auto& s : signals) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const SignalSeries* x, const SignalSeries* y) {
    if (x->start_index() != y->start_index()) return x->start_index() < y->start_index();
    return std::lexicographical_compare(x->values().begin(), x->values().end(), y->values().begin(),
                                        y->values().end());
  });

  std::vector<double> sum(static_cast<std::size_t>(to - from), 0.0);
  for (const SignalSeries* s : order) {
    for (Index k = from; k < to; ++k) sum[static_cast<std::size_t>(k - from)] += s->at(k);
  }
  return SignalSeries(std::move(sum), period, from);
}

}  // namespace dynilm
