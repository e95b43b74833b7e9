#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "dynilm/signal.hpp"

namespace dynilm {

/// One emonTx measurement row.
struct EmonRecord {
  double timestamp_utc = 0.0;  // seconds since epoch
  double irms = 0.0;           // A
  double vrms = 0.0;           // V
  double pva = 0.0;            // VA
  double pw = 0.0;             // W
  double pf = 0.0;

  bool operator==(const EmonRecord&) const = default;
};

enum class Channel { irms, pw, pva };

Channel parse_channel(std::string_view name);
std::string_view channel_name(Channel channel);

inline constexpr double kEmonRateHz = 12.0;
inline constexpr std::string_view kEmonHeader = "timestamp_utc,irms,vrms,pva,pw,pf";

std::vector<EmonRecord> parse_emontx_csv(std::istream& in);
std::vector<EmonRecord> parse_emontx_csv(const std::filesystem::path& path);
void write_emontx_csv(std::ostream& out, const std::vector<EmonRecord>& records);
void write_emontx_csv(const std::filesystem::path& path, const std::vector<EmonRecord>& records);

/// Record spacing wider than one and a half periods; the pre-gap value is held
/// over `held_samples` grid samples starting at `start_index`.
struct GapFlag {
  Index start_index = 0;
  Index held_samples = 0;
  bool long_gap = false;  // spacing above 10 periods
};

struct ResampledSignal {
  SignalSeries series;
  std::vector<GapFlag> gaps;
};

/// Zero-order-hold resampling of one channel onto a uniform grid anchored at
/// the first record. Length is ceil((t_last - t_first) * rate) + 1.
ResampledSignal to_signal(const std::vector<EmonRecord>& records, Channel channel, double nominal_rate = kEmonRateHz);

/// Pointwise sum over the common index range, added in a canonical order so
/// the result does not depend on the order of `signals`.
SignalSeries sum_aligned(const std::vector<SignalSeries>& signals);

}  // namespace dynilm
