#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tagan/features.hpp"

namespace tagan {

struct SpeechSegment {
  double start_sec = 0.0;
  double end_sec = 0.0;
  bool speech = false;

  bool operator==(const SpeechSegment&) const = default;
};

// Probability >= threshold is speech.
struct PredictionTrack {
  std::vector<double> probabilities;
  double threshold = 0.5;

  std::vector<std::uint8_t> Labels() const;
};

struct MetricsReport {
  double p_miss = 0.0;
  double p_fa = 0.0;
  double dcf = 0.0;
  double fer = 0.0;
  std::size_t speech_frames = 0;     // reference speech
  std::size_t nonspeech_frames = 0;  // reference non-speech
  std::size_t missed_frames = 0;
  std::size_t false_alarm_frames = 0;
  std::size_t error_frames = 0;

  std::size_t total_frames() const { return speech_frames + nonspeech_frames; }
};

inline constexpr double kMissWeight = 0.75;
inline constexpr double kFalseAlarmWeight = 0.25;

inline double DetectionCostValue(double p_miss, double p_fa) {
  return kMissWeight * p_miss + kFalseAlarmWeight * p_fa;
}

// Maximal runs of equal labels; frame t spans [t * hop, (t + 1) * hop) seconds.
std::vector<SpeechSegment> LabelsToSegments(std::span<const std::uint8_t> labels, const FrameSpec& spec);

double FrameErrorRate(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference);

// Frame counts only, no rates; valid for any nonempty equal-length pair.
MetricsReport CountFrames(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference);

// Fills P_miss, P_fa, DCF and FER from the counts. Throws DegenerateReference
// if either reference class has no frames.
MetricsReport FinalizeMetrics(MetricsReport counts);

MetricsReport DetectionCost(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference);

// Sums frame counts (micro-average).
MetricsReport& operator+=(MetricsReport& acc, const MetricsReport& other);

}  // namespace tagan
