#include "tagan/metrics.hpp"

#include "tagan/error.hpp"

namespace tagan {

std::vector<std::uint8_t> PredictionTrack::Labels() const {
  std::vector<std::uint8_t> labels(probabilities.size());
  for (std::size_t t = 0; t < probabilities.size(); ++t) labels[t] = probabilities[t] >= threshold ? 1 : 0;
  return labels;
}

std::vector<SpeechSegment> LabelsToSegments(std::span<const std::uint8_t> labels, const FrameSpec& spec) {
  std::vector<SpeechSegment> out;
  const double hop = spec.hop_seconds();
  std::size_t begin = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[begin]) {
      out.push_back({static_cast<double>(begin) * hop, static_cast<double>(t) * hop, labels[begin] != 0});
      begin = t;
    }
  }
  return out;
}

MetricsReport CountFrames(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference) {
  if (predicted.size() != reference.size()) {
    throw Error(ErrorKind::kLengthMismatch, std::to_string(predicted.size()) + " predicted vs " +
                                                std::to_string(reference.size()) + " reference frames");
  }
  if (reference.empty()) throw Error(ErrorKind::kEmptyTrack, "no frames to score");
  MetricsReport r;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const bool ref = reference[t] != 0;
    const bool hyp = predicted[t] != 0;
    if (ref) {
      ++r.speech_frames;
      if (!hyp) ++r.missed_frames;
    } else {
      ++r.nonspeech_frames;
      if (hyp) ++r.false_alarm_frames;
    }
  }
  r.error_frames = r.missed_frames + r.false_alarm_frames;
  r.fer = static_cast<double>(r.error_frames) / static_cast<double>(r.total_frames());
  return r;
}

double FrameErrorRate(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference) {
  return CountFrames(predicted, reference).fer;
}

MetricsReport FinalizeMetrics(MetricsReport r) {
  if (r.total_frames() == 0) throw Error(ErrorKind::kEmptyTrack, "no frames to score");
  if (r.speech_frames == 0 || r.nonspeech_frames == 0) {
    throw Error(ErrorKind::kDegenerateReference,
                r.speech_frames == 0 ? "reference has no speech frames" : "reference has no non-speech frames");
  }
  r.p_miss = static_cast<double>(r.missed_frames) / static_cast<double>(r.speech_frames);
  r.p_fa = static_cast<double>(r.false_alarm_frames) / static_cast<double>(r.nonspeech_frames);
  r.dcf = DetectionCostValue(r.p_miss, r.p_fa);
  r.fer = static_cast<double>(r.error_frames) / static_cast<double>(r.total_frames());
  return r;
}

MetricsReport DetectionCost(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference) {
  return FinalizeMetrics(CountFrames(predicted, reference));
}

MetricsReport& operator+=(MetricsReport& acc, const MetricsReport& other) {
  acc.speech_frames += other.speech_frames;
  acc.nonspeech_frames += other.nonspeech_frames;
  acc.missed_frames += other.missed_frames;
  acc.false_alarm_frames += other.false_alarm_frames;
  acc.error_frames += other.error_frames;
  return acc;
}

}  // namespace tagan
