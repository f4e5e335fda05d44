#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tagan {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kCanonicalSampleRate = 8000;

struct AudioClip {
  std::string id;
  int sample_rate_hz = kCanonicalSampleRate;
  std::vector<double> samples;  // each in [-1, 1]
};

struct FrameSpec {
  int frame_len_ms = 25;
  int hop_ms = 10;
  int sample_rate_hz = kCanonicalSampleRate;

  int fps() const { return 1000 / hop_ms; }
  int frame_samples() const { return sample_rate_hz * frame_len_ms / 1000; }
  int hop_samples() const { return sample_rate_hz * hop_ms / 1000; }
  double hop_seconds() const { return hop_ms / 1000.0; }
  std::size_t FrameCount(std::size_t num_samples) const;
  void Validate() const;
};

struct MfccConfig {
  int n_coeffs = 13;
  int n_filters = 26;
  int fft_size = 256;
  double pre_emphasis = 0.97;
  double log_floor = 1e-10;

  void Validate(int frame_samples) const;
};

// The three per-frame input streams. A frame row in a FeatureSequence is laid
// out as [raw chunk | mfcc | delta].
enum class Stream : std::uint8_t { kRaw = 1, kMfcc = 2, kDelta = 4 };

class StreamSet {
 public:
  constexpr StreamSet() = default;
  constexpr StreamSet(std::initializer_list<Stream> streams) {
    for (Stream s : streams) bits_ |= static_cast<std::uint8_t>(s);
  }
  static constexpr StreamSet All() { return {Stream::kRaw, Stream::kMfcc, Stream::kDelta}; }

  constexpr bool Has(Stream s) const { return (bits_ & static_cast<std::uint8_t>(s)) != 0; }
  constexpr bool Empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool operator==(const StreamSet&) const = default;

  std::vector<std::string> Names() const;
  static StreamSet FromNames(const std::vector<std::string>& names);

 private:
  std::uint8_t bits_ = 0;
};

struct FeatureLayout {
  int raw_dim = 80;
  int mfcc_dim = 13;

  int delta_dim() const { return mfcc_dim; }
  int total() const { return raw_dim + 2 * mfcc_dim; }
  int Offset(Stream s) const;
  int Width(Stream s) const;
  int Width(StreamSet set) const;
  // Column indices of the selected streams, in raw/mfcc/delta order.
  std::vector<int> Columns(StreamSet set) const;

  static FeatureLayout For(const FrameSpec& spec, const MfccConfig& mfcc) {
    return {spec.hop_samples(), mfcc.n_coeffs};
  }
};

// One row per frame, columns per FeatureLayout.
using FeatureSequence = RowMatrixXd;

// Frame t covers samples [t*hop, t*hop + frame_len); the tail is zero-padded so
// there are ceil(N / hop) frames.
RowMatrixXd FrameSignal(const AudioClip& clip, const FrameSpec& spec);

// Hop-aligned, non-overlapping raw chunks mapped s -> (s + 1) / 2.
RowMatrixXd RawChunks(const AudioClip& clip, const FrameSpec& spec);

// Pre-emphasis, Hamming window, magnitude spectrum, triangular mel filterbank
// over [0, Nyquist], floored log, orthonormal DCT-II (c0..c{n_coeffs-1}).
class MfccExtractor {
 public:
  MfccExtractor(const MfccConfig& cfg, const FrameSpec& spec);
  ~MfccExtractor();
  MfccExtractor(const MfccExtractor&) = delete;
  MfccExtractor& operator=(const MfccExtractor&) = delete;
  MfccExtractor(MfccExtractor&&) noexcept;
  MfccExtractor& operator=(MfccExtractor&&) noexcept;

  Eigen::VectorXd Compute(std::span<const double> frame) const;

  const MfccConfig& config() const { return cfg_; }
  // n_filters x (fft_size/2 + 1)
  const Eigen::MatrixXd& filterbank() const { return filterbank_; }

 private:
  struct FftPlan;

  MfccConfig cfg_;
  int frame_samples_;
  Eigen::VectorXd window_;
  Eigen::MatrixXd filterbank_;
  Eigen::MatrixXd dct_;  // n_coeffs x n_filters
  std::unique_ptr<FftPlan> plan_;
};

Eigen::VectorXd ComputeMfcc(std::span<const double> frame, const MfccConfig& cfg,
                            const FrameSpec& spec = {});

// Regression deltas over +-2 frames, edges replicated. Rows are frames.
RowMatrixXd ComputeDeltas(const RowMatrixXd& mfcc);

// Unnormalized [raw | mfcc | delta] rows for a clip.
FeatureSequence ExtractFeatures(const AudioClip& clip, const FrameSpec& spec,
                                const MfccConfig& cfg);
FeatureSequence ExtractFeatures(const AudioClip& clip, const FrameSpec& spec,
                                const MfccExtractor& extractor);

// Min/max over the training corpus for the mfcc and delta columns. The raw
// columns are already in [0, 1] and pass through unchanged.
struct NormalizationStats {
  int raw_dim = 80;
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  bool fitted() const { return min.size() > 0; }
};

NormalizationStats FitNormalization(std::span<const FeatureSequence> sequences, int raw_dim);

// x -> (x - min) / (max - min) clipped to [0, 1]; constant dimensions map to 0.5.
void ApplyNormalization(FeatureSequence& frames, const NormalizationStats& stats);

struct TrainingExample {
  std::size_t start_frame = 0;
  FeatureSequence input;   // frames [s, s+T)
  FeatureSequence future;  // frames [s+T, s+2T); raw chunks are the first raw_dim columns
  std::vector<std::uint8_t> labels;  // labels of [s, s+T)
};

// Window starts s = 0, hop, 2*hop, ... with s + 2T <= frame_count.
std::vector<std::size_t> TrainingWindowStarts(std::size_t frame_count, int window, int hop);

std::vector<TrainingExample> BuildTrainingWindows(const FeatureSequence& features,
                                                  std::span<const std::uint8_t> labels,
                                                  int window, int hop);

}  // namespace tagan
