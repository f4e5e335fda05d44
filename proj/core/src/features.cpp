#include "tagan/features.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "tagan/error.hpp"

namespace tagan {

namespace {

// The FFTW planner is not thread-safe; execution with a fixed plan is.
std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

std::size_t FrameSpec::FrameCount(std::size_t num_samples) const {
  const auto hop = static_cast<std::size_t>(hop_samples());
  return (num_samples + hop - 1) / hop;
}

void FrameSpec::Validate() const {
  if (!(frame_len_ms > hop_ms && hop_ms > 0) || 1000 % hop_ms != 0 || sample_rate_hz <= 0 ||
      (sample_rate_hz * hop_ms) % 1000 != 0 || (sample_rate_hz * frame_len_ms) % 1000 != 0) {
    throw Error(ErrorKind::kConfigError, "invalid frame spec");
  }
}

void MfccConfig::Validate(int frame_samples) const {
  const bool pow2 = fft_size > 0 && (fft_size & (fft_size - 1)) == 0;
  if (n_coeffs <= 0 || n_filters <= 0 || n_coeffs > n_filters || !pow2 ||
      fft_size < frame_samples || pre_emphasis < 0.0 || pre_emphasis >= 1.0 ||
      !(log_floor > 0.0)) {
    throw Error(ErrorKind::kConfigError, "invalid mfcc config");
  }
}

std::vector<std::string> StreamSet::Names() const {
  std::vector<std::string> out;
  if (Has(Stream::kRaw)) out.emplace_back("raw");
  if (Has(Stream::kMfcc)) out.emplace_back("mfcc");
  if (Has(Stream::kDelta)) out.emplace_back("delta");
  return out;
}

StreamSet StreamSet::FromNames(const std::vector<std::string>& names) {
  StreamSet set;
  for (const auto& n : names) {
    Stream s;
    if (n == "raw") {
      s = Stream::kRaw;
    } else if (n == "mfcc") {
      s = Stream::kMfcc;
    } else if (n == "delta") {
      s = Stream::kDelta;
    } else {
      throw Error(ErrorKind::kConfigError, "unknown stream '" + n + "'");
    }
    set.bits_ |= static_cast<std::uint8_t>(s);
  }
  return set;
}

int FeatureLayout::Offset(Stream s) const {
  switch (s) {
    case Stream::kRaw: return 0;
    case Stream::kMfcc: return raw_dim;
    case Stream::kDelta: return raw_dim + mfcc_dim;
  }
  return 0;
}

int FeatureLayout::Width(Stream s) const { return s == Stream::kRaw ? raw_dim : mfcc_dim; }

int FeatureLayout::Width(StreamSet set) const {
  int w = 0;
  for (Stream s : {Stream::kRaw, Stream::kMfcc, Stream::kDelta}) {
    if (set.Has(s)) w += Width(s);
  }
  return w;
}

std::vector<int> FeatureLayout::Columns(StreamSet set) const {
  std::vector<int> cols;
  for (Stream s : {Stream::kRaw, Stream::kMfcc, Stream::kDelta}) {
    if (!set.Has(s)) continue;
    for (int i = 0; i < Width(s); ++i) cols.push_back(Offset(s) + i);
  }
  return cols;
}

RowMatrixXd FrameSignal(const AudioClip& clip, const FrameSpec& spec) {
  if (clip.samples.empty()) throw Error(ErrorKind::kEmptySignal, "clip '" + clip.id + "'");
  const std::size_t n = clip.samples.size();
  const std::size_t frames = spec.FrameCount(n);
  const auto len = static_cast<std::size_t>(spec.frame_samples());
  const auto hop = static_cast<std::size_t>(spec.hop_samples());
  RowMatrixXd out = RowMatrixXd::Zero(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(len));
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t begin = t * hop;
    const std::size_t end = std::min(n, begin + len);
    for (std::size_t i = begin; i < end; ++i) {
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i - begin)) = clip.samples[i];
    }
  }
  return out;
}

RowMatrixXd RawChunks(const AudioClip& clip, const FrameSpec& spec) {
  if (clip.samples.empty()) throw Error(ErrorKind::kEmptySignal, "clip '" + clip.id + "'");
  const std::size_t n = clip.samples.size();
  const std::size_t frames = spec.FrameCount(n);
  const auto hop = static_cast<std::size_t>(spec.hop_samples());
  // Padding samples are 0.0, which maps to 0.5.
  RowMatrixXd out = RowMatrixXd::Constant(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(hop), 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    out(static_cast<Eigen::Index>(i / hop), static_cast<Eigen::Index>(i % hop)) = (clip.samples[i] + 1.0) / 2.0;
  }
  return out;
}

struct MfccExtractor::FftPlan {
  int size = 0;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit FftPlan(int n) : size(n) {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
};

MfccExtractor::MfccExtractor(const MfccConfig& cfg, const FrameSpec& spec)
    : cfg_(cfg), frame_samples_(spec.frame_samples()) {
  spec.Validate();
  cfg.Validate(frame_samples_);

  window_.resize(frame_samples_);
  for (int i = 0; i < frame_samples_; ++i) {
    window_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame_samples_ - 1));
  }

  const int bins = cfg.fft_size / 2 + 1;
  const double nyquist = spec.sample_rate_hz / 2.0;
  const double mel_hi = HzToMel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_filters + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = MelToHz(mel_hi * static_cast<double>(i) / static_cast<double>(cfg.n_filters + 1));
  }
  filterbank_ = Eigen::MatrixXd::Zero(cfg.n_filters, bins);
  for (int m = 0; m < cfg.n_filters; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * spec.sample_rate_hz / cfg.fft_size;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      filterbank_(m, k) = w;
    }
  }

  dct_.resize(cfg.n_coeffs, cfg.n_filters);
  const double m_total = cfg.n_filters;
  for (int k = 0; k < cfg.n_coeffs; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / m_total) : std::sqrt(2.0 / m_total);
    for (int m = 0; m < cfg.n_filters; ++m) {
      dct_(k, m) = scale * std::cos(std::numbers::pi * k * (m + 0.5) / m_total);
    }
  }

  plan_ = std::make_unique<FftPlan>(cfg.fft_size);
}

MfccExtractor::~MfccExtractor() = default;
MfccExtractor::MfccExtractor(MfccExtractor&&) noexcept = default;
MfccExtractor& MfccExtractor::operator=(MfccExtractor&&) noexcept = default;

Eigen::VectorXd MfccExtractor::Compute(std::span<const double> frame) const {
  if (static_cast<int>(frame.size()) != frame_samples_) {
    throw Error(ErrorKind::kShapeMismatch, "mfcc frame has " + std::to_string(frame.size()) +
                                               " samples, expected " + std::to_string(frame_samples_));
  }
  const int n = cfg_.fft_size;
  // fftw_execute_dft_r2c on local buffers keeps Compute() reentrant.
  std::vector<double> in(static_cast<std::size_t>(n), 0.0);
  std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
  for (int i = 0; i < frame_samples_; ++i) {
    const double prev = i == 0 ? 0.0 : frame[static_cast<std::size_t>(i - 1)];
    const double emph = i == 0 ? frame[0] : frame[static_cast<std::size_t>(i)] - cfg_.pre_emphasis * prev;
    in[static_cast<std::size_t>(i)] = emph * window_[i];
  }
  fftw_execute_dft_r2c(plan_->plan, in.data(), out.data());

  Eigen::VectorXd magnitude(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    magnitude[k] = std::hypot(out[static_cast<std::size_t>(k)][0], out[static_cast<std::size_t>(k)][1]);
  }
  Eigen::VectorXd energies = filterbank_ * magnitude;
  for (Eigen::Index m = 0; m < energies.size(); ++m) {
    energies[m] = std::log(std::max(energies[m], cfg_.log_floor));
  }
  return dct_ * energies;
}

Eigen::VectorXd ComputeMfcc(std::span<const double> frame, const MfccConfig& cfg,
                            const FrameSpec& spec) {
  return MfccExtractor(cfg, spec).Compute(frame);
}

RowMatrixXd ComputeDeltas(const RowMatrixXd& mfcc) {
  const Eigen::Index frames = mfcc.rows();
  RowMatrixXd out = RowMatrixXd::Zero(frames, mfcc.cols());
  if (frames == 0) return out;
  auto at = [&](Eigen::Index t) { return mfcc.row(std::clamp<Eigen::Index>(t, 0, frames - 1)); };
  constexpr double kDenominator = 2.0 * (1.0 * 1.0 + 2.0 * 2.0);
  for (Eigen::Index t = 0; t < frames; ++t) {
    out.row(t) = ((at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / kDenominator;
  }
  return out;
}

FeatureSequence ExtractFeatures(const AudioClip& clip, const FrameSpec& spec,
                                const MfccConfig& cfg) {
  return ExtractFeatures(clip, spec, MfccExtractor(cfg, spec));
}

FeatureSequence ExtractFeatures(const AudioClip& clip, const FrameSpec& spec,
                                const MfccExtractor& extractor) {
  const RowMatrixXd frames = FrameSignal(clip, spec);
  const RowMatrixXd raw = RawChunks(clip, spec);
  const int n_coeffs = extractor.config().n_coeffs;
  RowMatrixXd mfcc(frames.rows(), n_coeffs);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    mfcc.row(t) = extractor.Compute({frames.row(t).data(), static_cast<std::size_t>(frames.cols())}).transpose();
  }
  const RowMatrixXd delta = ComputeDeltas(mfcc);
  FeatureSequence out(frames.rows(), raw.cols() + 2 * n_coeffs);
  out << raw, mfcc, delta;
  return out;
}

NormalizationStats FitNormalization(std::span<const FeatureSequence> sequences, int raw_dim) {
  NormalizationStats stats;
  stats.raw_dim = raw_dim;
  for (const auto& seq : sequences) {
    if (seq.rows() == 0) continue;
    const auto tail = seq.rightCols(seq.cols() - raw_dim);
    if (!stats.fitted()) {
      stats.min = tail.colwise().minCoeff().transpose();
      stats.max = tail.colwise().maxCoeff().transpose();
    } else {
      if (tail.cols() != stats.min.size()) {
        throw Error(ErrorKind::kShapeMismatch, "feature width differs across sequences");
      }
      stats.min = stats.min.cwiseMin(tail.colwise().minCoeff().transpose());
      stats.max = stats.max.cwiseMax(tail.colwise().maxCoeff().transpose());
    }
  }
  if (!stats.fitted()) throw Error(ErrorKind::kNoData, "no frames to fit normalization");
  return stats;
}

void ApplyNormalization(FeatureSequence& frames, const NormalizationStats& stats) {
  const Eigen::Index dims = stats.min.size();
  if (frames.cols() != stats.raw_dim + dims) {
    throw Error(ErrorKind::kShapeMismatch, "feature width does not match normalization stats");
  }
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double lo = stats.min[d], hi = stats.max[d];
    auto col = frames.col(stats.raw_dim + d);
    if (hi <= lo) {
      col.setConstant(0.5);
      continue;
    }
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
      col[t] = std::clamp((col[t] - lo) / (hi - lo), 0.0, 1.0);
    }
  }
  auto raw = frames.leftCols(stats.raw_dim);
  raw = raw.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<std::size_t> TrainingWindowStarts(std::size_t frame_count, int window, int hop) {
  if (window <= 0 || hop <= 0) throw Error(ErrorKind::kConfigError, "window and hop must be positive");
  const auto t = static_cast<std::size_t>(window);
  if (frame_count < 2 * t) {
    throw Error(ErrorKind::kTooShort, std::to_string(frame_count) + " frames < 2T = " + std::to_string(2 * t));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + 2 * t <= frame_count; s += static_cast<std::size_t>(hop)) starts.push_back(s);
  return starts;
}

std::vector<TrainingExample> BuildTrainingWindows(const FeatureSequence& features,
                                                  std::span<const std::uint8_t> labels,
                                                  int window, int hop) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, "labels do not match frame count");
  }
  std::vector<TrainingExample> out;
  for (std::size_t s : TrainingWindowStarts(labels.size(), window, hop)) {
    TrainingExample ex;
    ex.start_frame = s;
    const auto si = static_cast<Eigen::Index>(s);
    ex.input = features.middleRows(si, window);
    ex.future = features.middleRows(si + window, window);
    ex.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(s),
                     labels.begin() + static_cast<std::ptrdiff_t>(s) + window);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tagan
