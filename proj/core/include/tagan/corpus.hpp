#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tagan/features.hpp"
#include "tagan/metrics.hpp"

namespace tagan {

// 16-bit PCM mono WAV at 8 or 16 kHz. Samples are scaled by 1/32768; 16 kHz
// input is low-pass filtered and decimated to 8 kHz.
AudioClip LoadWav(const std::filesystem::path& path);
AudioClip ParseWav(const std::vector<std::uint8_t>& bytes, const std::string& id = {});

// Writes 16-bit PCM mono at clip.sample_rate_hz; samples are clipped to
// [-1, 32767/32768] and rounded to the nearest integer code.
void WriteWav(const std::filesystem::path& path, const AudioClip& clip);

// Halves the rate with a windowed-sinc low-pass (cutoff 0.45 of the output rate).
std::vector<double> Decimate2(const std::vector<double>& samples);

// "start<TAB>end<TAB>speech|nonspeech" per line, seconds with 3 decimals.
std::vector<SpeechSegment> LoadSegments(const std::filesystem::path& path);
std::vector<SpeechSegment> ParseSegments(const std::string& text);
std::string FormatSegments(const std::vector<SpeechSegment>& segments);
void WriteSegments(const std::filesystem::path& path, const std::vector<SpeechSegment>& segments);

// Frame t ([t*hop, (t+1)*hop) seconds) is speech iff speech segments cover at
// least half of it.
std::vector<std::uint8_t> FrameLabels(const std::vector<SpeechSegment>& segments, std::size_t frame_count,
                                      const FrameSpec& spec);

enum class Split { kTrain, kVal, kTest };
std::string SplitName(Split s);
Split ParseSplit(const std::string& name);

struct ManifestEntry {
  std::string id;
  std::filesystem::path audio_path;  // as written; resolved against the manifest directory
  std::filesystem::path label_path;
  Split split = Split::kTrain;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path Resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
  std::vector<const ManifestEntry*> Select(Split split) const;
};

Manifest LoadManifest(const std::filesystem::path& path);
void WriteManifest(const std::filesystem::path& path, const Manifest& manifest);

// Shuffles entries with `seed` and assigns train/test/val counts of
// round(n * ratio) for the first two, remainder to the last.
struct SplitRatios {
  double train = 0.7;
  double test = 0.2;
  double val = 0.1;
};
Manifest SplitManifest(Manifest manifest, const SplitRatios& ratios, std::uint64_t seed);

enum class NoiseKind : std::uint8_t { kWhite, kPink, kTone, kSilence };

struct SyntheticSpec {
  std::uint64_t seed = 7;
  int clips = 100;
  double clip_seconds = 4.0;
  double f0_min_hz = 100.0;
  double f0_max_hz = 300.0;
  double f0_jitter = 0.03;  // relative vibrato depth
  double am_min_hz = 2.0;
  double am_max_hz = 8.0;
  std::vector<NoiseKind> nonspeech_kinds = {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kTone,
                                            NoiseKind::kSilence};
  double snr_db_min = 10.0;
  double snr_db_max = 30.0;
  double segment_min_sec = 0.5;
  double segment_max_sec = 1.5;
  SplitRatios ratios;

  void Validate() const;
};

struct SyntheticClip {
  AudioClip clip;
  std::vector<SpeechSegment> segments;
};

// Clip `index` of the corpus described by `spec`; clips are generated in order
// from one seeded stream.
std::vector<SyntheticClip> SynthesizeClips(const SyntheticSpec& spec);

// Writes <id>.wav, <id>.seg and manifest.tsv under out_dir.
Manifest SynthesizeCorpus(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// A loaded utterance with frame labels on the 100 fps grid.
struct Utterance {
  std::string id;
  AudioClip clip;
  std::vector<std::uint8_t> labels;
};

Utterance LoadUtterance(const Manifest& manifest, const ManifestEntry& entry, const FrameSpec& spec);

}  // namespace tagan
