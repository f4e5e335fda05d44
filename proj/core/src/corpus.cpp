#include "tagan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>

#include "tagan/error.hpp"
#include "tagan/rng.hpp"

namespace tagan {

namespace {

namespace fs = std::filesystem;

std::uint32_t U32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t U16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void PutTag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::string ReadText(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(ErrorKind::kIoError, "write failed for " + path.string());
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t begin = 0;
  while (true) {
    const std::size_t tab = line.find('\t', begin);
    fields.push_back(line.substr(begin, tab == std::string::npos ? std::string::npos : tab - begin));
    if (tab == std::string::npos) break;
    begin = tab + 1;
  }
  return fields;
}

bool ParseDouble(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

double RoundMs(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

}  // namespace

AudioClip ParseWav(const std::vector<std::uint8_t>& bytes, const std::string& id) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::kCorruptHeader, "not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_bytes = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = U32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Streams written with an unknown length often carry a bogus data size.
      if (std::memcmp(chunk, "data", 4) != 0) throw Error(ErrorKind::kCorruptHeader, "chunk runs past end of file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorKind::kCorruptHeader, "fmt chunk too small");
      format = U16(chunk + 8);
      channels = U16(chunk + 10);
      rate = U32(chunk + 12);
      bits = U16(chunk + 22);
      if (format == 0xFFFE && size >= 40) format = U16(chunk + 8 + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_bytes = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw Error(ErrorKind::kCorruptHeader, "missing fmt chunk");
  if (data == nullptr) throw Error(ErrorKind::kCorruptHeader, "missing data chunk");
  if (format != 1) throw Error(ErrorKind::kUnsupportedFormat, "audio format " + std::to_string(format) + " is not PCM");
  if (channels != 1) throw Error(ErrorKind::kUnsupportedFormat, std::to_string(channels) + " channels; mono required");
  if (bits != 16) throw Error(ErrorKind::kUnsupportedFormat, std::to_string(bits) + "-bit samples; 16-bit required");
  if (rate != 8000 && rate != 16000) {
    throw Error(ErrorKind::kUnsupportedFormat, "sample rate " + std::to_string(rate) + " Hz");
  }

  AudioClip clip;
  clip.id = id;
  const std::size_t count = data_bytes / 2;
  clip.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<std::int16_t>(U16(data + 2 * i));
    clip.samples[i] = static_cast<double>(v) / 32768.0;
  }
  clip.sample_rate_hz = static_cast<int>(rate);
  if (rate == 16000) {
    clip.samples = Decimate2(clip.samples);
    clip.sample_rate_hz = kCanonicalSampleRate;
  }
  return clip;
}

AudioClip LoadWav(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  return ParseWav(bytes, path.stem().string());
}

void WriteWav(const fs::path& path, const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  PutTag(out, "RIFF");
  PutU32(out, 36 + data_bytes);
  PutTag(out, "WAVE");
  PutTag(out, "fmt ");
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  PutU32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  PutTag(out, "data");
  PutU32(out, data_bytes);
  for (double s : clip.samples) {
    const double code = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    PutU16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(code)));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw Error(ErrorKind::kIoError, "write failed for " + path.string());
}

std::vector<double> Decimate2(const std::vector<double>& samples) {
  constexpr int kTaps = 63;
  constexpr int kHalf = kTaps / 2;
  constexpr double kCutoff = 0.225;  // cycles per input sample
  static const std::array<double, kTaps> kernel = [] {
    std::array<double, kTaps> h{};
    double sum = 0.0;
    for (int n = 0; n < kTaps; ++n) {
      const double x = n - kHalf;
      const double sinc = x == 0.0 ? 2.0 * kCutoff
                                   : std::sin(2.0 * std::numbers::pi * kCutoff * x) / (std::numbers::pi * x);
      const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (kTaps - 1));
      h[static_cast<std::size_t>(n)] = sinc * window;
      sum += h[static_cast<std::size_t>(n)];
    }
    for (double& v : h) v /= sum;
    return h;
  }();
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  std::vector<double> out(static_cast<std::size_t>((n + 1) / 2));
  for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(out.size()); ++m) {
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      const std::ptrdiff_t i = 2 * m + kHalf - k;
      if (i >= 0 && i < n) acc += kernel[static_cast<std::size_t>(k)] * samples[static_cast<std::size_t>(i)];
    }
    out[static_cast<std::size_t>(m)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

std::vector<SpeechSegment> ParseSegments(const std::string& text) {
  std::vector<SpeechSegment> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() != 3) throw Error(ErrorKind::kParseError, where + ": expected 3 tab-separated fields");
    SpeechSegment seg;
    if (!ParseDouble(fields[0], seg.start_sec) || !ParseDouble(fields[1], seg.end_sec)) {
      throw Error(ErrorKind::kParseError, where + ": bad time value");
    }
    if (seg.start_sec < 0.0) throw Error(ErrorKind::kParseError, where + ": negative start time");
    if (!(seg.end_sec > seg.start_sec)) throw Error(ErrorKind::kParseError, where + ": end must be after start");
    if (fields[2] == "speech") {
      seg.speech = true;
    } else if (fields[2] != "nonspeech") {
      throw Error(ErrorKind::kParseError, where + ": label must be speech or nonspeech");
    }
    out.push_back(seg);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SpeechSegment& a, const SpeechSegment& b) { return a.start_sec < b.start_sec; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].start_sec < out[i - 1].end_sec) {
      throw Error(ErrorKind::kOverlapError, "segment starting at " + std::to_string(out[i].start_sec) +
                                                " overlaps the previous one");
    }
  }
  return out;
}

std::vector<SpeechSegment> LoadSegments(const fs::path& path) {
  try {
    return ParseSegments(ReadText(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIoError) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string FormatSegments(const std::vector<SpeechSegment>& segments) {
  std::string out;
  char buf[96];
  for (const auto& s : segments) {
    std::snprintf(buf, sizeof(buf), "%.3f\t%.3f\t%s\n", s.start_sec, s.end_sec, s.speech ? "speech" : "nonspeech");
    out += buf;
  }
  return out;
}

void WriteSegments(const fs::path& path, const std::vector<SpeechSegment>& segments) {
  WriteText(path, FormatSegments(segments));
}

std::vector<std::uint8_t> FrameLabels(const std::vector<SpeechSegment>& segments, std::size_t frame_count,
                                      const FrameSpec& spec) {
  const double hop = spec.hop_seconds();
  constexpr double kTol = 1e-9;
  std::vector<double> covered(frame_count, 0.0);
  for (const auto& seg : segments) {
    if (!seg.speech) continue;
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(seg.start_sec / hop + kTol)));
    for (std::size_t t = first; t < frame_count; ++t) {
      const double lo = static_cast<double>(t) * hop;
      const double hi = lo + hop;
      if (lo >= seg.end_sec - kTol) break;
      covered[t] += std::max(0.0, std::min(hi, seg.end_sec) - std::max(lo, seg.start_sec));
    }
  }
  std::vector<std::uint8_t> labels(frame_count);
  for (std::size_t t = 0; t < frame_count; ++t) labels[t] = covered[t] >= 0.5 * hop - kTol ? 1 : 0;
  return labels;
}

std::string SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorKind::kParseError, "unknown split '" + name + "'");
}

std::vector<const ManifestEntry*> Manifest::Select(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

Manifest LoadManifest(const fs::path& path) {
  Manifest m;
  m.base_dir = path.parent_path();
  std::istringstream in(ReadText(path));
  std::string line;
  int line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    const std::string where = path.string() + " line " + std::to_string(line_no);
    if (fields.size() != 4) throw Error(ErrorKind::kParseError, where + ": expected 4 tab-separated fields");
    ManifestEntry e{fields[0], fields[1], fields[2], ParseSplit(fields[3])};
    if (!ids.insert(e.id).second) throw Error(ErrorKind::kParseError, where + ": duplicate id '" + e.id + "'");
    for (const auto& p : {e.audio_path, e.label_path}) {
      if (!fs::exists(m.Resolve(p))) throw Error(ErrorKind::kIoError, where + ": missing file " + m.Resolve(p).string());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void WriteManifest(const fs::path& path, const Manifest& manifest) {
  std::string text;
  for (const auto& e : manifest.entries) {
    text += e.id + '\t' + e.audio_path.generic_string() + '\t' + e.label_path.generic_string() + '\t' +
            SplitName(e.split) + '\n';
  }
  WriteText(path, text);
}

Manifest SplitManifest(Manifest manifest, const SplitRatios& r, std::uint64_t seed) {
  if (r.train < 0.0 || r.test < 0.0 || r.val < 0.0 || std::abs(r.train + r.test + r.val - 1.0) > 1e-9) {
    throw Error(ErrorKind::kBadRatios, "split ratios must be nonnegative and sum to 1");
  }
  const std::size_t n = manifest.entries.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.Shuffle(std::span<std::size_t>(order));
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(r.train * static_cast<double>(n))));
  const auto n_test = std::min(n - n_train, static_cast<std::size_t>(std::llround(r.test * static_cast<double>(n))));
  for (std::size_t k = 0; k < n; ++k) {
    manifest.entries[order[k]].split = k < n_train ? Split::kTrain : (k < n_train + n_test ? Split::kTest : Split::kVal);
  }
  return manifest;
}

void SyntheticSpec::Validate() const {
  if (clips <= 0 || !(clip_seconds > 0.0) || !(f0_min_hz > 0.0) || f0_max_hz < f0_min_hz ||
      f0_jitter < 0.0 || !(am_min_hz > 0.0) || am_max_hz < am_min_hz || nonspeech_kinds.empty() ||
      snr_db_max < snr_db_min || !(segment_min_sec > 0.0) || segment_max_sec < segment_min_sec) {
    throw Error(ErrorKind::kConfigError, "invalid synthetic corpus spec");
  }
}

namespace {

void RenderSpeech(std::span<double> out, double rms, const SyntheticSpec& spec, Rng& rng) {
  const double fs = kCanonicalSampleRate;
  const double f0 = rng.Uniform(spec.f0_min_hz, spec.f0_max_hz);
  const double vibrato_hz = rng.Uniform(3.0, 6.0);
  const double vibrato_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const double am_hz = rng.Uniform(spec.am_min_hz, spec.am_max_hz);
  const double am_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const int harmonics = std::max(1, std::min(20, static_cast<int>(3800.0 / f0)));
  std::vector<double> gains(static_cast<std::size_t>(harmonics));
  for (int k = 0; k < harmonics; ++k) gains[static_cast<std::size_t>(k)] = rng.Uniform(0.5, 1.0) / (k + 1);
  double phase = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 * (1.0 + spec.f0_jitter * std::sin(2.0 * std::numbers::pi * vibrato_hz * t + vibrato_phase));
    phase += 2.0 * std::numbers::pi * f / fs;
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) v += gains[static_cast<std::size_t>(k)] * std::sin((k + 1) * phase);
    const double envelope = 0.4 + 0.6 * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * am_hz * t + am_phase));
    out[i] = v * envelope;
    energy += out[i] * out[i];
  }
  const double scale = energy > 0.0 ? rms / std::sqrt(energy / static_cast<double>(out.size())) : 0.0;
  for (double& v : out) v *= scale;
}

void RenderNonSpeech(std::span<double> out, NoiseKind kind, double rms, Rng& rng) {
  switch (kind) {
    case NoiseKind::kSilence:
      std::fill(out.begin(), out.end(), 0.0);
      return;
    case NoiseKind::kWhite:
      for (double& v : out) v = rms * rng.Normal();
      return;
    case NoiseKind::kTone: {
      const double f = rng.Uniform(300.0, 3000.0);
      const double phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = rms * std::numbers::sqrt2 *
                 std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / kCanonicalSampleRate + phase);
      }
      return;
    }
    case NoiseKind::kPink: {
      // Paul Kellet's economy pink filter over white noise.
      double b0 = 0.0, b1 = 0.0, b2 = 0.0, energy = 0.0;
      for (double& v : out) {
        const double w = rng.Normal();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        v = b0 + b1 + b2 + w * 0.1848;
        energy += v * v;
      }
      const double scale = energy > 0.0 ? rms / std::sqrt(energy / static_cast<double>(out.size())) : 0.0;
      for (double& v : out) v *= scale;
      return;
    }
  }
}

}  // namespace

std::vector<SyntheticClip> SynthesizeClips(const SyntheticSpec& spec) {
  spec.Validate();
  Rng rng(spec.seed);
  std::vector<SyntheticClip> clips;
  const auto n = static_cast<std::size_t>(std::llround(spec.clip_seconds * kCanonicalSampleRate));
  const double duration = static_cast<double>(n) / kCanonicalSampleRate;
  for (int index = 0; index < spec.clips; ++index) {
    SyntheticClip out;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%04d", index);
    out.clip.id = id;
    out.clip.samples.assign(n, 0.0);

    bool speech = rng.Uniform() < 0.5;
    double t = 0.0;
    while (t < duration - 1e-9) {
      double end = RoundMs(std::min(duration, t + rng.Uniform(spec.segment_min_sec, spec.segment_max_sec)));
      if (end <= t) end = duration;
      out.segments.push_back({t, end, speech});
      speech = !speech;
      t = end;
    }
    const bool has_speech = std::any_of(out.segments.begin(), out.segments.end(), [](auto& s) { return s.speech; });
    const bool has_other = std::any_of(out.segments.begin(), out.segments.end(), [](auto& s) { return !s.speech; });
    if (duration >= 2.0 && !(has_speech && has_other)) {
      const bool first = out.segments.front().speech;
      const double mid = RoundMs(duration / 2.0);
      out.segments = {{0.0, mid, first}, {mid, duration, !first}};
    }

    const double speech_rms = 0.1 * rng.Uniform(0.7, 1.3);
    const double snr_db = rng.Uniform(spec.snr_db_min, spec.snr_db_max);
    for (const auto& seg : out.segments) {
      const auto begin = static_cast<std::size_t>(std::llround(seg.start_sec * kCanonicalSampleRate));
      const auto stop = std::min(n, static_cast<std::size_t>(std::llround(seg.end_sec * kCanonicalSampleRate)));
      if (stop <= begin) continue;
      std::span<double> region(out.clip.samples.data() + begin, stop - begin);
      if (seg.speech) {
        RenderSpeech(region, speech_rms, spec, rng);
      } else {
        const NoiseKind kind = spec.nonspeech_kinds[rng.Index(spec.nonspeech_kinds.size())];
        RenderNonSpeech(region, kind, speech_rms * rng.Uniform(0.5, 1.0), rng);
      }
    }
    const double noise_rms = speech_rms / std::pow(10.0, snr_db / 20.0);
    for (double& v : out.clip.samples) v = std::clamp(v + noise_rms * rng.Normal(), -1.0, 32767.0 / 32768.0);
    clips.push_back(std::move(out));
  }
  return clips;
}

Manifest SynthesizeCorpus(const SyntheticSpec& spec, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error(ErrorKind::kIoError, "cannot create " + out_dir.string());
  Manifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& c : SynthesizeClips(spec)) {
    const fs::path wav = c.clip.id + ".wav";
    const fs::path seg = c.clip.id + ".seg";
    WriteWav(out_dir / wav, c.clip);
    WriteSegments(out_dir / seg, c.segments);
    manifest.entries.push_back({c.clip.id, wav, seg, Split::kTrain});
  }
  manifest = SplitManifest(std::move(manifest), spec.ratios, spec.seed);
  WriteManifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

Utterance LoadUtterance(const Manifest& manifest, const ManifestEntry& entry, const FrameSpec& spec) {
  Utterance u;
  u.id = entry.id;
  u.clip = LoadWav(manifest.Resolve(entry.audio_path));
  u.clip.id = entry.id;
  if (u.clip.samples.empty()) throw Error(ErrorKind::kEmptySignal, "utterance '" + entry.id + "'");
  const auto segments = LoadSegments(manifest.Resolve(entry.label_path));
  u.labels = FrameLabels(segments, spec.FrameCount(u.clip.samples.size()), spec);
  return u;
}

}  // namespace tagan
