#include "tagan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tagan/error.hpp"

namespace tagan {

namespace {

using nlohmann::json;

template <typename V>
void Read(const json& j, V& out, const std::string& where) {
  try {
    out = j.get<V>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfigError, "bad value for " + where);
  }
}

// Calls handlers[key] for every key of `section`, rejecting unknown ones.
void ReadSection(const json& section, const std::string& name,
                 const std::map<std::string, std::function<void(const json&, const std::string&)>>& handlers) {
  if (!section.is_object()) throw Error(ErrorKind::kConfigError, "section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw Error(ErrorKind::kConfigError, "unknown key '" + name + "." + key + "'");
    it->second(value, name + "." + key);
  }
}

StreamSet ReadStreams(const json& j, const std::string& where) {
  std::vector<std::string> names;
  if (j.is_string()) {
    names.push_back(j.get<std::string>());
  } else {
    Read(j, names, where);
  }
  try {
    return StreamSet::FromNames(names);
  } catch (const Error&) {
    throw Error(ErrorKind::kConfigError, "unknown stream in " + where);
  }
}

template <typename V>
std::function<void(const json&, const std::string&)> Into(V& out) {
  return [&out](const json& j, const std::string& where) { Read(j, out, where); };
}

const char* PrecisionName(Precision p) { return p == Precision::kFloat64 ? "float64" : "float32"; }

const char* FutureDiscName(FutureDiscriminator d) {
  return d == FutureDiscriminator::kTemporal ? "temporal" : "static-duplicate";
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void RunConfig::Validate() const {
  train.Validate();
  frame.Validate();
  mfcc.Validate(frame.frame_samples());
  if (model.hidden <= 0 || model.noise_dim <= 0 || model.disc_hidden <= 0) {
    throw Error(ErrorKind::kConfigError, "model dimensions must be positive");
  }
  if (ablation.input_streams.Empty()) throw Error(ErrorKind::kConfigError, "at least one input stream is required");
  if (ablation.predict_future && ablation.future_target_streams.Empty()) {
    throw Error(ErrorKind::kConfigError, "predict_future needs a future target stream");
  }
}

RunConfig ParseRunConfig(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  auto& t = cfg.train;
  auto& a = cfg.ablation;
  const std::map<std::string, std::function<void(const json&, const std::string&)>> sections = {
      {"train",
       [&](const json& j, const std::string& w) {
         ReadSection(j, w, {{"lambda_eta", Into(t.lambda_eta)},
                            {"lambda_w", Into(t.lambda_w)},
                            {"learning_rate", Into(t.learning_rate)},
                            {"epochs", Into(t.epochs)},
                            {"batch_size", Into(t.batch_size)},
                            {"seed", Into(t.seed)},
                            {"window", Into(t.window)},
                            {"train_hop", Into(t.train_hop)},
                            {"detach_condition", Into(t.detach_condition)},
                            {"precision", [&](const json& v, const std::string& k) {
                               std::string s;
                               Read(v, s, k);
                               if (s != "float32" && s != "float64") {
                                 throw Error(ErrorKind::kConfigError, k + " must be float32 or float64");
                               }
                               t.precision = s == "float64" ? Precision::kFloat64 : Precision::kFloat32;
                             }}});
       }},
      {"model",
       [&](const json& j, const std::string& w) {
         ReadSection(j, w, {{"hidden", Into(cfg.model.hidden)},
                            {"noise_dim", Into(cfg.model.noise_dim)},
                            {"disc_hidden", Into(cfg.model.disc_hidden)}});
       }},
      {"mfcc",
       [&](const json& j, const std::string& w) {
         ReadSection(j, w, {{"n_coeffs", Into(cfg.mfcc.n_coeffs)},
                            {"n_filters", Into(cfg.mfcc.n_filters)},
                            {"fft_size", Into(cfg.mfcc.fft_size)},
                            {"pre_emphasis", Into(cfg.mfcc.pre_emphasis)},
                            {"log_floor", Into(cfg.mfcc.log_floor)}});
       }},
      {"frame",
       [&](const json& j, const std::string& w) {
         ReadSection(j, w, {{"frame_len_ms", Into(cfg.frame.frame_len_ms)}, {"hop_ms", Into(cfg.frame.hop_ms)}});
       }},
      {"ablation",
       [&](const json& j, const std::string& w) {
         ReadSection(j, w, {{"use_gan", Into(a.use_gan)},
                            {"input_streams", [&](const json& v, const std::string& k) { a.input_streams = ReadStreams(v, k); }},
                            {"predict_future", Into(a.predict_future)},
                            {"future_target_stream",
                             [&](const json& v, const std::string& k) { a.future_target_streams = ReadStreams(v, k); }},
                            {"use_l2", Into(a.use_l2)},
                            {"temporal_discriminator", [&](const json& v, const std::string& k) {
                               std::string s;
                               Read(v, s, k);
                               if (s == "temporal") {
                                 a.future_disc = FutureDiscriminator::kTemporal;
                               } else if (s == "static-duplicate") {
                                 a.future_disc = FutureDiscriminator::kStaticDuplicate;
                               } else {
                                 throw Error(ErrorKind::kConfigError, k + " must be temporal or static-duplicate");
                               }
                             }}});
       }},
  };
  ReadSection(doc, "config", sections);
  t.use_l2 = a.use_l2;
  cfg.Validate();
  return cfg;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIoError, "cannot open config " + path.string());
  return ParseRunConfig({std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()});
}

std::string RunConfigToJson(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& a = cfg.ablation;
  json j = {
      {"train", {{"lambda_eta", t.lambda_eta}, {"lambda_w", t.lambda_w}, {"learning_rate", t.learning_rate},
                 {"epochs", t.epochs}, {"batch_size", t.batch_size}, {"seed", t.seed}, {"window", t.window},
                 {"train_hop", t.train_hop}, {"detach_condition", t.detach_condition},
                 {"precision", PrecisionName(t.precision)}}},
      {"model", {{"hidden", cfg.model.hidden}, {"noise_dim", cfg.model.noise_dim},
                 {"disc_hidden", cfg.model.disc_hidden}}},
      {"mfcc", {{"n_coeffs", cfg.mfcc.n_coeffs}, {"n_filters", cfg.mfcc.n_filters}, {"fft_size", cfg.mfcc.fft_size},
                {"pre_emphasis", cfg.mfcc.pre_emphasis}, {"log_floor", cfg.mfcc.log_floor}}},
      {"frame", {{"frame_len_ms", cfg.frame.frame_len_ms}, {"hop_ms", cfg.frame.hop_ms}}},
      {"ablation", {{"use_gan", a.use_gan}, {"input_streams", a.input_streams.Names()},
                    {"predict_future", a.predict_future},
                    {"future_target_stream", a.future_target_streams.Names()}, {"use_l2", a.use_l2},
                    {"temporal_discriminator", FutureDiscName(a.future_disc)}}},
  };
  return j.dump(2);
}

const std::vector<std::string>& VariantIds() {
  static const std::vector<std::string> ids = {"1", "2", "3", "4",  "5",  "6",  "7",
                                               "8", "9", "10", "11", "12", "13", "proposed"};
  return ids;
}

AblationFlags VariantFlags(const std::string& id) {
  const StreamSet all = StreamSet::All();
  const StreamSet raw = {Stream::kRaw};
  const StreamSet mfcc = {Stream::kMfcc};
  const StreamSet delta = {Stream::kDelta};
  auto flags = [](bool gan, StreamSet in, bool future, StreamSet target, bool l2,
                  FutureDiscriminator d = FutureDiscriminator::kTemporal) {
    return AblationFlags{gan, in, future, future ? target : StreamSet{}, l2, d};
  };
  // Non-adversarial and single-task variants carry no L2 term of their own;
  // use_l2 is recorded as on for 1-3 so each id keeps a distinct flag set.
  if (id == "1") return flags(false, raw, false, {}, true);
  if (id == "2") return flags(false, all, false, {}, true);
  if (id == "3") return flags(false, all, true, raw, true);
  if (id == "4") return flags(true, all, false, {}, false);
  if (id == "5") return flags(true, all, false, {}, true);
  if (id == "6") return flags(true, raw, true, raw, true);
  if (id == "7") return flags(true, mfcc, true, mfcc, true);
  if (id == "8") return flags(true, delta, true, delta, true);
  if (id == "9") return flags(true, {Stream::kRaw, Stream::kMfcc}, true, {Stream::kRaw, Stream::kMfcc}, true);
  if (id == "10") return flags(true, {Stream::kRaw, Stream::kDelta}, true, {Stream::kRaw, Stream::kDelta}, true);
  if (id == "11") return flags(true, {Stream::kMfcc, Stream::kDelta}, true, {Stream::kMfcc, Stream::kDelta}, true);
  if (id == "12") return flags(true, all, true, all, false);
  if (id == "13") return flags(true, all, true, raw, true, FutureDiscriminator::kStaticDuplicate);
  if (id == "proposed") return flags(true, all, true, raw, true);
  throw Error(ErrorKind::kUnknownVariant, "unknown ablation variant '" + id + "'");
}

std::string IdentifyVariant(const AblationFlags& flags) {
  for (const auto& id : VariantIds()) {
    if (VariantFlags(id) == flags) return id;
  }
  return {};
}

int VariantOrder(const std::string& id) {
  const auto& ids = VariantIds();
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw Error(ErrorKind::kUnknownVariant, "unknown ablation variant '" + id + "'");
  return static_cast<int>(it - ids.begin());
}

std::vector<std::string> ParseVariantList(const std::string& list) {
  std::set<int> order;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    order.insert(VariantOrder(item));
  }
  if (order.empty()) throw Error(ErrorKind::kUnknownVariant, "empty variant list");
  std::vector<std::string> out;
  for (int i : order) out.push_back(VariantIds()[static_cast<std::size_t>(i)]);
  return out;
}

SyntheticSpec ParseSyntheticSpec(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("corpus spec is not valid JSON: ") + e.what());
  }
  SyntheticSpec s;
  ReadSection(doc, "spec",
              {{"seed", Into(s.seed)},
               {"clips", Into(s.clips)},
               {"clip_seconds", Into(s.clip_seconds)},
               {"f0_min_hz", Into(s.f0_min_hz)},
               {"f0_max_hz", Into(s.f0_max_hz)},
               {"f0_jitter", Into(s.f0_jitter)},
               {"am_min_hz", Into(s.am_min_hz)},
               {"am_max_hz", Into(s.am_max_hz)},
               {"snr_db_min", Into(s.snr_db_min)},
               {"snr_db_max", Into(s.snr_db_max)},
               {"segment_min_sec", Into(s.segment_min_sec)},
               {"segment_max_sec", Into(s.segment_max_sec)},
               {"nonspeech_kinds",
                [&](const json& v, const std::string& k) {
                  std::vector<std::string> names;
                  Read(v, names, k);
                  s.nonspeech_kinds.clear();
                  for (const auto& n : names) {
                    if (n == "white") {
                      s.nonspeech_kinds.push_back(NoiseKind::kWhite);
                    } else if (n == "pink") {
                      s.nonspeech_kinds.push_back(NoiseKind::kPink);
                    } else if (n == "tone") {
                      s.nonspeech_kinds.push_back(NoiseKind::kTone);
                    } else if (n == "silence") {
                      s.nonspeech_kinds.push_back(NoiseKind::kSilence);
                    } else {
                      throw Error(ErrorKind::kConfigError, "unknown noise kind '" + n + "'");
                    }
                  }
                }},
               {"split", [&](const json& v, const std::string& k) {
                  ReadSection(v, k, {{"train", Into(s.ratios.train)},
                                     {"test", Into(s.ratios.test)},
                                     {"val", Into(s.ratios.val)}});
                }}});
  s.Validate();
  return s;
}

ModelShape MakeShape(const RunConfig& cfg) {
  const FeatureLayout layout = FeatureLayout::For(cfg.frame, cfg.mfcc);
  ModelShape shape;
  shape.input_dim = layout.Width(cfg.ablation.input_streams);
  shape.hidden = cfg.model.hidden;
  shape.noise_dim = cfg.model.noise_dim;
  shape.disc_hidden = cfg.model.disc_hidden;
  shape.future_dim = cfg.ablation.predict_future ? layout.Width(cfg.ablation.future_target_streams) : 0;
  shape.adversarial = cfg.ablation.use_gan;
  shape.future_disc = cfg.ablation.future_disc;
  return shape;
}

namespace {

template <typename T>
std::vector<LossReport> FitAs(Checkpoint& ckpt, const ModelShape& shape, std::span<const PreparedWindow> windows,
                              const TrainConfig& train, const std::function<void(const LossReport&)>& on_epoch) {
  Model<T> model(shape);
  model.Init(train.seed);
  auto history = Fit(model, windows, train, on_epoch);
  ckpt.model = Model<float>(shape);
  ckpt.model.CopyValuesFrom(model);
  return history;
}

}  // namespace

TrainedModel TrainFromManifest(const RunConfig& cfg, const Manifest& manifest,
                               const std::function<void(const LossReport&)>& on_epoch) {
  cfg.Validate();
  const auto start = std::chrono::steady_clock::now();
  const auto entries = manifest.Select(Split::kTrain);
  if (entries.empty()) throw Error(ErrorKind::kNoData, "manifest has no train split");

  const MfccExtractor extractor(cfg.mfcc, cfg.frame);
  std::vector<FeatureSequence> features;
  std::vector<std::vector<std::uint8_t>> labels;
  for (const ManifestEntry* e : entries) {
    Utterance utt = LoadUtterance(manifest, *e, cfg.frame);
    features.push_back(ExtractFeatures(utt.clip, cfg.frame, extractor));
    labels.push_back(std::move(utt.labels));
  }
  const FeatureLayout layout = FeatureLayout::For(cfg.frame, cfg.mfcc);
  const NormalizationStats stats = FitNormalization(features, layout.raw_dim);

  std::vector<TrainingExample> examples;
  for (std::size_t i = 0; i < features.size(); ++i) {
    ApplyNormalization(features[i], stats);
    // Clips shorter than two windows contribute nothing.
    if (static_cast<std::size_t>(features[i].rows()) < 2 * static_cast<std::size_t>(cfg.train.window)) continue;
    auto w = BuildTrainingWindows(features[i], labels[i], cfg.train.window, cfg.train.hop());
    std::move(w.begin(), w.end(), std::back_inserter(examples));
  }
  if (examples.empty()) throw Error(ErrorKind::kNoData, "no train clip is long enough for two windows");
  const StreamSet future = cfg.ablation.predict_future ? cfg.ablation.future_target_streams : StreamSet{};
  const auto windows = PrepareWindows(examples, layout, cfg.ablation.input_streams, future);

  TrainConfig train = cfg.train;
  train.use_l2 = cfg.ablation.use_l2;
  TrainedModel out;
  out.checkpoint.meta.frame = cfg.frame;
  out.checkpoint.meta.mfcc = cfg.mfcc;
  out.checkpoint.meta.normalization = stats;
  out.checkpoint.meta.input_streams = cfg.ablation.input_streams;
  out.checkpoint.meta.future_streams = future;
  out.checkpoint.meta.window = cfg.train.window;
  out.checkpoint.meta.config_json = RunConfigToJson(cfg);
  const ModelShape shape = MakeShape(cfg);
  out.history = train.precision == Precision::kFloat64
                    ? FitAs<double>(out.checkpoint, shape, windows, train, on_epoch)
                    : FitAs<float>(out.checkpoint, shape, windows, train, on_epoch);
  out.seconds = Seconds(start);
  return out;
}

void WriteLossLog(const std::filesystem::path& path, const std::vector<LossReport>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  os << LossLogHeader() << '\n';
  for (const auto& r : history) os << LossLogRow(r) << '\n';
  if (!os) throw Error(ErrorKind::kIoError, "write failed for " + path.string());
}

AblationRow RunAblationCell(const RunConfig& base, const Manifest& manifest, const std::string& variant,
                            std::uint64_t seed, int window) {
  RunConfig cfg = base;
  cfg.ablation = VariantFlags(variant);
  cfg.train.seed = seed;
  cfg.train.window = window;
  TrainedModel trained = TrainFromManifest(cfg, manifest);
  ModelPredictor predictor(std::move(trained.checkpoint));
  AblationRow row;
  row.variant = variant;
  row.window = window;
  row.seed = seed;
  row.metrics = EvaluateSplit(predictor, manifest, Split::kTest, cfg.frame).total;
  row.seconds = trained.seconds;
  return row;
}

std::string AblationTableHeader() {
  return "variant\twindow\tseed\tfer\tdcf\tp_miss\tp_fa\ttrain_seconds";
}

std::string AblationTableRow(const AblationRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s\t%d\t%llu\t%.6f\t%.6f\t%.6f\t%.6f\t%.1f", row.variant.c_str(), row.window,
                static_cast<unsigned long long>(row.seed), row.metrics.fer, row.metrics.dcf, row.metrics.p_miss,
                row.metrics.p_fa, row.seconds);
  return buf;
}

std::string FormatMetrics(const MetricsReport& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "fer\t%.6f\ndcf\t%.6f\np_miss\t%.6f\np_fa\t%.6f\nspeech_frames\t%zu\nnonspeech_frames\t%zu\n"
                "missed_frames\t%zu\nfalse_alarm_frames\t%zu\nerror_frames\t%zu\n",
                m.fer, m.dcf, m.p_miss, m.p_fa, m.speech_frames, m.nonspeech_frames, m.missed_frames,
                m.false_alarm_frames, m.error_frames);
  return buf;
}

BenchReport RunBench(Checkpoint& ckpt, double seconds, std::uint64_t seed) {
  if (!(seconds > 0.0)) throw Error(ErrorKind::kConfigError, "bench duration must be positive");
  SyntheticSpec spec;
  spec.seed = seed;
  spec.clips = 1;
  spec.clip_seconds = seconds;
  const AudioClip clip = SynthesizeClips(spec).front().clip;
  const auto start = std::chrono::steady_clock::now();
  const PredictionTrack track = PredictUtterance(clip, ckpt);
  BenchReport r;
  r.elapsed_seconds = Seconds(start);
  r.audio_seconds = static_cast<double>(clip.samples.size()) / clip.sample_rate_hz;
  r.realtime_factor = r.audio_seconds / std::max(r.elapsed_seconds, 1e-9);
  r.parameters = CountParameters(ckpt.model);
  r.closed_form_parameters = CountParameters(ckpt.model.shape());
  (void)track;
  return r;
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNonFiniteLoss:
      return 3;
    case ErrorKind::kConfigError:
    case ErrorKind::kUnknownVariant:
    case ErrorKind::kBadRatios:
      return 1;
    default:
      return 2;
  }
}

}  // namespace tagan
