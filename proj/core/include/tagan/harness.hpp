#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tagan/checkpoint.hpp"
#include "tagan/corpus.hpp"
#include "tagan/error.hpp"
#include "tagan/inference.hpp"
#include "tagan/training.hpp"

namespace tagan {

struct AblationFlags {
  bool use_gan = true;
  StreamSet input_streams = StreamSet::All();
  bool predict_future = true;
  StreamSet future_target_streams = {Stream::kRaw};
  bool use_l2 = true;
  FutureDiscriminator future_disc = FutureDiscriminator::kTemporal;

  bool operator==(const AblationFlags&) const = default;
};

struct ModelDims {
  int hidden = 64;
  int noise_dim = 32;
  int disc_hidden = 64;
};

// JSON document with optional sections "train", "model", "mfcc", "frame" and
// "ablation". Unknown sections or keys are rejected.
struct RunConfig {
  TrainConfig train;
  ModelDims model;
  MfccConfig mfcc;
  FrameSpec frame;
  AblationFlags ablation;

  void Validate() const;
};

RunConfig ParseRunConfig(const std::string& text);
RunConfig LoadRunConfig(const std::filesystem::path& path);
std::string RunConfigToJson(const RunConfig& cfg);

// Variant ids are "1".."13" and "proposed".
const std::vector<std::string>& VariantIds();
AblationFlags VariantFlags(const std::string& id);
// Inverse of VariantFlags; empty when the flags match no variant.
std::string IdentifyVariant(const AblationFlags& flags);
// Comma-separated ids, duplicates removed, sorted by id.
std::vector<std::string> ParseVariantList(const std::string& list);
int VariantOrder(const std::string& id);

// JSON object with SyntheticSpec field names; "nonspeech_kinds" lists
// white/pink/tone/silence and "split" holds train/test/val ratios.
SyntheticSpec ParseSyntheticSpec(const std::string& text);

ModelShape MakeShape(const RunConfig& cfg);

struct TrainedModel {
  Checkpoint checkpoint;
  std::vector<LossReport> history;
  double seconds = 0.0;
};

// Features of the train split, normalization fitted on it, windows of T
// frames with hop T/2, then Fit from a model initialized with train.seed.
TrainedModel TrainFromManifest(const RunConfig& cfg, const Manifest& manifest,
                               const std::function<void(const LossReport&)>& on_epoch = {});

void WriteLossLog(const std::filesystem::path& path, const std::vector<LossReport>& history);

struct AblationRow {
  std::string variant;
  int window = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  double seconds = 0.0;
};

AblationRow RunAblationCell(const RunConfig& base, const Manifest& manifest, const std::string& variant,
                            std::uint64_t seed, int window);

std::string AblationTableHeader();
std::string AblationTableRow(const AblationRow& row);

// Tab-separated "key<TAB>value" lines.
std::string FormatMetrics(const MetricsReport& m);

struct BenchReport {
  double audio_seconds = 0.0;
  double elapsed_seconds = 0.0;
  double realtime_factor = 0.0;
  std::int64_t parameters = 0;
  std::int64_t closed_form_parameters = 0;
};

// Times PredictUtterance over `seconds` of synthetic audio (features included).
BenchReport RunBench(Checkpoint& ckpt, double seconds, std::uint64_t seed = 7);

// Process exit code for an error: 3 numerical, 1 configuration/usage, 2 data.
int ExitCodeFor(ErrorKind kind);

}  // namespace tagan
