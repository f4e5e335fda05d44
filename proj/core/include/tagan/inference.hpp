#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tagan/checkpoint.hpp"
#include "tagan/corpus.hpp"
#include "tagan/metrics.hpp"

namespace tagan {

// Normalized features of a clip restricted to the checkpoint's input streams.
RowMatrixXd PrepareInput(const AudioClip& clip, const CheckpointMeta& meta);

// Test-time windows: starts 0, T, 2T, ... covering every frame once.
std::vector<std::size_t> InferenceWindowStarts(std::size_t frame_count, int window);

// Encoder outputs for every frame (frame_count x H). Each window is encoded
// independently from a zero state; the last one is zero-padded then clipped.
RowMatrixXd ComputeEmbeddings(const AudioClip& clip, Checkpoint& ckpt);

// G^eta with z = 0 over each window of embeddings.
PredictionTrack PredictUtterance(const AudioClip& clip, Checkpoint& ckpt, double threshold = 0.5);

// One line per frame.
std::string FormatProbabilities(const PredictionTrack& track);
// H embedding columns then the label column, tab-separated.
std::string FormatEmbeddings(const RowMatrixXd& embeddings, std::span<const std::uint8_t> labels);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictionTrack Predict(const Utterance& utt) = 0;
};

class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(Checkpoint ckpt, double threshold = 0.5)
      : ckpt_(std::move(ckpt)), threshold_(threshold) {}
  PredictionTrack Predict(const Utterance& utt) override {
    return PredictUtterance(utt.clip, ckpt_, threshold_);
  }
  Checkpoint& checkpoint() { return ckpt_; }

 private:
  Checkpoint ckpt_;
  double threshold_;
};

// Test doubles: "oracle:reference" echoes the labels, "oracle:all-speech"
// predicts speech everywhere.
class ReferencePredictor : public Predictor {
 public:
  PredictionTrack Predict(const Utterance& utt) override;
};

class AllSpeechPredictor : public Predictor {
 public:
  PredictionTrack Predict(const Utterance& utt) override;
};

// Loads a checkpoint file or resolves one of the oracle names above.
std::unique_ptr<Predictor> OpenPredictor(const std::string& spec, double threshold = 0.5);

struct UtteranceResult {
  std::string id;
  MetricsReport counts;
};

struct EvaluationResult {
  std::vector<UtteranceResult> utterances;
  MetricsReport total;  // micro-averaged over all frames
};

// Throws NoData if the split is empty and DegenerateReference if the pooled
// reference lacks a class.
EvaluationResult EvaluateSplit(Predictor& predictor, const Manifest& manifest, Split split,
                               const FrameSpec& spec = {});

}  // namespace tagan
