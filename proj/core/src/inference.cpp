#include "tagan/inference.hpp"

#include <algorithm>
#include <cstdio>

#include "tagan/error.hpp"

namespace tagan {

RowMatrixXd PrepareInput(const AudioClip& clip, const CheckpointMeta& meta) {
  if (clip.samples.empty()) throw Error(ErrorKind::kEmptySignal, "clip '" + clip.id + "' has no samples");
  if (clip.sample_rate_hz != meta.frame.sample_rate_hz) {
    throw Error(ErrorKind::kUnsupportedFormat, "clip rate " + std::to_string(clip.sample_rate_hz) + " Hz");
  }
  FeatureSequence features = ExtractFeatures(clip, meta.frame, meta.mfcc);
  ApplyNormalization(features, meta.normalization);
  const auto columns = FeatureLayout::For(meta.frame, meta.mfcc).Columns(meta.input_streams);
  RowMatrixXd out(features.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = features.col(columns[j]);
  }
  return out;
}

std::vector<std::size_t> InferenceWindowStarts(std::size_t frame_count, int window) {
  if (window <= 0) throw Error(ErrorKind::kConfigError, "window must be positive");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < frame_count; s += static_cast<std::size_t>(window)) starts.push_back(s);
  return starts;
}

namespace {

// Per-window (embeddings, padded input) pairs, batch of one.
template <typename F>
void ForEachWindow(const RowMatrixXd& input, int window, F&& fn) {
  const auto frames = static_cast<std::size_t>(input.rows());
  for (std::size_t s : InferenceWindowStarts(frames, window)) {
    const auto valid = static_cast<Eigen::Index>(std::min<std::size_t>(window, frames - s));
    Matrix<float> block = Matrix<float>::Zero(window, input.cols());
    block.topRows(valid) = input.middleRows(static_cast<Eigen::Index>(s), valid).cast<float>();
    fn(static_cast<Eigen::Index>(s), valid, block);
  }
}

}  // namespace

RowMatrixXd ComputeEmbeddings(const AudioClip& clip, Checkpoint& ckpt) {
  const RowMatrixXd input = PrepareInput(clip, ckpt.meta);
  RowMatrixXd out(input.rows(), ckpt.model.shape().hidden);
  ForEachWindow(input, ckpt.meta.window, [&](Eigen::Index s, Eigen::Index valid, const Matrix<float>& block) {
    const Matrix<float> c = Encode(ckpt.model, block);
    out.middleRows(s, valid) = c.topRows(valid).cast<double>();
  });
  return out;
}

PredictionTrack PredictUtterance(const AudioClip& clip, Checkpoint& ckpt, double threshold) {
  const RowMatrixXd input = PrepareInput(clip, ckpt.meta);
  PredictionTrack track;
  track.threshold = threshold;
  track.probabilities.resize(static_cast<std::size_t>(input.rows()));
  const Matrix<float> noise = Matrix<float>::Zero(1, ckpt.model.shape().noise_dim);
  ForEachWindow(input, ckpt.meta.window, [&](Eigen::Index s, Eigen::Index valid, const Matrix<float>& block) {
    const Matrix<float> c = Encode(ckpt.model, block);
    const Matrix<float> eta = GenerateClassification(ckpt.model, c, noise);
    for (Eigen::Index t = 0; t < valid; ++t) {
      track.probabilities[static_cast<std::size_t>(s + t)] = static_cast<double>(eta(t, 0));
    }
  });
  return track;
}

std::string FormatProbabilities(const PredictionTrack& track) {
  std::string out;
  char buf[32];
  for (double p : track.probabilities) {
    std::snprintf(buf, sizeof(buf), "%.6f\n", p);
    out += buf;
  }
  return out;
}

std::string FormatEmbeddings(const RowMatrixXd& embeddings, std::span<const std::uint8_t> labels) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, "embedding rows and labels differ");
  }
  std::string out;
  char buf[32];
  for (Eigen::Index t = 0; t < embeddings.rows(); ++t) {
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g\t", embeddings(t, j));
      out += buf;
    }
    out += labels[static_cast<std::size_t>(t)] ? "1\n" : "0\n";
  }
  return out;
}

PredictionTrack ReferencePredictor::Predict(const Utterance& utt) {
  PredictionTrack track;
  track.probabilities.assign(utt.labels.begin(), utt.labels.end());
  return track;
}

PredictionTrack AllSpeechPredictor::Predict(const Utterance& utt) {
  PredictionTrack track;
  track.probabilities.assign(utt.labels.size(), 1.0);
  return track;
}

std::unique_ptr<Predictor> OpenPredictor(const std::string& spec, double threshold) {
  if (spec == "oracle:reference") return std::make_unique<ReferencePredictor>();
  if (spec == "oracle:all-speech") return std::make_unique<AllSpeechPredictor>();
  return std::make_unique<ModelPredictor>(LoadCheckpoint(spec), threshold);
}

EvaluationResult EvaluateSplit(Predictor& predictor, const Manifest& manifest, Split split, const FrameSpec& spec) {
  const auto entries = manifest.Select(split);
  if (entries.empty()) throw Error(ErrorKind::kNoData, "no utterances in the " + SplitName(split) + " split");
  EvaluationResult result;
  for (const ManifestEntry* e : entries) {
    const Utterance utt = LoadUtterance(manifest, *e, spec);
    const auto labels = predictor.Predict(utt).Labels();
    UtteranceResult r{utt.id, CountFrames(labels, utt.labels)};
    result.total += r.counts;
    result.utterances.push_back(std::move(r));
  }
  result.total = FinalizeMetrics(result.total);
  return result;
}

}  // namespace tagan
