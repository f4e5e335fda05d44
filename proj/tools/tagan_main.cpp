#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tagan/harness.hpp"

namespace fs = std::filesystem;
using namespace tagan;

namespace {

std::string ReadFile(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os || !(os << text)) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
}

std::vector<std::uint64_t> ParseSeeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfigError, "bad integer '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::kConfigError, "empty list");
  return out;
}

void PrintMetrics(const MetricsReport& m, const std::string& metric) {
  std::istringstream lines(FormatMetrics(m));
  std::string line;
  while (std::getline(lines, line)) {
    const std::string key = line.substr(0, line.find('\t'));
    const bool rate = key == "fer" || key == "dcf" || key == "p_miss" || key == "p_fa";
    if (rate && metric == "fer" && key != "fer") continue;
    if (rate && metric == "dcf" && key == "fer") continue;
    std::cout << line << '\n';
  }
}

Split SplitOption(const std::string& name) {
  try {
    return ParseSplit(name);
  } catch (const Error&) {
    throw Error(ErrorKind::kConfigError, "unknown split '" + name + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech activity detection with temporally aligned adversarial training"};
  app.require_subcommand(1);

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "Write a labeled synthetic corpus and manifest");
  std::string spec_path, synth_out;
  std::uint64_t synth_seed = 0;
  int synth_clips = 0;
  synth->add_option("--spec", spec_path, "Corpus spec (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();
  auto* seed_opt = synth->add_option("--seed", synth_seed, "Override the spec seed");
  auto* clips_opt = synth->add_option("--clips", synth_clips, "Override the clip count");

  // train
  auto* train = app.add_subcommand("train", "Train a model on the train split");
  std::string config_path, manifest_path, checkpoint_out, loss_log;
  train->add_option("--config", config_path, "Run config (JSON)");
  train->add_option("--manifest", manifest_path, "Corpus manifest")->required();
  train->add_option("--out-checkpoint", checkpoint_out, "Checkpoint path")->required();
  train->add_option("--loss-log", loss_log, "Loss log path (default <checkpoint>.losses.tsv)");
  bool quiet = false;
  train->add_flag("--quiet", quiet, "Only print the final epoch");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a labeled split");
  std::string eval_ckpt, eval_manifest, split_name = "test", metric = "both";
  double threshold = 0.5;
  bool per_utt = false;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint, or oracle:reference / oracle:all-speech")->required();
  eval->add_option("--manifest", eval_manifest, "Corpus manifest")->required();
  eval->add_option("--split", split_name, "train, val or test")->capture_default_str();
  eval->add_option("--metric", metric, "fer, dcf or both")
      ->check(CLI::IsMember({"fer", "dcf", "both"}))
      ->capture_default_str();
  eval->add_option("--threshold", threshold, "Speech decision threshold")->capture_default_str();
  eval->add_flag("--per-utterance", per_utt, "Also print one row per utterance");

  // predict
  auto* predict = app.add_subcommand("predict", "Label one WAV file");
  std::string pred_ckpt, wav_path, seg_out, probs_out, emb_out, labels_path;
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint")->required();
  predict->add_option("--wav", wav_path, "Input WAV (16-bit mono, 8 or 16 kHz)")->required();
  predict->add_option("--out-segments", seg_out, "Segment file to write")->required();
  predict->add_option("--dump-probs", probs_out, "Per-frame speech probabilities");
  predict->add_option("--dump-embeddings", emb_out, "Per-frame encoder outputs plus a label column");
  predict->add_option("--labels", labels_path, "Reference segments for the embedding label column");
  predict->add_option("--threshold", threshold, "Speech decision threshold")->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and score ablation variants");
  std::string variants = "1,2,3,4,5,6,7,8,9,10,11,12,13,proposed", seeds = "7", windows, table_out;
  ablate->add_option("--config", config_path, "Base run config (JSON)");
  ablate->add_option("--manifest", manifest_path, "Corpus manifest")->required();
  ablate->add_option("--variants", variants, "Comma-separated ids: 1..13, proposed")->capture_default_str();
  ablate->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  ablate->add_option("--window-sizes", windows, "Comma-separated window lengths (default: config window)");
  ablate->add_option("--out", table_out, "Results table (default stdout)");

  // bench
  auto* bench = app.add_subcommand("bench", "Measure prediction speed");
  std::string bench_ckpt;
  double bench_seconds = 100.0;
  bench->add_option("--checkpoint", bench_ckpt, "Checkpoint")->required();
  bench->add_option("--seconds", bench_seconds, "Seconds of synthetic audio")->capture_default_str();

  // cross-eval
  auto* cross = app.add_subcommand("cross-eval", "Score a checkpoint on another corpus");
  std::string cross_ckpt, other_manifest, own_manifest;
  cross->add_option("--checkpoint", cross_ckpt, "Checkpoint")->required();
  cross->add_option("--manifest-other", other_manifest, "Manifest of the other corpus")->required();
  cross->add_option("--manifest", own_manifest, "Training corpus manifest, scored first when given");
  cross->add_option("--split", split_name, "Split to score")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : ParseSyntheticSpec(ReadFile(spec_path));
      if (seed_opt->count() > 0) spec.seed = synth_seed;
      if (clips_opt->count() > 0) spec.clips = synth_clips;
      const Manifest m = SynthesizeCorpus(spec, synth_out);
      std::cout << "clips\t" << m.entries.size() << "\ntrain\t" << m.Select(Split::kTrain).size() << "\ntest\t"
                << m.Select(Split::kTest).size() << "\nval\t" << m.Select(Split::kVal).size() << "\nmanifest\t"
                << (fs::path(synth_out) / "manifest.tsv").string() << '\n';
      return 0;
    }
    if (train->parsed()) {
      const RunConfig cfg = config_path.empty() ? RunConfig{} : LoadRunConfig(config_path);
      const Manifest manifest = LoadManifest(manifest_path);
      if (!quiet) std::cout << LossLogHeader() << '\n';
      const TrainedModel trained = TrainFromManifest(cfg, manifest, [&](const LossReport& r) {
        if (!quiet) std::cout << LossLogRow(r) << std::endl;
      });
      Checkpoint ckpt = trained.checkpoint;
      SaveCheckpoint(checkpoint_out, ckpt.meta, ckpt.model);
      WriteLossLog(loss_log.empty() ? checkpoint_out + ".losses.tsv" : loss_log, trained.history);
      if (quiet) {
        std::cout << LossLogHeader() << '\n';
        if (!trained.history.empty()) std::cout << LossLogRow(trained.history.back()) << '\n';
      }
      std::fprintf(stderr, "trained in %.1f s\n", trained.seconds);
      return 0;
    }
    if (eval->parsed()) {
      const Split split = SplitOption(split_name);
      auto predictor = OpenPredictor(eval_ckpt, threshold);
      const Manifest manifest = LoadManifest(eval_manifest);
      const EvaluationResult result = EvaluateSplit(*predictor, manifest, split);
      if (per_utt) {
        std::cout << "id\terror_frames\ttotal_frames\n";
        for (const auto& u : result.utterances) {
          std::cout << u.id << '\t' << u.counts.error_frames << '\t' << u.counts.total_frames() << '\n';
        }
      }
      PrintMetrics(result.total, metric);
      return 0;
    }
    if (predict->parsed()) {
      Checkpoint ckpt = LoadCheckpoint(pred_ckpt);
      const AudioClip clip = LoadWav(wav_path);
      const PredictionTrack track = PredictUtterance(clip, ckpt, threshold);
      const auto labels = track.Labels();
      WriteSegments(seg_out, LabelsToSegments(labels, ckpt.meta.frame));
      if (!probs_out.empty()) WriteFile(probs_out, FormatProbabilities(track));
      if (!emb_out.empty()) {
        auto column = labels;
        if (!labels_path.empty()) column = FrameLabels(LoadSegments(labels_path), labels.size(), ckpt.meta.frame);
        WriteFile(emb_out, FormatEmbeddings(ComputeEmbeddings(clip, ckpt), column));
      }
      std::cout << "frames\t" << labels.size() << '\n';
      return 0;
    }
    if (ablate->parsed()) {
      const RunConfig base = config_path.empty() ? RunConfig{} : LoadRunConfig(config_path);
      const auto ids = ParseVariantList(variants);
      const auto seed_list = ParseSeeds(seeds);
      std::vector<int> window_list;
      if (windows.empty()) {
        window_list.push_back(base.train.window);
      } else {
        for (auto w : ParseSeeds(windows)) window_list.push_back(static_cast<int>(w));
      }
      const Manifest manifest = LoadManifest(manifest_path);
      std::ofstream file;
      if (!table_out.empty()) {
        file.open(table_out, std::ios::trunc);
        if (!file) throw Error(ErrorKind::kIoError, "cannot write " + table_out);
      }
      std::ostream& os = table_out.empty() ? std::cout : file;
      os << AblationTableHeader() << std::endl;
      for (const auto& id : ids) {
        for (int window : window_list) {
          for (auto seed : seed_list) {
            const AblationRow row = RunAblationCell(base, manifest, id, seed, window);
            os << AblationTableRow(row) << std::endl;
            if (!table_out.empty()) std::cerr << AblationTableRow(row) << std::endl;
          }
        }
      }
      return 0;
    }
    if (bench->parsed()) {
      Checkpoint ckpt = LoadCheckpoint(bench_ckpt);
      const BenchReport r = RunBench(ckpt, bench_seconds);
      std::printf("audio_seconds\t%.3f\nelapsed_seconds\t%.6f\nrealtime_factor\t%.3f\nparameters\t%lld\n"
                  "closed_form_parameters\t%lld\n",
                  r.audio_seconds, r.elapsed_seconds, r.realtime_factor, static_cast<long long>(r.parameters),
                  static_cast<long long>(r.closed_form_parameters));
      return 0;
    }
    if (cross->parsed()) {
      const Split split = SplitOption(split_name);
      auto predictor = OpenPredictor(cross_ckpt);
      std::vector<std::string> manifests;
      if (!own_manifest.empty()) manifests.push_back(own_manifest);
      manifests.push_back(other_manifest);
      for (const auto& path : manifests) {
        const Manifest manifest = LoadManifest(path);
        std::cout << "corpus\t" << path << '\n';
        PrintMetrics(EvaluateSplit(*predictor, manifest, split).total, "both");
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
