// Acceptance run: one PASS/FAIL line per criterion. Criteria 5-7 train the
// full-size models on the default synthetic corpus and take over an hour on
// one core; --only selects a subset.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <unistd.h>

#include "mfcc_oracle.hpp"
#include "tagan/checkpoint.hpp"
#include "tagan/harness.hpp"
#include "tagan/inference.hpp"

namespace {

using namespace tagan;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using MatD = Matrix<double>;

// Tolerances and bounds.
constexpr double kGradTol = 1e-4;
constexpr int kGradProbes = 25;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kMfccTol = 1e-8;
constexpr int kMfccFrames = 100;
constexpr int kMonotonicTracks = 100;
constexpr double kFerBound = 0.05;
constexpr double kTrainBudgetSeconds = 15.0 * 60.0;
constexpr double kBenchSeconds = 100.0;
constexpr double kMinRealtimeFactor = 1.0;
const std::vector<std::uint64_t> kAblationSeeds = {7, 11, 13};

double Since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void Report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

MatD Uniform(Eigen::Index r, Eigen::Index c, std::mt19937& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
  return m;
}

std::vector<PreparedWindow> RandomWindows(std::size_t n, int steps, int in, int future, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::vector<PreparedWindow> out(n);
  for (auto& w : out) {
    w.input = Uniform(steps, in, gen);
    w.future = Uniform(steps, future, gen);
    for (int t = 0; t < steps; ++t) w.labels.push_back(static_cast<std::uint8_t>(gen() % 2));
  }
  return out;
}

std::vector<const PreparedWindow*> Pointers(const std::vector<PreparedWindow>& w) {
  std::vector<const PreparedWindow*> out;
  for (const auto& x : w) out.push_back(&x);
  return out;
}

ModelShape SmallShape() {
  ModelShape s;
  s.hidden = 8;
  s.disc_hidden = 8;
  return s;
}

void GradientCorrectness() {
  const auto start = Clock::now();
  std::map<std::string, double> worst;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Model<double> model(SmallShape());
    model.Init(seed);
    const auto windows = RandomWindows(2, 6, 106, 80, static_cast<std::uint32_t>(seed));
    const auto batch = Pointers(windows);
    Rng rng(seed + 100);
    const MatD noise = DrawNoise<double>(rng, 2, model.shape().noise_dim);
    TrainConfig cfg;
    cfg.detach_condition = false;  // literal objectives, every path differentiated
    auto check = [&](const std::string& name, Phase phase, const ParameterSet<double>& params) {
      const double err =
          ad::GradientCheck([&](Tape<double>& t) { return BatchObjective<double>(t, model, batch, noise, phase, cfg); },
                            params, kGradProbes, seed)
              .max_relative_error;
      worst[name] = std::max(worst[name], err);
    };
    ParameterSet<double> g_eta, g_w;
    model.classifier.Register(g_eta);
    model.audio->Register(g_w);
    check("encoder", Phase::kGenerator, model.EncoderParams());
    check("G_eta", Phase::kGenerator, g_eta);
    check("G_w", Phase::kGenerator, g_w);
    check("D_eta", Phase::kDiscriminator, model.StaticDiscriminatorParams());
    check("D_w", Phase::kDiscriminator, model.FutureDiscriminatorParams());
    check("L_G", Phase::kGenerator, model.GeneratorParams());
    check("L_D", Phase::kDiscriminator, model.DiscriminatorParams());
  }
  const double seconds = Since(start);
  bool pass = seconds < kGradBudgetSeconds;
  std::string detail;
  for (const auto& [name, err] : worst) {
    pass = pass && err < kGradTol;
    detail += Fmt("%s=%.2e ", name.c_str(), err);
  }
  Report(1, pass, detail + Fmt("(tol %.0e, %d probes x 3 seeds, %.1f s)", kGradTol, kGradProbes, seconds));
}

void FeatureOracles() {
  const MfccConfig cfg;
  const FrameSpec spec;
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int f = 0; f < kMfccFrames; ++f) {
    std::vector<double> frame(static_cast<std::size_t>(spec.frame_samples()));
    for (double& s : frame) s = u(gen);
    const Eigen::VectorXd got = ComputeMfcc(frame, cfg, spec);
    const auto want = testing_oracle::BruteForceMfcc(frame, cfg, spec.sample_rate_hz);
    for (int q = 0; q < cfg.n_coeffs; ++q) worst = std::max(worst, std::abs(got[q] - want[static_cast<std::size_t>(q)]));
  }
  RowMatrixXd constant = RowMatrixXd::Constant(12, 13, 3.7);
  const bool zeros = (ComputeDeltas(constant).array() == 0.0).all();
  // Ramp with slope v = 0.375: interior deltas equal v exactly.
  RowMatrixXd ramp(12, 13);
  for (int t = 0; t < 12; ++t) ramp.row(t).setConstant(0.375 * t - 1.0);
  const RowMatrixXd d = ComputeDeltas(ramp);
  const bool slope = (d.middleRows(2, 8).array() == 0.375).all();
  Report(2, worst <= kMfccTol && zeros && slope,
         Fmt("mfcc max abs err %.2e over %d frames (tol %.0e); constant deltas zero: %s; ramp deltas exact: %s", worst,
             kMfccFrames, kMfccTol, zeros ? "yes" : "no", slope ? "yes" : "no"));
}

void MetricExactness() {
  const double dcf = DetectionCostValue(0.2, 0.4);
  std::vector<std::uint8_t> ref(10, 1), hyp(10, 1);
  hyp[4] = 0;
  const double fer = FrameErrorRate(hyp, ref);
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool monotone = true;
  for (int k = 0; k < kMonotonicTracks; ++k) {
    PredictionTrack track;
    std::vector<std::uint8_t> labels(80);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      track.probabilities.push_back(u(gen));
      labels[i] = static_cast<std::uint8_t>(i % 2 == 0 || gen() % 3 == 0);
    }
    double miss = -1.0, fa = 2.0;
    for (int step = 0; step <= 20; ++step) {
      track.threshold = step / 20.0;
      const MetricsReport r = DetectionCost(track.Labels(), labels);
      monotone = monotone && r.p_miss >= miss && r.p_fa <= fa;
      miss = r.p_miss;
      fa = r.p_fa;
    }
  }
  Report(3, dcf == 0.25 && fer == 0.1 && monotone,
         Fmt("DCF(0.2,0.4)=%g; FER 1/10=%g; monotone over %d tracks: %s", dcf, fer, kMonotonicTracks,
             monotone ? "yes" : "no"));
}

void StructuralInvariants() {
  ModelShape shape;  // full size
  Model<double> model(shape);
  model.Init(3);
  std::mt19937 gen(8);
  const int steps = 100;
  const MatD window = Uniform(steps, shape.input_dim, gen);
  const MatD chunks = Uniform(steps, shape.future_dim, gen);
  Rng rng(4);
  const MatD z = DrawNoise<double>(rng, 1, shape.noise_dim);
  const MatD c = Encode(model, window);
  const MatD w_hat = GenerateFutureAudio(model, c, z);
  const MatD d_w = DiscriminateTemporal(model, c, chunks);
  bool causal = true;
  auto same_prefix = [](const MatD& a, const MatD& b, int t) {
    return (a.topRows(t).array() == b.topRows(t).array()).all();
  };
  for (int t = 1; t < steps; t += 7) {
    MatD w2 = window, c2 = c, k2 = chunks;
    w2.bottomRows(steps - t) = Uniform(steps - t, shape.input_dim, gen);
    c2.bottomRows(steps - t).setConstant(0.25);
    k2.bottomRows(steps - t) = Uniform(steps - t, shape.future_dim, gen);
    causal = causal && same_prefix(Encode(model, w2), c, t);
    causal = causal && same_prefix(GenerateFutureAudio(model, c2, z), w_hat, t);
    causal = causal && same_prefix(DiscriminateTemporal(model, c, k2), d_w, t);
  }

  Model<double> small(SmallShape());
  small.Init(5);
  const auto windows = RandomWindows(3, 6, 106, 80, 9);
  const auto batch = Pointers(windows);
  const MatD noise = DrawNoise<double>(rng, 3, small.shape().noise_dim);
  TrainConfig cfg;
  bool isolated = true;
  small.AllParams().ZeroGrad();
  AccumulateBatchGradients<double>(small, batch, noise, Phase::kGenerator, cfg);
  for (auto* p : small.DiscriminatorParams()) isolated = isolated && (p->grad.array() == 0.0).all();
  small.AllParams().ZeroGrad();
  AccumulateBatchGradients<double>(small, batch, noise, Phase::kDiscriminator, cfg);
  for (auto* p : small.GeneratorParams()) isolated = isolated && (p->grad.array() == 0.0).all();

  bool triangular = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int len = 1 + static_cast<int>(gen() % 100);
    Tape<double> tape;
    std::vector<Var<double>> truth, pred;
    double expected = 0.0;
    std::vector<double> sq;
    for (int t = 0; t < len; ++t) {
      MatD a(1, 80), b(1, 80);
      for (Eigen::Index i = 0; i < 80; ++i) {
        a(0, i) = static_cast<double>(gen() % 17) / 16.0;
        b(0, i) = static_cast<double>(gen() % 17) / 16.0;
      }
      sq.push_back((a - b).squaredNorm());
      truth.push_back(tape.Constant(a));
      pred.push_back(tape.Constant(b));
    }
    for (int j = 0; j < len; ++j) expected += (len - j) * sq[static_cast<std::size_t>(j)];
    triangular = triangular && PrefixL2<double>(tape, truth, pred).scalar() == expected;
  }
  Report(4, causal && isolated && triangular,
         Fmt("causality encoder/G_w/D_w bit-exact: %s; G/D gradient isolation exact: %s; prefix-L2 identity exact: %s",
             causal ? "yes" : "no", isolated ? "yes" : "no", triangular ? "yes" : "no"));
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

struct DeskRuns {
  std::map<std::string, std::vector<double>> fer;  // variant -> per-seed FER at T = 100
  double fer_t20 = 0.0;
};

void EndToEnd(const fs::path& work, const std::set<int>& only) {
  const fs::path corpus = work / "corpus";
  const Manifest manifest = SynthesizeCorpus(SyntheticSpec{}, corpus);
  const RunConfig base;  // H = 64, T = 100, batch 32, 200 epochs, seed 7

  // Criterion 5: the proposed model at seed 7, kept for the throughput check.
  TrainedModel full = TrainFromManifest(base, manifest);
  MetricsReport full_metrics;
  {
    ModelPredictor predictor(full.checkpoint);
    full_metrics = EvaluateSplit(predictor, manifest, Split::kTest, base.frame).total;
  }
  if (only.contains(5)) {
    Report(5, full_metrics.fer < kFerBound && full.seconds < kTrainBudgetSeconds,
           Fmt("FER %.4f (bound %.2f), DCF %.4f, training %.0f s (budget %.0f s)", full_metrics.fer, kFerBound,
               full_metrics.dcf, full.seconds, kTrainBudgetSeconds));
  }

  if (only.contains(9)) {
    const BenchReport b = RunBench(full.checkpoint, kBenchSeconds);
    Report(9, b.realtime_factor > kMinRealtimeFactor && b.parameters == b.closed_form_parameters,
           Fmt("%.0f s of audio in %.3f s: %.1fx real time (need > %.0f); %lld parameters, closed form %lld",
               b.audio_seconds, b.elapsed_seconds, b.realtime_factor, kMinRealtimeFactor,
               static_cast<long long>(b.parameters), static_cast<long long>(b.closed_form_parameters)));
  }

  DeskRuns runs;
  if (only.contains(6)) {
    std::fprintf(stderr, "%s\n", AblationTableHeader().c_str());
    for (const std::string variant : {"1", "2", "5", "13", "proposed"}) {
      for (std::uint64_t seed : kAblationSeeds) {
        double fer = 0.0;
        if (variant == "proposed" && seed == base.train.seed) {
          fer = full_metrics.fer;
        } else {
          const AblationRow row = RunAblationCell(base, manifest, variant, seed, base.train.window);
          std::fprintf(stderr, "%s\n", AblationTableRow(row).c_str());
          fer = row.metrics.fer;
        }
        runs.fer[variant].push_back(fer);
      }
    }
    const double m1 = Median(runs.fer["1"]), m2 = Median(runs.fer["2"]), m5 = Median(runs.fer["5"]);
    const double m13 = Median(runs.fer["13"]), mp = Median(runs.fer["proposed"]);
    const bool ordered = mp <= m13 && m13 <= m5 && m5 <= m2;
    // The full ordering is a soft target; the hard requirement is beating variant 1.
    Report(6, mp < m1,
           Fmt("median FER proposed %.4f, v13 %.4f, v5 %.4f, v2 %.4f, v1 %.4f; proposed < v1: %s; "
               "full ordering proposed <= v13 <= v5 <= v2: %s",
               mp, m13, m5, m2, m1, mp < m1 ? "yes" : "no", ordered ? "yes" : "no"));
  }

  if (only.contains(7)) {
    const AblationRow t20 = RunAblationCell(base, manifest, "proposed", base.train.seed, 20);
    Report(7, t20.metrics.fer >= full_metrics.fer,
           Fmt("FER T=20 %.4f vs T=100 %.4f (seed %llu)", t20.metrics.fer, full_metrics.fer,
               static_cast<unsigned long long>(base.train.seed)));
  }
}

std::string ReadAll(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void Determinism(const fs::path& work) {
  const SyntheticSpec spec;
  const Manifest a = SynthesizeCorpus(spec, work / "det_a");
  SynthesizeCorpus(spec, work / "det_b");
  bool corpus_same = ReadAll(work / "det_a" / "manifest.tsv") == ReadAll(work / "det_b" / "manifest.tsv");
  for (const auto& e : a.entries) {
    corpus_same = corpus_same && ReadAll(work / "det_a" / e.audio_path) == ReadAll(work / "det_b" / e.audio_path) &&
                  ReadAll(work / "det_a" / e.label_path) == ReadAll(work / "det_b" / e.label_path);
  }
  RunConfig cfg;
  cfg.train.epochs = 2;
  std::string rows[2], bytes[2];
  for (int i = 0; i < 2; ++i) {
    TrainedModel m = TrainFromManifest(cfg, a);
    rows[i] = LossLogRow(m.history.front());
    const fs::path ckpt = work / ("det_" + std::to_string(i) + ".ckpt");
    SaveCheckpoint(ckpt, m.checkpoint.meta, m.checkpoint.model);
    bytes[i] = ReadAll(ckpt);
  }
  const bool rows_same = rows[0] == rows[1];
  const bool ckpt_same = !bytes[0].empty() && bytes[0] == bytes[1];
  Report(8, corpus_same && rows_same && ckpt_same,
         Fmt("synth corpus byte-identical: %s; epoch-0 loss rows identical: %s; checkpoints byte-identical: %s (%zu bytes)",
             corpus_same ? "yes" : "no", rows_same ? "yes" : "no", ckpt_same ? "yes" : "no", bytes[0].size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-9"};
  std::string only_list = "1,2,3,4,5,6,7,8,9";
  std::string workdir;
  bool keep = false;
  app.add_option("--only", only_list, "Comma-separated criteria to run")->capture_default_str();
  app.add_option("--workdir", workdir, "Scratch directory (default: a fresh temp dir)");
  app.add_flag("--keep", keep, "Keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  std::set<int> only;
  std::stringstream ss(only_list);
  for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));

  const fs::path work =
      workdir.empty() ? fs::temp_directory_path() / ("tagan_acceptance_" + std::to_string(::getpid())) : fs::path(workdir);
  fs::create_directories(work);
  try {
    if (only.contains(1)) GradientCorrectness();
    if (only.contains(2)) FeatureOracles();
    if (only.contains(3)) MetricExactness();
    if (only.contains(4)) StructuralInvariants();
    if (only.contains(8)) Determinism(work);
    if (only.contains(5) || only.contains(6) || only.contains(7) || only.contains(9)) EndToEnd(work, only);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    ++failures;
  }
  if (!keep && workdir.empty()) fs::remove_all(work);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
