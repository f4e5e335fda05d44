#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "tagan/error.hpp"
#include "tagan/training.hpp"

namespace tagan {
namespace {

using M = Matrix<double>;
const double kLn2 = std::numbers::ln2;

M Random(Eigen::Index r, Eigen::Index c, std::uint32_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
  return m;
}

ModelShape Small(bool adversarial = true, int future = 3) {
  ModelShape s;
  s.input_dim = 5;
  s.hidden = 4;
  s.noise_dim = 2;
  s.disc_hidden = 3;
  s.future_dim = future;
  s.adversarial = adversarial;
  return s;
}

std::vector<PreparedWindow> Windows(std::size_t n, int steps, int in, int future, std::uint32_t seed) {
  std::vector<PreparedWindow> out(n);
  std::mt19937 gen(seed);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].input = Random(steps, in, seed * 100 + static_cast<std::uint32_t>(i));
    if (future > 0) out[i].future = Random(steps, future, seed * 200 + static_cast<std::uint32_t>(i));
    for (int t = 0; t < steps; ++t) out[i].labels.push_back(static_cast<std::uint8_t>(gen() % 2));
  }
  return out;
}

std::vector<const PreparedWindow*> Pointers(const std::vector<PreparedWindow>& w) {
  std::vector<const PreparedWindow*> out;
  for (const auto& x : w) out.push_back(&x);
  return out;
}

TEST(Bce, Examples) {
  EXPECT_NEAR(Bce(0.5, 1), kLn2, 1e-15);
  EXPECT_NEAR(Bce(1.0 - 1e-7, 1), 1e-7, 1e-12);
  EXPECT_NEAR(Bce(0.0, 1), -std::log(1e-7), 1e-12);
  EXPECT_NEAR(Bce(0.0, 1), 16.118095650958319, 1e-12);
  EXPECT_NEAR(Bce(1.0, 0), -std::log(1e-7), 1e-9);
}

TEST(StaticLosses, AnalyticAtHalfScores) {
  Model<double> model(Small());
  model.SetZero();
  const M c = Random(1, 4, 1);
  M eta(1, 1), eta_hat(1, 1);
  eta << 1.0;
  eta_hat << 1.0;
  LossPair same = StaticLosses(model, c, eta, eta_hat, 30.0);
  EXPECT_NEAR(same.generator, kLn2, 1e-15);
  EXPECT_NEAR(same.discriminator, 2.0 * kLn2, 1e-15);
  eta_hat << 0.5;
  const LossPair off = StaticLosses(model, c, eta, eta_hat, 30.0);
  EXPECT_NEAR(off.generator, kLn2 + 7.5, 1e-12);
  EXPECT_NEAR(off.generator, 8.193, 5e-4);
  EXPECT_EQ(StaticLosses(model, c, eta, eta_hat, 0.0).generator, kLn2);
  EXPECT_THROW(StaticLosses(model, c, M(M::Zero(2, 1)), eta_hat, 1.0), Error);
}

TEST(TemporalLosses, AnalyticAtHalfScores) {
  Model<double> model(Small());
  model.SetZero();
  const M c = Random(3, 4, 2);
  const M w = Random(3, 3, 3);
  const LossPair same = TemporalLosses(model, c, w, w, 25.0);
  EXPECT_NEAR(same.discriminator, 6.0 * kLn2, 1e-14);
  EXPECT_NEAR(same.generator, 3.0 * kLn2, 1e-14);
  EXPECT_THROW(TemporalLosses(model, c, w, Random(3, 2, 1), 1.0), Error);
}

TEST(PrefixL2, TwoStepExpansion) {
  Tape<double> tape;
  M t1(1, 2), t2(1, 2), p1(1, 2), p2(1, 2);
  t1 << 1.0, 0.5;
  p1 << 0.0, 0.0;  // e1^2 = 1.25
  t2 << 0.25, 0.0;
  p2 << 0.0, 0.0;  // e2^2 = 0.0625
  const Var<double> truth[] = {tape.Constant(t1), tape.Constant(t2)};
  const Var<double> pred[] = {tape.Constant(p1), tape.Constant(p2)};
  EXPECT_EQ(PrefixL2<double>(tape, truth, pred).scalar(), 2.0 * 1.25 + 0.0625);
}

TEST(PrefixL2, TriangularIdentityExact) {
  std::mt19937 gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int steps = 1 + static_cast<int>(gen() % 30);
    Tape<double> tape;
    std::vector<Var<double>> truth, pred;
    std::vector<double> sq(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      // Multiples of 1/16 keep every square and partial sum exact.
      M a(2, 3), b(2, 3);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = static_cast<double>(gen() % 33) / 16.0;
        b.data()[i] = static_cast<double>(gen() % 33) / 16.0;
      }
      sq[static_cast<std::size_t>(t)] = (a - b).squaredNorm();
      truth.push_back(tape.Constant(a));
      pred.push_back(tape.Constant(b));
    }
    double expected = 0.0;
    for (int j = 0; j < steps; ++j) expected += (steps - j) * sq[static_cast<std::size_t>(j)];
    EXPECT_EQ(PrefixL2<double>(tape, truth, pred).scalar(), expected);
  }
}

TEST(PrefixL2, RandomErrorsMatchWeightedSum) {
  Tape<double> tape;
  std::vector<Var<double>> truth, pred;
  std::vector<double> sq;
  for (int t = 0; t < 100; ++t) {
    const M a = Random(4, 80, 10 + t), b = Random(4, 80, 500 + t);
    sq.push_back((a - b).squaredNorm());
    truth.push_back(tape.Constant(a));
    pred.push_back(tape.Constant(b));
  }
  double expected = 0.0;
  for (int j = 0; j < 100; ++j) expected += (100 - j) * sq[static_cast<std::size_t>(j)];
  EXPECT_NEAR(PrefixL2<double>(tape, truth, pred).scalar(), expected, 1e-12 * expected);
}

TEST(CombineObjectives, SumsComponents) {
  const LossPair v = CombineObjectives({1.5, 2.0}, {0.25, 4.0});
  EXPECT_EQ(v.generator, 1.75);
  EXPECT_EQ(v.discriminator, 6.0);
  const LossPair single = CombineObjectives({1.5, 2.0}, {});
  EXPECT_EQ(single.generator, 1.5);
  EXPECT_EQ(single.discriminator, 2.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter<double> p("p", 2, 3);
  p.value = Random(2, 3, 1);
  const M before = p.value;
  ParameterSet<double> set;
  set.Add(p);
  Adam<double> opt(set, AdamConfig{});
  opt.Step();
  EXPECT_TRUE((p.value.array() == before.array()).all());
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  Parameter<double> a("a", 1, 1), b("b", 1, 1);
  a.grad(0, 0) = 0.3;
  b.grad(0, 0) = -12.0;
  ParameterSet<double> set;
  set.Add(a);
  set.Add(b);
  Adam<double> opt(set, AdamConfig{});
  opt.Step();
  EXPECT_NEAR(a.value(0, 0), -0.005, 1e-9);
  EXPECT_NEAR(b.value(0, 0), 0.005, 1e-9);
  EXPECT_NEAR(std::abs(a.value(0, 0)), std::abs(b.value(0, 0)), 1e-9);
}

TEST(Adam, MatchesReferenceOverSteps) {
  Parameter<double> p("p", 1, 1);
  p.value(0, 0) = 1.0;
  ParameterSet<double> set;
  set.Add(p);
  AdamConfig cfg;
  Adam<double> opt(set, cfg);
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.0 * x;  // d/dx x^2
    p.grad(0, 0) = g;
    opt.Step();
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t)), vh = v / (1 - std::pow(cfg.beta2, t));
    x -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    EXPECT_NEAR(p.value(0, 0), x, 1e-14);
  }
}

TEST(Adam, ShapeMismatch) {
  Parameter<double> p("p", 2, 2);
  ParameterSet<double> set;
  set.Add(p);
  Adam<double> opt(set, AdamConfig{});
  p.grad = M::Zero(3, 2);
  EXPECT_THROW(opt.Step(), Error);
}

TEST(Isolation, GeneratorPhaseLeavesDiscriminatorsAtZero) {
  for (auto disc : {FutureDiscriminator::kTemporal, FutureDiscriminator::kStaticDuplicate}) {
    ModelShape shape = Small();
    shape.future_disc = disc;
    Model<double> model(shape);
    model.Init(3);
    const auto w = Windows(4, 6, 5, 3, 1);
    const auto batch = Pointers(w);
    Rng rng(2);
    const M noise = DrawNoise<double>(rng, 4, 2);
    TrainConfig cfg;

    model.AllParams().ZeroGrad();
    AccumulateBatchGradients<double>(model, batch, noise, Phase::kGenerator, cfg);
    for (auto* p : model.DiscriminatorParams()) EXPECT_TRUE((p->grad.array() == 0.0).all()) << p->name;
    double gen_norm = 0.0;
    for (auto* p : model.GeneratorParams()) gen_norm += p->grad.squaredNorm();
    EXPECT_GT(gen_norm, 0.0);

    model.AllParams().ZeroGrad();
    AccumulateBatchGradients<double>(model, batch, noise, Phase::kDiscriminator, cfg);
    for (auto* p : model.GeneratorParams()) EXPECT_TRUE((p->grad.array() == 0.0).all()) << p->name;
    for (auto* p : model.DiscriminatorParams()) EXPECT_GT(p->grad.squaredNorm(), 0.0) << p->name;
  }
}

TEST(LossReport, ZeroLambdaRemovesL2Exactly) {
  Model<double> model(Small());
  model.Init(5);
  const auto w = Windows(3, 5, 5, 3, 2);
  const auto batch = Pointers(w);
  Rng rng(1);
  const M noise = DrawNoise<double>(rng, 3, 2);
  TrainConfig cfg;
  cfg.lambda_eta = 0.0;
  cfg.lambda_w = 0.0;
  const LossReport r = AccumulateBatchGradients<double>(model, batch, noise, Phase::kGenerator, cfg);
  EXPECT_EQ(r.l2_eta, 0.0);
  EXPECT_EQ(r.l2_w, 0.0);
  cfg.lambda_eta = 30.0;
  cfg.lambda_w = 25.0;
  cfg.use_l2 = false;
  const LossReport off = AccumulateBatchGradients<double>(model, batch, noise, Phase::kGenerator, cfg);
  EXPECT_EQ(off.l2_eta, 0.0);
  EXPECT_EQ(off.l2_w, 0.0);
  EXPECT_EQ(off.total_generator, r.total_generator);
}

TEST(LossReport, MatchesValueLevelLosses) {
  Model<double> model(Small());
  model.Init(6);
  const auto w = Windows(1, 5, 5, 3, 3);
  const auto batch = Pointers(w);
  Rng rng(1);
  const M noise = DrawNoise<double>(rng, 1, 2);
  TrainConfig cfg;
  const LossReport r = AccumulateBatchGradients<double>(model, batch, noise, Phase::kGenerator, cfg);

  const M c = Encode(model, w[0].input);
  const M eta_hat = GenerateClassification(model, c, noise);
  const M w_hat = GenerateFutureAudio(model, c, noise);
  M eta(5, 1);
  for (int t = 0; t < 5; ++t) eta(t, 0) = w[0].labels[static_cast<std::size_t>(t)];
  const LossPair s = StaticLosses(model, c, eta, eta_hat, cfg.lambda_eta);
  const LossPair tl = TemporalLosses(model, c, w[0].future, w_hat, cfg.lambda_w);
  EXPECT_NEAR(r.eta_generator, s.generator, 1e-12);
  EXPECT_NEAR(r.eta_discriminator, s.discriminator, 1e-12);
  EXPECT_NEAR(r.w_generator, tl.generator, 1e-10);
  EXPECT_NEAR(r.w_discriminator, tl.discriminator, 1e-12);
  EXPECT_NEAR(r.total_generator, s.generator + tl.generator, 1e-10);
}

// Full-size streams, H = 8, T = 6, fp64, frozen noise.
struct GradCase {
  explicit GradCase(std::uint64_t seed) : model(Shape()), windows(Windows(2, 6, 106, 80, static_cast<std::uint32_t>(seed))) {
    model.Init(seed);
    Rng rng(seed + 100);
    noise = DrawNoise<double>(rng, 2, 32);
    cfg.detach_condition = false;
  }
  static ModelShape Shape() {
    ModelShape s;
    s.hidden = 8;
    s.disc_hidden = 8;
    return s;
  }
  double Check(Phase phase, const ParameterSet<double>& params, std::uint64_t seed) {
    const auto batch = Pointers(windows);
    return ad::GradientCheck(
               [&](Tape<double>& tape) { return BatchObjective<double>(tape, model, batch, noise, phase, cfg); },
               params, 25, seed)
        .max_relative_error;
  }
  Model<double> model;
  std::vector<PreparedWindow> windows;
  M noise;
  TrainConfig cfg;
};

ParameterSet<double> Registered(auto& module) {
  ParameterSet<double> set;
  module.Register(set);
  return set;
}

TEST(GradientCheck, EverySubnetworkAndFullObjective) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GradCase g(seed);
    EXPECT_LT(g.Check(Phase::kGenerator, g.model.EncoderParams(), seed), 1e-4) << "encoder " << seed;
    EXPECT_LT(g.Check(Phase::kGenerator, Registered(g.model.classifier), seed), 1e-4) << "G_eta " << seed;
    EXPECT_LT(g.Check(Phase::kGenerator, Registered(*g.model.audio), seed), 1e-4) << "G_w " << seed;
    EXPECT_LT(g.Check(Phase::kDiscriminator, g.model.StaticDiscriminatorParams(), seed), 1e-4) << "D_eta " << seed;
    EXPECT_LT(g.Check(Phase::kDiscriminator, g.model.FutureDiscriminatorParams(), seed), 1e-4) << "D_w " << seed;
    EXPECT_LT(g.Check(Phase::kGenerator, g.model.GeneratorParams(), seed), 1e-4) << "generator loss " << seed;
    EXPECT_LT(g.Check(Phase::kDiscriminator, g.model.DiscriminatorParams(), seed), 1e-4) << "discriminator loss " << seed;
  }
}

TEST(GradientCheck, DetachedConditionOnGeneratorHeads) {
  GradCase g(4);
  g.cfg.detach_condition = true;
  EXPECT_LT(g.Check(Phase::kGenerator, Registered(g.model.classifier), 4), 1e-4);
  EXPECT_LT(g.Check(Phase::kGenerator, Registered(*g.model.audio), 4), 1e-4);
}

TEST(Fit, ScheduleAlternatesStartingWithGenerator) {
  Model<double> model(Small());
  model.Init(1);
  const auto w = Windows(5, 6, 5, 3, 6);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.window = 6;
  const auto history = Fit<double>(model, w, cfg);
  ASSERT_EQ(history.size(), 4u);
  EXPECT_EQ(history[0].phase, Phase::kGenerator);
  EXPECT_EQ(history[1].phase, Phase::kDiscriminator);
  EXPECT_EQ(history[2].phase, Phase::kGenerator);
  EXPECT_EQ(history[3].epoch, 3);
}

TEST(Fit, NonAdversarialTrainsEveryEpoch) {
  Model<double> model(Small(false, 3));
  model.Init(1);
  const auto w = Windows(5, 6, 5, 3, 6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.window = 6;
  const auto history = Fit<double>(model, w, cfg);
  for (const auto& r : history) {
    EXPECT_EQ(r.phase, Phase::kGenerator);
    EXPECT_EQ(r.eta_discriminator, 0.0);
    EXPECT_GT(r.w_generator, 0.0);
  }
  EXPECT_LT(history.back().eta_generator, history.front().eta_generator);
}

TEST(Fit, DeterministicAndSeedSensitive) {
  const auto w = Windows(7, 6, 5, 3, 7);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 3;
  cfg.window = 6;
  auto run = [&](std::uint64_t seed) {
    cfg.seed = seed;
    Model<float> model(Small());
    model.Init(seed);
    auto h = Fit<float>(model, w, cfg);
    return std::make_pair(h, LossLogRow(h[0]));
  };
  const auto a = run(7), b = run(7), c = run(8);
  EXPECT_EQ(a.second, b.second);
  EXPECT_EQ(LossLogRow(a.first.back()), LossLogRow(b.first.back()));
  EXPECT_NE(a.second, c.second);
}

TEST(Fit, Errors) {
  Model<double> model(Small());
  TrainConfig cfg;
  try {
    Fit<double>(model, std::span<const PreparedWindow>{}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoData);
  }
  auto w = Windows(2, 4, 5, 3, 1);
  w[1].input(0, 0) = std::numeric_limits<double>::quiet_NaN();
  cfg.epochs = 2;
  cfg.window = 4;
  model.Init(1);
  try {
    Fit<double>(model, w, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos) << e.what();
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  EXPECT_EQ(cfg.hop(), 50);
  cfg.lambda_w = -1.0;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = {};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.Validate(), Error);
}

TEST(LossLog, HeaderMatchesRowWidth) {
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), '\t'); };
  EXPECT_EQ(count(LossLogHeader()), count(LossLogRow(LossReport{})));
}

}  // namespace
}  // namespace tagan
