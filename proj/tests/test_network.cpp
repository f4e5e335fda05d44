#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tagan/error.hpp"
#include "tagan/network.hpp"

namespace tagan {
namespace {

using M = Matrix<double>;

M Random(Eigen::Index r, Eigen::Index c, std::uint32_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
  return m;
}

ModelShape Small() {
  ModelShape s;
  s.input_dim = 10;
  s.hidden = 8;
  s.noise_dim = 4;
  s.disc_hidden = 6;
  s.future_dim = 5;
  return s;
}

bool BitEqual(const M& a, const M& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

double Sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Lstm, MatchesHandWrittenStep) {
  LstmCell<double> cell("cell", 3, 2);
  Rng rng(4);
  cell.Init(rng);
  const M x0 = Random(1, 3, 1, -1, 1), x1 = Random(1, 3, 2, -1, 1);

  Tape<double> tape;
  BoundLstm<double> bound(tape, cell, false);
  auto s = bound.Initial(1);
  s = bound.Step(tape.Constant(x0), s);
  s = bound.Step(tape.Constant(x1), s);

  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(2), c = Eigen::RowVectorXd::Zero(2);
  for (const M* x : {&x0, &x1}) {
    const Eigen::RowVectorXd z = x->row(0) * cell.w_input.value + h * cell.w_hidden.value + cell.bias.value.row(0);
    Eigen::RowVectorXd next_c(2), next_h(2);
    for (int j = 0; j < 2; ++j) {
      const double i = Sig(z[j]), f = Sig(z[2 + j]), g = std::tanh(z[4 + j]), o = Sig(z[6 + j]);
      next_c[j] = f * c[j] + i * g;
      next_h[j] = o * std::tanh(next_c[j]);
    }
    h = next_h;
    c = next_c;
  }
  EXPECT_NEAR(s.h.value()(0, 0), h[0], 1e-14);
  EXPECT_NEAR(s.h.value()(0, 1), h[1], 1e-14);
  EXPECT_NEAR(s.c.value()(0, 1), c[1], 1e-14);
}

TEST(Lstm, InitRangesAndForgetBias) {
  LstmCell<double> cell("cell", 106, 64);
  Rng rng(7);
  cell.Init(rng);
  const double bound = 1.0 / std::sqrt(106.0 + 64.0);
  EXPECT_LE(cell.w_input.value.cwiseAbs().maxCoeff(), bound);
  EXPECT_LE(cell.w_hidden.value.cwiseAbs().maxCoeff(), bound);
  for (int j = 0; j < 4 * 64; ++j) EXPECT_EQ(cell.bias.value(0, j), j >= 64 && j < 128 ? 1.0 : 0.0);
  EXPECT_EQ(cell.w_input.value.rows(), 106);
  EXPECT_EQ(cell.w_input.value.cols(), 256);
  EXPECT_EQ(cell.w_hidden.value.rows(), 64);
}

TEST(Encoder, ShapeAndDeterminism) {
  ModelShape shape = Small();
  shape.input_dim = 106;
  shape.hidden = 64;
  Model<double> model(shape);
  model.Init(3);
  const M window = Random(100, 106, 5);
  const M c = Encode(model, window);
  EXPECT_EQ(c.rows(), 100);
  EXPECT_EQ(c.cols(), 64);
  EXPECT_TRUE(BitEqual(c, Encode(model, window)));
  Model<double> twin(shape);
  twin.Init(3);
  EXPECT_TRUE(BitEqual(c, Encode(twin, window)));
}

TEST(Encoder, WrongWidth) {
  Model<double> model(Small());
  model.Init(1);
  try {
    Encode(model, Random(5, 11, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
  }
}

TEST(Causality, EncoderPrefixAndPerturbation) {
  Model<double> model(Small());
  model.Init(2);
  const M window = Random(12, 10, 9);
  const M full = Encode(model, window);
  for (int t = 1; t <= 12; ++t) {
    EXPECT_TRUE(BitEqual(Encode(model, M(window.topRows(t))), M(full.topRows(t)))) << t;
    M changed = window;
    changed.bottomRows(12 - t) = Random(12 - t, 10, 100 + t);
    EXPECT_TRUE(BitEqual(M(Encode(model, changed).topRows(t)), M(full.topRows(t)))) << t;
  }
}

TEST(Causality, AudioGeneratorPrefix) {
  Model<double> model(Small());
  model.Init(2);
  const M c = Random(10, 8, 1, -1, 1);
  const M z = Random(1, 4, 2, -1, 1);
  const M full = GenerateFutureAudio(model, c, z);
  ASSERT_EQ(full.rows(), 10);
  ASSERT_EQ(full.cols(), 5);
  for (int t = 1; t <= 10; ++t) {
    EXPECT_TRUE(BitEqual(GenerateFutureAudio(model, M(c.topRows(t)), z), M(full.topRows(t))));
    M changed = c;
    changed.bottomRows(10 - t).setConstant(0.3);
    EXPECT_TRUE(BitEqual(M(GenerateFutureAudio(model, changed, z).topRows(t)), M(full.topRows(t))));
  }
}

TEST(Causality, TemporalDiscriminatorPrefix) {
  Model<double> model(Small());
  model.Init(2);
  const M c = Random(10, 8, 3, -1, 1);
  const M chunks = Random(10, 5, 4);
  const M full = DiscriminateTemporal(model, c, chunks);
  ASSERT_EQ(full.rows(), 10);
  M last = chunks;
  last.row(9).setConstant(0.99);
  const M changed = DiscriminateTemporal(model, c, last);
  EXPECT_TRUE(BitEqual(M(changed.topRows(9)), M(full.topRows(9))));
  EXPECT_NE(changed(9, 0), full(9, 0));
  for (int t = 1; t < 10; ++t) {
    M later = chunks;
    later.bottomRows(10 - t) = Random(10 - t, 5, 50 + t);
    EXPECT_TRUE(BitEqual(M(DiscriminateTemporal(model, c, later).topRows(t)), M(full.topRows(t))));
  }
}

TEST(ZeroParameters, AllOutputsAreHalf) {
  Model<double> model(Small());
  model.Init(1);
  model.SetZero();
  const M c = Encode(model, Random(7, 10, 1));
  const M z = Random(1, 4, 2);
  EXPECT_TRUE((GenerateClassification(model, c, z).array() == 0.5).all());
  EXPECT_TRUE((GenerateFutureAudio(model, c, z).array() == 0.5).all());
  EXPECT_TRUE((DiscriminateStatic(model, c, Random(7, 1, 3)).array() == 0.5).all());
  EXPECT_TRUE((DiscriminateTemporal(model, c, Random(7, 5, 4)).array() == 0.5).all());
}

TEST(Generators, ShapesRangeAndSeededNoise) {
  ModelShape shape = Small();
  shape.hidden = 16;
  Model<double> model(shape);
  model.Init(11);
  const M c = Encode(model, Random(100, 10, 6));
  Rng a(5), b(5);
  const M za = DrawNoise<double>(a, 1, 4), zb = DrawNoise<double>(b, 1, 4);
  const M eta = GenerateClassification(model, c, za);
  EXPECT_EQ(eta.rows(), 100);
  EXPECT_EQ(eta.cols(), 1);
  EXPECT_TRUE(BitEqual(eta, GenerateClassification(model, c, zb)));
  EXPECT_GT(eta.minCoeff(), 0.0);
  EXPECT_LT(eta.maxCoeff(), 1.0);
  const M w = GenerateFutureAudio(model, c, za);
  EXPECT_EQ(w.rows(), 100);
  EXPECT_EQ(w.cols(), 5);
  EXPECT_GT(w.minCoeff(), 0.0);
  EXPECT_LT(w.maxCoeff(), 1.0);
}

TEST(Noise, StandardNormalMoments) {
  Rng rng(3);
  const M z = DrawNoise<double>(rng, 2000, 32);
  EXPECT_NEAR(z.mean(), 0.0, 0.01);
  EXPECT_NEAR((z.array() * z.array()).mean(), 1.0, 0.02);
}

TEST(StaticDiscriminator, PermutationEquivariance) {
  Model<double> model(Small());
  model.Init(8);
  const M c = Random(9, 8, 1, -1, 1);
  const M track = Random(9, 1, 2);
  const M scores = DiscriminateStatic(model, c, track);
  ASSERT_EQ(scores.rows(), 9);
  const std::vector<int> perm = {4, 0, 8, 2, 7, 1, 6, 3, 5};
  M pc(9, 8), pt(9, 1);
  for (int i = 0; i < 9; ++i) {
    pc.row(i) = c.row(perm[i]);
    pt.row(i) = track.row(perm[i]);
  }
  const M permuted = DiscriminateStatic(model, pc, pt);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(permuted(i, 0), scores(perm[i], 0));
  EXPECT_THROW(DiscriminateStatic(model, c, Random(8, 1, 2)), Error);
}

TEST(ParameterCount, ClosedForm) {
  EXPECT_EQ(LstmParameterCount(106, 64), 43776);
  EXPECT_EQ(AffineParameterCount(64, 1), 65);
  for (int h : {3, 8, 64}) {
    const auto hh = [](int hidden) { return LstmParameterCount(0, hidden) - 4 * hidden; };
    EXPECT_EQ(hh(2 * h), 4 * hh(h));
  }
}

TEST(ParameterCount, MatchesStoredValues) {
  for (bool adversarial : {false, true}) {
    for (int future : {0, 80}) {
      for (auto disc : {FutureDiscriminator::kTemporal, FutureDiscriminator::kStaticDuplicate}) {
        ModelShape shape;
        shape.adversarial = adversarial;
        shape.future_dim = future;
        shape.future_disc = disc;
        Model<float> model(shape);
        std::int64_t stored = 0;
        for (auto* p : model.AllParams()) stored += p->value.size();
        EXPECT_EQ(CountParameters(model), stored);
        EXPECT_EQ(CountParameters(shape), stored);
      }
    }
  }
}

TEST(Model, ParameterGroupsPartitionAll) {
  Model<double> model(Small());
  auto gen = model.GeneratorParams();
  auto disc = model.DiscriminatorParams();
  auto all = model.AllParams();
  EXPECT_EQ(gen.size() + disc.size(), all.size());
  for (auto* p : all) EXPECT_NE(gen.Contains(p), disc.Contains(p)) << p->name;
  EXPECT_EQ(all[0].name, "encoder.lstm.w_input");
}

TEST(Model, CopyValuesAcrossPrecision) {
  Model<double> a(Small());
  a.Init(4);
  Model<float> b(Small());
  b.CopyValuesFrom(a);
  auto pa = a.AllParams();
  auto pb = b.AllParams();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE((pa[i].value.cast<float>().array() == pb[i].value.array()).all());
  }
}

}  // namespace
}  // namespace tagan
