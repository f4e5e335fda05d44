#include "tagan/network.hpp"

#include <cmath>

#include "tagan/error.hpp"

namespace tagan {

namespace {

template <typename T>
void FillUniform(Matrix<T>& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(rng.Uniform(-bound, bound));
  }
}

template <typename T>
void CheckSteps(std::span<const Var<T>> a, std::span<const Var<T>> b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + ": " + std::to_string(a.size()) +
                                               " embeddings vs " + std::to_string(b.size()) + " items");
  }
}

}  // namespace

template <typename T>
LstmCell<T>::LstmCell(const std::string& name, int in, int h)
    : input_dim(in),
      hidden(h),
      w_input(name + ".w_input", in, 4 * h),
      w_hidden(name + ".w_hidden", h, 4 * h),
      bias(name + ".bias", 1, 4 * h) {}

template <typename T>
void LstmCell<T>::Init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden));
  FillUniform(w_input.value, bound, rng);
  FillUniform(w_hidden.value, bound, rng);
  bias.value.setZero();
  bias.value.middleCols(hidden, hidden).setConstant(T(1));
}

template <typename T>
Dense<T>::Dense(const std::string& name, int in, int out)
    : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

template <typename T>
void Dense<T>::Init(Rng& rng) {
  FillUniform(weight.value, 1.0 / std::sqrt(static_cast<double>(weight.value.rows())), rng);
  bias.value.setZero();
}

template <typename T>
BoundLstm<T>::BoundLstm(Tape<T>& tape, LstmCell<T>& cell, bool trainable)
    : tape_(&tape),
      hidden_(cell.hidden),
      w_input_(tape.Bind(cell.w_input, trainable)),
      w_hidden_(tape.Bind(cell.w_hidden, trainable)),
      bias_(tape.Bind(cell.bias, trainable)) {}

template <typename T>
LstmState<T> BoundLstm<T>::Initial(Eigen::Index batch) const {
  Var<T> zero = tape_->Constant(Matrix<T>::Zero(batch, hidden_));
  return {zero, zero};
}

template <typename T>
LstmState<T> BoundLstm<T>::Step(Var<T> x, const LstmState<T>& prev) const {
  Tape<T>& t = *tape_;
  const Eigen::Index h = hidden_;
  Var<T> gates = t.Add(t.Affine(x, w_input_, bias_), t.MatMul(prev.h, w_hidden_));
  Var<T> in_gate = t.Sigmoid(t.SliceCols(gates, 0, h));
  Var<T> forget_gate = t.Sigmoid(t.SliceCols(gates, h, h));
  Var<T> candidate = t.Tanh(t.SliceCols(gates, 2 * h, h));
  Var<T> out_gate = t.Sigmoid(t.SliceCols(gates, 3 * h, h));
  Var<T> c = t.Add(t.Mul(forget_gate, prev.c), t.Mul(in_gate, candidate));
  Var<T> hidden = t.Mul(out_gate, t.Tanh(c));
  return {hidden, c};
}

template <typename T>
BoundDense<T>::BoundDense(Tape<T>& tape, Dense<T>& layer, bool trainable)
    : tape_(&tape), weight_(tape.Bind(layer.weight, trainable)), bias_(tape.Bind(layer.bias, trainable)) {}

template <typename T>
std::vector<Var<T>> Encoder<T>::Forward(Tape<T>& tape, std::span<const Var<T>> steps, bool trainable) {
  BoundLstm<T> lstm(tape, cell, trainable);
  std::vector<Var<T>> out;
  out.reserve(steps.size());
  if (steps.empty()) return out;
  LstmState<T> state = lstm.Initial(steps[0].rows());
  for (const auto& x : steps) {
    if (x.cols() != cell.input_dim) {
      throw Error(ErrorKind::kShapeMismatch, "encoder input width " + std::to_string(x.cols()) +
                                                 ", expected " + std::to_string(cell.input_dim));
    }
    state = lstm.Step(x, state);
    out.push_back(state.h);
  }
  return out;
}

template <typename T>
SequenceGenerator<T>::SequenceGenerator(const std::string& name, int hidden, int noise_dim, int out_dim)
    : lower(name + ".lstm0", hidden + noise_dim, hidden),
      upper(name + ".lstm1", hidden, hidden),
      head(name + ".head", hidden, out_dim) {}

template <typename T>
std::vector<Var<T>> SequenceGenerator<T>::Forward(Tape<T>& tape, std::span<const Var<T>> embeddings,
                                                  Var<T> noise, bool trainable) {
  BoundLstm<T> l0(tape, lower, trainable);
  BoundLstm<T> l1(tape, upper, trainable);
  BoundDense<T> proj(tape, head, trainable);
  std::vector<Var<T>> out;
  out.reserve(embeddings.size());
  if (embeddings.empty()) return out;
  const Eigen::Index batch = embeddings[0].rows();
  if (noise.rows() != batch || embeddings[0].cols() + noise.cols() != lower.input_dim) {
    throw Error(ErrorKind::kShapeMismatch, "generator input [c ; z] has wrong width or batch");
  }
  LstmState<T> s0 = l0.Initial(batch);
  LstmState<T> s1 = l1.Initial(batch);
  for (const auto& c : embeddings) {
    const Var<T> parts[] = {c, noise};
    s0 = l0.Step(tape.ConcatCols(parts), s0);
    s1 = l1.Step(s0.h, s1);
    out.push_back(tape.Sigmoid(proj(s1.h)));
  }
  return out;
}

template <typename T>
StaticDiscriminator<T>::StaticDiscriminator(const std::string& name, int embed_dim, int item_dim,
                                            int disc_hidden)
    : hidden(name + ".hidden", embed_dim + item_dim, disc_hidden), out(name + ".out", disc_hidden, 1) {}

template <typename T>
std::vector<Var<T>> StaticDiscriminator<T>::Forward(Tape<T>& tape, std::span<const Var<T>> embeddings,
                                                    std::span<const Var<T>> items, bool trainable) {
  CheckSteps(embeddings, items, "static discriminator");
  BoundDense<T> l0(tape, hidden, trainable);
  BoundDense<T> l1(tape, out, trainable);
  std::vector<Var<T>> scores;
  scores.reserve(items.size());
  for (std::size_t t = 0; t < items.size(); ++t) {
    const Var<T> parts[] = {embeddings[t], items[t]};
    scores.push_back(tape.Sigmoid(l1(tape.Tanh(l0(tape.ConcatCols(parts))))));
  }
  return scores;
}

template <typename T>
TemporalDiscriminator<T>::TemporalDiscriminator(const std::string& name, int embed_dim, int item_dim,
                                                int disc_hidden)
    : cell(name + ".lstm", embed_dim + item_dim, disc_hidden), head(name + ".head", disc_hidden, 1) {}

template <typename T>
std::vector<Var<T>> TemporalDiscriminator<T>::Forward(Tape<T>& tape, std::span<const Var<T>> embeddings,
                                                      std::span<const Var<T>> items, bool trainable) {
  CheckSteps(embeddings, items, "temporal discriminator");
  BoundLstm<T> lstm(tape, cell, trainable);
  BoundDense<T> proj(tape, head, trainable);
  std::vector<Var<T>> scores;
  scores.reserve(items.size());
  if (items.empty()) return scores;
  LstmState<T> state = lstm.Initial(items[0].rows());
  for (std::size_t t = 0; t < items.size(); ++t) {
    const Var<T> parts[] = {embeddings[t], items[t]};
    state = lstm.Step(tape.ConcatCols(parts), state);
    scores.push_back(tape.Sigmoid(proj(state.h)));
  }
  return scores;
}

template <typename T>
Model<T>::Model(const ModelShape& shape)
    : encoder(shape.input_dim, shape.hidden),
      classifier("gen_eta", shape.hidden, shape.noise_dim, 1),
      shape_(shape) {
  if (shape.input_dim <= 0 || shape.hidden <= 0 || shape.noise_dim < 0 || shape.disc_hidden <= 0 ||
      shape.future_dim < 0) {
    throw Error(ErrorKind::kConfigError, "invalid model dimensions");
  }
  if (shape.predicts_future()) audio.emplace("gen_w", shape.hidden, shape.noise_dim, shape.future_dim);
  if (shape.adversarial) {
    static_disc.emplace("disc_eta", shape.hidden, 1, shape.disc_hidden);
    if (shape.predicts_future()) {
      if (shape.future_disc == FutureDiscriminator::kTemporal) {
        temporal_disc.emplace("disc_w", shape.hidden, shape.future_dim, shape.disc_hidden);
      } else {
        future_static_disc.emplace("disc_w_static", shape.hidden, shape.future_dim, shape.disc_hidden);
      }
    }
  }
}

template <typename T>
void Model<T>::Init(std::uint64_t seed) {
  Rng rng(seed);
  encoder.Init(rng);
  classifier.Init(rng);
  if (audio) audio->Init(rng);
  if (static_disc) static_disc->Init(rng);
  if (temporal_disc) temporal_disc->Init(rng);
  if (future_static_disc) future_static_disc->Init(rng);
}

template <typename T>
void Model<T>::SetZero() {
  for (auto* p : AllParams()) p->value.setZero();
}

template <typename T>
ParameterSet<T> Model<T>::EncoderParams() {
  ParameterSet<T> set;
  encoder.Register(set);
  return set;
}

template <typename T>
ParameterSet<T> Model<T>::GeneratorParams() {
  ParameterSet<T> set = EncoderParams();
  classifier.Register(set);
  if (audio) audio->Register(set);
  return set;
}

template <typename T>
ParameterSet<T> Model<T>::StaticDiscriminatorParams() {
  ParameterSet<T> set;
  if (static_disc) static_disc->Register(set);
  return set;
}

template <typename T>
ParameterSet<T> Model<T>::FutureDiscriminatorParams() {
  ParameterSet<T> set;
  if (temporal_disc) temporal_disc->Register(set);
  if (future_static_disc) future_static_disc->Register(set);
  return set;
}

template <typename T>
ParameterSet<T> Model<T>::DiscriminatorParams() {
  ParameterSet<T> set = StaticDiscriminatorParams();
  set.Append(FutureDiscriminatorParams());
  return set;
}

template <typename T>
ParameterSet<T> Model<T>::AllParams() {
  ParameterSet<T> set = GeneratorParams();
  set.Append(DiscriminatorParams());
  return set;
}

template <typename T>
template <typename U>
void Model<T>::CopyValuesFrom(Model<U>& other) {
  if (!(other.shape() == shape_)) throw Error(ErrorKind::kShapeMismatch, "model shapes differ");
  auto dst = AllParams();
  auto src = other.AllParams();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].value = src[i].value.template cast<T>();
}

std::int64_t LstmParameterCount(int input_dim, int hidden) {
  const std::int64_t h = hidden;
  return 4 * (h * (input_dim + h) + h);
}

std::int64_t AffineParameterCount(int in, int out) {
  return static_cast<std::int64_t>(in) * out + out;
}

std::int64_t CountParameters(const ModelShape& s) {
  const auto generator = [&](int out_dim) {
    return LstmParameterCount(s.hidden + s.noise_dim, s.hidden) + LstmParameterCount(s.hidden, s.hidden) +
           AffineParameterCount(s.hidden, out_dim);
  };
  const auto static_disc = [&](int item_dim) {
    return AffineParameterCount(s.hidden + item_dim, s.disc_hidden) + AffineParameterCount(s.disc_hidden, 1);
  };
  std::int64_t n = LstmParameterCount(s.input_dim, s.hidden) + generator(1);
  if (s.predicts_future()) n += generator(s.future_dim);
  if (s.adversarial) {
    n += static_disc(1);
    if (s.predicts_future()) {
      n += s.future_disc == FutureDiscriminator::kTemporal
               ? LstmParameterCount(s.hidden + s.future_dim, s.disc_hidden) + AffineParameterCount(s.disc_hidden, 1)
               : static_disc(s.future_dim);
    }
  }
  return n;
}

template <typename T>
std::vector<Var<T>> WindowSteps(Tape<T>& tape, const Matrix<T>& window) {
  std::vector<Var<T>> steps;
  steps.reserve(static_cast<std::size_t>(window.rows()));
  for (Eigen::Index t = 0; t < window.rows(); ++t) steps.push_back(tape.Constant(window.row(t)));
  return steps;
}

template <typename T>
Matrix<T> StackSteps(std::span<const Var<T>> steps) {
  if (steps.empty()) return {};
  Matrix<T> out(static_cast<Eigen::Index>(steps.size()), steps[0].cols());
  for (std::size_t t = 0; t < steps.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = steps[t].value().row(0);
  return out;
}

template <typename T>
Matrix<T> Encode(Model<T>& model, const Matrix<T>& window) {
  Tape<T> tape;
  auto steps = WindowSteps(tape, window);
  auto c = model.encoder.Forward(tape, steps, false);
  return StackSteps<T>(c);
}

template <typename T>
Matrix<T> GenerateClassification(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& noise) {
  Tape<T> tape;
  auto c = WindowSteps(tape, embeddings);
  auto out = model.classifier.Forward(tape, c, tape.Constant(noise), false);
  return StackSteps<T>(out);
}

template <typename T>
Matrix<T> GenerateFutureAudio(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& noise) {
  if (!model.audio) throw Error(ErrorKind::kConfigError, "model has no audio generator");
  Tape<T> tape;
  auto c = WindowSteps(tape, embeddings);
  auto out = model.audio->Forward(tape, c, tape.Constant(noise), false);
  return StackSteps<T>(out);
}

template <typename T>
Matrix<T> DiscriminateStatic(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& track) {
  if (!model.static_disc) throw Error(ErrorKind::kConfigError, "model has no static discriminator");
  if (embeddings.rows() != track.rows()) throw Error(ErrorKind::kShapeMismatch, "track length differs");
  Tape<T> tape;
  auto c = WindowSteps(tape, embeddings);
  auto items = WindowSteps(tape, track);
  auto out = model.static_disc->Forward(tape, c, items, false);
  return StackSteps<T>(out);
}

template <typename T>
Matrix<T> DiscriminateTemporal(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& chunks) {
  if (!model.temporal_disc) throw Error(ErrorKind::kConfigError, "model has no temporal discriminator");
  if (embeddings.rows() != chunks.rows()) throw Error(ErrorKind::kShapeMismatch, "chunk count differs");
  Tape<T> tape;
  auto c = WindowSteps(tape, embeddings);
  auto items = WindowSteps(tape, chunks);
  auto out = model.temporal_disc->Forward(tape, c, items, false);
  return StackSteps<T>(out);
}

template <typename T>
Matrix<T> DrawNoise(Rng& rng, Eigen::Index batch, int noise_dim) {
  Matrix<T> z(batch, noise_dim);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<T>(rng.Normal());
  return z;
}

#define TAGAN_INSTANTIATE(T)                                                                       \
  template struct LstmCell<T>;                                                                     \
  template struct Dense<T>;                                                                        \
  template class BoundLstm<T>;                                                                     \
  template class BoundDense<T>;                                                                    \
  template struct Encoder<T>;                                                                      \
  template struct SequenceGenerator<T>;                                                            \
  template struct StaticDiscriminator<T>;                                                          \
  template struct TemporalDiscriminator<T>;                                                        \
  template class Model<T>;                                                                         \
  template std::vector<Var<T>> WindowSteps(Tape<T>&, const Matrix<T>&);                            \
  template Matrix<T> StackSteps(std::span<const Var<T>>);                                          \
  template Matrix<T> Encode(Model<T>&, const Matrix<T>&);                                          \
  template Matrix<T> GenerateClassification(Model<T>&, const Matrix<T>&, const Matrix<T>&);        \
  template Matrix<T> GenerateFutureAudio(Model<T>&, const Matrix<T>&, const Matrix<T>&);           \
  template Matrix<T> DiscriminateStatic(Model<T>&, const Matrix<T>&, const Matrix<T>&);            \
  template Matrix<T> DiscriminateTemporal(Model<T>&, const Matrix<T>&, const Matrix<T>&);          \
  template Matrix<T> DrawNoise<T>(Rng&, Eigen::Index, int);

TAGAN_INSTANTIATE(float)
TAGAN_INSTANTIATE(double)
#undef TAGAN_INSTANTIATE

template void Model<float>::CopyValuesFrom(Model<float>&);
template void Model<float>::CopyValuesFrom(Model<double>&);
template void Model<double>::CopyValuesFrom(Model<float>&);
template void Model<double>::CopyValuesFrom(Model<double>&);

}  // namespace tagan
