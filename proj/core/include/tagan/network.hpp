#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tagan/autodiff.hpp"
#include "tagan/rng.hpp"

namespace tagan {

using ad::Matrix;
using ad::Parameter;
using ad::ParameterSet;
using ad::Tape;
using ad::Var;

enum class FutureDiscriminator { kTemporal, kStaticDuplicate };

struct ModelShape {
  int input_dim = 106;
  int hidden = 64;
  int noise_dim = 32;
  int disc_hidden = 64;
  // Width of one future step; 0 disables the audio generator.
  int future_dim = 80;
  // Without discriminators the generators are trained with direct losses.
  bool adversarial = true;
  FutureDiscriminator future_disc = FutureDiscriminator::kTemporal;

  bool predicts_future() const { return future_dim > 0; }
  bool operator==(const ModelShape&) const = default;
};

// Gate blocks along the 4H axis are ordered [input | forget | cell | output].
template <typename T>
struct LstmCell {
  int input_dim = 0;
  int hidden = 0;
  Parameter<T> w_input;   // I x 4H
  Parameter<T> w_hidden;  // H x 4H
  Parameter<T> bias;      // 1 x 4H

  LstmCell() = default;
  LstmCell(const std::string& name, int in, int h);
  void Register(ParameterSet<T>& set) { set.Add(w_input); set.Add(w_hidden); set.Add(bias); }
  void Init(Rng& rng);
};

template <typename T>
struct Dense {
  Parameter<T> weight;  // in x out
  Parameter<T> bias;    // 1 x out

  Dense() = default;
  Dense(const std::string& name, int in, int out);
  void Register(ParameterSet<T>& set) { set.Add(weight); set.Add(bias); }
  void Init(Rng& rng);
};

template <typename T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

// An LSTM cell whose parameters have been placed on a tape.
template <typename T>
class BoundLstm {
 public:
  BoundLstm(Tape<T>& tape, LstmCell<T>& cell, bool trainable);
  LstmState<T> Initial(Eigen::Index batch) const;
  LstmState<T> Step(Var<T> x, const LstmState<T>& prev) const;

 private:
  Tape<T>* tape_;
  int hidden_;
  Var<T> w_input_, w_hidden_, bias_;
};

template <typename T>
class BoundDense {
 public:
  BoundDense(Tape<T>& tape, Dense<T>& layer, bool trainable);
  Var<T> operator()(Var<T> x) const { return tape_->Affine(x, weight_, bias_); }

 private:
  Tape<T>* tape_;
  Var<T> weight_, bias_;
};

// f^E: one LSTM cell over the per-frame input streams.
template <typename T>
struct Encoder {
  LstmCell<T> cell;

  Encoder() = default;
  Encoder(int input_dim, int hidden) : cell("encoder.lstm", input_dim, hidden) {}
  void Register(ParameterSet<T>& set) { cell.Register(set); }
  void Init(Rng& rng) { cell.Init(rng); }

  // One B x I matrix per step in, one B x H embedding per step out.
  std::vector<Var<T>> Forward(Tape<T>& tape, std::span<const Var<T>> steps, bool trainable);
};

// Two stacked LSTM cells over [c_t ; z] plus an affine + sigmoid head. Used for
// both G^eta (out_dim 1) and G^w (out_dim = future step width).
template <typename T>
struct SequenceGenerator {
  LstmCell<T> lower;
  LstmCell<T> upper;
  Dense<T> head;

  SequenceGenerator() = default;
  SequenceGenerator(const std::string& name, int hidden, int noise_dim, int out_dim);
  void Register(ParameterSet<T>& set) { lower.Register(set); upper.Register(set); head.Register(set); }
  void Init(Rng& rng) { lower.Init(rng); upper.Init(rng); head.Init(rng); }

  std::vector<Var<T>> Forward(Tape<T>& tape, std::span<const Var<T>> embeddings, Var<T> noise,
                              bool trainable);
};

// D^eta: per-frame scorer on [c_t ; x_t] with one tanh hidden layer.
template <typename T>
struct StaticDiscriminator {
  Dense<T> hidden;
  Dense<T> out;

  StaticDiscriminator() = default;
  StaticDiscriminator(const std::string& name, int embed_dim, int item_dim, int disc_hidden);
  void Register(ParameterSet<T>& set) { hidden.Register(set); out.Register(set); }
  void Init(Rng& rng) { hidden.Init(rng); out.Init(rng); }

  std::vector<Var<T>> Forward(Tape<T>& tape, std::span<const Var<T>> embeddings,
                              std::span<const Var<T>> items, bool trainable);
};

// D^w: one LSTM cell over [c_t ; chunk_t]; score t judges the length-t prefix.
template <typename T>
struct TemporalDiscriminator {
  LstmCell<T> cell;
  Dense<T> head;

  TemporalDiscriminator() = default;
  TemporalDiscriminator(const std::string& name, int embed_dim, int item_dim, int disc_hidden);
  void Register(ParameterSet<T>& set) { cell.Register(set); head.Register(set); }
  void Init(Rng& rng) { cell.Init(rng); head.Init(rng); }

  std::vector<Var<T>> Forward(Tape<T>& tape, std::span<const Var<T>> embeddings,
                              std::span<const Var<T>> items, bool trainable);
};

template <typename T>
class Model {
 public:
  Model() = default;
  explicit Model(const ModelShape& shape);

  const ModelShape& shape() const { return shape_; }

  void Init(std::uint64_t seed);
  void SetZero();

  // Declaration order: encoder, G^eta, G^w, D^eta, D^w.
  ParameterSet<T> EncoderParams();
  ParameterSet<T> GeneratorParams();  // encoder + both generators
  ParameterSet<T> StaticDiscriminatorParams();
  ParameterSet<T> FutureDiscriminatorParams();
  ParameterSet<T> DiscriminatorParams();
  ParameterSet<T> AllParams();

  template <typename U>
  void CopyValuesFrom(Model<U>& other);

  Encoder<T> encoder;
  SequenceGenerator<T> classifier;
  std::optional<SequenceGenerator<T>> audio;
  std::optional<StaticDiscriminator<T>> static_disc;
  std::optional<TemporalDiscriminator<T>> temporal_disc;
  std::optional<StaticDiscriminator<T>> future_static_disc;  // dual-static variant

 private:
  ModelShape shape_;
};

// Closed-form trainable parameter counts.
std::int64_t LstmParameterCount(int input_dim, int hidden);
std::int64_t AffineParameterCount(int in, int out);
std::int64_t CountParameters(const ModelShape& shape);

template <typename T>
std::int64_t CountParameters(Model<T>& model) {
  return model.AllParams().ValueCount();
}

// Splits a T x D window into per-step 1 x D constants (batch of one).
template <typename T>
std::vector<Var<T>> WindowSteps(Tape<T>& tape, const Matrix<T>& window);

// Stacks per-step rows back into a T x D matrix (batch of one).
template <typename T>
Matrix<T> StackSteps(std::span<const Var<T>> steps);

// Single-window conveniences; parameters are treated as constants.
template <typename T>
Matrix<T> Encode(Model<T>& model, const Matrix<T>& window);
template <typename T>
Matrix<T> GenerateClassification(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& noise);
template <typename T>
Matrix<T> GenerateFutureAudio(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& noise);
template <typename T>
Matrix<T> DiscriminateStatic(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& track);
template <typename T>
Matrix<T> DiscriminateTemporal(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& chunks);

template <typename T>
Matrix<T> DrawNoise(Rng& rng, Eigen::Index batch, int noise_dim);

}  // namespace tagan
