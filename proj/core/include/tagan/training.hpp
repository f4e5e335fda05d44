#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tagan/features.hpp"
#include "tagan/network.hpp"

namespace tagan {

enum class Precision { kFloat32, kFloat64 };

struct TrainConfig {
  double lambda_eta = 30.0;
  double lambda_w = 25.0;
  double learning_rate = 0.005;
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 7;
  int window = 100;
  int train_hop = 0;  // 0 means window / 2
  bool use_l2 = true;
  // Discriminators see c as a constant in the generator objective.
  bool detach_condition = true;
  Precision precision = Precision::kFloat32;

  int hop() const { return train_hop > 0 ? train_hop : window / 2; }
  void Validate() const;
};

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(ParameterSet<T> params, const AdamConfig& cfg);

  // Bias-corrected update from each parameter's accumulated grad.
  void Step();
  std::int64_t steps() const { return steps_; }
  const ParameterSet<T>& params() const { return params_; }

 private:
  ParameterSet<T> params_;
  AdamConfig cfg_;
  std::vector<Matrix<T>> first_;
  std::vector<Matrix<T>> second_;
  std::int64_t steps_ = 0;
};

inline constexpr double kScoreClamp = 1e-7;

// -[y ln s + (1 - y) ln(1 - s)] with s clamped to [1e-7, 1 - 1e-7].
double Bce(double score, int target);

struct LossPair {
  double generator = 0.0;
  double discriminator = 0.0;
};

// V* = V^eta + V^w, componentwise.
LossPair CombineObjectives(const LossPair& static_part, const LossPair& temporal_part);

// Tape-level loss pieces. Each sums over steps and over batch rows.
template <typename T>
Var<T> SumBce(Tape<T>& tape, std::span<const Var<T>> scores, int target);
// Per-element targets in [0, 1] (used for the cross-entropy ablations).
template <typename T>
Var<T> SumBce(Tape<T>& tape, std::span<const Var<T>> scores, std::span<const Var<T>> targets);
template <typename T>
Var<T> FrameL2(Tape<T>& tape, std::span<const Var<T>> truth, std::span<const Var<T>> predicted);
// sum_t sum_{j<=t} ||truth_j - predicted_j||^2, accumulated prefix by prefix.
template <typename T>
Var<T> PrefixL2(Tape<T>& tape, std::span<const Var<T>> truth, std::span<const Var<T>> predicted);

// Value-level V^eta for one window: discriminator loss
// sum_t [bce(D(c_t, eta_t), 1) + bce(D(c_t, eta_hat_t), 0)], generator loss
// sum_t bce(D(c_t, eta_hat_t), 1) + lambda * sum_t (eta_t - eta_hat_t)^2.
template <typename T>
LossPair StaticLosses(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& eta,
                      const Matrix<T>& eta_hat, double lambda);

// Value-level V^w for one window with prefix scores and triangular L2.
template <typename T>
LossPair TemporalLosses(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& future,
                        const Matrix<T>& future_hat, double lambda);

// One training window with its streams already selected.
struct PreparedWindow {
  RowMatrixXd input;   // T x input_dim
  RowMatrixXd future;  // T x future_dim (empty when the model has no audio generator)
  std::vector<std::uint8_t> labels;
};

std::vector<PreparedWindow> PrepareWindows(std::span<const TrainingExample> examples,
                                           const FeatureLayout& layout, StreamSet input,
                                           StreamSet future);

enum class Phase { kGenerator, kDiscriminator };

// Per-window averages over one epoch.
struct LossReport {
  int epoch = 0;
  Phase phase = Phase::kGenerator;
  double eta_generator = 0.0;      // adversarial (or cross-entropy) + l2_eta
  double eta_discriminator = 0.0;
  double w_generator = 0.0;        // adversarial (or mse) + l2_w
  double w_discriminator = 0.0;
  double l2_eta = 0.0;             // lambda-weighted
  double l2_w = 0.0;               // lambda-weighted
  double total_generator = 0.0;
  double total_discriminator = 0.0;
  double eta_real_score = 0.0;
  double eta_fake_score = 0.0;
  double w_real_score = 0.0;
  double w_fake_score = 0.0;
};

std::string LossLogHeader();
std::string LossLogRow(const LossReport& r);

// Even epochs update the encoder and generators; odd epochs update D^eta and
// D^w from their own losses. Non-adversarial models train every epoch.
template <typename T>
std::vector<LossReport> Fit(Model<T>& model, std::span<const PreparedWindow> windows,
                            const TrainConfig& cfg,
                            const std::function<void(const LossReport&)>& on_epoch = {});

// Gradients for one batch without an optimizer step; exposed for isolation
// and gradient tests. `noise` has one row per window.
template <typename T>
LossReport AccumulateBatchGradients(Model<T>& model, std::span<const PreparedWindow* const> batch,
                                    const Matrix<T>& noise, Phase phase, const TrainConfig& cfg);

// Builds the scalar minimized in `phase` for a batch on `tape`.
template <typename T>
Var<T> BatchObjective(Tape<T>& tape, Model<T>& model, std::span<const PreparedWindow* const> batch,
                      const Matrix<T>& noise, Phase phase, const TrainConfig& cfg,
                      LossReport* report = nullptr);

}  // namespace tagan
