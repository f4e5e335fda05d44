#include "tagan/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tagan/error.hpp"

namespace tagan {

void TrainConfig::Validate() const {
  if (lambda_eta < 0.0 || lambda_w < 0.0) throw Error(ErrorKind::kConfigError, "lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfigError, "learning_rate must be > 0");
  if (epochs < 0 || batch_size <= 0 || window <= 0 || train_hop < 0) {
    throw Error(ErrorKind::kConfigError, "epochs, batch_size, window and train_hop must be positive");
  }
  if (hop() <= 0) throw Error(ErrorKind::kConfigError, "training hop must be positive");
}

template <typename T>
Adam<T>::Adam(ParameterSet<T> params, const AdamConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    first_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    second_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename T>
void Adam<T>::Step() {
  for (auto* p : params_) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw Error(ErrorKind::kShapeMismatch, "gradient shape differs for " + p->name);
    }
  }
  ++steps_;
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_)));
  const T lr = static_cast<T>(cfg_.learning_rate);
  const T eps = static_cast<T>(cfg_.epsilon);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<T>& p = params_[i];
    auto m = first_[i].array();
    auto v = second_[i].array();
    const auto g = p.grad.array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    p.value.array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

double Bce(double score, int target) {
  const double s = std::clamp(score, kScoreClamp, 1.0 - kScoreClamp);
  return target == 1 ? -std::log(s) : -std::log(1.0 - s);
}

LossPair CombineObjectives(const LossPair& static_part, const LossPair& temporal_part) {
  return {static_part.generator + temporal_part.generator,
          static_part.discriminator + temporal_part.discriminator};
}

namespace {

template <typename T>
Var<T> Concat(Tape<T>& tape, std::span<const Var<T>> steps) {
  return steps.size() == 1 ? steps[0] : tape.ConcatCols(steps);
}

template <typename T>
Var<T> ClampedScores(Tape<T>& tape, std::span<const Var<T>> scores) {
  return tape.Clamp(Concat(tape, scores), static_cast<T>(kScoreClamp), static_cast<T>(1.0 - kScoreClamp));
}

template <typename T>
double MeanValue(std::span<const Var<T>> steps) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : steps) {
    sum += static_cast<double>(v.value().sum());
    n += static_cast<std::size_t>(v.value().size());
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

template <typename T>
Var<T> Zero(Tape<T>& tape) {
  return tape.Constant(Matrix<T>::Zero(1, 1));
}

}  // namespace

template <typename T>
Var<T> SumBce(Tape<T>& tape, std::span<const Var<T>> scores, int target) {
  Var<T> s = ClampedScores(tape, scores);
  Var<T> logs = target == 1 ? tape.Log(s) : tape.Log(tape.AddScalar(tape.Scale(s, T(-1)), T(1)));
  return tape.Scale(tape.Sum(logs), T(-1));
}

template <typename T>
Var<T> SumBce(Tape<T>& tape, std::span<const Var<T>> scores, std::span<const Var<T>> targets) {
  if (scores.size() != targets.size()) throw Error(ErrorKind::kShapeMismatch, "bce: step counts differ");
  Var<T> s = ClampedScores(tape, scores);
  Var<T> y = Concat(tape, targets);
  Var<T> one_minus_y = tape.AddScalar(tape.Scale(y, T(-1)), T(1));
  Var<T> log_s = tape.Log(s);
  Var<T> log_not_s = tape.Log(tape.AddScalar(tape.Scale(s, T(-1)), T(1)));
  return tape.Scale(tape.Sum(tape.Add(tape.Mul(y, log_s), tape.Mul(one_minus_y, log_not_s))), T(-1));
}

template <typename T>
Var<T> FrameL2(Tape<T>& tape, std::span<const Var<T>> truth, std::span<const Var<T>> predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::kShapeMismatch, "l2: step counts differ");
  return tape.Sum(tape.Square(tape.Sub(Concat(tape, truth), Concat(tape, predicted))));
}

template <typename T>
Var<T> PrefixL2(Tape<T>& tape, std::span<const Var<T>> truth, std::span<const Var<T>> predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::kShapeMismatch, "l2: step counts differ");
  if (truth.empty()) return Zero(tape);
  std::vector<Var<T>> prefixes;
  prefixes.reserve(truth.size());
  Var<T> prefix;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    Var<T> err = tape.RowSum(tape.Square(tape.Sub(truth[t], predicted[t])));
    prefix = t == 0 ? err : tape.Add(prefix, err);
    prefixes.push_back(prefix);
  }
  return tape.Sum(Concat<T>(tape, prefixes));
}

template <typename T>
LossPair StaticLosses(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& eta,
                      const Matrix<T>& eta_hat, double lambda) {
  if (!model.static_disc) throw Error(ErrorKind::kConfigError, "model has no static discriminator");
  if (embeddings.rows() != eta.rows() || eta.rows() != eta_hat.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "static losses: sequence lengths differ");
  }
  Tape<T> tape;
  auto c = WindowSteps(tape, embeddings);
  auto real = WindowSteps(tape, eta);
  auto fake = WindowSteps(tape, eta_hat);
  auto real_scores = model.static_disc->Forward(tape, c, real, false);
  auto fake_scores = model.static_disc->Forward(tape, c, fake, false);
  LossPair out;
  out.discriminator = static_cast<double>(SumBce<T>(tape, real_scores, 1).scalar()) +
                      static_cast<double>(SumBce<T>(tape, fake_scores, 0).scalar());
  out.generator = static_cast<double>(SumBce<T>(tape, fake_scores, 1).scalar());
  if (lambda != 0.0) out.generator += lambda * static_cast<double>(FrameL2<T>(tape, real, fake).scalar());
  return out;
}

template <typename T>
LossPair TemporalLosses(Model<T>& model, const Matrix<T>& embeddings, const Matrix<T>& future,
                        const Matrix<T>& future_hat, double lambda) {
  if (!model.temporal_disc) throw Error(ErrorKind::kConfigError, "model has no temporal discriminator");
  if (embeddings.rows() != future.rows() || future.rows() != future_hat.rows() ||
      future.cols() != future_hat.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "temporal losses: sequence shapes differ");
  }
  Tape<T> tape;
  auto c = WindowSteps(tape, embeddings);
  auto real = WindowSteps(tape, future);
  auto fake = WindowSteps(tape, future_hat);
  auto real_scores = model.temporal_disc->Forward(tape, c, real, false);
  auto fake_scores = model.temporal_disc->Forward(tape, c, fake, false);
  LossPair out;
  out.discriminator = static_cast<double>(SumBce<T>(tape, real_scores, 1).scalar()) +
                      static_cast<double>(SumBce<T>(tape, fake_scores, 0).scalar());
  out.generator = static_cast<double>(SumBce<T>(tape, fake_scores, 1).scalar());
  if (lambda != 0.0) out.generator += lambda * static_cast<double>(PrefixL2<T>(tape, real, fake).scalar());
  return out;
}

std::vector<PreparedWindow> PrepareWindows(std::span<const TrainingExample> examples,
                                           const FeatureLayout& layout, StreamSet input,
                                           StreamSet future) {
  if (input.Empty()) throw Error(ErrorKind::kConfigError, "at least one input stream is required");
  const auto in_cols = layout.Columns(input);
  const auto out_cols = layout.Columns(future);
  std::vector<PreparedWindow> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    PreparedWindow w;
    w.input = ex.input(Eigen::all, in_cols);
    if (!out_cols.empty()) w.future = ex.future(Eigen::all, out_cols);
    w.labels = ex.labels;
    out.push_back(std::move(w));
  }
  return out;
}

std::string LossLogHeader() {
  return "epoch\tphase\teta_generator\teta_discriminator\tw_generator\tw_discriminator\tl2_eta\tl2_w\t"
         "total_generator\ttotal_discriminator\teta_real_score\teta_fake_score\tw_real_score\tw_fake_score";
}

std::string LossLogRow(const LossReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << r.epoch << '\t' << (r.phase == Phase::kGenerator ? "G" : "D") << '\t' << r.eta_generator << '\t'
     << r.eta_discriminator << '\t' << r.w_generator << '\t' << r.w_discriminator << '\t' << r.l2_eta << '\t'
     << r.l2_w << '\t' << r.total_generator << '\t' << r.total_discriminator << '\t' << r.eta_real_score
     << '\t' << r.eta_fake_score << '\t' << r.w_real_score << '\t' << r.w_fake_score;
  return os.str();
}

template <typename T>
Var<T> BatchObjective(Tape<T>& tape, Model<T>& model, std::span<const PreparedWindow* const> batch,
                      const Matrix<T>& noise, Phase phase, const TrainConfig& cfg, LossReport* report) {
  if (batch.empty()) throw Error(ErrorKind::kNoData, "empty batch");
  const ModelShape& shape = model.shape();
  const auto rows = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index steps = batch[0]->input.rows();
  const Eigen::Index in_dim = batch[0]->input.cols();
  const bool future = shape.predicts_future();
  for (const auto* w : batch) {
    if (w->input.rows() != steps || w->input.cols() != in_dim ||
        static_cast<Eigen::Index>(w->labels.size()) != steps ||
        (future && (w->future.rows() != steps || w->future.cols() != shape.future_dim))) {
      throw Error(ErrorKind::kShapeMismatch, "batch windows have inconsistent shapes");
    }
  }
  if (noise.rows() != rows || noise.cols() != shape.noise_dim) {
    throw Error(ErrorKind::kShapeMismatch, "noise must have one row per window");
  }

  std::vector<Var<T>> inputs, labels, targets;
  inputs.reserve(static_cast<std::size_t>(steps));
  labels.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Matrix<T> x(rows, in_dim);
    Matrix<T> y(rows, 1);
    for (Eigen::Index b = 0; b < rows; ++b) {
      x.row(b) = batch[static_cast<std::size_t>(b)]->input.row(t).template cast<T>();
      y(b, 0) = static_cast<T>(batch[static_cast<std::size_t>(b)]->labels[static_cast<std::size_t>(t)]);
    }
    inputs.push_back(tape.Constant(std::move(x)));
    labels.push_back(tape.Constant(std::move(y)));
    if (future) {
      Matrix<T> w(rows, shape.future_dim);
      for (Eigen::Index b = 0; b < rows; ++b) {
        w.row(b) = batch[static_cast<std::size_t>(b)]->future.row(t).template cast<T>();
      }
      targets.push_back(tape.Constant(std::move(w)));
    }
  }

  const bool gen = phase == Phase::kGenerator;
  const auto embeddings = model.encoder.Forward(tape, inputs, gen);
  const Var<T> z = tape.Constant(noise);
  const auto eta_hat = model.classifier.Forward(tape, embeddings, z, gen);
  std::vector<Var<T>> w_hat;
  if (future) w_hat = model.audio->Forward(tape, embeddings, z, gen);

  const T inv_batch = T(1) / static_cast<T>(rows);
  LossReport r;
  r.phase = phase;
  Var<T> root;

  if (!shape.adversarial) {
    Var<T> ce = SumBce<T>(tape, eta_hat, labels);
    root = ce;
    r.eta_generator = static_cast<double>(ce.scalar());
    if (future) {
      // Sum over steps of the per-step mean squared error.
      Var<T> mse = tape.Scale(FrameL2<T>(tape, targets, w_hat), T(1) / static_cast<T>(shape.future_dim));
      root = tape.Add(root, mse);
      r.w_generator = static_cast<double>(mse.scalar());
    }
    r.total_generator = r.eta_generator + r.w_generator;
    if (report) *report = r;
    return tape.Scale(root, inv_batch);
  }

  const double lambda_eta = cfg.use_l2 ? cfg.lambda_eta : 0.0;
  const double lambda_w = cfg.use_l2 ? cfg.lambda_w : 0.0;

  // The discriminators read c as a fixed condition: generator updates reach
  // the encoder only through eta_hat and w_hat.
  std::vector<Var<T>> condition;
  condition.reserve(embeddings.size());
  for (const Var<T>& c : embeddings) condition.push_back(gen && cfg.detach_condition ? tape.Constant(c.value()) : c);

  const auto eta_fake = model.static_disc->Forward(tape, condition, eta_hat, !gen);
  const auto eta_real = model.static_disc->Forward(tape, condition, labels, !gen);
  Var<T> gen_loss = SumBce<T>(tape, eta_fake, 1);
  Var<T> disc_loss = tape.Add(SumBce<T>(tape, eta_real, 1), SumBce<T>(tape, eta_fake, 0));
  r.eta_generator = static_cast<double>(gen_loss.scalar());
  r.eta_discriminator = static_cast<double>(disc_loss.scalar());
  r.eta_real_score = MeanValue<T>(eta_real);
  r.eta_fake_score = MeanValue<T>(eta_fake);
  if (lambda_eta != 0.0) {
    Var<T> l2 = tape.Scale(FrameL2<T>(tape, labels, eta_hat), static_cast<T>(lambda_eta));
    gen_loss = tape.Add(gen_loss, l2);
    r.l2_eta = static_cast<double>(l2.scalar());
    r.eta_generator += r.l2_eta;
  }

  if (future) {
    const bool temporal = shape.future_disc == FutureDiscriminator::kTemporal;
    std::vector<Var<T>> w_fake, w_real;
    if (temporal) {
      w_fake = model.temporal_disc->Forward(tape, condition, w_hat, !gen);
      w_real = model.temporal_disc->Forward(tape, condition, targets, !gen);
    } else {
      w_fake = model.future_static_disc->Forward(tape, condition, w_hat, !gen);
      w_real = model.future_static_disc->Forward(tape, condition, targets, !gen);
    }
    Var<T> w_gen = SumBce<T>(tape, w_fake, 1);
    Var<T> w_disc = tape.Add(SumBce<T>(tape, w_real, 1), SumBce<T>(tape, w_fake, 0));
    r.w_generator = static_cast<double>(w_gen.scalar());
    r.w_discriminator = static_cast<double>(w_disc.scalar());
    r.w_real_score = MeanValue<T>(w_real);
    r.w_fake_score = MeanValue<T>(w_fake);
    if (lambda_w != 0.0) {
      Var<T> raw = temporal ? PrefixL2<T>(tape, targets, w_hat) : FrameL2<T>(tape, targets, w_hat);
      Var<T> l2 = tape.Scale(raw, static_cast<T>(lambda_w));
      w_gen = tape.Add(w_gen, l2);
      r.l2_w = static_cast<double>(l2.scalar());
      r.w_generator += r.l2_w;
    }
    gen_loss = tape.Add(gen_loss, w_gen);
    disc_loss = tape.Add(disc_loss, w_disc);
  }
  const LossPair total = CombineObjectives({r.eta_generator, r.eta_discriminator}, {r.w_generator, r.w_discriminator});
  r.total_generator = total.generator;
  r.total_discriminator = total.discriminator;
  if (report) *report = r;
  return tape.Scale(gen ? gen_loss : disc_loss, inv_batch);
}

template <typename T>
LossReport AccumulateBatchGradients(Model<T>& model, std::span<const PreparedWindow* const> batch,
                                    const Matrix<T>& noise, Phase phase, const TrainConfig& cfg) {
  Tape<T> tape;
  LossReport report;
  Var<T> root = BatchObjective(tape, model, batch, noise, phase, cfg, &report);
  tape.Backward(root);
  return report;
}

namespace {

void AddScaled(LossReport& acc, const LossReport& r, double weight) {
  acc.eta_generator += weight * r.eta_generator;
  acc.eta_discriminator += weight * r.eta_discriminator;
  acc.w_generator += weight * r.w_generator;
  acc.w_discriminator += weight * r.w_discriminator;
  acc.l2_eta += weight * r.l2_eta;
  acc.l2_w += weight * r.l2_w;
  acc.total_generator += weight * r.total_generator;
  acc.total_discriminator += weight * r.total_discriminator;
  acc.eta_real_score += weight * r.eta_real_score;
  acc.eta_fake_score += weight * r.eta_fake_score;
  acc.w_real_score += weight * r.w_real_score;
  acc.w_fake_score += weight * r.w_fake_score;
}

bool AllFinite(const LossReport& r) {
  for (double v : {r.eta_generator, r.eta_discriminator, r.w_generator, r.w_discriminator, r.l2_eta, r.l2_w,
                   r.total_generator, r.total_discriminator}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

template <typename T>
std::vector<LossReport> Fit(Model<T>& model, std::span<const PreparedWindow> windows, const TrainConfig& cfg,
                            const std::function<void(const LossReport&)>& on_epoch) {
  cfg.Validate();
  if (windows.empty()) throw Error(ErrorKind::kNoData, "no training windows");
  const ModelShape& shape = model.shape();
  if (windows[0].input.cols() != shape.input_dim) {
    throw Error(ErrorKind::kShapeMismatch, "window width " + std::to_string(windows[0].input.cols()) +
                                               " does not match model input " + std::to_string(shape.input_dim));
  }

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  Adam<T> gen_opt(model.GeneratorParams(), adam);
  Adam<T> eta_opt(model.StaticDiscriminatorParams(), adam);
  Adam<T> w_opt(model.FutureDiscriminatorParams(), adam);
  ParameterSet<T> all = model.AllParams();

  Rng order_rng(cfg.seed);
  Rng noise_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(windows.size());
  std::vector<LossReport> history;
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Phase phase = (!shape.adversarial || epoch % 2 == 0) ? Phase::kGenerator : Phase::kDiscriminator;
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.Shuffle(std::span<std::size_t>(order));

    LossReport epoch_report;
    epoch_report.epoch = epoch;
    epoch_report.phase = phase;
    std::vector<const PreparedWindow*> batch;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&windows[order[i]]);
      const Matrix<T> noise = DrawNoise<T>(noise_rng, static_cast<Eigen::Index>(batch.size()), shape.noise_dim);

      all.ZeroGrad();
      const LossReport r = AccumulateBatchGradients<T>(model, batch, noise, phase, cfg);
      if (!AllFinite(r)) {
        throw Error(ErrorKind::kNonFiniteLoss, "epoch " + std::to_string(epoch));
      }
      if (phase == Phase::kGenerator) {
        gen_opt.Step();
      } else {
        eta_opt.Step();
        w_opt.Step();
      }
      LossReport weighted = r;
      const auto n = static_cast<double>(batch.size());
      weighted.eta_real_score *= n;
      weighted.eta_fake_score *= n;
      weighted.w_real_score *= n;
      weighted.w_fake_score *= n;
      AddScaled(epoch_report, weighted, 1.0);
    }
    LossReport avg;
    avg.epoch = epoch;
    avg.phase = phase;
    AddScaled(avg, epoch_report, 1.0 / static_cast<double>(windows.size()));
    if (!AllFinite(avg)) throw Error(ErrorKind::kNonFiniteLoss, "epoch " + std::to_string(epoch));
    history.push_back(avg);
    if (on_epoch) on_epoch(avg);
  }
  return history;
}

#define TAGAN_INSTANTIATE(T)                                                                              \
  template Var<T> SumBce(Tape<T>&, std::span<const Var<T>>, int);                                        \
  template Var<T> SumBce(Tape<T>&, std::span<const Var<T>>, std::span<const Var<T>>);                    \
  template Var<T> FrameL2(Tape<T>&, std::span<const Var<T>>, std::span<const Var<T>>);                   \
  template Var<T> PrefixL2(Tape<T>&, std::span<const Var<T>>, std::span<const Var<T>>);                  \
  template LossPair StaticLosses(Model<T>&, const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, double); \
  template LossPair TemporalLosses(Model<T>&, const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, double); \
  template Var<T> BatchObjective(Tape<T>&, Model<T>&, std::span<const PreparedWindow* const>,            \
                                 const Matrix<T>&, Phase, const TrainConfig&, LossReport*);              \
  template LossReport AccumulateBatchGradients(Model<T>&, std::span<const PreparedWindow* const>,        \
                                               const Matrix<T>&, Phase, const TrainConfig&);             \
  template std::vector<LossReport> Fit(Model<T>&, std::span<const PreparedWindow>, const TrainConfig&,   \
                                       const std::function<void(const LossReport&)>&);

TAGAN_INSTANTIATE(float)
TAGAN_INSTANTIATE(double)
#undef TAGAN_INSTANTIATE

}  // namespace tagan
