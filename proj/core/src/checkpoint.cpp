#include "tagan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "tagan/error.hpp"

namespace tagan {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json VectorToJson(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd JsonToVector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

const char* FutureDiscName(FutureDiscriminator d) {
  return d == FutureDiscriminator::kTemporal ? "temporal" : "static-duplicate";
}

json ShapeToJson(const ModelShape& s) {
  return {{"input_dim", s.input_dim},   {"hidden", s.hidden},         {"noise_dim", s.noise_dim},
          {"disc_hidden", s.disc_hidden}, {"future_dim", s.future_dim}, {"adversarial", s.adversarial},
          {"future_discriminator", FutureDiscName(s.future_disc)}};
}

ModelShape ShapeFromJson(const json& j) {
  ModelShape s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.noise_dim = j.at("noise_dim").get<int>();
  s.disc_hidden = j.at("disc_hidden").get<int>();
  s.future_dim = j.at("future_dim").get<int>();
  s.adversarial = j.at("adversarial").get<bool>();
  s.future_disc = j.at("future_discriminator").get<std::string>() == "temporal"
                      ? FutureDiscriminator::kTemporal
                      : FutureDiscriminator::kStaticDuplicate;
  return s;
}

template <typename V>
void WriteLe(std::ostream& os, V v) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &v, sizeof(V));
  os.write(bytes, sizeof(V));
}

template <typename V>
V ReadLe(std::istream& is) {
  char bytes[sizeof(V)];
  if (!is.read(bytes, sizeof(V))) throw Error(ErrorKind::kCorruptHeader, "truncated checkpoint");
  V v;
  std::memcpy(&v, bytes, sizeof(V));
  return v;
}

}  // namespace

template <typename T>
void SaveCheckpoint(const std::filesystem::path& path, const CheckpointMeta& meta, Model<T>& model) {
  json params = json::array();
  for (auto* p : model.AllParams()) {
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  json header = {
      {"model", ShapeToJson(model.shape())},
      {"frame", {{"frame_len_ms", meta.frame.frame_len_ms}, {"hop_ms", meta.frame.hop_ms},
                 {"sample_rate_hz", meta.frame.sample_rate_hz}}},
      {"mfcc", {{"n_coeffs", meta.mfcc.n_coeffs}, {"n_filters", meta.mfcc.n_filters},
                {"fft_size", meta.mfcc.fft_size}, {"pre_emphasis", meta.mfcc.pre_emphasis},
                {"log_floor", meta.mfcc.log_floor}}},
      {"normalization", {{"raw_dim", meta.normalization.raw_dim},
                         {"min", VectorToJson(meta.normalization.min)},
                         {"max", VectorToJson(meta.normalization.max)}}},
      {"input_streams", meta.input_streams.Names()},
      {"future_streams", meta.future_streams.Names()},
      {"window", meta.window},
      {"parameters", params},
      {"config", json::parse(meta.config_json)},
  };
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  os.write(kCheckpointMagic, 4);
  WriteLe<std::int32_t>(os, kCheckpointVersion);
  WriteLe<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto* p : model.AllParams()) {
    const Matrix<float> values = p->value.template cast<float>();
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * static_cast<Eigen::Index>(sizeof(float))));
  }
  if (!os) throw Error(ErrorKind::kIoError, "write failed for " + path.string());
}

template void SaveCheckpoint(const std::filesystem::path&, const CheckpointMeta&, Model<float>&);
template void SaveCheckpoint(const std::filesystem::path&, const CheckpointMeta&, Model<double>&);

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIoError, "cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::kCorruptHeader, path.string() + " is not a checkpoint");
  }
  const auto version = ReadLe<std::int32_t>(is);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kUnsupportedFormat, "checkpoint version " + std::to_string(version));
  }
  const auto header_bytes = ReadLe<std::uint32_t>(is);
  std::string text(header_bytes, '\0');
  if (!is.read(text.data(), header_bytes)) throw Error(ErrorKind::kCorruptHeader, "truncated header");

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    const json& frame = header.at("frame");
    ckpt.meta.frame.frame_len_ms = frame.at("frame_len_ms").get<int>();
    ckpt.meta.frame.hop_ms = frame.at("hop_ms").get<int>();
    ckpt.meta.frame.sample_rate_hz = frame.at("sample_rate_hz").get<int>();
    const json& mfcc = header.at("mfcc");
    ckpt.meta.mfcc.n_coeffs = mfcc.at("n_coeffs").get<int>();
    ckpt.meta.mfcc.n_filters = mfcc.at("n_filters").get<int>();
    ckpt.meta.mfcc.fft_size = mfcc.at("fft_size").get<int>();
    ckpt.meta.mfcc.pre_emphasis = mfcc.at("pre_emphasis").get<double>();
    ckpt.meta.mfcc.log_floor = mfcc.at("log_floor").get<double>();
    const json& norm = header.at("normalization");
    ckpt.meta.normalization.raw_dim = norm.at("raw_dim").get<int>();
    ckpt.meta.normalization.min = JsonToVector(norm.at("min"));
    ckpt.meta.normalization.max = JsonToVector(norm.at("max"));
    ckpt.meta.input_streams = StreamSet::FromNames(header.at("input_streams").get<std::vector<std::string>>());
    ckpt.meta.future_streams = StreamSet::FromNames(header.at("future_streams").get<std::vector<std::string>>());
    ckpt.meta.window = header.at("window").get<int>();
    ckpt.meta.config_json = header.at("config").dump();
    ckpt.model = Model<float>(ShapeFromJson(header.at("model")));

    const json& params = header.at("parameters");
    auto set = ckpt.model.AllParams();
    if (params.size() != set.size()) throw Error(ErrorKind::kCorruptHeader, "parameter count mismatch");
    for (std::size_t i = 0; i < set.size(); ++i) {
      const json& entry = params[i];
      if (entry.at("name").get<std::string>() != set[i].name || entry.at("rows").get<Eigen::Index>() != set[i].value.rows() ||
          entry.at("cols").get<Eigen::Index>() != set[i].value.cols()) {
        throw Error(ErrorKind::kCorruptHeader, "parameter " + std::to_string(i) + " does not match model layout");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCorruptHeader, std::string("bad checkpoint header: ") + e.what());
  }

  for (auto* p : ckpt.model.AllParams()) {
    const auto bytes = static_cast<std::streamsize>(p->value.size() * static_cast<Eigen::Index>(sizeof(float)));
    if (!is.read(reinterpret_cast<char*>(p->value.data()), bytes)) {
      throw Error(ErrorKind::kCorruptHeader, "truncated parameter data for " + p->name);
    }
  }
  return ckpt;
}

}  // namespace tagan
