#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tagan/features.hpp"
#include "tagan/network.hpp"

namespace tagan {

// Binary layout:
//   "TAGN" | int32 version | uint32 header_bytes | header (JSON text)
//   | float32 little-endian values per parameter, declaration order, row-major
inline constexpr char kCheckpointMagic[4] = {'T', 'A', 'G', 'N'};
inline constexpr std::int32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  FrameSpec frame;
  MfccConfig mfcc;
  NormalizationStats normalization;
  StreamSet input_streams = StreamSet::All();
  StreamSet future_streams = {Stream::kRaw};
  int window = 100;
  // Echo of the run configuration, as JSON text.
  std::string config_json = "{}";
};

struct Checkpoint {
  CheckpointMeta meta;
  Model<float> model;
};

template <typename T>
void SaveCheckpoint(const std::filesystem::path& path, const CheckpointMeta& meta, Model<T>& model);

Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace tagan
