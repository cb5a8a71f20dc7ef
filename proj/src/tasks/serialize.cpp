#include <fstream>

#include "mixerbench/detail/binary_io.hpp"
#include "mixerbench/tasks.hpp"

namespace mixerbench {

namespace {

constexpr char kMagic[4] = {'M', 'X', 'T', 'S'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void write_sample(std::ostream& out, const TaskSample& s) {
  using namespace detail;
  const auto& shape = s.input.shape();
  if (shape.size() != 3 && shape.size() != 4) throw ShapeError("write_sample: input must be [C, spatial...]");
  put_bytes(out, kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(s.kind));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(s.input.dtype()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size() - 1));
  const std::uint8_t reserved[3] = {0, 0, 0};
  put_bytes(out, reserved, 3);
  put<std::uint64_t>(out, s.seed);
  for (auto e : shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
  put_tensor_data(out, s.input);
  switch (s.kind) {
    case TaskKind::segmentation:
      if (static_cast<std::int64_t>(s.mask.size()) * shape[0] != s.input.numel())
        throw ShapeError("write_sample: mask size does not match the image");
      put_bytes(out, s.mask.data(), s.mask.size() * sizeof(std::int32_t));
      break;
    case TaskKind::denoising:
      if (s.clean.shape() != shape || s.clean.dtype() != s.input.dtype())
        throw ShapeError("write_sample: clean image must match the input");
      put_tensor_data(out, s.clean);
      put<double>(out, s.snr_ratio);
      break;
    case TaskKind::classification:
      put<std::int32_t>(out, s.label);
      break;
  }
  if (!out) throw Error("write_sample: stream write failed");
}

TaskSample read_sample(std::istream& in) {
  using namespace detail;
  char magic[4];
  get_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error("read_sample: bad magic");
  const auto version = get<std::uint16_t>(in, "version");
  if (version != kVersion) throw Error("read_sample: unsupported version " + std::to_string(version));
  const auto kind = get<std::uint8_t>(in, "kind");
  const auto dtype = get<std::uint8_t>(in, "dtype");
  const auto rank = get<std::uint8_t>(in, "rank");
  if (kind > 2) throw Error("read_sample: bad task kind");
  if (dtype > 1) throw Error("read_sample: bad dtype");
  if (rank != 2 && rank != 3) throw Error("read_sample: bad spatial rank");
  std::uint8_t reserved[3];
  get_bytes(in, reserved, 3, "reserved");

  TaskSample s;
  s.kind = static_cast<TaskKind>(kind);
  s.seed = get<std::uint64_t>(in, "seed");
  Shape shape;
  for (int a = 0; a < rank + 1; ++a) shape.push_back(static_cast<std::int64_t>(get<std::uint64_t>(in, "extent")));
  s.input = get_tensor_data(in, shape, static_cast<DType>(dtype), "input");
  switch (s.kind) {
    case TaskKind::segmentation:
      s.mask.resize(static_cast<std::size_t>(s.input.numel() / shape[0]));
      get_bytes(in, s.mask.data(), s.mask.size() * sizeof(std::int32_t), "mask");
      break;
    case TaskKind::denoising:
      s.clean = get_tensor_data(in, shape, static_cast<DType>(dtype), "clean image");
      s.snr_ratio = get<double>(in, "snr ratio");
      break;
    case TaskKind::classification:
      s.label = get<std::int32_t>(in, "label");
      break;
  }
  return s;
}

void save_sample(const std::string& path, const TaskSample& sample) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_sample(out, sample);
}

TaskSample load_sample(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_sample(in);
}

}  // namespace mixerbench
