#include <fstream>
#include <iomanip>

#include "mixerbench/detail/binary_io.hpp"
#include "mixerbench/train.hpp"

namespace mixerbench {

namespace {

constexpr char kMagic[4] = {'M', 'X', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  using namespace detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  put_bytes(out, kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint16_t>(out, 0);
  put<std::uint64_t>(out, c.config_hash);
  put<std::int64_t>(out, c.step);
  put<double>(out, c.val_loss);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    put_bytes(out, p.name.data(), p.name.size());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.dtype()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (auto e : p.value.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    put_tensor_data(out, p.value);
  }
  if (!out) throw Error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  using namespace detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4];
  get_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(path + " is not a checkpoint");
  const auto version = get<std::uint16_t>(in, "version");
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  get<std::uint16_t>(in, "reserved");
  Checkpoint c;
  c.config_hash = get<std::uint64_t>(in, "config hash");
  c.step = get<std::int64_t>(in, "step");
  c.val_loss = get<double>(in, "validation loss");
  const auto count = get<std::uint32_t>(in, "parameter count");
  for (std::uint32_t k = 0; k < count; ++k) {
    Parameter p;
    p.name.resize(get<std::uint32_t>(in, "name length"));
    get_bytes(in, p.name.data(), p.name.size(), "name");
    const auto dtype = get<std::uint8_t>(in, "dtype");
    if (dtype > 1) throw Error("bad dtype in checkpoint");
    const auto rank = get<std::uint8_t>(in, "rank");
    Shape shape;
    for (int a = 0; a < rank; ++a) shape.push_back(static_cast<std::int64_t>(get<std::uint64_t>(in, "extent")));
    p.value = get_tensor_data(in, shape, static_cast<DType>(dtype), "parameter data");
    c.params.push_back(std::move(p));
  }
  return c;
}

void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "step,train_loss,val_loss,lr\n" << std::setprecision(17);
  for (const auto& p : curve) out << p.step << ',' << p.train_loss << ',' << p.val_loss << ',' << p.lr << '\n';
}

}  // namespace mixerbench
