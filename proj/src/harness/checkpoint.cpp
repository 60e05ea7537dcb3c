#include "urmf/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "urmf/data.hpp"

namespace urmf::harness {
namespace {

constexpr char kMagic[4] = {'U', 'R', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

void put(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

struct Cursor {
  const std::string& bytes;
  std::size_t pos = 0;

  std::uint64_t get(int width) {
    if (bytes.size() - pos < static_cast<std::size_t>(width)) throw data::ParseError("truncated checkpoint", pos);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += width;
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config, UrmfModel& model) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.txt", std::ios::trunc);
    if (!cfg) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
    cfg << format_config(config);
  }
  std::string out(kMagic, 4);
  put(out, kVersion, 4);
  const auto params = model.parameters();
  put(out, params.size(), 4);
  for (const Parameter* p : params) {
    put(out, p->name.size(), 4);
    out += p->name;
    put(out, p->value.rank(), 4);
    for (std::size_t d : p->value.shape()) put(out, d, 8);
    for (double v : p->value.values()) put(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  std::ofstream bin(dir / "model.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "model.bin").string());
  bin.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  TrainConfig config = load_config(dir / "config.txt");
  Checkpoint ck{config, UrmfModel(config.model_dims(), config.seed)};

  std::ifstream in(dir / "model.bin", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + (dir / "model.bin").string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw data::ParseError("bad checkpoint magic", 0);
  Cursor c{bytes, 4};
  if (c.get(4) != kVersion) throw data::ParseError("unsupported checkpoint version", 4);
  const std::uint64_t count = c.get(4);

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : ck.model.parameters()) by_name[p->name] = p;
  if (count != by_name.size()) throw data::ParseError("checkpoint parameter count does not match the config", 8);

  for (std::uint64_t k = 0; k < count; ++k) {
    const std::size_t at = c.pos;
    const std::uint64_t len = c.get(4);
    if (bytes.size() - c.pos < len) throw data::ParseError("truncated checkpoint", c.pos);
    const std::string name = bytes.substr(c.pos, len);
    c.pos += len;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw data::ParseError("unknown parameter '" + name + "'", at);
    Parameter& p = *it->second;
    ad::Shape shape(c.get(4));
    for (auto& d : shape) d = c.get(8);
    if (shape != p.value.shape()) throw data::ParseError("shape mismatch for '" + name + "'", at);
    for (double& v : p.value.values()) v = std::bit_cast<double>(c.get(8));
  }
  return ck;
}

}  // namespace urmf::harness
