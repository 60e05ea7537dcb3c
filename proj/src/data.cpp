#include "urmf/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "urmf/rng.hpp"

namespace urmf::data {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4 * 4;
// Stream tags for keyed_rng.
constexpr std::uint64_t kPrototypeStream = 0x70726f74;
constexpr std::uint64_t kSampleStream = 0x73616d70;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }

  void need(std::size_t count, const char* what) const {
    if (bytes_.size() - pos_ < count) {
      throw ParseError(std::string("truncated file while reading ") + what, pos_);
    }
  }

  std::uint64_t uint(std::size_t width, const char* what) {
    need(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }

  float f32() {
    const auto bits = static_cast<std::uint32_t>(uint(4, "float value"));
    return std::bit_cast<float>(bits);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::vector<float>> make_prototypes(std::mt19937_64& rng, std::size_t count, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<float>> protos(count, std::vector<float>(dim));
  for (auto& p : protos) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) p[j] = static_cast<float>(v[j] / norm);
  }
  return protos;
}

}  // namespace

void Dataset::validate() const {
  if (n == 0 || m == 0 || d_t == 0 || d_i == 0) throw std::invalid_argument("dataset dimensions must be positive");
  if (text.size() != size() * text_stride() || image.size() != size() * image_stride()) {
    throw std::invalid_argument("dataset payload does not match its dimensions");
  }
  for (std::uint8_t y : labels) {
    if (y > 1) throw std::invalid_argument("dataset label outside {0, 1}");
  }
}

Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end) {
  if (begin > end || end > ds.size()) throw std::out_of_range("dataset slice out of range");
  Dataset out{ds.n, ds.m, ds.d_t, ds.d_i, {}, {}, {}};
  out.text.assign(ds.text.begin() + begin * ds.text_stride(), ds.text.begin() + end * ds.text_stride());
  out.image.assign(ds.image.begin() + begin * ds.image_stride(), ds.image.begin() + end * ds.image_stride());
  out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + end);
  return out;
}

ModalBatch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t b = indices.size();
  ModalBatch batch{Tensor({b, ds.n, ds.d_t}), Tensor({b, ds.m, ds.d_i}), {}, std::vector<bool>(b, false),
                   std::vector<bool>(b, false)};
  batch.labels.reserve(b);
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t idx = indices[k];
    if (idx >= ds.size()) throw std::out_of_range("batch index outside dataset");
    std::copy_n(ds.text.begin() + idx * ds.text_stride(), ds.text_stride(), batch.text.data() + k * ds.text_stride());
    std::copy_n(ds.image.begin() + idx * ds.image_stride(), ds.image_stride(),
                batch.image.data() + k * ds.image_stride());
    batch.labels.push_back(ds.labels[idx]);
  }
  return batch;
}

ModalBatch full_batch(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(ds, idx);
}

void SynthSpec::validate() const {
  if (clusters < 2) throw std::invalid_argument("SynthSpec: need at least 2 clusters");
  if (n_samples < 2) throw std::invalid_argument("SynthSpec: need at least 2 samples");
  if (n == 0 || m == 0 || d_t == 0 || d_i == 0) throw std::invalid_argument("SynthSpec: dimensions must be >= 1");
  if (!(noise_text >= 0.0) || !(noise_image >= 0.0)) throw std::invalid_argument("SynthSpec: negative noise scale");
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  auto proto_rng = keyed_rng({spec.seed, kPrototypeStream});
  const auto text_protos = make_prototypes(proto_rng, spec.clusters, spec.d_t);
  const auto image_protos = make_prototypes(proto_rng, spec.clusters, spec.d_i);

  Dataset ds{spec.n, spec.m, spec.d_t, spec.d_i, {}, {}, {}};
  ds.text.resize(spec.n_samples * ds.text_stride());
  ds.image.resize(spec.n_samples * ds.image_stride());
  ds.labels.resize(spec.n_samples);

  for (std::size_t k = 0; k < spec.n_samples; ++k) {
    auto rng = keyed_rng({spec.seed, kSampleStream, k});
    std::uniform_int_distribution<std::size_t> pick(0, spec.clusters - 1);
    std::uniform_int_distribution<std::size_t> other(1, spec.clusters - 1);
    std::bernoulli_distribution incongruent(0.5);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t c_t = pick(rng);
    const bool label = incongruent(rng);
    const std::size_t c_i = label ? (c_t + other(rng)) % spec.clusters : c_t;
    ds.labels[k] = label ? 1 : 0;

    float* text = ds.text.data() + k * ds.text_stride();
    for (std::size_t tok = 0; tok < spec.n; ++tok)
      for (std::size_t j = 0; j < spec.d_t; ++j)
        text[tok * spec.d_t + j] = static_cast<float>(text_protos[c_t][j] + spec.noise_text * normal(rng));
    float* image = ds.image.data() + k * ds.image_stride();
    for (std::size_t p = 0; p < spec.m; ++p)
      for (std::size_t j = 0; j < spec.d_i; ++j)
        image[p * spec.d_i + j] = static_cast<float>(image_protos[c_i][j] + spec.noise_image * normal(rng));
  }
  return ds;
}

Target parse_target(const std::string& s) {
  if (s == "text") return Target::text;
  if (s == "image") return Target::image;
  throw std::invalid_argument("unknown modality '" + s + "' (expected text or image)");
}

const char* target_name(Target t) { return t == Target::text ? "text" : "image"; }

ModalBatch corrupt(ModalBatch batch, Target target, double proportion, std::uint64_t seed) {
  if (!(proportion >= 0.0 && proportion <= 1.0)) {
    throw std::invalid_argument("corruption proportion " + std::to_string(proportion) + " outside [0, 1]");
  }
  const std::size_t b = batch.size();
  const auto count = static_cast<std::size_t>(std::llround(proportion * static_cast<double>(b)));
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor& seq = target == Target::text ? batch.text : batch.image;
  std::vector<bool>& flags = target == Target::text ? batch.corrupted_text : batch.corrupted_image;
  const std::size_t stride = b ? seq.numel() / b : 0;
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t k = order[r];
    for (std::size_t j = 0; j < stride; ++j) seq[k * stride + j] = normal(rng);
    flags[k] = true;
  }
  return batch;
}

ParseError::ParseError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

std::vector<std::uint8_t> encode_embeddings(const Dataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + ds.size() + 4 * (ds.text.size() + ds.image.size()));
  for (char c : {'U', 'R', 'M', 'F'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kFormatVersion);
  put_u64(out, ds.size());
  put_u32(out, static_cast<std::uint32_t>(ds.n));
  put_u32(out, static_cast<std::uint32_t>(ds.m));
  put_u32(out, static_cast<std::uint32_t>(ds.d_t));
  put_u32(out, static_cast<std::uint32_t>(ds.d_i));
  for (std::size_t k = 0; k < ds.size(); ++k) {
    out.push_back(ds.labels[k]);
    for (std::size_t j = 0; j < ds.text_stride(); ++j) put_u32(out, std::bit_cast<std::uint32_t>(ds.text[k * ds.text_stride() + j]));
    for (std::size_t j = 0; j < ds.image_stride(); ++j) put_u32(out, std::bit_cast<std::uint32_t>(ds.image[k * ds.image_stride() + j]));
  }
  return out;
}

Dataset decode_embeddings(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), "URMF", 4) != 0) throw ParseError("bad magic (expected \"URMF\")", 0);
  in.pos_ = 4;
  const std::uint64_t version_at = in.offset();
  if (const auto version = in.uint(4, "version"); version != kFormatVersion) {
    throw ParseError("unsupported format version " + std::to_string(version), version_at);
  }
  const std::uint64_t count = in.uint(8, "sample count");
  const std::uint64_t dims_at = in.offset();
  Dataset ds;
  ds.n = in.uint(4, "n");
  ds.m = in.uint(4, "m");
  ds.d_t = in.uint(4, "d_t");
  ds.d_i = in.uint(4, "d_i");
  if (ds.n == 0 || ds.m == 0 || ds.d_t == 0 || ds.d_i == 0) {
    throw ParseError("dimension header has a zero dimension", dims_at);
  }
  const std::uint64_t record = 1 + 4 * (static_cast<std::uint64_t>(ds.text_stride()) + ds.image_stride());
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (payload / record < count) {
    throw ParseError("truncated file: header declares " + std::to_string(count) + " records but only " +
                         std::to_string(payload / record) + " are present",
                     kHeaderBytes + (payload / record) * record);
  }
  if (payload != count * record) {
    throw ParseError("dimension header mismatch: " + std::to_string(payload - count * record) +
                         " trailing bytes after the declared records",
                     kHeaderBytes + count * record);
  }
  ds.labels.resize(count);
  ds.text.resize(count * ds.text_stride());
  ds.image.resize(count * ds.image_stride());
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t label_at = in.offset();
    const auto label = in.uint(1, "label");
    if (label > 1) throw ParseError("label " + std::to_string(label) + " outside {0, 1}", label_at);
    ds.labels[k] = static_cast<std::uint8_t>(label);
    for (std::size_t j = 0; j < ds.text_stride(); ++j) ds.text[k * ds.text_stride() + j] = in.f32();
    for (std::size_t j = 0; j < ds.image_stride(); ++j) ds.image[k * ds.image_stride() + j] = in.f32();
  }
  return ds;
}

void write_embeddings(const std::filesystem::path& path, const Dataset& ds) {
  const auto bytes = encode_embeddings(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes);
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, const NoticeSink& notice) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    if (end - start == 1) {
      if (notice) notice("dropping singleton final batch (sample " + std::to_string(order[start]) + ")");
      break;
    }
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

std::vector<ModalBatch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
                                const NoticeSink& notice) {
  std::vector<ModalBatch> out;
  for (const auto& idx : batch_indices(ds.size(), batch_size, shuffle_seed, notice)) out.push_back(make_batch(ds, idx));
  return out;
}

}  // namespace urmf::data
