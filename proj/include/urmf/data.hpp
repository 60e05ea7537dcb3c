#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "urmf/autodiff/tensor.hpp"

// Synthetic incongruity task, embedding-file I/O, modality corruption and
// batching.
namespace urmf::data {

using ad::Tensor;

// Precomputed per-sample embeddings, stored in 32-bit floats exactly as they
// appear on disk. Label 1 marks an incongruent (sarcastic) pair.
struct Dataset {
  std::size_t n = 0;    // text tokens per sample
  std::size_t m = 0;    // image patches per sample
  std::size_t d_t = 0;  // text embedding width
  std::size_t d_i = 0;  // image embedding width
  std::vector<float> text;    // N * n * d_t
  std::vector<float> image;   // N * m * d_i
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t text_stride() const { return n * d_t; }
  std::size_t image_stride() const { return m * d_i; }
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Samples [begin, end) of `ds`.
Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end);

struct ModalBatch {
  Tensor text;   // [B x n x d_t]
  Tensor image;  // [B x m x d_i]
  std::vector<int> labels;
  std::vector<bool> corrupted_text;
  std::vector<bool> corrupted_image;

  std::size_t size() const { return labels.size(); }
};

ModalBatch make_batch(const Dataset& ds, std::span<const std::size_t> indices);
ModalBatch full_batch(const Dataset& ds);

struct SynthSpec {
  std::size_t clusters = 4;
  std::size_t n = 16;
  std::size_t m = 8;
  std::size_t d_t = 32;
  std::size_t d_i = 32;
  double noise_text = 0.5;
  double noise_image = 0.5;
  std::size_t n_samples = 4000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Text cluster c_t is uniform; with probability 1/2 the image shows the same
// cluster (label 0), otherwise a uniformly chosen different one (label 1).
// Tokens and patches are unit-norm cluster prototypes plus Gaussian noise.
// Randomness for sample k depends only on (seed, k).
Dataset generate_synthetic(const SynthSpec& spec);

enum class Target { text, image };
Target parse_target(const std::string& s);
const char* target_name(Target t);

// Replaces the chosen modality of exactly round(p * B) samples, picked by a
// permutation seeded with `seed`, with N(0, 1) noise and flags them.
ModalBatch corrupt(ModalBatch batch, Target target, double proportion, std::uint64_t seed);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Little-endian layout: "URMF", u32 version (1), u64 N, u32 n, u32 m,
// u32 d_t, u32 d_i, then per record a u8 label followed by n*d_t and m*d_i
// f32 values.
void write_embeddings(const std::filesystem::path& path, const Dataset& ds);
Dataset read_embeddings(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_embeddings(const Dataset& ds);
Dataset decode_embeddings(std::span<const std::uint8_t> bytes);

using NoticeSink = std::function<void(const std::string&)>;

// Seeded shuffle into batches of `batch_size`; the final partial batch is
// kept unless it holds a single sample, which is dropped with a notice.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed, const NoticeSink& notice = {});
std::vector<ModalBatch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
                                const NoticeSink& notice = {});

}  // namespace urmf::data
