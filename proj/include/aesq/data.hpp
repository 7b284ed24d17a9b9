#pragma once

#include "aesq/metrics.hpp"
#include "aesq/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aesq {

// Square W x W x C image with values in [0,1], row-major, channel-interleaved.
struct SyntheticImage {
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;  // size width*width*channels

    double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

// Frozen-encoder output: (1+N_p) x H_v, row 0 is the CLS token.
struct ImageEmbeddings {
    Mat rows;
};

struct DataItem {
    std::optional<SyntheticImage> image;
    std::optional<ImageEmbeddings> embeddings;
    ScoreDistribution dos;
};

struct Dataset {
    std::vector<DataItem> items;
    std::string split = "train";
    std::uint64_t seed = 0;

    int k() const { return items.empty() ? 0 : items.front().dos.k(); }
};

struct DataConfig {
    int width = 32;
    int patch = 8;
    int channels = 3;
    int h_v = 24;
    int k = 10;
    double dos_sigma = 1.2;  // bins

    int n_patches() const { return (width / patch) * (width / patch); }
};

// Deterministic seeded stand-in for a frozen ViT: fixed affine patch map
// plus sinusoidal position offsets and a constant CLS row. Gradient-opaque
// by construction (emits plain matrices, never tape tensors).
class PseudoEncoder {
public:
    PseudoEncoder(const DataConfig& cfg, std::uint64_t encoder_seed);

    ImageEmbeddings encode(const SyntheticImage& img) const;

    const DataConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    // Frozen-contract probes.
    const Mat& patch_map() const { return patch_map_; }
    const Mat& patch_bias() const { return patch_bias_; }
    const Mat& cls_row() const { return cls_; }
    const Mat& position_offsets() const { return pos_; }

private:
    DataConfig cfg_;
    std::uint64_t seed_;
    Mat patch_map_;    // (P*P*C) x H_v
    Mat patch_bias_;   // 1 x H_v
    Mat cls_;          // 1 x H_v
    Mat pos_;          // N_p x H_v
};

// Hand-computable image statistics driving the hidden aesthetic signal.
struct ImageStats {
    double contrast = 0.0;    // luminance std
    double saturation = 0.0;  // mean abs channel deviation
    double centrality = 0.0;  // center-vs-border luminance gap
};

ImageStats image_stats(const SyntheticImage& img);

// The hidden MOS as a smooth function of the measured statistics.
double hidden_mos(const ImageStats& stats, int k);

// Discretized Gaussian around `mos` on bins 1..K, normalized.
ScoreDistribution dos_from_mos(double mos, int k, double sigma);

// Seeded images with a learnable aesthetic signal; DOS from the hidden MOS.
Dataset gen_synthetic(int n, const DataConfig& cfg, std::uint64_t seed);

// Pseudo-encodes every image in place (keeps the images too).
void encode_dataset(Dataset& ds, const PseudoEncoder& enc);

// ---- augmentations ----

SyntheticImage hflip(const SyntheticImage& img);
// Bilinear resize to resize_to, then a uniform random crop of crop_to.
SyntheticImage resize_random_crop(const SyntheticImage& img, int resize_to, int crop_to, Rng& rng);
SyntheticImage bilinear_resize(const SyntheticImage& img, int target);
// Aspect-preserving resize with zero-fill to a square of `target`.
SyntheticImage pad_to_square(const SyntheticImage& img, int target);

// ---- file formats (little-endian, f32 payloads) ----

// AQE1: embeddings + DOS per item.
void write_embeddings(const std::string& path, const Dataset& ds);
Dataset read_embeddings(const std::string& path);

// AQI1: raw images + DOS per item.
void write_images(const std::string& path, const Dataset& ds);
Dataset read_images(const std::string& path);

}  // namespace aesq
