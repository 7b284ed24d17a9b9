#include "aesq/data.hpp"

#include "aesq/errors.hpp"
#include "binio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aesq {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double luminance(const SyntheticImage& img, int y, int x) {
    double s = 0.0;
    for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
    return s / img.channels;
}

}  // namespace

// ---- pseudo encoder ----

PseudoEncoder::PseudoEncoder(const DataConfig& cfg, std::uint64_t encoder_seed)
    : cfg_(cfg), seed_(encoder_seed) {
    if (cfg.width % cfg.patch != 0)
        throw std::invalid_argument("PseudoEncoder: width " + std::to_string(cfg.width) +
                                    " not divisible by patch " + std::to_string(cfg.patch));
    const int patch_dim = cfg.patch * cfg.patch * cfg.channels;
    const int n_p = cfg.n_patches();

    Rng rng(encoder_seed);
    patch_map_ = rng.normal_mat(patch_dim, cfg.h_v, 1.0 / std::sqrt(patch_dim));
    patch_bias_ = rng.normal_mat(1, cfg.h_v, 0.05);
    cls_ = rng.normal_mat(1, cfg.h_v, 1.0);

    pos_ = Mat(n_p, cfg.h_v);
    for (int p = 0; p < n_p; ++p) {
        for (int h = 0; h < cfg.h_v; ++h) {
            const double freq = std::pow(100.0, -static_cast<double>(h / 2 * 2) / cfg.h_v);
            pos_(p, h) = 0.1 * ((h % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq));
        }
    }
}

ImageEmbeddings PseudoEncoder::encode(const SyntheticImage& img) const {
    if (img.width != cfg_.width || img.channels != cfg_.channels)
        throw std::invalid_argument("PseudoEncoder::encode: image dims " +
                                    std::to_string(img.width) + "x" + std::to_string(img.channels) +
                                    " do not match encoder config");
    const int P = cfg_.patch;
    const int per_side = cfg_.width / P;
    const int patch_dim = P * P * cfg_.channels;

    Mat out(1 + cfg_.n_patches(), cfg_.h_v);
    out.row(0) = cls_;
    Eigen::RowVectorXd patch(patch_dim);
    for (int py = 0; py < per_side; ++py) {
        for (int px = 0; px < per_side; ++px) {
            int idx = 0;
            for (int y = 0; y < P; ++y)
                for (int x = 0; x < P; ++x)
                    for (int c = 0; c < cfg_.channels; ++c)
                        patch(idx++) = img.at(py * P + y, px * P + x, c);
            const int p = py * per_side + px;
            out.row(1 + p) = patch * patch_map_ + patch_bias_ + pos_.row(p);
        }
    }
    return ImageEmbeddings{std::move(out)};
}

// ---- synthetic signal ----

ImageStats image_stats(const SyntheticImage& img) {
    const int W = img.width;
    double mean_l = 0.0;
    for (int y = 0; y < W; ++y)
        for (int x = 0; x < W; ++x) mean_l += luminance(img, y, x);
    mean_l /= W * W;

    double var_l = 0.0, sat = 0.0;
    for (int y = 0; y < W; ++y) {
        for (int x = 0; x < W; ++x) {
            const double l = luminance(img, y, x);
            var_l += (l - mean_l) * (l - mean_l);
            for (int c = 0; c < img.channels; ++c) sat += std::abs(img.at(y, x, c) - l);
        }
    }
    var_l /= W * W;
    sat /= static_cast<double>(W) * W * img.channels;

    // Center box is the middle half of each axis.
    const int lo = W / 4, hi = W - W / 4;
    double center = 0.0, border = 0.0;
    int nc = 0, nb = 0;
    for (int y = 0; y < W; ++y) {
        for (int x = 0; x < W; ++x) {
            const double l = luminance(img, y, x);
            if (y >= lo && y < hi && x >= lo && x < hi) {
                center += l;
                ++nc;
            } else {
                border += l;
                ++nb;
            }
        }
    }
    return ImageStats{std::sqrt(var_l), sat, center / nc - border / nb};
}

namespace {
// Population centers of the generator's statistics; fixed so hidden_mos is
// a pure function of the image, not of the sampled dataset.
constexpr double kContrastCenter = 0.094;
constexpr double kSaturationCenter = 0.063;
constexpr double kCentralityCenter = 0.088;
}  // namespace

double hidden_mos(const ImageStats& stats, int k) {
    const double z = 0.5 + 2.2 * (stats.contrast - kContrastCenter) +
                     2.6 * (stats.saturation - kSaturationCenter) +
                     2.0 * (stats.centrality - kCentralityCenter);
    return 1.0 + (k - 1) * clamp01(z);
}

ScoreDistribution dos_from_mos(double mos, int k, double sigma) {
    Eigen::VectorXd bins(k);
    for (int i = 0; i < k; ++i) {
        const double d = (i + 1) - mos;
        bins(i) = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    bins /= bins.sum();
    return ScoreDistribution{bins};
}

Dataset gen_synthetic(int n, const DataConfig& cfg, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_synthetic: need n >= 1");
    Rng rng(seed);
    Dataset ds;
    ds.seed = seed;
    ds.items.reserve(n);

    const int W = cfg.width;
    const double cx = (W - 1) / 2.0;
    for (int i = 0; i < n; ++i) {
        const double base = rng.uniform(0.35, 0.65);
        const double contrast = rng.uniform(0.0, 1.0);
        const double saturation = rng.uniform(0.0, 1.0);
        const double centrality = rng.uniform(0.0, 1.0);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);

        SyntheticImage img;
        img.width = W;
        img.channels = cfg.channels;
        img.pixels.resize(static_cast<std::size_t>(W) * W * cfg.channels);
        const double bump_sd = 0.25 * W;
        for (int y = 0; y < W; ++y) {
            for (int x = 0; x < W; ++x) {
                const double wave =
                    std::sin(2.0 * M_PI * 2.0 * x / W + phase) * std::sin(2.0 * M_PI * 2.0 * y / W);
                const double dx = x - cx, dy = y - cx;
                const double bump = std::exp(-(dx * dx + dy * dy) / (2.0 * bump_sd * bump_sd));
                const double lum = base + 0.30 * contrast * wave + 0.35 * centrality * (bump - 0.45);
                for (int c = 0; c < cfg.channels; ++c) {
                    const double chan_dev = (c == 0 ? 1.0 : (c == 2 ? -1.0 : 0.0));
                    const double v = lum + 0.18 * saturation * chan_dev + rng.normal(0.0, 0.01);
                    img.at(y, x, c) = clamp01(v);
                }
            }
        }

        const double mos = hidden_mos(image_stats(img), cfg.k);
        DataItem item;
        item.image = std::move(img);
        item.dos = dos_from_mos(mos, cfg.k, cfg.dos_sigma);
        ds.items.push_back(std::move(item));
    }
    return ds;
}

void encode_dataset(Dataset& ds, const PseudoEncoder& enc) {
    for (auto& item : ds.items) {
        if (!item.image) throw std::invalid_argument("encode_dataset: item has no image");
        item.embeddings = enc.encode(*item.image);
    }
}

// ---- augmentations ----

SyntheticImage hflip(const SyntheticImage& img) {
    SyntheticImage out = img;
    for (int y = 0; y < img.width; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

SyntheticImage bilinear_resize(const SyntheticImage& img, int target) {
    if (target < 1) throw std::invalid_argument("bilinear_resize: target must be >= 1");
    SyntheticImage out;
    out.width = target;
    out.channels = img.channels;
    out.pixels.resize(static_cast<std::size_t>(target) * target * img.channels);
    const double s = static_cast<double>(img.width) / target;
    for (int y = 0; y < target; ++y) {
        for (int x = 0; x < target; ++x) {
            const double sy = std::min(std::max((y + 0.5) * s - 0.5, 0.0), img.width - 1.0);
            const double sx = std::min(std::max((x + 0.5) * s - 0.5, 0.0), img.width - 1.0);
            const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
            const int y1 = std::min(y0 + 1, img.width - 1), x1 = std::min(x0 + 1, img.width - 1);
            const double fy = sy - y0, fx = sx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
                const double bot = (1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
                out.at(y, x, c) = (1 - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

SyntheticImage resize_random_crop(const SyntheticImage& img, int resize_to, int crop_to, Rng& rng) {
    if (crop_to > resize_to)
        throw std::invalid_argument("resize_random_crop: crop " + std::to_string(crop_to) +
                                    " exceeds resize " + std::to_string(resize_to));
    SyntheticImage resized = bilinear_resize(img, resize_to);
    const int range = resize_to - crop_to + 1;
    const int oy = static_cast<int>(rng.integer(range));
    const int ox = static_cast<int>(rng.integer(range));
    SyntheticImage out;
    out.width = crop_to;
    out.channels = img.channels;
    out.pixels.resize(static_cast<std::size_t>(crop_to) * crop_to * img.channels);
    for (int y = 0; y < crop_to; ++y)
        for (int x = 0; x < crop_to; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = resized.at(oy + y, ox + x, c);
    return out;
}

SyntheticImage pad_to_square(const SyntheticImage& img, int target) {
    // Content resized into the centered 3/4 box, border zero-filled.
    const int content = std::max(1, (3 * target) / 4);
    SyntheticImage inner = bilinear_resize(img, content);
    SyntheticImage out;
    out.width = target;
    out.channels = img.channels;
    out.pixels.assign(static_cast<std::size_t>(target) * target * img.channels, 0.0);
    const int off = (target - content) / 2;
    for (int y = 0; y < content; ++y)
        for (int x = 0; x < content; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(off + y, off + x, c) = inner.at(y, x, c);
    return out;
}

// ---- file io ----

namespace {

using binio::Reader;
using binio::put_f32;
using binio::put_u16;
using binio::put_u32;

constexpr std::uint16_t kFormatVersion = 1;

ScoreDistribution read_dos(Reader& r, int k) {
    Eigen::VectorXd bins(k);
    for (int i = 0; i < k; ++i) bins(i) = r.f32();
    if (bins.minCoeff() < 0.0 || std::abs(bins.sum() - 1.0) > 1e-6)
        throw FormatError("stored DOS is not a valid distribution", r.offset());
    // No renormalization: reads are bit-faithful to the file.
    return ScoreDistribution{bins};
}

}  // namespace

void write_embeddings(const std::string& path, const Dataset& ds) {
    if (ds.items.empty()) throw std::invalid_argument("write_embeddings: empty dataset");
    const auto& first = ds.items.front();
    if (!first.embeddings) throw std::invalid_argument("write_embeddings: items lack embeddings");
    const Eigen::Index rows = first.embeddings->rows.rows();
    const Eigen::Index hv = first.embeddings->rows.cols();
    const int k = ds.k();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_embeddings: cannot open " + path);
    os.write("AQE1", 4);
    put_u16(os, kFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(ds.items.size()));
    put_u32(os, static_cast<std::uint32_t>(rows));
    put_u32(os, static_cast<std::uint32_t>(hv));
    put_u32(os, static_cast<std::uint32_t>(k));
    for (const auto& item : ds.items) {
        if (!item.embeddings || item.embeddings->rows.rows() != rows ||
            item.embeddings->rows.cols() != hv || item.dos.k() != k)
            throw std::invalid_argument("write_embeddings: inconsistent item shapes");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < hv; ++j) put_f32(os, item.embeddings->rows(i, j));
        for (int i = 0; i < k; ++i) put_f32(os, item.dos.bins(i));
    }
    if (!os) throw std::runtime_error("write_embeddings: write failed for " + path);
}

Dataset read_embeddings(const std::string& path) {
    Reader r(path);
    r.expect_magic("AQE1");
    const std::uint16_t version = r.u16();
    if (version != kFormatVersion)
        throw FormatError("unsupported AQE1 version " + std::to_string(version), 4);
    const std::uint32_t n = r.u32();
    const std::uint32_t rows = r.u32();
    const std::uint32_t hv = r.u32();
    const std::uint32_t k = r.u32();
    if (n == 0 || rows == 0 || hv == 0 || k < 2)
        throw FormatError("bad AQE1 header counts", 6);

    Dataset ds;
    ds.items.reserve(n);
    for (std::uint32_t it = 0; it < n; ++it) {
        Mat m(rows, hv);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < hv; ++j) m(i, j) = r.f32();
        DataItem item;
        item.embeddings = ImageEmbeddings{std::move(m)};
        item.dos = read_dos(r, static_cast<int>(k));
        ds.items.push_back(std::move(item));
    }
    if (!r.at_eof()) throw FormatError("trailing bytes after last item in " + path, r.offset());
    return ds;
}

void write_images(const std::string& path, const Dataset& ds) {
    if (ds.items.empty()) throw std::invalid_argument("write_images: empty dataset");
    const auto& first = ds.items.front();
    if (!first.image) throw std::invalid_argument("write_images: items lack images");
    const int w = first.image->width;
    const int c = first.image->channels;
    const int k = ds.k();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_images: cannot open " + path);
    os.write("AQI1", 4);
    put_u16(os, kFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(ds.items.size()));
    put_u32(os, static_cast<std::uint32_t>(w));
    put_u32(os, static_cast<std::uint32_t>(c));
    put_u32(os, static_cast<std::uint32_t>(k));
    for (const auto& item : ds.items) {
        if (!item.image || item.image->width != w || item.image->channels != c ||
            item.dos.k() != k)
            throw std::invalid_argument("write_images: inconsistent item shapes");
        for (double v : item.image->pixels) put_f32(os, v);
        for (int i = 0; i < k; ++i) put_f32(os, item.dos.bins(i));
    }
    if (!os) throw std::runtime_error("write_images: write failed for " + path);
}

Dataset read_images(const std::string& path) {
    Reader r(path);
    r.expect_magic("AQI1");
    const std::uint16_t version = r.u16();
    if (version != kFormatVersion)
        throw FormatError("unsupported AQI1 version " + std::to_string(version), 4);
    const std::uint32_t n = r.u32();
    const std::uint32_t w = r.u32();
    const std::uint32_t c = r.u32();
    const std::uint32_t k = r.u32();
    if (n == 0 || w == 0 || c == 0 || k < 2)
        throw FormatError("bad AQI1 header counts", 6);

    Dataset ds;
    ds.items.reserve(n);
    for (std::uint32_t it = 0; it < n; ++it) {
        SyntheticImage img;
        img.width = static_cast<int>(w);
        img.channels = static_cast<int>(c);
        img.pixels.resize(static_cast<std::size_t>(w) * w * c);
        for (auto& v : img.pixels) v = r.f32();
        DataItem item;
        item.image = std::move(img);
        item.dos = read_dos(r, static_cast<int>(k));
        ds.items.push_back(std::move(item));
    }
    if (!r.at_eof()) throw FormatError("trailing bytes after last item in " + path, r.offset());
    return ds;
}

}  // namespace aesq
