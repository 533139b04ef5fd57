#include "dsda/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <random>
#include <string>

#include "binary_io.hpp"

namespace dsda {

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kDtypeF32 = 0;
constexpr std::uint32_t kDtypeU8 = 1;
constexpr std::size_t kHeaderBytes = 24;

struct Header {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t bands = 0;
  std::uint32_t dtype = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string() + ": missing file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Header parse_header(const std::vector<unsigned char>& bytes, const char* magic,
                    const std::filesystem::path& path) {
  if (bytes.size() < kHeaderBytes) throw FormatError(path.string() + ": malformed header (truncated)");
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(path.string() + ": malformed header (bad magic)");
  const std::uint32_t version = detail::decode_u32(bytes.data() + 4);
  if (version != kFormatVersion)
    throw FormatError(path.string() + ": malformed header (unsupported version " +
                      std::to_string(version) + ")");
  Header h;
  h.height = detail::decode_u32(bytes.data() + 8);
  h.width = detail::decode_u32(bytes.data() + 12);
  h.bands = detail::decode_u32(bytes.data() + 16);
  h.dtype = detail::decode_u32(bytes.data() + 20);
  return h;
}

void write_header(std::ostream& os, const char* magic, std::size_t h, std::size_t w, std::size_t b,
                  std::uint32_t dtype) {
  os.write(magic, 4);
  detail::put_u32(os, kFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(h));
  detail::put_u32(os, static_cast<std::uint32_t>(w));
  detail::put_u32(os, static_cast<std::uint32_t>(b));
  detail::put_u32(os, dtype);
}

void check_payload(std::size_t have, std::size_t want, const std::filesystem::path& path) {
  if (have != want)
    throw FormatError(path.string() + ": payload size mismatch (expected " + std::to_string(want) +
                      " bytes, found " + std::to_string(have) + ")");
}

}  // namespace

RasterPair::RasterPair(Raster a, Raster b) : t1(std::move(a)), t2(std::move(b)) {
  if (t1.height != t2.height || t1.width != t2.width || t1.bands != t2.bands)
    throw std::invalid_argument("RasterPair: t1 and t2 dimensions differ");
}

Raster load_raster(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Header h = parse_header(bytes, "DSRA", path);
  if (h.dtype != kDtypeF32) throw FormatError(path.string() + ": malformed header (dtype must be 0)");
  const std::size_t count = std::size_t{h.height} * h.width * h.bands;
  check_payload(bytes.size() - kHeaderBytes, count * 4, path);

  Raster r(h.height, h.width, h.bands);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const float v = std::bit_cast<float>(detail::decode_u32(p));
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value in payload");
    r.data[i] = v;
  }
  return r;
}

void save_raster(const std::filesystem::path& path, const Raster& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_header(out, "DSRA", r.height, r.width, r.bands, kDtypeF32);
  for (double v : r.data) detail::put_f32(out, static_cast<float>(v));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

LabelMap load_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Header h = parse_header(bytes, "DSLB", path);
  if (h.dtype != kDtypeU8) throw FormatError(path.string() + ": malformed header (dtype must be 1)");
  if (h.bands != 1) throw FormatError(path.string() + ": malformed header (bands must be 1)");
  const std::size_t count = std::size_t{h.height} * h.width;
  check_payload(bytes.size() - kHeaderBytes, count, path);

  LabelMap lm(h.height, h.width);
  std::copy(bytes.begin() + kHeaderBytes, bytes.end(), lm.labels.begin());
  for (auto v : lm.labels) {
    if (v != kUnchanged && v != kChanged && v != kUnknown)
      throw FormatError(path.string() + ": label value " + std::to_string(v) + " not in {0,1,255}");
  }
  return lm;
}

void save_labels(const std::filesystem::path& path, const LabelMap& lm) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_header(out, "DSLB", lm.height, lm.width, 1, kDtypeU8);
  out.write(reinterpret_cast<const char*>(lm.labels.data()),
            static_cast<std::streamsize>(lm.labels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

// Per-band z-score of every raster in `rs` using statistics pooled over all of them.
void normalize_pooled(std::initializer_list<Raster*> rs, const char* who) {
  const std::size_t bands = (*rs.begin())->bands;
  std::size_t n = 0;
  for (const Raster* r : rs) n += r->pixels();
  if (n == 0) return;
  for (std::size_t b = 0; b < bands; ++b) {
    double mean = 0.0;
    for (const Raster* r : rs) {
      for (std::size_t i = 0; i < r->pixels(); ++i) {
        const double v = r->data[i * bands + b];
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite input");
        mean += v;
      }
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const Raster* r : rs) {
      for (std::size_t i = 0; i < r->pixels(); ++i) {
        const double dv = r->data[i * bands + b] - mean;
        var += dv * dv;
      }
    }
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    // Spread at rounding level is treated as a constant band.
    const bool constant = sd <= 1e-12 * std::max(1.0, std::abs(mean));
    for (Raster* r : rs) {
      for (std::size_t i = 0; i < r->pixels(); ++i) {
        double& v = r->data[i * bands + b];
        v = constant ? 0.0 : (v - mean) / sd;
      }
    }
  }
}

}  // namespace

Raster normalize_per_band(const Raster& r) {
  Raster out = r;
  normalize_pooled({&out}, "normalize_per_band");
  return out;
}

RasterPair normalize_pair(const RasterPair& rp) {
  Raster t1 = rp.t1;
  Raster t2 = rp.t2;
  normalize_pooled({&t1, &t2}, "normalize_pair");
  return {std::move(t1), std::move(t2)};
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void extract_patch(const Raster& r, std::size_t row, std::size_t col, std::size_t k, double* out) {
  const auto h = static_cast<std::ptrdiff_t>(r.height);
  const auto w = static_cast<std::ptrdiff_t>(r.width);
  const std::ptrdiff_t r0 = patch_origin(row, k);
  const std::ptrdiff_t c0 = patch_origin(col, k);
  const std::size_t bands = r.bands;
  for (std::size_t u = 0; u < k; ++u) {
    const auto src_r = static_cast<std::size_t>(reflect_index(r0 + static_cast<std::ptrdiff_t>(u), h));
    for (std::size_t v = 0; v < k; ++v) {
      const auto src_c = static_cast<std::size_t>(reflect_index(c0 + static_cast<std::ptrdiff_t>(v), w));
      const double* src = r.data.data() + (src_r * r.width + src_c) * bands;
      std::copy(src, src + bands, out + (u * k + v) * bands);
    }
  }
}

std::pair<Tensor4, Tensor4> extract_patch_pair(const RasterPair& rp, std::size_t row,
                                               std::size_t col, std::size_t k) {
  if (row >= rp.height() || col >= rp.width())
    throw std::out_of_range("extract_patch_pair: pixel (" + std::to_string(row) + "," +
                            std::to_string(col) + ") outside image");
  if (k == 0) throw std::invalid_argument("extract_patch_pair: k must be positive");
  Tensor4 a(1, k, k, rp.bands());
  Tensor4 b(1, k, k, rp.bands());
  extract_patch(rp.t1, row, col, k, a.values.data());
  extract_patch(rp.t2, row, col, k, b.values.data());
  return {std::move(a), std::move(b)};
}

PatchPairBatch make_batch(const RasterPair& rp, const std::vector<PixelIndex>& pixels,
                          std::size_t k, const LabelMap* lm) {
  PatchPairBatch batch;
  batch.patch_t1 = Tensor4(pixels.size(), k, k, rp.bands());
  batch.patch_t2 = Tensor4(pixels.size(), k, k, rp.bands());
  if (lm) batch.labels.emplace(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto [row, col] = pixels[i];
    if (row >= rp.height() || col >= rp.width())
      throw std::out_of_range("make_batch: pixel outside image");
    extract_patch(rp.t1, row, col, k, batch.patch_t1.sample(i).data());
    extract_patch(rp.t2, row, col, k, batch.patch_t2.sample(i).data());
    if (lm) {
      const auto label = lm->at(row, col);
      if (label == kUnknown) throw std::invalid_argument("make_batch: pixel has unknown label");
      (*batch.labels)[i] = static_cast<double>(label);
    }
  }
  batch.pixel_index = pixels;
  return batch;
}

namespace {

// Partial Fisher-Yates: the first `take` entries become a uniform sample.
void partial_shuffle(std::vector<PixelIndex>& v, std::size_t take, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
  v.resize(take);
}

}  // namespace

std::vector<PixelIndex> sample_labeled_pixels(const LabelMap& lm, std::size_t n, std::uint64_t seed,
                                              bool balanced) {
  std::vector<PixelIndex> changed;
  std::vector<PixelIndex> unchanged;
  for (std::size_t r = 0; r < lm.height; ++r) {
    for (std::size_t c = 0; c < lm.width; ++c) {
      const auto v = lm.at(r, c);
      if (v == kChanged) changed.push_back({r, c});
      else if (v == kUnchanged) unchanged.push_back({r, c});
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<PixelIndex> out;
  if (balanced) {
    const std::size_t n_changed = n / 2;
    const std::size_t n_unchanged = n - n_changed;
    if (changed.size() < n_changed || unchanged.size() < n_unchanged)
      throw std::invalid_argument("sample_training_set: insufficient labeled pixels (need " +
                                  std::to_string(n_changed) + " changed / " +
                                  std::to_string(n_unchanged) + " unchanged)");
    partial_shuffle(changed, n_changed, rng);
    partial_shuffle(unchanged, n_unchanged, rng);
    out = std::move(changed);
    out.insert(out.end(), unchanged.begin(), unchanged.end());
    std::shuffle(out.begin(), out.end(), rng);
  } else {
    out = std::move(changed);
    out.insert(out.end(), unchanged.begin(), unchanged.end());
    if (out.size() < n)
      throw std::invalid_argument("sample_training_set: insufficient labeled pixels (have " +
                                  std::to_string(out.size()) + ", need " + std::to_string(n) + ")");
    // Restore row-major order so the draw does not depend on class grouping.
    std::sort(out.begin(), out.end(), [](const PixelIndex& a, const PixelIndex& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    partial_shuffle(out, n, rng);
  }
  return out;
}

PatchPairBatch sample_training_set(const RasterPair& rp, const LabelMap& lm, std::size_t n,
                                   std::uint64_t seed, bool balanced, std::size_t k) {
  if (lm.height != rp.height() || lm.width != rp.width())
    throw std::invalid_argument("sample_training_set: label map does not match raster pair");
  return make_batch(rp, sample_labeled_pixels(lm, n, seed, balanced), k, &lm);
}

}  // namespace dsda
