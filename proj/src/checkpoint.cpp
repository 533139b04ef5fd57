#include "dsda/checkpoint.hpp"

#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "dsda/raster.hpp"

namespace dsda {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint32_t> shape_of(const DsdaParams& p, std::size_t record) {
  const std::size_t layer = record / 2;
  const bool is_bias = record % 2 == 1;
  if (layer < p.conv.size()) {
    const auto& c = p.conv[layer];
    if (is_bias) return {static_cast<std::uint32_t>(c.out_ch)};
    return {static_cast<std::uint32_t>(c.kh), static_cast<std::uint32_t>(c.kw), static_cast<std::uint32_t>(c.in_ch),
            static_cast<std::uint32_t>(c.out_ch)};
  }
  const auto& f = p.fc[layer - p.conv.size()];
  if (is_bias) return {static_cast<std::uint32_t>(f.out_dim)};
  return {static_cast<std::uint32_t>(f.out_dim), static_cast<std::uint32_t>(f.in_dim)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.family.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("DSCK", 4);
  detail::put_u32(out, kCheckpointVersion);
  const auto views = ckpt.params.views();
  const auto names = parameter_names();
  detail::put_u32(out, static_cast<std::uint32_t>(views.size()));
  for (std::size_t r = 0; r < views.size(); ++r) {
    detail::put_u32(out, static_cast<std::uint32_t>(names[r].size()));
    out.write(names[r].data(), static_cast<std::streamsize>(names[r].size()));
    const auto shape = shape_of(ckpt.params, r);
    detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) detail::put_u32(out, d);
    for (double v : views[r]) detail::put_f64(out, v);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.family.size()));
  for (double v : ckpt.family.bandwidths) detail::put_f64(out, v);
  for (double v : ckpt.family.beta) detail::put_f64(out, v);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string() + ": missing file");
  auto fail = [&](const std::string& why) { throw FormatError(path.string() + ": " + why); };

  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "DSCK") fail("bad checkpoint magic");
  std::uint32_t version = 0;
  std::uint32_t records = 0;
  if (!detail::get_u32(in, version) || version != kCheckpointVersion) fail("unsupported checkpoint version");
  Checkpoint ckpt{make_params(), {}};
  auto views = ckpt.params.views();
  const auto names = parameter_names();
  if (!detail::get_u32(in, records) || records != views.size()) fail("unexpected record count");

  for (std::size_t r = 0; r < views.size(); ++r) {
    std::uint32_t len = 0;
    if (!detail::get_u32(in, len) || len > 256) fail("truncated record header");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) fail("truncated record name");
    if (name != names[r]) fail("expected record " + std::string(names[r]) + ", found " + name);
    std::uint32_t rank = 0;
    if (!detail::get_u32(in, rank)) fail("truncated shape");
    std::vector<std::uint32_t> shape(rank);
    for (auto& d : shape)
      if (!detail::get_u32(in, d)) fail("truncated shape");
    if (shape != shape_of(ckpt.params, r)) fail("shape mismatch in record " + name);
    for (double& v : views[r])
      if (!detail::get_f64(in, v)) fail("truncated payload in record " + name);
  }

  std::uint32_t m = 0;
  if (!detail::get_u32(in, m) || m == 0 || m > 1024) fail("bad kernel family record");
  ckpt.family.bandwidths.resize(m);
  ckpt.family.beta.resize(m);
  for (double& v : ckpt.family.bandwidths)
    if (!detail::get_f64(in, v)) fail("truncated kernel family");
  for (double& v : ckpt.family.beta)
    if (!detail::get_f64(in, v)) fail("truncated kernel family");
  if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after kernel family");
  try {
    ckpt.family.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return ckpt;
}

}  // namespace dsda
