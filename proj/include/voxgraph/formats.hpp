#pragma once

/*
 * On-disk containers (all little-endian):
 *
 *   VOX1  "VOX1" u32 X u32 Y u32 Z u32 T, then X*Y*Z*T f32 (x-major, t fastest)
 *   MSK1  "MSK1" u32 X u32 Y u32 Z, then X*Y*Z u8 (0 = exclude)
 *   BGR1  "BGR1" u32 n u32 t_len u32 edge_count u8 label_flag u8 label,
 *         n * (3 x u32 coords), n * (t_len x f32), edge_count * (u32 src, u32 dst, f32 w)
 *
 * Dataset manifests are UTF-8 lines "<path>\t<0|1>"; lines starting with '#'
 * are comments, except "#classes\t<name0>\t<name1>" which names the labels.
 */

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxgraph/binary_io.hpp"
#include "voxgraph/core_types.hpp"

namespace voxgraph {

inline constexpr std::string_view kVolumeMagic = "VOX1";
inline constexpr std::string_view kMaskMagic = "MSK1";
inline constexpr std::string_view kGraphMagic = "BGR1";

// ---------------------------------------------------------------- VOX1

inline io::Bytes encode_volume(const Volume4D& vol) {
  io::ByteWriter w;
  w.raw(kVolumeMagic);
  w.u32(vol.dims().x);
  w.u32(vol.dims().y);
  w.u32(vol.dims().z);
  w.u32(vol.t_len());
  w.f32s(vol.data());
  return w.take();
}

inline Volume4D decode_volume(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kVolumeMagic);
  const std::size_t dims_at = r.offset();
  Dims d{r.u32(), r.u32(), r.u32()};
  const std::uint32_t t = r.u32();
  if (d.x == 0 || d.y == 0 || d.z == 0 || t == 0) {
    throw ParseError(ParseErrorKind::ZeroDims, dims_at, "volume dims must all be >= 1");
  }
  std::vector<float> data(d.voxels() * t);
  r.f32s(data, "volume payload");
  if (!r.at_end()) throw ParseError(ParseErrorKind::BadValue, r.offset(), "trailing bytes after volume payload");
  return Volume4D(d, t, std::move(data));
}

inline Volume4D parse_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path)); }

inline void write_volume(const std::filesystem::path& path, const Volume4D& vol) {
  io::write_file(path, encode_volume(vol));
}

// ---------------------------------------------------------------- MSK1

struct Mask {
  Dims dims;
  std::vector<std::uint8_t> keep;  // X*Y*Z, same layout as the volume
  bool includes(std::size_t voxel_index) const noexcept { return keep[voxel_index] != 0; }
};

inline io::Bytes encode_mask(const Mask& m) {
  io::ByteWriter w;
  w.raw(kMaskMagic);
  w.u32(m.dims.x);
  w.u32(m.dims.y);
  w.u32(m.dims.z);
  for (auto b : m.keep) w.u8(b);
  return w.take();
}

inline Mask decode_mask(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kMaskMagic);
  const std::size_t dims_at = r.offset();
  Mask m;
  m.dims = Dims{r.u32(), r.u32(), r.u32()};
  if (m.dims.voxels() == 0) throw ParseError(ParseErrorKind::ZeroDims, dims_at, "mask dims must all be >= 1");
  r.need(m.dims.voxels(), "mask payload");
  m.keep.resize(m.dims.voxels());
  for (auto& b : m.keep) b = r.u8();
  return m;
}

inline Mask read_mask(const std::filesystem::path& path) { return decode_mask(io::read_file(path)); }

inline void write_mask(const std::filesystem::path& path, const Mask& m) { io::write_file(path, encode_mask(m)); }

// ---------------------------------------------------------------- BGR1

inline io::Bytes encode_graph(const BrainGraph& g) {
  io::ByteWriter w;
  w.raw(kGraphMagic);
  w.u32(static_cast<std::uint32_t>(g.n()));
  w.u32(g.t_len);
  w.u32(static_cast<std::uint32_t>(g.edges.size()));
  w.u8(g.label ? 1 : 0);
  w.u8(g.label.value_or(0));
  for (const Coord& c : g.node_coords) {
    w.u32(c.x);
    w.u32(c.y);
    w.u32(c.z);
  }
  w.f32s(g.node_series);
  for (const Edge& e : g.edges) {
    w.u32(e.src);
    w.u32(e.dst);
    w.f32(e.weight);
  }
  return w.take();
}

inline BrainGraph decode_graph(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kGraphMagic);
  BrainGraph g;
  const std::uint32_t n = r.u32();
  g.t_len = r.u32();
  const std::uint32_t edge_count = r.u32();
  const std::size_t flag_at = r.offset();
  const std::uint8_t label_flag = r.u8();
  const std::uint8_t label = r.u8();
  if (label_flag > 1 || label > 1) throw ParseError(ParseErrorKind::BadValue, flag_at, "label flag/label must be 0 or 1");
  if (label_flag) g.label = label;

  r.need(std::size_t(n) * 12, "node coordinates");
  g.node_coords.resize(n);
  for (auto& c : g.node_coords) c = Coord{r.u32(), r.u32(), r.u32()};
  g.node_series.resize(std::size_t(n) * g.t_len);
  r.f32s(g.node_series, "node series");
  r.need(std::size_t(edge_count) * 12, "edge list");
  g.edges.resize(edge_count);
  for (std::size_t i = 0; i < edge_count; ++i) {
    const std::size_t at = r.offset();
    Edge e{r.u32(), r.u32(), r.f32()};
    if (e.src >= n || e.dst >= n || e.src >= e.dst || (i > 0 && !edge_key_less(g.edges[i - 1], e))) {
      throw ParseError(ParseErrorKind::BadValue, at, "edge " + std::to_string(i) + " not canonical/sorted");
    }
    g.edges[i] = e;
  }
  if (!r.at_end()) throw ParseError(ParseErrorKind::BadValue, r.offset(), "trailing bytes after edge list");
  return g;
}

inline BrainGraph read_graph(const std::filesystem::path& path) { return decode_graph(io::read_file(path)); }

inline void write_graph(const std::filesystem::path& path, const BrainGraph& g) {
  io::write_file(path, encode_graph(g));
}

// ---------------------------------------------------------------- manifest

/// Relative paths in the manifest are resolved against the manifest's directory.
inline GraphDataset read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  GraphDataset ds;
  const auto base = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.rfind("#classes\t", 0) == 0) {
        const auto rest = line.substr(9);
        const auto tab = rest.find('\t');
        if (tab == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed #classes line");
        ds.class_names = {rest.substr(0, tab), rest.substr(tab + 1)};
      }
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected <path>\\t<label>");
    const auto lab = line.substr(tab + 1);
    if (lab != "0" && lab != "1") throw IoError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    std::filesystem::path p = line.substr(0, tab);
    if (p.is_relative()) p = base / p;
    ds.entries.push_back({p, static_cast<Label>(lab[0] - '0')});
  }
  return ds;
}

/// Paths are written relative to the manifest directory when they live beneath it.
inline void write_manifest(const std::filesystem::path& path, const GraphDataset& ds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create manifest " + path.string());
  const auto base = path.parent_path();
  out << "#classes\t" << ds.class_names[0] << '\t' << ds.class_names[1] << '\n';
  for (const auto& e : ds.entries) {
    auto p = e.path;
    if (!base.empty()) {
      auto rel = p.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out << p.generic_string() << '\t' << int(e.label) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace voxgraph
