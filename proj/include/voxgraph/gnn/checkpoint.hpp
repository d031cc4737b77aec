#pragma once

// MDL1 checkpoint (little-endian):
//   "MDL1" u8 arch u32 hidden_units u32 num_mp_layers u32 gat_heads
//   u8 weighted_messages u32 t_len u32 tensor_count
//   tensor_count * (u32 name_len, name bytes, u32 rows, u32 cols)
//   then every tensor's values as f64, in manifest order

#include <filesystem>

#include "voxgraph/binary_io.hpp"
#include "voxgraph/gnn/model.hpp"

namespace voxgraph::gnn {

inline constexpr std::string_view kModelMagic = "MDL1";

template <typename R>
struct Checkpoint {
  ModelSpec spec;
  std::uint32_t t_len = 0;
  ModelParams<R> params;
};

template <typename R>
io::Bytes encode_checkpoint(const Checkpoint<R>& ck) {
  io::ByteWriter w;
  w.raw(kModelMagic);
  w.u8(static_cast<std::uint8_t>(ck.spec.arch));
  w.u32(ck.spec.hidden_units);
  w.u32(ck.spec.num_mp_layers);
  w.u32(ck.spec.gat_heads);
  w.u8(ck.spec.weighted_messages ? 1 : 0);
  w.u32(ck.t_len);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& t : ck.params.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rows));
    w.u32(static_cast<std::uint32_t>(t.value.cols));
  }
  for (const auto& t : ck.params.tensors)
    for (R v : t.value.data) w.f64(double(v));
  return w.take();
}

/// Decodes and checks the tensor manifest against the shapes implied by the spec.
template <typename R>
Checkpoint<R> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kModelMagic);
  Checkpoint<R> ck;
  const std::size_t arch_at = r.offset();
  const std::uint8_t arch = r.u8();
  if (arch > 3) throw ParseError(ParseErrorKind::BadValue, arch_at, "unknown architecture");
  ck.spec.arch = static_cast<Arch>(arch);
  ck.spec.hidden_units = r.u32();
  ck.spec.num_mp_layers = r.u32();
  ck.spec.gat_heads = r.u32();
  ck.spec.weighted_messages = r.u8() != 0;
  ck.t_len = r.u32();
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  try {
    ck.spec.check();
  } catch (const ContractError& e) {
    throw ParseError(ParseErrorKind::BadValue, arch_at, e.what());
  }
  const auto shapes = parameter_shapes(ck.spec, ck.t_len);
  if (count != shapes.size()) throw ParseError(ParseErrorKind::DimsMismatch, count_at, "tensor count does not match spec");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32();
    std::string name = r.str(len);
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (name != shapes[i].first || rows != shapes[i].second.first || cols != shapes[i].second.second) {
      throw ParseError(ParseErrorKind::DimsMismatch, at, "tensor manifest entry " + std::to_string(i) + " (" + name + ")");
    }
    ck.params.tensors.push_back({std::move(name), Matrix<R>(rows, cols)});
  }
  for (auto& t : ck.params.tensors)
    for (R& v : t.value.data) v = R(r.f64());
  if (!r.at_end()) throw ParseError(ParseErrorKind::BadValue, r.offset(), "trailing bytes after tensors");
  return ck;
}

template <typename R>
void write_checkpoint(const std::filesystem::path& path, const Checkpoint<R>& ck) {
  io::write_file(path, encode_checkpoint(ck));
}

template <typename R>
Checkpoint<R> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<R>(io::read_file(path));
}

}  // namespace voxgraph::gnn
