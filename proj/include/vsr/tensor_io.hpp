#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "vsr/tensor.hpp"

namespace vsr {

// .vten layout: "VTEN0001", u32 rank, rank x u32 dims, f32 payload; all little-endian.
inline constexpr char kVtenMagic[8] = {'V', 'T', 'E', 'N', '0', '0', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is, const std::string& what);

// Rank, dims and payload (no magic); shared with the checkpoint format.
void write_tensor_body(std::ostream& os, const Tensor& t);
Tensor read_tensor_body(std::istream& is, const std::string& what);

void save_vten(const std::filesystem::path& path, const Tensor& t);
Tensor load_vten(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so a failed write never
// leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace vsr
