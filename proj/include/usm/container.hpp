#pragma once

// WKT1 binary container.
//
// Layout: "WKT1", version byte (1), dtype byte, ndim byte, ndim little-endian
// u32 dims, then the row-major little-endian payload. Mask sets are a u32
// count followed by (f32 saliency, u8 WKT1 container) pairs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "usm/types.hpp"

namespace usm {

enum class DType : std::uint8_t { U8 = 1, U16 = 2, U32 = 3, F32 = 4 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

/// Untyped tensor: dims and raw little-endian payload bytes.
struct Tensor {
    DType dtype = DType::U8;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    std::size_t element_count() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }
template <>
constexpr DType dtype_of<std::uint16_t>() { return DType::U16; }
template <>
constexpr DType dtype_of<std::uint32_t>() { return DType::U32; }
template <>
constexpr DType dtype_of<float>() { return DType::F32; }

template <typename T>
Tensor make_tensor(std::vector<std::uint32_t> dims, std::span<const T> values);

/// Decodes the payload; throws FormatError when T does not match the dtype.
template <typename T>
std::vector<T> tensor_values(const Tensor& t);

std::vector<std::uint8_t> encode_container(const Tensor& t);
/// Decodes one container from the front of `bytes`; `consumed` receives its length.
Tensor decode_container(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

void write_container(const Tensor& t, const std::filesystem::path& path);
Tensor read_container(const std::filesystem::path& path);

Tensor to_tensor(const ImageTile& image);
Tensor to_tensor(const FeatureMap& features);
Tensor to_tensor(const LabelMap& labels);
Tensor to_tensor(const RegionMap& regions);

ImageTile image_from_tensor(const Tensor& t);
FeatureMap features_from_tensor(const Tensor& t);
/// num_classes <= 0 infers max label + 1.
LabelMap labels_from_tensor(const Tensor& t, int num_classes = 0);
RegionMap regions_from_tensor(const Tensor& t);

std::vector<std::uint8_t> encode_maskset(const MaskSet& masks);
MaskSet decode_maskset(std::span<const std::uint8_t> bytes);
void write_maskset(const MaskSet& masks, const std::filesystem::path& path);
MaskSet read_maskset(const std::filesystem::path& path);

/// Raw file helpers shared by the pipeline.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace usm
