#include "usm/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "usm/errors.hpp"

namespace usm {

namespace {

constexpr std::uint8_t kMagic[4] = {'W', 'K', 'T', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kMaxDims = 4;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T load_le(const std::uint8_t* p) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void check_dims(const std::vector<std::uint32_t>& dims) {
    if (dims.empty()) throw std::invalid_argument("container: tensor must have at least one dimension");
    if (dims.size() > kMaxDims) throw std::invalid_argument("container: at most 4 dimensions supported");
    for (auto d : dims)
        if (d == 0) throw std::invalid_argument("container: zero-length dimension");
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::U8: return 1;
        case DType::U16: return 2;
        case DType::U32: return 4;
        case DType::F32: return 4;
    }
    throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

const char* dtype_name(DType dtype) {
    switch (dtype) {
        case DType::U8: return "u8";
        case DType::U16: return "u16";
        case DType::U32: return "u32";
        case DType::F32: return "f32";
    }
    return "?";
}

std::size_t Tensor::element_count() const noexcept { return dims.empty() ? 0 : product(dims); }

template <typename T>
Tensor make_tensor(std::vector<std::uint32_t> dims, std::span<const T> values) {
    check_dims(dims);
    if (product(dims) != values.size())
        throw std::invalid_argument("make_tensor: " + std::to_string(values.size()) +
                                    " values do not match dims product " + std::to_string(product(dims)));
    Tensor t;
    t.dtype = dtype_of<T>();
    t.dims = std::move(dims);
    t.payload.reserve(values.size() * sizeof(T));
    for (const T& v : values) append_le(t.payload, v);
    return t;
}

template <typename T>
std::vector<T> tensor_values(const Tensor& t) {
    if (t.dtype != dtype_of<T>())
        throw FormatError(std::string("tensor dtype is ") + dtype_name(t.dtype) + ", expected " +
                          dtype_name(dtype_of<T>()));
    const std::size_t n = t.element_count();
    if (t.payload.size() != n * sizeof(T)) throw FormatError("tensor payload size does not match dims");
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = load_le<T>(t.payload.data() + i * sizeof(T));
    return out;
}

template Tensor make_tensor<std::uint8_t>(std::vector<std::uint32_t>, std::span<const std::uint8_t>);
template Tensor make_tensor<std::uint16_t>(std::vector<std::uint32_t>, std::span<const std::uint16_t>);
template Tensor make_tensor<std::uint32_t>(std::vector<std::uint32_t>, std::span<const std::uint32_t>);
template Tensor make_tensor<float>(std::vector<std::uint32_t>, std::span<const float>);
template std::vector<std::uint8_t> tensor_values<std::uint8_t>(const Tensor&);
template std::vector<std::uint16_t> tensor_values<std::uint16_t>(const Tensor&);
template std::vector<std::uint32_t> tensor_values<std::uint32_t>(const Tensor&);
template std::vector<float> tensor_values<float>(const Tensor&);

std::vector<std::uint8_t> encode_container(const Tensor& t) {
    check_dims(t.dims);
    const std::size_t expected = product(t.dims) * dtype_size(t.dtype);
    if (t.payload.size() != expected) throw std::invalid_argument("encode_container: payload size does not match dims");
    std::vector<std::uint8_t> out;
    out.reserve(7 + 4 * t.dims.size() + t.payload.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(kMagic[i]));
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) append_le(out, d);
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

Tensor decode_container(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    if (bytes.size() < 7) throw FormatError("container truncated: header needs 7 bytes, got " + std::to_string(bytes.size()));
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic: not a WKT1 container");
    if (bytes[4] != kVersion) throw FormatError("unsupported container version " + std::to_string(bytes[4]));
    const std::uint8_t code = bytes[5];
    if (code < 1 || code > 4) throw FormatError("unknown dtype code " + std::to_string(code));
    const std::size_t ndim = bytes[6];
    if (ndim == 0 || ndim > kMaxDims) throw FormatError("invalid dimension count " + std::to_string(ndim));
    const std::size_t header = 7 + 4 * ndim;
    if (bytes.size() < header)
        throw FormatError("container truncated: header needs " + std::to_string(header) + " bytes, got " +
                          std::to_string(bytes.size()));
    Tensor t;
    t.dtype = static_cast<DType>(code);
    for (std::size_t i = 0; i < ndim; ++i) {
        const auto d = load_le<std::uint32_t>(bytes.data() + 7 + 4 * i);
        if (d == 0) throw FormatError("zero-length dimension " + std::to_string(i));
        t.dims.push_back(d);
    }
    const std::size_t payload = product(t.dims) * dtype_size(t.dtype);
    const std::size_t available = bytes.size() - header;
    if (available < payload)
        throw FormatError("container truncated: expected " + std::to_string(payload) + " payload bytes, got " +
                          std::to_string(available));
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                     bytes.begin() + static_cast<std::ptrdiff_t>(header + payload));
    if (consumed) *consumed = header + payload;
    return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
        throw IoError("failed reading " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

void write_container(const Tensor& t, const std::filesystem::path& path) {
    write_file_bytes(path, encode_container(t));
}

Tensor read_container(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t consumed = 0;
    Tensor t = decode_container(bytes, &consumed);
    if (consumed != bytes.size())
        throw FormatError(path.string() + ": " + std::to_string(bytes.size() - consumed) + " trailing bytes");
    return t;
}

Tensor to_tensor(const ImageTile& image) {
    return make_tensor<std::uint8_t>({static_cast<std::uint32_t>(image.height()), static_cast<std::uint32_t>(image.width())},
                                     image.pixels.values());
}

Tensor to_tensor(const FeatureMap& f) {
    return make_tensor<float>({static_cast<std::uint32_t>(f.grid_h()), static_cast<std::uint32_t>(f.grid_w()),
                               static_cast<std::uint32_t>(f.dim())},
                              f.values());
}

Tensor to_tensor(const LabelMap& labels) {
    labels.validate();
    return make_tensor<std::uint16_t>(
        {static_cast<std::uint32_t>(labels.height()), static_cast<std::uint32_t>(labels.width())}, labels.labels.values());
}

Tensor to_tensor(const RegionMap& regions) {
    return make_tensor<std::uint32_t>(
        {static_cast<std::uint32_t>(regions.height()), static_cast<std::uint32_t>(regions.width())}, regions.ids.values());
}

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.dims.size() != rank)
        throw FormatError(std::string(what) + ": expected " + std::to_string(rank) + " dims, got " +
                          std::to_string(t.dims.size()));
}

}  // namespace

ImageTile image_from_tensor(const Tensor& t) {
    expect_rank(t, 2, "image");
    return ImageTile{Grid<std::uint8_t>(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                                        tensor_values<std::uint8_t>(t))};
}

FeatureMap features_from_tensor(const Tensor& t) {
    expect_rank(t, 3, "features");
    FeatureMap f(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                 tensor_values<float>(t));
    try {
        f.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    return f;
}

LabelMap labels_from_tensor(const Tensor& t, int num_classes) {
    expect_rank(t, 2, "labels");
    Grid<std::uint16_t> g(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), tensor_values<std::uint16_t>(t));
    if (num_classes <= 0) {
        int m = 0;
        for (auto v : g) m = std::max<int>(m, v);
        num_classes = m + 1;
    }
    LabelMap out(std::move(g), num_classes);
    try {
        out.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    return out;
}

RegionMap regions_from_tensor(const Tensor& t) {
    expect_rank(t, 2, "regions");
    return RegionMap(Grid<std::uint32_t>(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                                         tensor_values<std::uint32_t>(t)));
}

std::vector<std::uint8_t> encode_maskset(const MaskSet& masks) {
    masks.validate();
    std::vector<std::uint8_t> out;
    append_le(out, static_cast<std::uint32_t>(masks.masks.size()));
    for (const auto& m : masks.masks) {
        append_le(out, m.saliency);
        const auto block = encode_container(to_tensor(ImageTile{m.bits}));
        out.insert(out.end(), block.begin(), block.end());
    }
    return out;
}

MaskSet decode_maskset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("mask set truncated: missing count");
    const auto count = load_le<std::uint32_t>(bytes.data());
    std::size_t pos = 4;
    MaskSet set;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (bytes.size() - pos < 4) throw FormatError("mask set truncated at mask " + std::to_string(i));
        Mask m;
        m.saliency = load_le<float>(bytes.data() + pos);
        pos += 4;
        std::size_t used = 0;
        const Tensor t = decode_container(bytes.subspan(pos), &used);
        pos += used;
        auto image = image_from_tensor(t);
        if (i == 0) {
            set.height = image.height();
            set.width = image.width();
        }
        m.bits = std::move(image.pixels);
        set.masks.push_back(std::move(m));
    }
    if (pos != bytes.size()) throw FormatError("mask set has " + std::to_string(bytes.size() - pos) + " trailing bytes");
    try {
        set.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    return set;
}

void write_maskset(const MaskSet& masks, const std::filesystem::path& path) {
    write_file_bytes(path, encode_maskset(masks));
}

MaskSet read_maskset(const std::filesystem::path& path) { return decode_maskset(read_file_bytes(path)); }

}  // namespace usm
