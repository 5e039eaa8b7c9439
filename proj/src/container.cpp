#include "headgan/container.hpp"

#include <cstring>
#include <fstream>

#include "headgan/errors.hpp"

namespace headgan {

namespace {

constexpr char kMagic[4] = {'H', 'G', 'A', '1'};
constexpr std::uint8_t kVersion = 1;

void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void write_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

std::uint8_t read_u8(std::istream& is) {
    int c = is.get();
    if (c == EOF) throw DataError("array container truncated");
    return static_cast<std::uint8_t>(c);
}

std::uint16_t read_u16(std::istream& is) {
    std::uint16_t v = read_u8(is);
    v |= static_cast<std::uint16_t>(read_u8(is)) << 8;
    return v;
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(read_u8(is)) << (8 * i);
    return v;
}

template <typename T>
void write_payload(std::ostream& os, const std::vector<T>& data) {
    static_assert(sizeof(T) == 4);
    for (T x : data) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        write_u32(os, bits);
    }
}

template <typename T>
void read_payload(std::istream& is, std::vector<T>& out, std::int64_t count) {
    static_assert(sizeof(T) == 4);
    out.resize(static_cast<std::size_t>(count));
    std::vector<char> raw(static_cast<std::size_t>(count) * 4);
    is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (is.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("array container truncated inside payload");
    for (std::int64_t i = 0; i < count; ++i) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data() + i * 4);
        std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        std::memcpy(&out[static_cast<std::size_t>(i)], &bits, 4);
    }
}

}  // namespace

std::int64_t NamedArray::numel() const { return shape_numel(shape); }

void ArrayFile::put(const std::string& name, const Tensor& t) {
    put_f32(name, t.shape(), t.storage());
}

void ArrayFile::put_f32(const std::string& name, std::vector<int> shape, std::vector<float> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw DataError("array '" + name + "': data size does not match shape");
    NamedArray a;
    a.name = name;
    a.dtype = Dtype::f32;
    a.shape = std::move(shape);
    a.f32 = std::move(data);
    arrays_.push_back(std::move(a));
}

void ArrayFile::put_i32(const std::string& name, std::vector<int> shape, std::vector<std::int32_t> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw DataError("array '" + name + "': data size does not match shape");
    NamedArray a;
    a.name = name;
    a.dtype = Dtype::i32;
    a.shape = std::move(shape);
    a.i32 = std::move(data);
    arrays_.push_back(std::move(a));
}

void ArrayFile::put_scalar(const std::string& name, float value) {
    put_f32(name, {1}, {value});
}

void ArrayFile::put_scalar_i32(const std::string& name, std::int32_t value) {
    put_i32(name, {1}, {value});
}

bool ArrayFile::has(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return true;
    return false;
}

const NamedArray& ArrayFile::get(const std::string& name) const {
    for (const auto& a : arrays_)
        if (a.name == name) return a;
    throw DataError("array '" + name + "' not found in container");
}

Tensor ArrayFile::tensor(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::f32) throw DataError("array '" + name + "' is not float32");
    return Tensor(a.shape, a.f32);
}

float ArrayFile::scalar(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::f32 || a.numel() != 1) throw DataError("array '" + name + "' is not a float scalar");
    return a.f32[0];
}

std::int32_t ArrayFile::scalar_i32(const std::string& name) const {
    const NamedArray& a = get(name);
    if (a.dtype != Dtype::i32 || a.numel() != 1) throw DataError("array '" + name + "' is not an int scalar");
    return a.i32[0];
}

void ArrayFile::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u8(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(arrays_.size()));
    for (const auto& a : arrays_) {
        if (a.name.size() > 0xffff) throw DataError("array name too long: " + a.name);
        write_u16(os, static_cast<std::uint16_t>(a.name.size()));
        os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        write_u8(os, static_cast<std::uint8_t>(a.dtype));
        write_u8(os, static_cast<std::uint8_t>(a.shape.size()));
        for (int d : a.shape) write_u32(os, static_cast<std::uint32_t>(d));
        if (a.dtype == Dtype::f32)
            write_payload(os, a.f32);
        else
            write_payload(os, a.i32);
    }
    if (!os) throw DataError("write failed for '" + path + "'");
}

ArrayFile ArrayFile::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "' is not an array container");
    std::uint8_t version = read_u8(is);
    if (version != kVersion) throw DataError("'" + path + "': unsupported container version");
    std::uint32_t count = read_u32(is);

    ArrayFile file;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        std::uint16_t name_len = read_u16(is);
        a.name.resize(name_len);
        is.read(a.name.data(), name_len);
        if (is.gcount() != name_len) throw DataError("'" + path + "': truncated array name");
        std::uint8_t dtype = read_u8(is);
        if (dtype > 1) throw DataError("'" + path + "': unknown dtype for array '" + a.name + "'");
        a.dtype = static_cast<Dtype>(dtype);
        std::uint8_t ndim = read_u8(is);
        a.shape.resize(ndim);
        for (auto& d : a.shape) d = static_cast<int>(read_u32(is));
        std::int64_t n = shape_numel(a.shape);
        if (a.dtype == Dtype::f32)
            read_payload(is, a.f32, n);
        else
            read_payload(is, a.i32, n);
        file.arrays_.push_back(std::move(a));
    }
    return file;
}

}  // namespace headgan
