#include "headgan/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "headgan/errors.hpp"

namespace headgan {

namespace {

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
    put_u32be(out, static_cast<std::uint32_t>(data.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& image) {
    if (image.width <= 0 || image.height <= 0) throw DataError("write_png: empty image");
    if (image.channels != 1 && image.channels != 3 && image.channels != 4)
        throw DataError("write_png: unsupported channel count");
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
        throw DataError("write_png: pixel buffer size mismatch");

    const int bpp = image.channels;
    const std::size_t stride = static_cast<std::size_t>(image.width) * bpp;

    // Filter 0 on every scanline.
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * image.height);
    for (int y = 0; y < image.height; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = image.pixels.data() + static_cast<std::size_t>(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw RunError("write_png: deflate failed");
    comp.resize(comp_cap);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(image.width));
    put_u32be(ihdr, static_cast<std::uint32_t>(image.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(image.channels == 1 ? 0 : (image.channels == 3 ? 2 : 6));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw DataError("write failed for '" + path + "'");
}

ImageU8 read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw DataError("'" + path + "' is not a PNG file");

    ImageU8 image;
    std::vector<std::uint8_t> idat;
    int bit_depth = 0, color_type = -1;
    std::size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        std::uint32_t len = get_u32be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw DataError("'" + path + "': truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("'" + path + "': bad IHDR");
            image.width = static_cast<int>(get_u32be(data));
            image.height = static_cast<int>(get_u32be(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw DataError("'" + path + "': interlaced PNG not supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (bit_depth != 8) throw DataError("'" + path + "': only 8-bit PNG supported");
    switch (color_type) {
        case 0: image.channels = 1; break;
        case 2: image.channels = 3; break;
        case 6: image.channels = 4; break;
        default: throw DataError("'" + path + "': unsupported PNG color type");
    }
    if (image.width <= 0 || image.height <= 0) throw DataError("'" + path + "': bad dimensions");

    const int bpp = image.channels;
    const std::size_t stride = static_cast<std::size_t>(image.width) * bpp;
    uLongf raw_size = static_cast<uLongf>((stride + 1) * image.height);
    std::vector<std::uint8_t> raw(raw_size);
    if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_size != (stride + 1) * static_cast<std::size_t>(image.height))
        throw DataError("'" + path + "': PNG inflate failed");

    image.pixels.assign(stride * image.height, 0);
    std::vector<std::uint8_t> prev(stride, 0);
    for (int y = 0; y < image.height; ++y) {
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        std::uint8_t filter = src[0];
        ++src;
        std::uint8_t* dst = image.pixels.data() + static_cast<std::size_t>(y) * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            int b = prev[i];
            int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            int x = src[i];
            switch (filter) {
                case 0: dst[i] = static_cast<std::uint8_t>(x); break;
                case 1: dst[i] = static_cast<std::uint8_t>(x + a); break;
                case 2: dst[i] = static_cast<std::uint8_t>(x + b); break;
                case 3: dst[i] = static_cast<std::uint8_t>(x + ((a + b) >> 1)); break;
                case 4: dst[i] = static_cast<std::uint8_t>(x + paeth(a, b, c)); break;
                default: throw DataError("'" + path + "': unknown PNG filter");
            }
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return image;
}

ImageU8 tensor_to_image(const Tensor& chw, bool signed_range) {
    if (chw.ndim() != 3) throw std::invalid_argument("tensor_to_image expects a CHW tensor");
    const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    if (C != 1 && C != 3) throw std::invalid_argument("tensor_to_image expects 1 or 3 channels");
    ImageU8 image;
    image.width = W;
    image.height = H;
    image.channels = C;
    image.pixels.resize(static_cast<std::size_t>(W) * H * C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                float v = chw.at(c, y, x);
                float unit = signed_range ? (v + 1.0f) * 0.5f : v;
                unit = std::min(1.0f, std::max(0.0f, unit));
                image.at(y, x, c) = static_cast<std::uint8_t>(std::lround(unit * 255.0f));
            }
    return image;
}

Tensor image_to_tensor(const ImageU8& image, bool signed_range) {
    const int C = image.channels >= 3 ? 3 : 1;
    Tensor t({C, image.height, image.width});
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < C; ++c) {
                float unit = static_cast<float>(image.at(y, x, c)) / 255.0f;
                t.at(c, y, x) = signed_range ? unit * 2.0f - 1.0f : unit;
            }
    return t;
}

}  // namespace headgan
