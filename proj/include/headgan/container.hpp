#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headgan/tensor.hpp"

namespace headgan {

/// Binary container for named multidimensional numeric arrays. This is the
/// one on-disk format used for models, sequences, maps and checkpoints.
///
/// Layout (all integers little-endian):
///   magic "HGA1" | version u8 (=1) | count u32
///   per array: name_len u16, name bytes, dtype u8 (0=f32, 1=i32),
///              ndim u8, dims u32[ndim], payload (4 bytes per element)
enum class Dtype : std::uint8_t { f32 = 0, i32 = 1 };

struct NamedArray {
    std::string name;
    Dtype dtype = Dtype::f32;
    std::vector<int> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;

    std::int64_t numel() const;
};

class ArrayFile {
public:
    void put(const std::string& name, const Tensor& t);
    void put_f32(const std::string& name, std::vector<int> shape, std::vector<float> data);
    void put_i32(const std::string& name, std::vector<int> shape, std::vector<std::int32_t> data);
    void put_scalar(const std::string& name, float value);
    void put_scalar_i32(const std::string& name, std::int32_t value);

    bool has(const std::string& name) const;
    const NamedArray& get(const std::string& name) const;  // throws DataError
    Tensor tensor(const std::string& name) const;
    float scalar(const std::string& name) const;
    std::int32_t scalar_i32(const std::string& name) const;

    const std::vector<NamedArray>& arrays() const { return arrays_; }
    std::size_t size() const { return arrays_.size(); }

    void save(const std::string& path) const;
    static ArrayFile load(const std::string& path);

private:
    std::vector<NamedArray> arrays_;
};

}  // namespace headgan
