#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace trip {

// On-disk tensor container ("TRIP" format): a flat set of named little-endian
// arrays plus an optional metadata text block. Round-trips bit-identically.
//
// Layout (all integers little-endian):
//   char[4]  magic "TRIP"
//   u32      version (1)
//   u64      metadata byte length, followed by that many bytes (UTF-8 text)
//   u32      array count
//   per array:
//     u16    name length, name bytes
//     u8     dtype (0=f32, 1=f64, 2=u8, 3=i64)
//     u8     rank
//     u64[rank] dims
//     raw data (dtype size * product of dims bytes)

enum class DType : uint8_t { F32 = 0, F64 = 1, U8 = 2, I64 = 3 };

inline size_t dtype_size(DType t) {
    switch (t) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U8: return 1;
        case DType::I64: return 8;
    }
    return 0;
}

struct ContainerArray {
    DType dtype = DType::F32;
    std::vector<uint64_t> shape;
    std::vector<uint8_t> bytes;

    uint64_t count() const {
        uint64_t n = 1;
        for (uint64_t d : shape) n *= d;
        return n;
    }
    const float* as_f32() const { return reinterpret_cast<const float*>(bytes.data()); }
    const double* as_f64() const { return reinterpret_cast<const double*>(bytes.data()); }
    const uint8_t* as_u8() const { return bytes.data(); }
    const int64_t* as_i64() const { return reinterpret_cast<const int64_t*>(bytes.data()); }
};

class TensorContainer {
public:
    std::string metadata;

    bool has(const std::string& name) const { return arrays_.count(name) != 0; }
    const ContainerArray& get(const std::string& name) const;
    const std::map<std::string, ContainerArray>& arrays() const { return arrays_; }

    void set(const std::string& name, DType dtype, std::vector<uint64_t> shape,
             const void* data);
    void set_f32(const std::string& name, std::vector<uint64_t> shape,
                 const std::vector<float>& v);
    void set_f64(const std::string& name, std::vector<uint64_t> shape,
                 const std::vector<double>& v);
    void set_u8(const std::string& name, std::vector<uint64_t> shape,
                const std::vector<uint8_t>& v);
    void set_i64(const std::string& name, std::vector<uint64_t> shape,
                 const std::vector<int64_t>& v);
    void set_scalar_f32(const std::string& name, float v);

    float scalar_f32(const std::string& name) const;
    std::vector<float> f32_vector(const std::string& name) const;

    void save(const std::string& path) const;
    static TensorContainer load(const std::string& path);

private:
    std::map<std::string, ContainerArray> arrays_;
};

}  // namespace trip
