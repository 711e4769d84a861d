#include "trip/core/container.hpp"

#include <cstring>
#include <fstream>

#include "trip/core/error.hpp"

namespace trip {

namespace {

constexpr char kMagic[4] = {'T', 'R', 'I', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw input_error("container: truncated file");
    return v;
}

}  // namespace

const ContainerArray& TensorContainer::get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw input_error("container: missing array '" + name + "'");
    return it->second;
}

void TensorContainer::set(const std::string& name, DType dtype,
                          std::vector<uint64_t> shape, const void* data) {
    ContainerArray a;
    a.dtype = dtype;
    a.shape = std::move(shape);
    a.bytes.resize(a.count() * dtype_size(dtype));
    if (!a.bytes.empty()) std::memcpy(a.bytes.data(), data, a.bytes.size());
    arrays_[name] = std::move(a);
}

void TensorContainer::set_f32(const std::string& name, std::vector<uint64_t> shape,
                              const std::vector<float>& v) {
    set(name, DType::F32, std::move(shape), v.data());
}
void TensorContainer::set_f64(const std::string& name, std::vector<uint64_t> shape,
                              const std::vector<double>& v) {
    set(name, DType::F64, std::move(shape), v.data());
}
void TensorContainer::set_u8(const std::string& name, std::vector<uint64_t> shape,
                             const std::vector<uint8_t>& v) {
    set(name, DType::U8, std::move(shape), v.data());
}
void TensorContainer::set_i64(const std::string& name, std::vector<uint64_t> shape,
                              const std::vector<int64_t>& v) {
    set(name, DType::I64, std::move(shape), v.data());
}
void TensorContainer::set_scalar_f32(const std::string& name, float v) {
    set(name, DType::F32, {}, &v);
}

float TensorContainer::scalar_f32(const std::string& name) const {
    const ContainerArray& a = get(name);
    if (a.dtype != DType::F32 || a.count() != 1)
        throw input_error("container: '" + name + "' is not a f32 scalar");
    return a.as_f32()[0];
}

std::vector<float> TensorContainer::f32_vector(const std::string& name) const {
    const ContainerArray& a = get(name);
    if (a.dtype != DType::F32)
        throw input_error("container: '" + name + "' is not f32");
    return std::vector<float>(a.as_f32(), a.as_f32() + a.count());
}

void TensorContainer::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw input_error("container: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    write_pod<uint64_t>(os, metadata.size());
    os.write(metadata.data(), std::streamsize(metadata.size()));
    write_pod<uint32_t>(os, uint32_t(arrays_.size()));
    for (const auto& [name, a] : arrays_) {
        write_pod<uint16_t>(os, uint16_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        write_pod<uint8_t>(os, uint8_t(a.dtype));
        write_pod<uint8_t>(os, uint8_t(a.shape.size()));
        for (uint64_t d : a.shape) write_pod<uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(a.bytes.data()),
                 std::streamsize(a.bytes.size()));
    }
    if (!os) throw internal_error("container: write failed for '" + path + "'");
}

TensorContainer TensorContainer::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw input_error("container: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw input_error("container: bad magic in '" + path + "'");
    uint32_t version = read_pod<uint32_t>(is);
    if (version != kVersion)
        throw input_error("container: unsupported version in '" + path + "'");
    TensorContainer c;
    uint64_t meta_len = read_pod<uint64_t>(is);
    c.metadata.resize(meta_len);
    is.read(c.metadata.data(), std::streamsize(meta_len));
    uint32_t n_arrays = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n_arrays; ++i) {
        uint16_t name_len = read_pod<uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        ContainerArray a;
        a.dtype = DType(read_pod<uint8_t>(is));
        uint8_t rank = read_pod<uint8_t>(is);
        a.shape.resize(rank);
        for (uint8_t d = 0; d < rank; ++d) a.shape[d] = read_pod<uint64_t>(is);
        a.bytes.resize(a.count() * dtype_size(a.dtype));
        is.read(reinterpret_cast<char*>(a.bytes.data()),
                std::streamsize(a.bytes.size()));
        if (!is) throw input_error("container: truncated array '" + name + "'");
        c.arrays_[name] = std::move(a);
    }
    return c;
}

}  // namespace trip
