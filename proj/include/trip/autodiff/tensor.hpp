#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "trip/core/error.hpp"

namespace trip::ad {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d < 0) throw internal_error("negative tensor dimension");
        n *= size_t(d);
    }
    return n;
}

// Dense row-major tensor. Scalar type is a template parameter so the same
// graph runs in float for training and double for finite-difference checks.
template <class S>
struct Tensor {
    Shape shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(Shape sh) : shape(std::move(sh)), data(shape_numel(shape), S(0)) {}
    Tensor(Shape sh, S fill) : shape(std::move(sh)), data(shape_numel(shape), fill) {}
    Tensor(Shape sh, std::vector<S> values) : shape(std::move(sh)), data(std::move(values)) {
        if (data.size() != shape_numel(shape)) throw internal_error("tensor data/shape mismatch");
    }

    size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[size_t(i)]; }
    int ndim() const { return int(shape.size()); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](size_t i) { return data[i]; }
    const S& operator[](size_t i) const { return data[i]; }

    static Tensor scalar(S v) { return Tensor({1}, std::vector<S>{v}); }

    S scalar_value() const {
        if (numel() != 1) throw internal_error("scalar_value on non-scalar tensor");
        return data[0];
    }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

}  // namespace trip::ad
