#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

// Dense rank-1..4 array. The rank-4 layout is (batch, height, width, channels)
// and that ordering is normative everywhere in this library: activations are
// BHWC, conv kernels are (kh, kw, c_in, c_out), dense kernels (n_in, n_out).
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
        if (dims_.empty() || dims_.size() > 4)
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims_.size()));
        for (auto d : dims_)
            if (d < 1) throw ShapeError("tensor extent must be >= 1, got " + std::to_string(d));
        data_.assign(static_cast<std::size_t>(size()), T(0));
    }

    TensorT(std::vector<std::int64_t> dims, std::vector<T> data)
        : TensorT(std::move(dims)) {
        if (data.size() != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match extents product " + std::to_string(data_.size()));
        data_ = std::move(data);
    }

    static TensorT zeros(std::vector<std::int64_t> dims) { return TensorT(std::move(dims)); }

    static TensorT full(std::vector<std::int64_t> dims, T value) {
        TensorT t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<std::int64_t>& dims() const { return dims_; }
    int rank() const { return static_cast<int>(dims_.size()); }
    std::int64_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }

    std::int64_t size() const {
        return std::accumulate(dims_.begin(), dims_.end(), std::int64_t(1),
                               std::multiplies<std::int64_t>());
    }

    bool empty() const { return dims_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Rank-4 accessor, (b, y, x, c).
    T& at(std::int64_t b, std::int64_t y, std::int64_t x, std::int64_t c) {
        return data_[static_cast<std::size_t>(((b * dims_[1] + y) * dims_[2] + x) * dims_[3] + c)];
    }
    const T& at(std::int64_t b, std::int64_t y, std::int64_t x, std::int64_t c) const {
        return data_[static_cast<std::size_t>(((b * dims_[1] + y) * dims_[2] + x) * dims_[3] + c)];
    }

    // Rank-2 accessor, (row, col).
    T& at(std::int64_t r, std::int64_t c) {
        return data_[static_cast<std::size_t>(r * dims_[1] + c)];
    }
    const T& at(std::int64_t r, std::int64_t c) const {
        return data_[static_cast<std::size_t>(r * dims_[1] + c)];
    }

    TensorT reshaped(std::vector<std::int64_t> dims) const {
        TensorT out(std::move(dims));
        if (out.size() != size())
            throw ShapeError("reshape from " + shape_string(dims_) + " to " +
                             shape_string(out.dims_) + " changes element count");
        out.data_ = data_;
        return out;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(dims_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool same_shape(const TensorT& other) const { return dims_ == other.dims_; }

    static std::string shape_string(const std::vector<std::int64_t>& dims) {
        std::string s = "(";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(dims[i]);
        }
        return s + ")";
    }
    std::string shape_string() const { return shape_string(dims_); }

private:
    std::vector<std::int64_t> dims_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;    // training path
using Tensor64 = TensorT<double>; // verification path (gradient checks)

} // namespace sonarzoo
