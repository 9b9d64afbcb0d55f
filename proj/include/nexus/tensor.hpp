#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nexus/errors.hpp"

namespace nexus {

// Running tally of live/peak bytes held by Tensor buffers. Used by the
// scaling benchmark as a peak-memory proxy. Single counter, process-wide;
// benchmark runs are single-threaded.
namespace memory {
std::int64_t live_bytes();
std::int64_t peak_bytes();
void reset_peak();
}  // namespace memory

// Dense row-major 64-bit float array with shape metadata. The universal
// numeric carrier: values, gradients and weights are all Tensors.
//
// Invariant: product(shape) == data.size(). Entries are finite after any
// public operation or the operation throws (see assert_finite).
class Tensor {
public:
    Tensor() = default;
    ~Tensor();
    Tensor(const Tensor& other);
    Tensor(Tensor&& other) noexcept;
    Tensor& operator=(const Tensor& other);
    Tensor& operator=(Tensor&& other) noexcept;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    // 2-D convenience: rows given as nested initializer lists.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors (most of the model lives in N x D matrices).
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return {data_.data(), data_.size()}; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Same shape and bit-identical payload.
    bool equals(const Tensor& other) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Returns a reshaped copy sharing the flat layout; total size must match.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    void fill(double value);
    bool all_finite() const;
    // Throws NumericError naming `context` when a non-finite entry exists.
    void assert_finite(const std::string& context) const;

    std::string shape_str() const;

private:
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// "lhs 3x4, rhs 2x5" style shape reporting for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace nexus
