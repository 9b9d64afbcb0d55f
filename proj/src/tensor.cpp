#include "nexus/tensor.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace nexus {

namespace {

std::atomic<std::int64_t> g_live_bytes{0};
std::atomic<std::int64_t> g_peak_bytes{0};

void track_alloc(std::int64_t bytes) {
    const std::int64_t live = g_live_bytes.fetch_add(bytes) + bytes;
    std::int64_t peak = g_peak_bytes.load();
    while (live > peak && !g_peak_bytes.compare_exchange_weak(peak, live)) {
    }
}

void track_free(std::int64_t bytes) { g_live_bytes.fetch_sub(bytes); }

std::size_t checked_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) {
        if (s == 0) throw ShapeError("tensor shape has zero extent: " + shape_str(shape));
        n *= s;
    }
    return n;
}

}  // namespace

namespace memory {
std::int64_t live_bytes() { return g_live_bytes.load(); }
std::int64_t peak_bytes() { return g_peak_bytes.load(); }
void reset_peak() { g_peak_bytes.store(g_live_bytes.load()); }
}  // namespace memory

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    track_alloc(static_cast<std::int64_t>(data_.size() * sizeof(double)));
}

Tensor::~Tensor() { track_free(static_cast<std::int64_t>(data_.size() * sizeof(double))); }

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) {
    track_alloc(static_cast<std::int64_t>(data_.size() * sizeof(double)));
}

Tensor::Tensor(Tensor&& other) noexcept
    : shape_(std::move(other.shape_)), data_(std::move(other.data_)) {
    other.shape_.clear();
    other.data_.clear();
    other.data_.shrink_to_fit();
}

Tensor& Tensor::operator=(const Tensor& other) {
    if (this == &other) return *this;
    track_free(static_cast<std::int64_t>(data_.size() * sizeof(double)));
    shape_ = other.shape_;
    data_ = other.data_;
    track_alloc(static_cast<std::int64_t>(data_.size() * sizeof(double)));
    return *this;
}

Tensor& Tensor::operator=(Tensor&& other) noexcept {
    if (this == &other) return *this;
    track_free(static_cast<std::int64_t>(data_.size() * sizeof(double)));
    shape_ = std::move(other.shape_);
    data_ = std::move(other.data_);
    other.shape_.clear();
    other.data_.clear();
    other.data_.shrink_to_fit();
    return *this;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = checked_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = checked_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    const std::size_t n = checked_count(shape);
    if (n != values.size()) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + nexus::shape_str(shape));
    }
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix initializer");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor is not 2-D, shape " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor is not 2-D, shape " + shape_str());
    return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

bool Tensor::equals(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    const std::size_t n = checked_count(shape);
    if (n != size()) {
        throw ShapeError("reshape from " + shape_str() + " to " + nexus::shape_str(shape) +
                         " changes element count");
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::assert_finite(const std::string& context) const {
    if (!all_finite()) throw NumericError(context + ": non-finite value in tensor");
}

std::string Tensor::shape_str() const { return nexus::shape_str(shape_); }

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << "x";
        out << shape[i];
    }
    out << ")";
    return out.str();
}

}  // namespace nexus
