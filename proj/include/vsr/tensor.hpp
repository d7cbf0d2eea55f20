#pragma once

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vsr {

// Element type. float32 in normal builds; the double build exists for
// finite-difference gradient checks.
#ifdef VSR_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::size_t>;

inline bool same_bits(real a, real b) { return std::memcmp(&a, &b, sizeof(real)) == 0; }

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of `real`. Every dimension is >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, real fill = 0.0f);
    Tensor(Shape shape, std::vector<real> data);

    static Tensor scalar(real v) { return Tensor({1}, std::vector<real>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<real> data() { return data_; }
    std::span<const real> data() const { return data_; }
    std::vector<real>& storage() { return data_; }
    const std::vector<real>& storage() const { return data_; }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }

    // Bounds-checked multi-index access.
    real& at(std::initializer_list<std::size_t> idx);
    real at(std::initializer_list<std::size_t> idx) const;

    // Size of the last axis; the tensor is viewed as rows() x cols().
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
    std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    Tensor reshaped(Shape shape) const;
    bool all_finite() const;

    bool operator==(const Tensor& other) const = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    Shape shape_;
    std::vector<real> data_;
};

// Throws NumericError naming `op` when the tensor holds NaN/Inf.
void require_finite(const Tensor& t, const char* op);

// Bitwise equality of shapes and payloads (distinguishes -0.0 and NaN payloads).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace vsr
