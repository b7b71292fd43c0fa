#ifndef DGGCN_TENSOR_HPP
#define DGGCN_TENSOR_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <type_traits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace dggcn {

namespace detail {

/// 64-byte aligned storage that leaves elements uninitialized on resize unless a
/// value is given, so buffers that are about to be overwritten skip the zero fill.
/// Eigen picks its vectorized kernels by pointer alignment, so a fixed alignment
/// also keeps results bit-identical from run to run.
template <class T>
struct default_init_allocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    default_init_allocator() noexcept = default;
    template <class U>
    default_init_allocator(const default_init_allocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }

    template <class U>
    friend bool operator==(const default_init_allocator&, const default_init_allocator<U>&) noexcept {
        return true;
    }
};

} // namespace detail

/// Dense row-major matrix of doubles. Scalars are 1x1, vectors are 1xn or nx1.
class Tensor {
public:
    using Storage = std::vector<double, detail::default_init_allocator<double>>;

    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Tensor(std::size_t rows, std::size_t cols, const std::vector<double>& data)
        : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(rows, cols));
        }
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor(r, c, data);
    }

    /// Shape-only allocation; contents are indeterminate until written.
    static Tensor uninitialized(std::size_t rows, std::size_t cols) {
        Tensor t;
        t.rows_ = rows;
        t.cols_ = cols;
        t.data_.resize(rows * cols);
        return t;
    }

    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double> to_vector() const { return {data_.begin(), data_.end()}; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    double item() const {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
        return data_[0];
    }

    bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const noexcept {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(double v) noexcept {
        for (double& x : data_) x = v;
    }

    std::string shape_string() const { return shape_string(rows_, cols_); }

    static std::string shape_string(std::size_t r, std::size_t c) {
        return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Storage data_;
};

} // namespace dggcn

#endif // DGGCN_TENSOR_HPP
