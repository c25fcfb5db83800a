#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "l2t/error.hpp"
#include "l2t/rng.hpp"

namespace l2t {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major n-d value holder. Doubles throughout.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), values_(shape_numel(shape_), 0.0) {}

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != shape_numel(shape_))
            throw ShapeError("tensor " + shape_str(shape_) + " given " +
                             std::to_string(values_.size()) + " values");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.values_) x = v;
        return t;
    }

    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.values_) x = rng.uniform(lo, hi);
        return t;
    }

    static Tensor normal(Shape shape, double mean, double stddev, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.values_) x = rng.normal(mean, stddev);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return values_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    // 2-d access: row r, column c.
    double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (auto& x : values_) x = v;
    }

    double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

private:
    Shape shape_;
    std::vector<double> values_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

} // namespace l2t
