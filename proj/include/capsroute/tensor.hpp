// Dense row-major double tensor with runtime shape checks.
#pragma once

#include <cstddef>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace capsroute {

/// Thrown when tensor shapes do not match an operation's contract.
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces a non-finite value. `index` is the
/// position (sequence step, capsule id, ...) where the overflow was detected.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& what, std::size_t index = 0)
        : std::runtime_error(what), index(index) {}
    std::size_t index;
};

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)),
          data_(checked_size(shape_), fill) {}

    Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
        : Tensor(std::vector<std::size_t>(shape), fill) {}

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (checked_size(t.shape_) != values.size()) {
            throw shape_error("Tensor::from: value count does not match shape");
        }
        t.data_ = std::move(values);
        return t;
    }

    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }

    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) throw shape_error("Tensor::dim: axis out of range");
        return shape_[axis];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* raw() { return data_.data(); }
    const double* raw() const { return data_.data(); }

    template <typename... Is>
    double& operator()(Is... idx) {
        return data_[offset(idx...)];
    }
    template <typename... Is>
    double operator()(Is... idx) const {
        return data_[offset(idx...)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << 'x';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    template <typename... Is>
    std::size_t offset(Is... idx) const {
        const std::size_t ids[] = {static_cast<std::size_t>(idx)...};
        if (sizeof...(idx) != shape_.size()) {
            throw shape_error("Tensor: index rank mismatch for shape " + shape_string());
        }
        std::size_t off = 0;
        for (std::size_t a = 0; a < shape_.size(); ++a) {
            if (ids[a] >= shape_[a]) {
                throw shape_error("Tensor: index out of bounds on axis " + std::to_string(a));
            }
            off = off * shape_[a] + ids[a];
        }
        return off;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                          const char* what) {
    if (t.shape() != shape) {
        std::ostringstream os;
        os << what << ": got " << t.shape_string() << ", expected [";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << 'x';
            os << shape[i];
        }
        os << ']';
        throw shape_error(os.str());
    }
}

}  // namespace capsroute
