#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "bamaer/error.hpp"

namespace bamaer {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense (channels, sequence, features) tensor stored row-major.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t m, std::size_t l, std::size_t v, double fill = 0.0) : m_(m), l_(l), v_(v), data_(m * l * v, fill) {}

    std::size_t channels() const noexcept { return m_; }
    std::size_t length() const noexcept { return l_; }
    std::size_t features() const noexcept { return v_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool same_shape(const Tensor3& o) const noexcept { return m_ == o.m_ && l_ == o.l_ && v_ == o.v_; }

    double& at(std::size_t c, std::size_t t, std::size_t k) { return data_[(c * l_ + t) * v_ + k]; }
    double at(std::size_t c, std::size_t t, std::size_t k) const { return data_[(c * l_ + t) * v_ + k]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    /// Channel c viewed as an (l x v) matrix.
    Eigen::Map<RowMat> channel(std::size_t c) { return {data_.data() + c * l_ * v_, Eigen::Index(l_), Eigen::Index(v_)}; }
    Eigen::Map<const RowMat> channel(std::size_t c) const {
        return {data_.data() + c * l_ * v_, Eigen::Index(l_), Eigen::Index(v_)};
    }
    /// Whole tensor viewed as an (m x l*v) matrix: one column per (position, feature).
    Eigen::Map<RowMat> channel_major() { return {data_.data(), Eigen::Index(m_), Eigen::Index(l_ * v_)}; }
    Eigen::Map<const RowMat> channel_major() const { return {data_.data(), Eigen::Index(m_), Eigen::Index(l_ * v_)}; }

    Tensor3& operator+=(const Tensor3& o) {
        if (!same_shape(o)) throw ShapeMismatch("Tensor3 +=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    std::size_t m_ = 0, l_ = 0, v_ = 0;
    std::vector<double> data_;
};

}  // namespace bamaer
