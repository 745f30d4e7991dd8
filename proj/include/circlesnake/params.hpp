#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace csnake {

using MatrixMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatrixMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct TensorSpec {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(rows * cols); }
};

// Named 2-D views into one flat parameter vector.
class ParamLayout {
public:
    std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

    std::size_t total() const noexcept { return total_; }
    const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
    const TensorSpec& operator[](std::size_t i) const { return tensors_[i]; }

    MatrixMap view(std::span<double> flat, std::size_t i) const {
        const auto& t = tensors_[i];
        return MatrixMap(flat.data() + t.offset, t.rows, t.cols);
    }
    ConstMatrixMap view(std::span<const double> flat, std::size_t i) const {
        const auto& t = tensors_[i];
        return ConstMatrixMap(flat.data() + t.offset, t.rows, t.cols);
    }

private:
    std::vector<TensorSpec> tensors_;
    std::size_t total_ = 0;
};

} // namespace csnake
