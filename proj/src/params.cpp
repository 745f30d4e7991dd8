#include "circlesnake/params.hpp"

namespace csnake {

std::size_t ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::size_t>(rows * cols);
    return tensors_.size() - 1;
}

} // namespace csnake
