#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace emoblend {

/// Static 3-d tree over a point set, for k-nearest-neighbour queries.
class KdTree3 {
public:
    using Point = std::array<double, 3>;

    explicit KdTree3(std::vector<Point> points);

    std::size_t size() const noexcept { return points_.size(); }

    /// Indices of the k nearest points to `query` ordered by distance (ties by index),
    /// skipping index `exclude` when it is a valid index.
    std::vector<std::size_t> nearest(const Point& query, std::size_t k, std::size_t exclude = npos) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    struct Node {
        std::size_t point = 0;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(std::span<std::size_t> ids, int depth);

    std::vector<Point> points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace emoblend
