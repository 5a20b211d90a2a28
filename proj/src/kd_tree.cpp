#include "emoblend/kd_tree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <utility>

namespace emoblend {

namespace {

double sq_dist(const KdTree3::Point& a, const KdTree3::Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

KdTree3::KdTree3(std::vector<Point> points) : points_(std::move(points)) {
    std::vector<std::size_t> ids(points_.size());
    std::iota(ids.begin(), ids.end(), 0);
    nodes_.reserve(points_.size());
    root_ = build(ids, 0);
}

int KdTree3::build(std::span<std::size_t> ids, int depth) {
    if (ids.empty()) return -1;
    const int axis = depth % 3;
    const auto mid = ids.size() / 2;
    std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(mid), ids.end(),
                     [&](std::size_t a, std::size_t b) {
                         if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                         return a < b;
                     });
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{ids[mid], axis, -1, -1});
    const int left = build(ids.first(mid), depth + 1);
    const int right = build(ids.subspan(mid + 1), depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

std::vector<std::size_t> KdTree3::nearest(const Point& query, std::size_t k, std::size_t exclude) const {
    using Entry = std::pair<double, std::size_t>;  // max-heap on (distance, index)
    std::priority_queue<Entry> best;
    if (k == 0) return {};

    auto visit = [&](auto&& self, int node) -> void {
        if (node < 0) return;
        const Node& n = nodes_[node];
        const Point& p = points_[n.point];
        if (n.point != exclude) {
            const Entry e{sq_dist(p, query), n.point};
            if (best.size() < k) best.push(e);
            else if (e < best.top()) {
                best.pop();
                best.push(e);
            }
        }
        const double diff = query[n.axis] - p[n.axis];
        const int near = diff < 0 ? n.left : n.right;
        const int far = diff < 0 ? n.right : n.left;
        self(self, near);
        if (best.size() < k || diff * diff <= best.top().first) self(self, far);
    };
    visit(visit, root_);

    std::vector<Entry> sorted;
    while (!best.empty()) {
        sorted.push_back(best.top());
        best.pop();
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> out;
    out.reserve(sorted.size());
    for (const auto& e : sorted) out.push_back(e.second);
    return out;
}

}  // namespace emoblend
