#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "trip/geometry/vec3.hpp"

namespace trip {

// Static k-d tree over a point set; nearest-neighbour queries only.
class KdTree {
public:
    struct Hit {
        uint32_t index = UINT32_MAX;
        double distance = std::numeric_limits<double>::infinity();
    };

    KdTree() = default;

    explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), 0u);
        if (!points_.empty()) {
            nodes_.reserve(points_.size() / kLeafSize * 2 + 2);
            build(0, uint32_t(points_.size()));
        }
    }

    bool empty() const { return points_.empty(); }
    size_t size() const { return points_.size(); }

    Hit nearest(const Vec3& q) const {
        Hit best;
        if (nodes_.empty()) return best;
        double best_d2 = std::numeric_limits<double>::infinity();
        search(0, q, best.index, best_d2);
        best.distance = std::sqrt(best_d2);
        return best;
    }

private:
    static constexpr uint32_t kLeafSize = 8;

    struct Node {
        uint32_t begin = 0, end = 0;        // leaf range in order_
        uint32_t left = UINT32_MAX, right = UINT32_MAX;
        double split = 0;
        uint8_t axis = 0;
        bool leaf() const { return left == UINT32_MAX; }
    };

    std::vector<Vec3> points_;
    std::vector<uint32_t> order_;
    std::vector<Node> nodes_;

    uint32_t build(uint32_t begin, uint32_t end) {
        uint32_t id = uint32_t(nodes_.size());
        nodes_.push_back({});
        if (end - begin <= kLeafSize) {
            nodes_[id].begin = begin;
            nodes_[id].end = end;
            return id;
        }
        Aabb box;
        for (uint32_t i = begin; i < end; ++i) box.expand(points_[order_[i]]);
        Vec3 ext = box.extent();
        uint8_t axis = 0;
        if (ext.y > ext.x) axis = 1;
        if (ext.z > ext[axis]) axis = 2;
        uint32_t mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](uint32_t a, uint32_t b) {
                             return points_[a][axis] < points_[b][axis];
                         });
        double split = points_[order_[mid]][axis];
        uint32_t left = build(begin, mid);
        uint32_t right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void search(uint32_t id, const Vec3& q, uint32_t& best_idx, double& best_d2) const {
        const Node& n = nodes_[id];
        if (n.leaf()) {
            for (uint32_t i = n.begin; i < n.end; ++i) {
                uint32_t idx = order_[i];
                double d2 = (points_[idx] - q).norm2();
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best_idx = idx;
                }
            }
            return;
        }
        double delta = q[n.axis] - n.split;
        uint32_t near = delta < 0 ? n.left : n.right;
        uint32_t far = delta < 0 ? n.right : n.left;
        search(near, q, best_idx, best_d2);
        if (delta * delta < best_d2) search(far, q, best_idx, best_d2);
    }
};

}  // namespace trip
