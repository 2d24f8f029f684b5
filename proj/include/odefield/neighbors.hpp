#pragma once

/// Exact k-nearest-neighbor queries over point sets in R^D and over the
/// temporal grid.  Brute force is the contractual reference; the kd-tree
/// path must return identical results, including tie resolution, and falls
/// back to brute force above a dimension threshold where trees degrade.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "odefield/core.hpp"

namespace odefield {

/// k indices ordered by nondecreasing Euclidean distance; ties broken by
/// ascending index.
struct NeighborResult {
    std::vector<std::size_t> indices;
    std::vector<double> distances;
};

namespace detail {

inline double sq_dist(std::span<const double> a, const double* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
        const double diff = a[c] - b[c];
        acc += diff * diff;
    }
    return acc;
}

struct Candidate {
    double d2;
    std::size_t index;

    // Lexicographic (distance, index): the heap's top is the current worst.
    friend bool operator<(const Candidate& a, const Candidate& b) {
        return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
    }
};

inline NeighborResult finish(std::vector<Candidate> heap) {
    std::sort(heap.begin(), heap.end());
    NeighborResult res;
    res.indices.reserve(heap.size());
    res.distances.reserve(heap.size());
    for (const auto& c : heap) {
        res.indices.push_back(c.index);
        res.distances.push_back(std::sqrt(c.d2));
    }
    return res;
}

} // namespace detail

/// Brute-force exact kNN; the reference implementation for all tests.
inline NeighborResult knn_points_brute(std::span<const double> query,
                                       std::span<const double> points, std::size_t count,
                                       std::size_t dim, std::size_t k) {
    if (k == 0 || k > count)
        throw std::invalid_argument("knn_points: k must satisfy 1 <= k <= |points|");
    if (query.size() != dim || points.size() != count * dim)
        throw std::invalid_argument("knn_points: dimension mismatch");
    std::vector<detail::Candidate> all(count);
    for (std::size_t i = 0; i < count; ++i)
        all[i] = {detail::sq_dist(query, points.data() + i * dim, dim), i};
    std::nth_element(all.begin(), all.begin() + (k - 1), all.end());
    all.resize(k);
    return detail::finish(std::move(all));
}

/// Static exact kNN index.  Builds a kd-tree when the dimension is at or
/// below `brute_threshold` (default 16); otherwise queries scan linearly.
/// Either path returns exactly what knn_points_brute returns.
class NeighborIndex {
public:
    NeighborIndex(std::span<const double> points, std::size_t count, std::size_t dim,
                  std::size_t brute_threshold = 16)
        : points_(points.begin(), points.end()), count_(count), dim_(dim) {
        if (points.size() != count * dim)
            throw std::invalid_argument("NeighborIndex: point buffer shape mismatch");
        use_tree_ = dim_ > 0 && dim_ <= brute_threshold && count_ > 0;
        if (use_tree_) build_tree();
    }

    std::size_t size() const { return count_; }
    std::size_t dim() const { return dim_; }
    bool accelerated() const { return use_tree_; }

    NeighborResult query(std::span<const double> q, std::size_t k) const {
        if (k == 0 || k > count_)
            throw std::invalid_argument("NeighborIndex::query: k out of range");
        if (q.size() != dim_)
            throw std::invalid_argument("NeighborIndex::query: dimension mismatch");
        if (!use_tree_)
            return knn_points_brute(q, points_, count_, dim_, k);

        std::vector<detail::Candidate> heap;
        heap.reserve(k + 1);
        search(0, q, k, heap);
        return detail::finish(std::move(heap));
    }

private:
    struct Node {
        std::size_t axis = 0;
        double split = 0.0;
        std::size_t left = npos, right = npos; // children, npos for leaves
        std::size_t begin = 0, end = 0;        // leaf payload: range in perm_
    };
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    static constexpr std::size_t leaf_size = 16;

    std::vector<double> points_;
    std::size_t count_ = 0;
    std::size_t dim_ = 0;
    bool use_tree_ = false;
    std::vector<std::size_t> perm_;
    std::vector<Node> nodes_;

    double coord(std::size_t i, std::size_t axis) const { return points_[i * dim_ + axis]; }

    void build_tree() {
        perm_.resize(count_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        nodes_.reserve(2 * count_ / leaf_size + 2);
        build_range(0, count_);
    }

    std::size_t build_range(std::size_t begin, std::size_t end) {
        const std::size_t node_id = nodes_.size();
        nodes_.emplace_back();
        if (end - begin <= leaf_size) {
            nodes_[node_id].begin = begin;
            nodes_[node_id].end = end;
            return node_id;
        }
        // Split along the axis of largest extent; deterministic tie handling
        // keeps rebuilt indices identical.
        std::size_t axis = 0;
        double best_extent = -1.0;
        for (std::size_t a = 0; a < dim_; ++a) {
            double lo = coord(perm_[begin], a), hi = lo;
            for (std::size_t i = begin + 1; i < end; ++i) {
                const double v = coord(perm_[i], a);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_extent) {
                best_extent = hi - lo;
                axis = a;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             const double ca = coord(a, axis), cb = coord(b, axis);
                             return ca < cb || (ca == cb && a < b);
                         });
        nodes_[node_id].axis = axis;
        nodes_[node_id].split = coord(perm_[mid], axis);
        const std::size_t left = build_range(begin, mid);
        const std::size_t right = build_range(mid, end);
        nodes_[node_id].left = left;
        nodes_[node_id].right = right;
        return node_id;
    }

    void consider(std::span<const double> q, std::size_t point, std::size_t k,
                  std::vector<detail::Candidate>& heap) const {
        detail::Candidate cand{detail::sq_dist(q, points_.data() + point * dim_, dim_), point};
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
    }

    void search(std::size_t node_id, std::span<const double> q, std::size_t k,
                std::vector<detail::Candidate>& heap) const {
        const Node& node = nodes_[node_id];
        if (node.left == npos) {
            for (std::size_t i = node.begin; i < node.end; ++i)
                consider(q, perm_[i], k, heap);
            return;
        }
        const double diff = q[node.axis] - node.split;
        const std::size_t near = diff < 0.0 ? node.left : node.right;
        const std::size_t far = diff < 0.0 ? node.right : node.left;
        search(near, q, k, heap);
        // The far side may hold an equal-distance, lower-index point, so it
        // is visited on exact equality as well.
        if (heap.size() < k || diff * diff <= heap.front().d2)
            search(far, q, k, heap);
    }
};

/// One-shot exact kNN over a point buffer (count points of dimension dim).
inline NeighborResult knn_points(std::span<const double> query, std::span<const double> points,
                                 std::size_t count, std::size_t dim, std::size_t k,
                                 std::size_t brute_threshold = 16) {
    NeighborIndex index(points, count, dim, brute_threshold);
    return index.query(query, k);
}

/// k2 grid indices minimizing |t_j - t|; ties resolve toward the earlier
/// time.  Indices are 0-based positions into grid.times.
inline NeighborResult knn_times(double t, const TemporalGrid& grid, std::size_t k2) {
    const std::size_t m = grid.size;
    if (k2 == 0 || k2 > m)
        throw std::invalid_argument("knn_times: k2 must satisfy 1 <= k2 <= m");
    const auto& times = grid.times;
    // First index with time > t; candidates expand outward from the seam.
    auto right = static_cast<std::size_t>(
        std::upper_bound(times.begin(), times.end(), t) - times.begin());
    std::size_t left = right; // left candidate is right - 1

    NeighborResult res;
    res.indices.reserve(k2);
    res.distances.reserve(k2);
    for (std::size_t picked = 0; picked < k2; ++picked) {
        const bool has_left = left > 0;
        const bool has_right = right < m;
        bool take_left;
        if (has_left && has_right)
            take_left = (t - times[left - 1]) <= (times[right] - t);
        else
            take_left = has_left;
        if (take_left) {
            --left;
            res.indices.push_back(left);
            res.distances.push_back(std::abs(t - times[left]));
        } else {
            res.indices.push_back(right);
            res.distances.push_back(std::abs(times[right] - t));
            ++right;
        }
    }
    return res;
}

} // namespace odefield
