#include "gsa/binding.hpp"

#include <algorithm>
#include <vector>

#include "gsa/parallel.hpp"

namespace gsa {

Binding bind(const MatX3& gaussian_positions, const MatX3& canonical_vertices, int k) {
    Eigen::Index n = gaussian_positions.rows();
    Eigen::Index v = canonical_vertices.rows();
    require(k >= 1 && k <= v, "bind: k must be in [1, vertex count]");

    Binding binding;
    binding.nearest.resize(n);
    binding.neighbors.resize(n, k);

    parallel_chunks(static_cast<size_t>(n), 256, [&](size_t b, size_t e, size_t) {
        std::vector<std::pair<double, int>> dist(static_cast<size_t>(v));
        for (size_t i = b; i < e; ++i) {
            Vec3 p = gaussian_positions.row(static_cast<Eigen::Index>(i));
            for (Eigen::Index j = 0; j < v; ++j)
                dist[static_cast<size_t>(j)] = {
                    (canonical_vertices.row(j).transpose() - p).squaredNorm(), static_cast<int>(j)};
            std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
            for (int c = 0; c < k; ++c) binding.neighbors(static_cast<Eigen::Index>(i), c) = dist[c].second;
            binding.nearest[static_cast<Eigen::Index>(i)] = dist[0].second;
        }
    });
    return binding;
}

}  // namespace gsa
