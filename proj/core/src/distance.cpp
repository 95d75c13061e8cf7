#include "coseg/distance.hpp"

#include <limits>

namespace coseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-dimensional lower envelope of parabolas ((p - q) * s)^2 + f[q].
// Points with f = +inf contribute no parabola.
void envelope_1d(const std::vector<double>& f, std::vector<double>& d, double s, std::vector<int>& v,
                 std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == kInf) continue;
        const double fq = f[static_cast<std::size_t>(q)] + (q * s) * (q * s);
        while (k >= 0) {
            const int r = v[static_cast<std::size_t>(k)];
            const double fr = f[static_cast<std::size_t>(r)] + (r * s) * (r * s);
            const double cross = (fq - fr) / (2.0 * s * s * (q - r));  // in index units
            if (cross <= z[static_cast<std::size_t>(k)]) {
                --k;
                continue;
            }
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = cross;
            z[static_cast<std::size_t>(k) + 1] = kInf;
            break;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
        }
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), kInf);
        return;
    }
    int j = 0;
    for (int p = 0; p < n; ++p) {
        while (z[static_cast<std::size_t>(j) + 1] < p) ++j;
        const int q = v[static_cast<std::size_t>(j)];
        const double delta = (p - q) * s;
        d[static_cast<std::size_t>(p)] = delta * delta + f[static_cast<std::size_t>(q)];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> mask, const VolumeDomain& domain) {
    const Dims3 dims = domain.dims;
    std::vector<double> dist(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) dist[i] = mask[i] ? 0.0 : kInf;

    for (int axis = 0; axis < 3; ++axis) {
        const int len = dims[axis];
        if (len == 1) continue;
        const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.x)
                                                              : static_cast<std::size_t>(dims.x) * dims.y);
        std::vector<double> f(static_cast<std::size_t>(len));
        std::vector<double> d(static_cast<std::size_t>(len));
        std::vector<int> v(static_cast<std::size_t>(len));
        std::vector<double> z(static_cast<std::size_t>(len) + 1);
        const double s = domain.spacing[axis];
        for (std::size_t start = 0; start < dist.size(); ++start) {
            if ((start / stride) % static_cast<std::size_t>(len) != 0) continue;
            for (int p = 0; p < len; ++p) f[static_cast<std::size_t>(p)] = dist[start + static_cast<std::size_t>(p) * stride];
            envelope_1d(f, d, s, v, z);
            for (int p = 0; p < len; ++p) dist[start + static_cast<std::size_t>(p) * stride] = d[static_cast<std::size_t>(p)];
        }
    }
    return dist;
}

}  // namespace coseg
