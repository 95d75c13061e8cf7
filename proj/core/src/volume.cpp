#include "coseg/volume.hpp"

#include <algorithm>
#include <limits>

#include "coseg/parallel.hpp"

namespace coseg {

void VolumeDomain::validate() const {
    if (dims.x < 1 || dims.y < 1 || dims.z < 1)
        throw ConfigError("volume dims must all be >= 1");
    if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
        throw ConfigError("volume spacing must be > 0 on every axis");
}

void require_codomain(const VolumeDomain& a, const VolumeDomain& b, const char* what) {
    if (!(a == b)) throw DomainMismatchError(std::string(what) + ": inputs are not co-domain");
}

ProbabilityMap::ProbabilityMap(VolumeDomain domain, int num_classes)
    : domain_(domain), num_classes_(num_classes), data_(domain.size() * static_cast<std::size_t>(num_classes), 0.0) {
    if (num_classes < 1) throw ConfigError("probability map needs at least one class");
}

ProbabilityMap::ProbabilityMap(VolumeDomain domain, int num_classes, std::vector<double> data)
    : domain_(domain), num_classes_(num_classes), data_(std::move(data)) {
    if (num_classes < 1) throw ConfigError("probability map needs at least one class");
    if (data_.size() != domain_.size() * static_cast<std::size_t>(num_classes))
        throw SizeError("probability data length does not match domain size x classes");
}

void ProbabilityMap::renormalize() {
    const std::size_t n = voxels();
    parallel_chunks(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t v = b; v < e; ++v) {
            double sum = 0.0;
            for (int c = 0; c < num_classes_; ++c) {
                double& p = (*this)(v, c);
                if (!(p > 0.0)) p = 0.0;  // also maps NaN to 0
                if (p > 1.0) p = 1.0;
                sum += p;
            }
            if (sum <= 0.0) {
                (*this)(v, 0) = 1.0;
                continue;
            }
            for (int c = 0; c < num_classes_; ++c) (*this)(v, c) /= sum;
        }
    });
}

double ProbabilityMap::max_sum_deviation() const {
    double worst = 0.0;
    for (std::size_t v = 0; v < voxels(); ++v) {
        double sum = 0.0;
        for (int c = 0; c < num_classes_; ++c) sum += (*this)(v, c);
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

double sample_trilinear(std::span<const double> data, const Dims3& dims, Vec3 p) {
    int i0[3];
    int i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double hi = static_cast<double>(dims[a] - 1);
        const double c = std::clamp(p[a], 0.0, hi);
        const double fl = std::floor(c);
        i0[a] = static_cast<int>(fl);
        i1[a] = std::min(i0[a] + 1, dims[a] - 1);
        f[a] = c - fl;
    }
    const auto nx = static_cast<std::size_t>(dims.x);
    const auto nxy = nx * static_cast<std::size_t>(dims.y);
    auto at = [&](int i, int j, int k) {
        return data[static_cast<std::size_t>(i) + nx * static_cast<std::size_t>(j) + nxy * static_cast<std::size_t>(k)];
    };
    const double c00 = at(i0[0], i0[1], i0[2]) * (1.0 - f[0]) + at(i1[0], i0[1], i0[2]) * f[0];
    const double c10 = at(i0[0], i1[1], i0[2]) * (1.0 - f[0]) + at(i1[0], i1[1], i0[2]) * f[0];
    const double c01 = at(i0[0], i0[1], i1[2]) * (1.0 - f[0]) + at(i1[0], i0[1], i1[2]) * f[0];
    const double c11 = at(i0[0], i1[1], i1[2]) * (1.0 - f[0]) + at(i1[0], i1[1], i1[2]) * f[0];
    const double c0 = c00 * (1.0 - f[1]) + c10 * f[1];
    const double c1 = c01 * (1.0 - f[1]) + c11 * f[1];
    return c0 * (1.0 - f[2]) + c1 * f[2];
}

double sample_trilinear(const ScalarVolume& vol, Vec3 p) { return sample_trilinear(vol.data(), vol.dims(), p); }

Label sample_nearest(const LabelMap& map, Vec3 p) {
    int idx[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::clamp(p[a], 0.0, static_cast<double>(map.dims()[a] - 1));
        idx[a] = static_cast<int>(std::ceil(c - 0.5));
    }
    return map.at(idx[0], idx[1], idx[2]);
}

bool inside_domain(const Dims3& dims, Vec3 p) {
    for (int a = 0; a < 3; ++a)
        if (p[a] < -0.5 || p[a] > dims[a] - 0.5) return false;
    return true;
}

ScalarVolume normalize_intensities(const ScalarVolume& vol) {
    const auto [lo, hi] = std::minmax_element(vol.storage().begin(), vol.storage().end());
    if (lo == vol.storage().end() || !(*hi > *lo))
        throw DegenerateInputError("cannot normalize a constant volume (zero intensity range)");
    const double mn = *lo;
    const double range = *hi - *lo;
    ScalarVolume out(vol.domain());
    for (std::size_t i = 0; i < vol.size(); ++i) out[i] = (vol[i] - mn) / range;
    return out;
}

LabelMap argmax_labels(const ProbabilityMap& prob) {
    LabelMap out(prob.domain());
    const int nc = prob.num_classes();
    for (std::size_t v = 0; v < prob.voxels(); ++v) {
        int best = 0;
        double best_p = prob(v, 0);
        for (int c = 1; c < nc; ++c) {
            if (prob(v, c) > best_p) {
                best_p = prob(v, c);
                best = c;
            }
        }
        out[v] = static_cast<Label>(best);
    }
    return out;
}

ProbabilityMap one_hot(const LabelMap& map, int num_classes) {
    ProbabilityMap out(map.domain(), num_classes);
    for (std::size_t v = 0; v < map.size(); ++v) {
        if (map[v] >= num_classes)
            throw ConfigError("label " + std::to_string(map[v]) + " exceeds class count " + std::to_string(num_classes));
        out(v, map[v]) = 1.0;
    }
    return out;
}

Label max_label(const LabelMap& map) {
    Label m = 0;
    for (Label l : map.storage()) m = std::max(m, l);
    return m;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

void convolve_axis(const std::vector<double>& in, std::vector<double>& out, const Dims3& dims, int axis,
                   const std::vector<double>& kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims.x)
                                                          : static_cast<std::size_t>(dims.x) * dims.y);
    const int len = dims[axis];
    const std::size_t total = dims.count();
    parallel_chunks(total, [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx) {
            const int pos = static_cast<int>((idx / stride) % static_cast<std::size_t>(len));
            const std::size_t line_start = idx - static_cast<std::size_t>(pos) * stride;
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const int q = std::clamp(pos + t, 0, len - 1);
                acc += kernel[static_cast<std::size_t>(t + radius)] * in[line_start + static_cast<std::size_t>(q) * stride];
            }
            out[idx] = acc;
        }
    });
}

template <typename Fn>
void decimate(const VolumeDomain& src, const VolumeDomain& dst, int factor, Fn&& copy) {
    for (int k = 0; k < dst.dims.z; ++k)
        for (int j = 0; j < dst.dims.y; ++j)
            for (int i = 0; i < dst.dims.x; ++i)
                copy(dst.index(i, j, k), src.index(i * factor, j * factor, k * factor));
}

VolumeDomain decimated_domain(const VolumeDomain& d, int factor) {
    auto shrink = [factor](int n) { return (n + factor - 1) / factor; };
    return VolumeDomain({shrink(d.dims.x), shrink(d.dims.y), shrink(d.dims.z)}, d.spacing * static_cast<double>(factor),
                        d.origin);
}

void check_factor(int factor) {
    if (factor < 1) throw ConfigError("downsample factor must be a positive integer");
}

}  // namespace

std::vector<double> gaussian_smooth(std::span<const double> data, const Dims3& dims, double sigma) {
    std::vector<double> a(data.begin(), data.end());
    if (!(sigma > 0.0)) return a;
    const auto kernel = gaussian_kernel(sigma);
    std::vector<double> b(a.size());
    for (int axis = 0; axis < 3; ++axis) {
        if (dims[axis] == 1) continue;
        convolve_axis(a, b, dims, axis, kernel);
        a.swap(b);
    }
    return a;
}

ScalarVolume downsample(const ScalarVolume& vol, int factor) {
    check_factor(factor);
    if (factor == 1) return vol;
    const auto smooth = gaussian_smooth(vol.data(), vol.dims(), 0.5 * factor);
    ScalarVolume out(decimated_domain(vol.domain(), factor));
    decimate(vol.domain(), out.domain(), factor, [&](std::size_t d, std::size_t s) { out[d] = smooth[s]; });
    return out;
}

ProbabilityMap downsample(const ProbabilityMap& prob, int factor) {
    check_factor(factor);
    if (factor == 1) return prob;
    ProbabilityMap out(decimated_domain(prob.domain(), factor), prob.num_classes());
    for (int c = 0; c < prob.num_classes(); ++c) {
        const auto smooth = gaussian_smooth(prob.channel(c), prob.domain().dims, 0.5 * factor);
        auto dst = out.channel(c);
        decimate(prob.domain(), out.domain(), factor, [&](std::size_t d, std::size_t s) { dst[d] = smooth[s]; });
    }
    out.renormalize();
    return out;
}

LabelMap downsample(const LabelMap& map, int factor) {
    check_factor(factor);
    if (factor == 1) return map;
    LabelMap out(decimated_domain(map.domain(), factor));
    decimate(map.domain(), out.domain(), factor, [&](std::size_t d, std::size_t s) { out[d] = map[s]; });
    return out;
}

}  // namespace coseg
