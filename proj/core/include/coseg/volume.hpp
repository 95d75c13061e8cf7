#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coseg/error.hpp"

namespace coseg {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
    constexpr double& operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
    constexpr Vec3& operator+=(Vec3 o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Component-wise division, used to convert mm offsets into voxel offsets.
constexpr Vec3 divide(Vec3 a, Vec3 b) { return {a.x / b.x, a.y / b.y, a.z / b.z}; }
constexpr Vec3 multiply(Vec3 a, Vec3 b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

struct Dims3 {
    int x = 1;
    int y = 1;
    int z = 1;

    constexpr int operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
    constexpr std::size_t count() const {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
    }
    friend constexpr bool operator==(const Dims3&, const Dims3&) = default;
};

// Lattice geometry shared by every volume-shaped object. Storage order is
// x fastest, then y, then z.
struct VolumeDomain {
    Dims3 dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{};

    VolumeDomain() = default;
    VolumeDomain(Dims3 d, Vec3 s = {1.0, 1.0, 1.0}, Vec3 o = {}) : dims(d), spacing(s), origin(o) { validate(); }

    void validate() const;
    std::size_t size() const { return dims.count(); }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims.x) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims.y) * static_cast<std::size_t>(k));
    }
    std::array<int, 3> coords(std::size_t idx) const {
        const auto nx = static_cast<std::size_t>(dims.x);
        const auto ny = static_cast<std::size_t>(dims.y);
        return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
    }
    // Physical extent from the first to the last voxel centre, in mm.
    Vec3 extent() const {
        return {(dims.x - 1) * spacing.x, (dims.y - 1) * spacing.y, (dims.z - 1) * spacing.z};
    }
    friend bool operator==(const VolumeDomain&, const VolumeDomain&) = default;
};

// Throws DomainMismatchError naming `what` unless a and b are co-domain.
void require_codomain(const VolumeDomain& a, const VolumeDomain& b, const char* what);

using Label = std::uint16_t;

template <typename T>
class Volume {
public:
    using value_type = T;

    Volume() = default;
    explicit Volume(VolumeDomain domain, T fill = T{}) : domain_(domain), data_(domain.size(), fill) {}
    Volume(VolumeDomain domain, std::vector<T> data) : domain_(domain), data_(std::move(data)) {
        if (data_.size() != domain_.size())
            throw SizeError("volume data length " + std::to_string(data_.size()) + " does not match domain size " +
                            std::to_string(domain_.size()));
    }

    const VolumeDomain& domain() const { return domain_; }
    const Dims3& dims() const { return domain_.dims; }
    std::size_t size() const { return data_.size(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(int i, int j, int k) { return data_[domain_.index(i, j, k)]; }
    const T& at(int i, int j, int k) const { return data_[domain_.index(i, j, k)]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    VolumeDomain domain_;
    std::vector<T> data_;
};

using ScalarVolume = Volume<double>;
using LabelMap = Volume<Label>;

// Per-voxel class likelihoods over classes 0..C, stored channel-planar
// (all voxels of class 0, then class 1, ...), matching the 4D file layout.
class ProbabilityMap {
public:
    ProbabilityMap() = default;
    ProbabilityMap(VolumeDomain domain, int num_classes);
    ProbabilityMap(VolumeDomain domain, int num_classes, std::vector<double> data);

    const VolumeDomain& domain() const { return domain_; }
    int num_classes() const { return num_classes_; }
    std::size_t voxels() const { return domain_.size(); }

    double& operator()(std::size_t voxel, int c) { return data_[static_cast<std::size_t>(c) * voxels() + voxel]; }
    double operator()(std::size_t voxel, int c) const { return data_[static_cast<std::size_t>(c) * voxels() + voxel]; }

    std::span<double> channel(int c) { return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()}; }
    std::span<const double> channel(int c) const {
        return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
    }
    const std::vector<double>& storage() const { return data_; }
    std::vector<double>& storage() { return data_; }

    // Clips every likelihood to [0,1] and rescales each voxel to sum to 1.
    // Voxels with zero total mass become background one-hot.
    void renormalize();
    // Largest |sum - 1| over voxels.
    double max_sum_deviation() const;

    friend bool operator==(const ProbabilityMap&, const ProbabilityMap&) = default;

private:
    VolumeDomain domain_;
    int num_classes_ = 0;
    std::vector<double> data_;
};

// Trilinear interpolation at a point given in voxel coordinates; clamps to
// the edge outside the lattice.
double sample_trilinear(const ScalarVolume& vol, Vec3 p);
double sample_trilinear(std::span<const double> data, const Dims3& dims, Vec3 p);

// Nearest lattice label after clamping. Exact .5 ties round toward -inf.
Label sample_nearest(const LabelMap& map, Vec3 p);

// True when a voxel-coordinate point lies inside the half-voxel padded box
// [-0.5, dim-0.5] on every axis.
bool inside_domain(const Dims3& dims, Vec3 p);

ScalarVolume normalize_intensities(const ScalarVolume& vol);

LabelMap argmax_labels(const ProbabilityMap& prob);
ProbabilityMap one_hot(const LabelMap& map, int num_classes);
Label max_label(const LabelMap& map);

// Separable Gaussian smoothing with clamp-to-edge borders; sigma in voxels.
std::vector<double> gaussian_smooth(std::span<const double> data, const Dims3& dims, double sigma);

ScalarVolume downsample(const ScalarVolume& vol, int factor);
ProbabilityMap downsample(const ProbabilityMap& prob, int factor);
LabelMap downsample(const LabelMap& map, int factor);

}  // namespace coseg
