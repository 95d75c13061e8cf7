#pragma once

#include <filesystem>
#include <vector>

#include "coseg/volume.hpp"

namespace coseg {

enum class Basis { CubicBSpline, Trilinear };

// Largest control displacement, as a fraction of the grid spacing, for which
// an incremental free-form deformation stays invertible.
inline constexpr double kDisplacementCap = 0.4;

/// Sparse lattice of control-point displacements (mm) over an image domain.
///
/// Control point (i,j,k) sits at ((i-1)*gs.x, (j-1)*gs.y, (k-1)*gs.z) mm
/// relative to the image origin, so one layer of points lies outside the
/// image on the low side and at least two on the high side, which is what the
/// 4x4x4 cubic B-spline support needs at every voxel.
class ControlGrid {
public:
    ControlGrid() = default;
    ControlGrid(VolumeDomain domain, Vec3 grid_spacing);

    const VolumeDomain& domain() const { return domain_; }
    const Vec3& grid_spacing() const { return spacing_; }
    const Dims3& grid_dims() const { return dims_; }
    std::size_t size() const { return displacements_.size(); }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_.x) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(k));
    }
    // Position of a control point in mm, relative to the image origin.
    Vec3 position(int i, int j, int k) const {
        return {(i - 1) * spacing_.x, (j - 1) * spacing_.y, (k - 1) * spacing_.z};
    }
    Vec3 position(std::size_t p) const;

    Vec3& displacement(std::size_t p) { return displacements_[p]; }
    const Vec3& displacement(std::size_t p) const { return displacements_[p]; }
    std::vector<Vec3>& displacements() { return displacements_; }
    const std::vector<Vec3>& displacements() const { return displacements_; }

private:
    VolumeDomain domain_;
    Vec3 spacing_;
    Dims3 dims_;
    std::vector<Vec3> displacements_;
};

// Per-voxel displacement field in mm; T(x) = x + u(x).
class DenseDeformationField {
public:
    DenseDeformationField() = default;
    explicit DenseDeformationField(VolumeDomain domain) : domain_(domain), u_(domain.size()) {}
    DenseDeformationField(VolumeDomain domain, std::vector<Vec3> u);

    const VolumeDomain& domain() const { return domain_; }
    std::size_t size() const { return u_.size(); }
    Vec3& operator[](std::size_t i) { return u_[i]; }
    const Vec3& operator[](std::size_t i) const { return u_[i]; }
    const std::vector<Vec3>& storage() const { return u_; }
    std::vector<Vec3>& storage() { return u_; }

    // Displacement at a voxel-coordinate point, trilinear with edge clamping.
    Vec3 sample(Vec3 p) const;
    // Largest displacement magnitude expressed in voxels of this domain.
    double max_norm_voxels() const;
    double mean_norm_voxels() const;
    bool is_identity() const;

    friend bool operator==(const DenseDeformationField&, const DenseDeformationField&) = default;

private:
    VolumeDomain domain_;
    std::vector<Vec3> u_;
};

DenseDeformationField identity_field(const VolumeDomain& domain);

// Throws ConfigError when any grid spacing is below two voxels.
ControlGrid identity_grid(const VolumeDomain& domain, Vec3 grid_spacing);

// Evaluates u(x) = sum_p B(x - p) d_p over the grid's own image lattice.
DenseDeformationField densify(const ControlGrid& grid, Basis basis = Basis::CubicBSpline);
// Same, on another lattice that shares the grid's origin (e.g. a pyramid
// level of the same image).
DenseDeformationField densify(const ControlGrid& grid, const VolumeDomain& lattice, Basis basis);

ScalarVolume warp_scalar(const ScalarVolume& vol, const DenseDeformationField& field);
// Out-of-domain samples read as background one-hot; output is renormalized.
ProbabilityMap warp_probability(const ProbabilityMap& prob, const DenseDeformationField& field);
LabelMap warp_labels(const LabelMap& map, const DenseDeformationField& field);

// u(x) = u_inner(x) + u_outer(x + u_inner(x)); warping by the result
// approximates warping by `outer` and then by `inner`.
DenseDeformationField compose(const DenseDeformationField& outer, const DenseDeformationField& inner);

struct InversionOptions {
    double tolerance_voxels = 0.01;
    int max_iterations = 30;
    double max_residual_voxels = 0.5;
};

// Fixed-point inversion v <- -u(x + v). Throws InversionError naming the worst
// voxel if the residual still exceeds max_residual_voxels afterwards.
DenseDeformationField invert(const DenseDeformationField& field, const InversionOptions& opts = {});

// |v(x) + u(x + v(x))| per voxel in voxels: how far `inverse` is from undoing `field`.
std::vector<double> inversion_residual(const DenseDeformationField& field, const DenseDeformationField& inverse);

void save_field(const DenseDeformationField& field, const std::filesystem::path& path);
DenseDeformationField load_field(const std::filesystem::path& path);

}  // namespace coseg
