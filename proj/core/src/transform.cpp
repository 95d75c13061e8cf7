#include "coseg/transform.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "coseg/metaimage.hpp"
#include "coseg/parallel.hpp"

namespace coseg {

namespace {

int grid_extent(double extent_mm, double spacing_mm) {
    return std::max(4, static_cast<int>(std::ceil(extent_mm / spacing_mm - 1e-9)) + 3);
}

struct AxisWeights {
    int first = 0;  // control index of the first of four taps
    std::array<double, 4> w{};
};

AxisWeights axis_weights(double x_mm, double spacing_mm, int grid_len, Basis basis) {
    const double u = x_mm / spacing_mm;
    int cell = static_cast<int>(std::floor(u));
    cell = std::clamp(cell, 0, grid_len - 4);
    const double t = u - cell;
    AxisWeights aw;
    aw.first = cell;
    if (basis == Basis::CubicBSpline) {
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double s = 1.0 - t;
        aw.w = {s * s * s / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0, (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                t3 / 6.0};
    } else {
        aw.w = {0.0, 1.0 - t, t, 0.0};
    }
    return aw;
}

// Trilinear lookup shared by field sampling; mirrors sample_trilinear.
struct Taps {
    std::size_t idx[8];
    double w[8];
};

Taps trilinear_taps(const Dims3& dims, Vec3 p) {
    int i0[3];
    int i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::clamp(p[a], 0.0, static_cast<double>(dims[a] - 1));
        const double fl = std::floor(c);
        i0[a] = static_cast<int>(fl);
        i1[a] = std::min(i0[a] + 1, dims[a] - 1);
        f[a] = c - fl;
    }
    const auto nx = static_cast<std::size_t>(dims.x);
    const auto nxy = nx * static_cast<std::size_t>(dims.y);
    Taps t{};
    int n = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const int i = dx ? i1[0] : i0[0];
                const int j = dy ? i1[1] : i0[1];
                const int k = dz ? i1[2] : i0[2];
                t.idx[n] = static_cast<std::size_t>(i) + nx * static_cast<std::size_t>(j) + nxy * static_cast<std::size_t>(k);
                t.w[n] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
                ++n;
            }
    return t;
}

Vec3 voxel_point(const VolumeDomain& d, std::size_t idx, Vec3 displacement_mm) {
    const auto c = d.coords(idx);
    return {c[0] + displacement_mm.x / d.spacing.x, c[1] + displacement_mm.y / d.spacing.y,
            c[2] + displacement_mm.z / d.spacing.z};
}

}  // namespace

ControlGrid::ControlGrid(VolumeDomain domain, Vec3 grid_spacing) : domain_(domain), spacing_(grid_spacing) {
    const Vec3 ext = domain.extent();
    dims_ = {grid_extent(ext.x, grid_spacing.x), grid_extent(ext.y, grid_spacing.y), grid_extent(ext.z, grid_spacing.z)};
    displacements_.assign(dims_.count(), Vec3{});
}

Vec3 ControlGrid::position(std::size_t p) const {
    const auto nx = static_cast<std::size_t>(dims_.x);
    const auto ny = static_cast<std::size_t>(dims_.y);
    return position(static_cast<int>(p % nx), static_cast<int>((p / nx) % ny), static_cast<int>(p / (nx * ny)));
}

DenseDeformationField::DenseDeformationField(VolumeDomain domain, std::vector<Vec3> u)
    : domain_(domain), u_(std::move(u)) {
    if (u_.size() != domain_.size()) throw SizeError("deformation field length does not match its domain");
}

Vec3 DenseDeformationField::sample(Vec3 p) const {
    const Taps t = trilinear_taps(domain_.dims, p);
    Vec3 out{};
    for (int n = 0; n < 8; ++n) out += t.w[n] * u_[t.idx[n]];
    return out;
}

double DenseDeformationField::max_norm_voxels() const {
    double m = 0.0;
    for (const Vec3& v : u_) m = std::max(m, divide(v, domain_.spacing).norm());
    return m;
}

double DenseDeformationField::mean_norm_voxels() const {
    if (u_.empty()) return 0.0;
    double s = 0.0;
    for (const Vec3& v : u_) s += divide(v, domain_.spacing).norm();
    return s / static_cast<double>(u_.size());
}

bool DenseDeformationField::is_identity() const {
    return std::all_of(u_.begin(), u_.end(), [](const Vec3& v) { return v == Vec3{}; });
}

DenseDeformationField identity_field(const VolumeDomain& domain) { return DenseDeformationField(domain); }

ControlGrid identity_grid(const VolumeDomain& domain, Vec3 grid_spacing) {
    for (int a = 0; a < 3; ++a) {
        if (domain.dims[a] > 1 && grid_spacing[a] < 2.0 * domain.spacing[a]) {
            std::ostringstream msg;
            msg << "control grid spacing " << grid_spacing[a] << " mm on axis " << a << " is below two voxels ("
                << 2.0 * domain.spacing[a] << " mm)";
            throw ConfigError(msg.str());
        }
        if (!(grid_spacing[a] > 0.0)) throw ConfigError("control grid spacing must be positive");
    }
    return ControlGrid(domain, grid_spacing);
}

DenseDeformationField densify(const ControlGrid& grid, Basis basis) { return densify(grid, grid.domain(), basis); }

DenseDeformationField densify(const ControlGrid& grid, const VolumeDomain& lattice, Basis basis) {
    const Dims3 gd = grid.grid_dims();
    const Vec3 gs = grid.grid_spacing();
    std::array<std::vector<AxisWeights>, 3> weights;
    for (int a = 0; a < 3; ++a) {
        weights[static_cast<std::size_t>(a)].resize(static_cast<std::size_t>(lattice.dims[a]));
        for (int i = 0; i < lattice.dims[a]; ++i)
            weights[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] =
                axis_weights(i * lattice.spacing[a], gs[a], gd[a], basis);
    }
    DenseDeformationField out(lattice);
    const auto& disp = grid.displacements();
    parallel_chunks(lattice.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx) {
            const auto c = lattice.coords(idx);
            const AxisWeights& wx = weights[0][static_cast<std::size_t>(c[0])];
            const AxisWeights& wy = weights[1][static_cast<std::size_t>(c[1])];
            const AxisWeights& wz = weights[2][static_cast<std::size_t>(c[2])];
            Vec3 acc{};
            for (int n = 0; n < 4; ++n) {
                if (wz.w[static_cast<std::size_t>(n)] == 0.0) continue;
                for (int m = 0; m < 4; ++m) {
                    const double wzy = wz.w[static_cast<std::size_t>(n)] * wy.w[static_cast<std::size_t>(m)];
                    if (wzy == 0.0) continue;
                    for (int l = 0; l < 4; ++l) {
                        const double w = wzy * wx.w[static_cast<std::size_t>(l)];
                        if (w == 0.0) continue;
                        acc += w * disp[grid.index(wx.first + l, wy.first + m, wz.first + n)];
                    }
                }
            }
            out[idx] = acc;
        }
    });
    return out;
}

ScalarVolume warp_scalar(const ScalarVolume& vol, const DenseDeformationField& field) {
    require_codomain(vol.domain(), field.domain(), "warp_scalar");
    ScalarVolume out(vol.domain());
    parallel_chunks(vol.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx)
            out[idx] = sample_trilinear(vol, voxel_point(vol.domain(), idx, field[idx]));
    });
    return out;
}

ProbabilityMap warp_probability(const ProbabilityMap& prob, const DenseDeformationField& field) {
    require_codomain(prob.domain(), field.domain(), "warp_probability");
    ProbabilityMap out(prob.domain(), prob.num_classes());
    const Dims3 dims = prob.domain().dims;
    parallel_chunks(prob.voxels(), [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx) {
            const Vec3 p = voxel_point(prob.domain(), idx, field[idx]);
            if (!inside_domain(dims, p)) {
                out(idx, 0) = 1.0;
                continue;
            }
            const Taps t = trilinear_taps(dims, p);
            for (int c = 0; c < prob.num_classes(); ++c) {
                const auto ch = prob.channel(c);
                double acc = 0.0;
                for (int n = 0; n < 8; ++n) acc += t.w[n] * ch[t.idx[n]];
                out(idx, c) = acc;
            }
        }
    });
    out.renormalize();
    return out;
}

LabelMap warp_labels(const LabelMap& map, const DenseDeformationField& field) {
    require_codomain(map.domain(), field.domain(), "warp_labels");
    LabelMap out(map.domain());
    parallel_chunks(map.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx)
            out[idx] = sample_nearest(map, voxel_point(map.domain(), idx, field[idx]));
    });
    return out;
}

DenseDeformationField compose(const DenseDeformationField& outer, const DenseDeformationField& inner) {
    require_codomain(outer.domain(), inner.domain(), "compose");
    DenseDeformationField out(inner.domain());
    parallel_chunks(inner.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx) {
            const Vec3 ui = inner[idx];
            out[idx] = ui + outer.sample(voxel_point(inner.domain(), idx, ui));
        }
    });
    return out;
}

std::vector<double> inversion_residual(const DenseDeformationField& field, const DenseDeformationField& inverse) {
    require_codomain(field.domain(), inverse.domain(), "inversion_residual");
    const VolumeDomain& d = field.domain();
    std::vector<double> r(field.size());
    parallel_chunks(field.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t idx = b; idx < e; ++idx) {
            const Vec3 v = inverse[idx];
            const Vec3 total = v + field.sample(voxel_point(d, idx, v));
            r[idx] = divide(total, d.spacing).norm();
        }
    });
    return r;
}

DenseDeformationField invert(const DenseDeformationField& field, const InversionOptions& opts) {
    const VolumeDomain& d = field.domain();
    DenseDeformationField v(d);
    for (std::size_t i = 0; i < field.size(); ++i) v[i] = -field[i];

    DenseDeformationField next(d);
    for (int it = 0; it < opts.max_iterations; ++it) {
        std::vector<double> update(field.size());
        parallel_chunks(field.size(), [&](std::size_t b, std::size_t e) {
            for (std::size_t idx = b; idx < e; ++idx) {
                next[idx] = -field.sample(voxel_point(d, idx, v[idx]));
                update[idx] = divide(next[idx] - v[idx], d.spacing).norm();
            }
        });
        std::swap(v, next);
        if (*std::max_element(update.begin(), update.end()) < opts.tolerance_voxels) break;
    }

    const auto residual = inversion_residual(field, v);
    const auto worst = std::max_element(residual.begin(), residual.end());
    if (worst != residual.end() && *worst > opts.max_residual_voxels) {
        const auto c = d.coords(static_cast<std::size_t>(worst - residual.begin()));
        std::ostringstream msg;
        msg << "deformation inversion did not converge: residual " << *worst << " voxels at voxel (" << c[0] << ", "
            << c[1] << ", " << c[2] << ")";
        throw InversionError(msg.str());
    }
    return v;
}

void save_field(const DenseDeformationField& field, const std::filesystem::path& path) {
    const VolumeDomain& d = field.domain();
    MetaImageHeader h;
    h.ndims = 4;
    h.dim_size = {d.dims.x, d.dims.y, d.dims.z, 3};
    h.spacing = {d.spacing.x, d.spacing.y, d.spacing.z, 1.0};
    h.offset = {d.origin.x, d.origin.y, d.origin.z, 0.0};
    h.element_type = ElementType::Float;
    std::vector<double> values(field.size() * 3);
    for (std::size_t i = 0; i < field.size(); ++i)
        for (int a = 0; a < 3; ++a) values[static_cast<std::size_t>(a) * field.size() + i] = field[i][a];
    write_metaimage(path, h, values);
}

DenseDeformationField load_field(const std::filesystem::path& path) {
    RawImage img = read_metaimage(path);
    if (img.header.ndims != 4 || img.header.dim_size[3] != 3)
        throw FormatError("DimSize", "'" + path.string() + "' is not a 3-component deformation field");
    DenseDeformationField f(img.header.domain());
    for (std::size_t i = 0; i < f.size(); ++i)
        for (int a = 0; a < 3; ++a) f[i][a] = img.values[static_cast<std::size_t>(a) * f.size() + i];
    return f;
}

}  // namespace coseg
