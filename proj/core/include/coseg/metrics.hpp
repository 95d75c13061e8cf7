#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "coseg/volume.hpp"

namespace coseg {

// Voxels of class `cls` with at least one 6-neighbour outside the class; the
// domain border counts as outside. Returned in storage order.
std::vector<std::size_t> boundary_voxels(const LabelMap& map, Label cls);

// 2|A n B| / (|A| + |B|); 1 when both are empty, 0 when exactly one is.
double dice(const LabelMap& a, const LabelMap& b, Label cls);

// Symmetric Hausdorff distance (mm) between the boundary voxel centres of the
// two masks. Throws UndefinedMetricError if either mask is empty.
double hausdorff(const LabelMap& a, const LabelMap& b, Label cls);

// Mean boundary-to-boundary distance in each direction, averaged (mm).
double contour_mean_distance(const LabelMap& a, const LabelMap& b, Label cls);

// Squared distances (mm^2) from each boundary voxel of `from` to the nearest
// boundary voxel of `to`, in boundary_voxels(from) order.
std::vector<double> directed_boundary_sq_distances(const LabelMap& from, const LabelMap& to, Label cls);

struct ClassMetrics {
    Label cls = 0;
    double dice = 0.0;
    std::optional<double> hausdorff_mm;
    std::optional<double> contour_mean_mm;
};

struct StructureReport {
    std::vector<ClassMetrics> classes;

    double mean_dice() const;
    // Mean over classes where the metric is defined; nullopt if none are.
    std::optional<double> mean_hausdorff() const;
    std::optional<double> mean_contour_distance() const;
};

// All metrics for every non-background class present in `gt`. Classes missing
// from `pred` get dice 0 and undefined distances.
StructureReport evaluate(const LabelMap& pred, const LabelMap& gt);

// Rows: volume_id,class,dice,hd_mm,cmd_mm. Undefined distances print as NA.
void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, StructureReport>>& reports);

}  // namespace coseg
