#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coseg/volume.hpp"

namespace coseg {

// Exact squared Euclidean distance (mm^2) from every voxel centre to the
// nearest voxel with mask != 0, honouring anisotropic spacing. Separable
// lower-envelope transform; +inf everywhere when the mask is empty.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> mask, const VolumeDomain& domain);

}  // namespace coseg
