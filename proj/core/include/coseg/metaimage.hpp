#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coseg/volume.hpp"

namespace coseg {

enum class ElementType { UChar, Short, Float };

const char* element_type_name(ElementType t);

// The subset of the MetaImage header this library reads and writes:
// NDims 3 or 4, little-endian, uncompressed, single channel per element.
// A 4th dimension carries classes (probability maps) or vector components
// (deformation fields).
struct MetaImageHeader {
    int ndims = 3;
    std::array<int, 4> dim_size{1, 1, 1, 1};
    std::array<double, 4> spacing{1.0, 1.0, 1.0, 1.0};
    std::array<double, 4> offset{0.0, 0.0, 0.0, 0.0};
    ElementType element_type = ElementType::Float;
    std::string data_file = "LOCAL";

    VolumeDomain domain() const;
    int components() const { return ndims == 4 ? dim_size[3] : 1; }
    std::size_t element_count() const;
};

struct RawImage {
    MetaImageHeader header;
    std::vector<double> values;
};

// Parses the header and payload. Throws FormatError naming the offending key
// and TruncationError when the payload length disagrees with the header.
RawImage read_metaimage(const std::filesystem::path& path);

// Writes `values` (x fastest, 4th axis slowest) with the given header.
// Paths ending in ".mhd" get a sibling ".raw" payload; anything else is
// written with ElementDataFile = LOCAL.
void write_metaimage(const std::filesystem::path& path, MetaImageHeader header, std::span<const double> values);

using AnyVolume = std::variant<ScalarVolume, LabelMap, ProbabilityMap>;

// 4D files load as probability maps, MET_UCHAR 3D files as label maps, and
// everything else as scalar volumes.
AnyVolume load_metaimage(const std::filesystem::path& path);

ScalarVolume load_scalar(const std::filesystem::path& path);
// load_scalar followed by min-max normalization to [0, 1]; the entry point
// for registration inputs.
ScalarVolume load_intensity_volume(const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);
// Likelihoods outside [0,1] are clipped and every voxel is renormalized.
ProbabilityMap load_probability(const std::filesystem::path& path);

void save_metaimage(const ScalarVolume& vol, const std::filesystem::path& path);
void save_metaimage(const LabelMap& map, const std::filesystem::path& path);
void save_metaimage(const ProbabilityMap& prob, const std::filesystem::path& path);

}  // namespace coseg
