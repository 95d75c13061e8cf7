#include "coseg/metaimage.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace coseg {

namespace fs = std::filesystem;

const char* element_type_name(ElementType t) {
    switch (t) {
        case ElementType::UChar: return "MET_UCHAR";
        case ElementType::Short: return "MET_SHORT";
        case ElementType::Float: return "MET_FLOAT";
    }
    return "MET_FLOAT";
}

VolumeDomain MetaImageHeader::domain() const {
    return VolumeDomain({dim_size[0], dim_size[1], dim_size[2]}, {spacing[0], spacing[1], spacing[2]},
                        {offset[0], offset[1], offset[2]});
}

std::size_t MetaImageHeader::element_count() const {
    std::size_t n = 1;
    for (int a = 0; a < ndims; ++a) n *= static_cast<std::size_t>(dim_size[static_cast<std::size_t>(a)]);
    return n;
}

namespace {

std::size_t element_bytes(ElementType t) {
    switch (t) {
        case ElementType::UChar: return 1;
        case ElementType::Short: return 2;
        case ElementType::Float: return 4;
    }
    return 4;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& key, const std::string& value) {
    std::vector<T> out;
    for (const auto& tok : split_ws(value)) {
        T v{};
        const auto* first = tok.data();
        const auto* last = tok.data() + tok.size();
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last) throw FormatError(key, "cannot parse number '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "True" || value == "true" || value == "1") return true;
    if (value == "False" || value == "false" || value == "0") return false;
    throw FormatError(key, "expected True or False, got '" + value + "'");
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double decode(const unsigned char* p, ElementType t) {
    switch (t) {
        case ElementType::UChar: return static_cast<double>(*p);
        case ElementType::Short: {
            const auto u = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
            return static_cast<double>(static_cast<std::int16_t>(u));
        }
        case ElementType::Float: {
            const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                    (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
            return static_cast<double>(std::bit_cast<float>(u));
        }
    }
    return 0.0;
}

void encode(double v, ElementType t, unsigned char* p) {
    switch (t) {
        case ElementType::UChar: *p = static_cast<unsigned char>(v); return;
        case ElementType::Short: {
            const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
            p[0] = static_cast<unsigned char>(u & 0xff);
            p[1] = static_cast<unsigned char>(u >> 8);
            return;
        }
        case ElementType::Float: {
            const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) p[b] = static_cast<unsigned char>((u >> (8 * b)) & 0xff);
            return;
        }
    }
}

// Fills `out` from a header key list; `count` is NDims, values beyond the
// given list keep their defaults.
template <typename T, std::size_t N>
void assign_axes(const std::string& key, const std::string& value, int ndims, std::array<T, N>& out, bool allow_3_of_4) {
    const auto nums = parse_numbers<T>(key, value);
    const auto want = static_cast<std::size_t>(ndims);
    if (nums.size() != want && !(allow_3_of_4 && ndims == 4 && nums.size() == 3))
        throw FormatError(key, "expected " + std::to_string(ndims) + " values, got " + std::to_string(nums.size()));
    for (std::size_t i = 0; i < nums.size(); ++i) out[i] = nums[i];
}

}  // namespace

RawImage read_metaimage(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

    std::map<std::string, std::string> keys;
    std::string line;
    bool saw_data_file = false;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (trim(line).empty()) continue;
            throw FormatError(trim(line), "header line without '='");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (keys.contains(key) && keys[key] != value) throw FormatError(key, "key repeated with a different value");
        keys[key] = value;
        if (key == "ElementDataFile") {
            saw_data_file = true;
            break;
        }
    }
    if (!saw_data_file) throw FormatError("ElementDataFile", "missing");

    RawImage img;
    auto& h = img.header;
    auto need = [&](const char* key) -> const std::string& {
        const auto it = keys.find(key);
        if (it == keys.end()) throw FormatError(key, "missing");
        return it->second;
    };
    if (const auto it = keys.find("ObjectType"); it != keys.end() && it->second != "Image")
        throw FormatError("ObjectType", "only 'Image' is supported, got '" + it->second + "'");

    const auto nd = parse_numbers<int>("NDims", need("NDims"));
    if (nd.size() != 1 || (nd[0] != 3 && nd[0] != 4)) throw FormatError("NDims", "must be 3 or 4");
    h.ndims = nd[0];
    assign_axes("DimSize", need("DimSize"), h.ndims, h.dim_size, false);
    for (int a = 0; a < h.ndims; ++a)
        if (h.dim_size[static_cast<std::size_t>(a)] < 1) throw FormatError("DimSize", "sizes must be >= 1");

    if (const auto it = keys.find("ElementSpacing"); it != keys.end())
        assign_axes("ElementSpacing", it->second, h.ndims, h.spacing, true);
    for (int a = 0; a < 3; ++a)
        if (!(h.spacing[static_cast<std::size_t>(a)] > 0.0)) throw FormatError("ElementSpacing", "must be > 0");

    std::optional<std::string> origin_key;
    for (const char* k : {"Offset", "Origin", "Position"}) {
        if (const auto it = keys.find(k); it != keys.end()) {
            if (origin_key) {
                std::array<double, 4> other{};
                assign_axes(k, it->second, h.ndims, other, true);
                if (other != h.offset) throw FormatError(k, "contradicts " + *origin_key);
            } else {
                assign_axes(k, it->second, h.ndims, h.offset, true);
                origin_key = k;
            }
        }
    }

    const std::string& et = need("ElementType");
    if (et == "MET_UCHAR")
        h.element_type = ElementType::UChar;
    else if (et == "MET_SHORT")
        h.element_type = ElementType::Short;
    else if (et == "MET_FLOAT")
        h.element_type = ElementType::Float;
    else
        throw FormatError("ElementType", "unsupported element type '" + et + "'");

    for (const char* k : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"})
        if (const auto it = keys.find(k); it != keys.end() && parse_bool(k, it->second))
            throw FormatError(k, "big-endian payloads are not supported");
    if (const auto it = keys.find("CompressedData"); it != keys.end() && parse_bool("CompressedData", it->second))
        throw FormatError("CompressedData", "compressed payloads are not supported");
    if (const auto it = keys.find("ElementNumberOfChannels"); it != keys.end()) {
        const auto ch = parse_numbers<int>("ElementNumberOfChannels", it->second);
        if (ch.size() != 1 || ch[0] != 1) throw FormatError("ElementNumberOfChannels", "only 1 is supported");
    }
    h.data_file = need("ElementDataFile");

    const std::size_t count = h.element_count();
    const std::size_t bytes = count * element_bytes(h.element_type);
    std::vector<unsigned char> payload;
    if (h.data_file == "LOCAL") {
        payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    } else {
        const fs::path data_path = path.parent_path() / h.data_file;
        std::ifstream raw(data_path, std::ios::binary);
        if (!raw) throw IoError("cannot open payload '" + data_path.string() + "' referenced by '" + path.string() + "'");
        payload.assign(std::istreambuf_iterator<char>(raw), std::istreambuf_iterator<char>());
    }
    if (payload.size() != bytes)
        throw TruncationError("payload of '" + path.string() + "' has " + std::to_string(payload.size()) +
                              " bytes, header implies " + std::to_string(bytes));

    img.values.resize(count);
    const std::size_t eb = element_bytes(h.element_type);
    for (std::size_t i = 0; i < count; ++i) img.values[i] = decode(payload.data() + i * eb, h.element_type);
    return img;
}

void write_metaimage(const fs::path& path, MetaImageHeader h, std::span<const double> values) {
    if (values.size() != h.element_count()) throw SizeError("write_metaimage: value count does not match DimSize");
    const bool detached = path.extension() == ".mhd";
    fs::path raw_path;
    if (detached) {
        raw_path = path;
        raw_path.replace_extension(".raw");
        h.data_file = raw_path.filename().string();
    } else {
        h.data_file = "LOCAL";
    }

    std::ostringstream hdr;
    auto join = [&](auto const& arr) {
        std::string s;
        for (int a = 0; a < h.ndims; ++a) {
            if (a) s += ' ';
            if constexpr (std::is_same_v<std::decay_t<decltype(arr[0])>, int>)
                s += std::to_string(arr[static_cast<std::size_t>(a)]);
            else
                s += format_double(arr[static_cast<std::size_t>(a)]);
        }
        return s;
    };
    hdr << "ObjectType = Image\n"
        << "NDims = " << h.ndims << "\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "DimSize = " << join(h.dim_size) << "\n"
        << "ElementSpacing = " << join(h.spacing) << "\n"
        << "Offset = " << join(h.offset) << "\n"
        << "ElementType = " << element_type_name(h.element_type) << "\n"
        << "ElementDataFile = " << h.data_file << "\n";

    const std::size_t eb = element_bytes(h.element_type);
    std::vector<unsigned char> payload(values.size() * eb);
    for (std::size_t i = 0; i < values.size(); ++i) encode(values[i], h.element_type, payload.data() + i * eb);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const std::string text = hdr.str();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (detached) {
        std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
        if (!raw) throw IoError("cannot open '" + raw_path.string() + "' for writing");
        raw.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
        if (!raw) throw IoError("write failed for '" + raw_path.string() + "'");
    } else {
        out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

MetaImageHeader header_for(const VolumeDomain& d, int components, ElementType t) {
    MetaImageHeader h;
    h.ndims = components > 1 ? 4 : 3;
    h.dim_size = {d.dims.x, d.dims.y, d.dims.z, components};
    h.spacing = {d.spacing.x, d.spacing.y, d.spacing.z, 1.0};
    h.offset = {d.origin.x, d.origin.y, d.origin.z, 0.0};
    h.element_type = t;
    return h;
}

ScalarVolume to_scalar(RawImage&& img, const fs::path& path) {
    if (img.header.ndims != 3)
        throw FormatError("NDims", "'" + path.string() + "' is 4D; expected a 3D intensity volume");
    return ScalarVolume(img.header.domain(), std::move(img.values));
}

LabelMap to_labels(const RawImage& img, const fs::path& path) {
    if (img.header.ndims != 3) throw FormatError("NDims", "'" + path.string() + "' is 4D; expected a 3D label map");
    LabelMap out(img.header.domain());
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        const double v = img.values[i];
        if (v < 0.0 || v != std::floor(v) || v > 65535.0)
            throw FormatError("ElementType", "label map '" + path.string() + "' holds a non-integral or negative value");
        out[i] = static_cast<Label>(v);
    }
    return out;
}

ProbabilityMap to_probability(RawImage&& img, const fs::path& path) {
    if (img.header.ndims != 4)
        throw FormatError("NDims", "'" + path.string() + "' is 3D; probability maps carry classes on a 4th axis");
    ProbabilityMap out(img.header.domain(), img.header.dim_size[3], std::move(img.values));
    out.renormalize();
    return out;
}

}  // namespace

AnyVolume load_metaimage(const fs::path& path) {
    RawImage img = read_metaimage(path);
    if (img.header.ndims == 4) return to_probability(std::move(img), path);
    if (img.header.element_type == ElementType::UChar) return to_labels(img, path);
    return to_scalar(std::move(img), path);
}

ScalarVolume load_scalar(const fs::path& path) { return to_scalar(read_metaimage(path), path); }

ScalarVolume load_intensity_volume(const fs::path& path) { return normalize_intensities(load_scalar(path)); }

LabelMap load_labels(const fs::path& path) { return to_labels(read_metaimage(path), path); }

ProbabilityMap load_probability(const fs::path& path) { return to_probability(read_metaimage(path), path); }

void save_metaimage(const ScalarVolume& vol, const fs::path& path) {
    write_metaimage(path, header_for(vol.domain(), 1, ElementType::Float), vol.data());
}

void save_metaimage(const LabelMap& map, const fs::path& path) {
    const ElementType t = max_label(map) <= 255 ? ElementType::UChar : ElementType::Short;
    if (max_label(map) > 32767) throw SizeError("label values above 32767 cannot be stored as MET_SHORT");
    std::vector<double> values(map.storage().begin(), map.storage().end());
    write_metaimage(path, header_for(map.domain(), 1, t), values);
}

void save_metaimage(const ProbabilityMap& prob, const fs::path& path) {
    MetaImageHeader h = header_for(prob.domain(), prob.num_classes(), ElementType::Float);
    h.ndims = 4;  // even a single-class map keeps its class axis
    write_metaimage(path, h, prob.storage());
}

}  // namespace coseg
