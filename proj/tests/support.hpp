#pragma once

// Seeded generators for property tests and small fixtures.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "coseg/transform.hpp"
#include "coseg/volume.hpp"

namespace support {

using namespace coseg;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
    std::mt19937_64& engine() { return rng_; }

    Dims3 dims(int lo, int hi) { return {integer(lo, hi), integer(lo, hi), integer(lo, hi)}; }

    ScalarVolume scalar(const VolumeDomain& d, double lo = 0.0, double hi = 1.0) {
        ScalarVolume v(d);
        for (auto& x : v.storage()) x = real(lo, hi);
        return v;
    }

    // Smooth volume: sum of a few random Gaussian bumps.
    ScalarVolume smooth(const VolumeDomain& d, int bumps = 4) {
        ScalarVolume v(d);
        for (int b = 0; b < bumps; ++b) {
            const Vec3 c{real(0, d.dims.x - 1), real(0, d.dims.y - 1), real(0, d.dims.z - 1)};
            const double s = real(2.0, 5.0);
            const double a = real(0.2, 1.0);
            for (int k = 0; k < d.dims.z; ++k)
                for (int j = 0; j < d.dims.y; ++j)
                    for (int i = 0; i < d.dims.x; ++i) {
                        const double r2 = (i - c.x) * (i - c.x) + (j - c.y) * (j - c.y) + (k - c.z) * (k - c.z);
                        v.at(i, j, k) += a * std::exp(-r2 / (2 * s * s));
                    }
        }
        return v;
    }

    LabelMap labels(const VolumeDomain& d, int classes) {
        LabelMap m(d);
        for (auto& x : m.storage()) x = static_cast<Label>(integer(0, classes - 1));
        return m;
    }

    // Random union of boxes for class 1 on background 0.
    LabelMap blobs(const VolumeDomain& d, int count) {
        LabelMap m(d);
        for (int b = 0; b < count; ++b) {
            int lo[3];
            int hi[3];
            for (int a = 0; a < 3; ++a) {
                lo[a] = integer(0, d.dims[a] - 1);
                hi[a] = std::min(d.dims[a] - 1, lo[a] + integer(0, std::max(1, d.dims[a] / 2)));
            }
            for (int k = lo[2]; k <= hi[2]; ++k)
                for (int j = lo[1]; j <= hi[1]; ++j)
                    for (int i = lo[0]; i <= hi[0]; ++i) m.at(i, j, k) = 1;
        }
        // Random speckle so shapes are not all boxes.
        for (auto& x : m.storage())
            if (coin(0.05)) x = static_cast<Label>(1 - x);
        return m;
    }

    ProbabilityMap probability(const VolumeDomain& d, int classes) {
        ProbabilityMap p(d, classes);
        for (auto& x : p.storage()) x = real(0.01, 1.0);
        p.renormalize();
        return p;
    }

    // Control grid with per-axis displacements uniform in +-fraction * gs.
    ControlGrid grid(const VolumeDomain& d, Vec3 gs, double fraction) {
        ControlGrid g(d, gs);
        for (auto& v : g.displacements())
            v = {real(-fraction, fraction) * gs.x, real(-fraction, fraction) * gs.y, real(-fraction, fraction) * gs.z};
        return g;
    }

private:
    std::mt19937_64 rng_;
};

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("coseg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace support
