#include "coseg/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "coseg/distance.hpp"

namespace coseg {

std::vector<std::size_t> boundary_voxels(const LabelMap& map, Label cls) {
    const Dims3 d = map.dims();
    std::vector<std::size_t> out;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                if (map.at(i, j, k) != cls) continue;
                const bool edge = i == 0 || j == 0 || k == 0 || i == d.x - 1 || j == d.y - 1 || k == d.z - 1;
                if (edge || map.at(i - 1, j, k) != cls || map.at(i + 1, j, k) != cls || map.at(i, j - 1, k) != cls ||
                    map.at(i, j + 1, k) != cls || map.at(i, j, k - 1) != cls || map.at(i, j, k + 1) != cls)
                    out.push_back(map.domain().index(i, j, k));
            }
    return out;
}

double dice(const LabelMap& a, const LabelMap& b, Label cls) {
    require_codomain(a.domain(), b.domain(), "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool in_a = a[i] == cls;
        const bool in_b = b[i] == cls;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na == 0 && nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<double> directed_boundary_sq_distances(const LabelMap& from, const LabelMap& to, Label cls) {
    require_codomain(from.domain(), to.domain(), "boundary distance");
    const auto src = boundary_voxels(from, cls);
    const auto dst = boundary_voxels(to, cls);
    if (src.empty() || dst.empty())
        throw UndefinedMetricError("surface distance undefined: class " + std::to_string(cls) + " is empty in a mask");
    std::vector<std::uint8_t> mask(to.size(), 0);
    for (std::size_t v : dst) mask[v] = 1;
    const auto dt = squared_distance_transform(mask, to.domain());
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = dt[src[i]];
    return out;
}

double hausdorff(const LabelMap& a, const LabelMap& b, Label cls) {
    const auto ab = directed_boundary_sq_distances(a, b, cls);
    const auto ba = directed_boundary_sq_distances(b, a, cls);
    const double m = std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
    return std::sqrt(m);
}

namespace {
double mean_sqrt(const std::vector<double>& sq) {
    double s = 0.0;
    for (double v : sq) s += std::sqrt(v);
    return s / static_cast<double>(sq.size());
}
}  // namespace

double contour_mean_distance(const LabelMap& a, const LabelMap& b, Label cls) {
    const double ab = mean_sqrt(directed_boundary_sq_distances(a, b, cls));
    const double ba = mean_sqrt(directed_boundary_sq_distances(b, a, cls));
    return 0.5 * (ab + ba);
}

double StructureReport::mean_dice() const {
    if (classes.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : classes) s += c.dice;
    return s / static_cast<double>(classes.size());
}

namespace {
std::optional<double> mean_defined(const std::vector<ClassMetrics>& cs, std::optional<double> ClassMetrics::*field) {
    double s = 0.0;
    int n = 0;
    for (const auto& c : cs)
        if ((c.*field).has_value()) {
            s += *(c.*field);
            ++n;
        }
    if (n == 0) return std::nullopt;
    return s / n;
}
}  // namespace

std::optional<double> StructureReport::mean_hausdorff() const { return mean_defined(classes, &ClassMetrics::hausdorff_mm); }

std::optional<double> StructureReport::mean_contour_distance() const {
    return mean_defined(classes, &ClassMetrics::contour_mean_mm);
}

StructureReport evaluate(const LabelMap& pred, const LabelMap& gt) {
    require_codomain(pred.domain(), gt.domain(), "evaluate");
    std::set<Label> present(gt.storage().begin(), gt.storage().end());
    std::set<Label> predicted(pred.storage().begin(), pred.storage().end());
    StructureReport report;
    for (Label c : present) {
        if (c == 0) continue;
        ClassMetrics m;
        m.cls = c;
        m.dice = dice(pred, gt, c);
        if (predicted.contains(c)) {
            m.hausdorff_mm = hausdorff(pred, gt, c);
            m.contour_mean_mm = contour_mean_distance(pred, gt, c);
        }
        report.classes.push_back(m);
    }
    return report;
}

namespace {
std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}
}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, StructureReport>>& reports) {
    out << "# surface distances between 6-connected boundary voxel centres, mm\n";
    out << "volume_id,class,dice,hd_mm,cmd_mm\n";
    for (const auto& [id, rep] : reports)
        for (const auto& c : rep.classes)
            out << id << ',' << c.cls << ',' << fmt(c.dice) << ',' << (c.hausdorff_mm ? fmt(*c.hausdorff_mm) : "NA")
                << ',' << (c.contour_mean_mm ? fmt(*c.contour_mean_mm) : "NA") << '\n';
}

}  // namespace coseg
