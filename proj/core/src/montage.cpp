#include "mdjpt/montage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mdjpt/error.hpp"

namespace mdjpt::montage {

namespace {

constexpr double kPi = std::numbers::pi;

Position on_sphere(double polar_deg, double azimuth_deg) {
    const double th = polar_deg * kPi / 180.0;
    const double az = azimuth_deg * kPi / 180.0;
    return {std::sin(th) * std::cos(az), std::sin(th) * std::sin(az), std::cos(th)};
}

Position slerp(const Position& a, const Position& b, double f) {
    const double cosw = std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
    const double w = std::acos(cosw);
    if (w < 1e-12) return a;
    const double sa = std::sin((1.0 - f) * w) / std::sin(w);
    const double sb = std::sin(f * w) / std::sin(w);
    return {sa * a.x + sb * b.x, sa * a.y + sb * b.y, sa * a.z + sb * b.z};
}

const std::vector<std::string> kTarget60 = {
    "Fp1", "Fpz", "Fp2", "AF3", "AF4",
    "F7",  "F5",  "F3",  "F1",  "Fz",  "F2",  "F4",  "F6",  "F8",
    "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8",
    "T7",  "C5",  "C3",  "C1",  "Cz",  "C2",  "C4",  "C6",  "T8",
    "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8",
    "P7",  "P5",  "P3",  "P1",  "Pz",  "P2",  "P4",  "P6",  "P8",
    "PO7", "PO5", "PO3", "POz", "PO4", "PO6", "PO8",
    "O1",  "Oz",  "O2"};

std::map<std::string, Position> build_coords() {
    std::map<std::string, Position> c;
    // outer 10% ring at polar 72 degrees, azimuth in the xy-plane from +x (right ear)
    const std::vector<std::pair<std::string, double>> ring = {
        {"T8", 0},    {"FT8", 18},  {"F8", 36},   {"AF8", 54},  {"Fp2", 72},
        {"Fpz", 90},  {"Fp1", 108}, {"AF7", 126}, {"F7", 144},  {"FT7", 162},
        {"T7", 180},  {"TP7", 198}, {"P7", 216},  {"PO7", 234}, {"O1", 252},
        {"Oz", 270},  {"O2", 288},  {"PO8", 306}, {"P8", 324},  {"TP8", 342}};
    for (const auto& [label, az] : ring) c[label] = on_sphere(72.0, az);

    c["Cz"] = {0, 0, 1};
    const std::vector<std::tuple<std::string, double, double>> midline = {
        {"FCz", 18, 90}, {"Fz", 36, 90},  {"AFz", 54, 90},
        {"CPz", 18, 270}, {"Pz", 36, 270}, {"POz", 54, 270}};
    for (const auto& [label, polar, az] : midline) c[label] = on_sphere(polar, az);

    // interior rows: slerp from the midline point to the ring endpoint
    struct Row {
        std::string mid, left, right;
        std::vector<std::pair<std::string, double>> cols;  // (stem suffix pair handled below)
    };
    auto lay = [&](const std::string& mid, const std::string& endL, const std::string& endR,
                   const std::vector<std::pair<std::string, double>>& leftCols,
                   const std::vector<std::pair<std::string, double>>& rightCols) {
        for (const auto& [label, f] : leftCols) c[label] = slerp(c.at(mid), c.at(endL), f);
        for (const auto& [label, f] : rightCols) c[label] = slerp(c.at(mid), c.at(endR), f);
    };
    lay("Fz", "F7", "F8", {{"F1", 0.25}, {"F3", 0.5}, {"F5", 0.75}},
        {{"F2", 0.25}, {"F4", 0.5}, {"F6", 0.75}});
    lay("FCz", "FT7", "FT8", {{"FC1", 0.25}, {"FC3", 0.5}, {"FC5", 0.75}},
        {{"FC2", 0.25}, {"FC4", 0.5}, {"FC6", 0.75}});
    lay("Cz", "T7", "T8", {{"C1", 0.25}, {"C3", 0.5}, {"C5", 0.75}},
        {{"C2", 0.25}, {"C4", 0.5}, {"C6", 0.75}});
    lay("CPz", "TP7", "TP8", {{"CP1", 0.25}, {"CP3", 0.5}, {"CP5", 0.75}},
        {{"CP2", 0.25}, {"CP4", 0.5}, {"CP6", 0.75}});
    lay("Pz", "P7", "P8", {{"P1", 0.25}, {"P3", 0.5}, {"P5", 0.75}},
        {{"P2", 0.25}, {"P4", 0.5}, {"P6", 0.75}});
    lay("AFz", "AF7", "AF8", {{"AF3", 0.5}}, {{"AF4", 0.5}});
    lay("POz", "PO7", "PO8", {{"PO3", 0.5}, {"PO5", 0.75}}, {{"PO4", 0.5}, {"PO6", 0.75}});
    return c;
}

}  // namespace

MontageTable::MontageTable(std::map<std::string, Position> coords,
                           std::vector<std::string> target)
    : coords_(std::move(coords)), target_(std::move(target)) {
    for (const auto& label : target_)
        if (!coords_.count(label))
            throw Error("UnknownChannelLabel", "target label missing coordinates: " + label);
    for (const auto& [label, p] : coords_) {
        const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        if (std::abs(n - 1.0) > 1e-6)
            throw Error("SchemaViolation", "electrode not on unit sphere: " + label);
    }
}

const Position& MontageTable::position(const std::string& label) const {
    auto it = coords_.find(label);
    if (it == coords_.end()) throw Error("UnknownChannelLabel", label);
    return it->second;
}

double MontageTable::distance(const Position& a, const Position& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<std::string> MontageTable::nearest(const std::string& label,
                                               const std::vector<std::string>& candidates,
                                               std::size_t k) const {
    const Position& p = position(label);
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& c : candidates)
        if (c != label) ranked.emplace_back(distance(p, position(c)), c);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].second);
    return out;
}

const MontageTable& standard_1020_60() {
    static const MontageTable table(build_coords(), kTarget60);
    return table;
}

MontageTable load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingFile", path);
    std::map<std::string, Position> coords;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string label;
        Position p{};
        if (!(ss >> label >> p.x >> p.y >> p.z))
            throw Error("SchemaViolation", "montage tsv line: " + line);
        coords[label] = p;
    }
    return MontageTable(std::move(coords), kTarget60);
}

void save_tsv(const MontageTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("MissingFile", path);
    out << "# label\tx\ty\tz\n";
    out.precision(12);
    for (const auto& [label, p] : table.coordinates())
        out << label << '\t' << p.x << '\t' << p.y << '\t' << p.z << '\n';
}

}  // namespace mdjpt::montage
