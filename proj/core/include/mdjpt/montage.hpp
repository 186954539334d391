#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

namespace mdjpt::montage {

struct Position {
    double x, y, z;  // unit sphere, +x right ear, +y nasion, +z vertex
};

// 10-20 / 10-10 electrode coordinates plus the canonical 60-channel target set.
class MontageTable {
public:
    MontageTable(std::map<std::string, Position> coords, std::vector<std::string> target);

    const Position& position(const std::string& label) const;  // throws UnknownChannelLabel
    bool has(const std::string& label) const { return coords_.count(label) != 0; }
    const std::vector<std::string>& target_labels() const { return target_; }
    const std::map<std::string, Position>& coordinates() const { return coords_; }

    // labels among `candidates` sorted by Euclidean distance to `label`
    std::vector<std::string> nearest(const std::string& label,
                                     const std::vector<std::string>& candidates,
                                     std::size_t k) const;

    static double distance(const Position& a, const Position& b);

private:
    std::map<std::string, Position> coords_;
    std::vector<std::string> target_;
};

// Built-in 10-20 extended montage with the standard 60-channel target set.
const MontageTable& standard_1020_60();

MontageTable load_tsv(const std::string& path);
void save_tsv(const MontageTable& table, const std::string& path);

}  // namespace mdjpt::montage
