#pragma once

#include "bayesmap/common.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace bayesmap {

/// Dense vertex-to-vertex map from a source shape onto a target shape.
/// Range is checked on construction; bijectivity is computed, never trusted.
class PointMap {
public:
    PointMap() = default;

    PointMap(std::vector<Index> image, Index num_target) : image_(std::move(image)), num_target_(num_target)
    {
        if (num_target_ < 0)
            throw InvalidInput("PointMap: negative target size");
        for (Index v : image_)
            if (v < 0 || v >= num_target_)
                throw InvalidInput("PointMap: image index " + std::to_string(v) + " out of range [0, " +
                                   std::to_string(num_target_) + ")");
        bijective_ = compute_bijective();
    }

    static PointMap identity(Index n)
    {
        std::vector<Index> img(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i)
            img[static_cast<std::size_t>(i)] = i;
        return PointMap(std::move(img), n);
    }

    Index num_source() const { return static_cast<Index>(image_.size()); }
    Index num_target() const { return num_target_; }
    bool bijective() const { return bijective_; }

    Index operator[](Index i) const { return image_[static_cast<std::size_t>(i)]; }
    const std::vector<Index>& image() const { return image_; }

    /// Inverse of a bijective map.
    PointMap inverse() const
    {
        if (!bijective_)
            throw InvalidInput("PointMap::inverse: map is not bijective");
        std::vector<Index> inv(image_.size());
        for (std::size_t i = 0; i < image_.size(); ++i)
            inv[static_cast<std::size_t>(image_[i])] = static_cast<Index>(i);
        return PointMap(std::move(inv), num_source());
    }

    /// Number of target vertices that possess a preimage.
    Index image_size() const
    {
        std::vector<char> hit(static_cast<std::size_t>(num_target_), 0);
        Index count = 0;
        for (Index v : image_)
            if (!hit[static_cast<std::size_t>(v)]) {
                hit[static_cast<std::size_t>(v)] = 1;
                ++count;
            }
        return count;
    }

    friend bool operator==(const PointMap& a, const PointMap& b)
    {
        return a.num_target_ == b.num_target_ && a.image_ == b.image_;
    }

private:
    bool compute_bijective() const
    {
        if (num_source() != num_target_)
            return false;
        std::vector<char> hit(static_cast<std::size_t>(num_target_), 0);
        for (Index v : image_) {
            if (hit[static_cast<std::size_t>(v)])
                return false;
            hit[static_cast<std::size_t>(v)] = 1;
        }
        return true;
    }

    std::vector<Index> image_;
    Index num_target_ = 0;
    bool bijective_ = false;
};

/// ASCII point map: one 0-based target index per line, one line per source vertex.
inline void write_point_map(std::ostream& os, const PointMap& map)
{
    for (Index v : map.image())
        os << v << '\n';
}

inline PointMap read_point_map(std::istream& is, Index num_target)
{
    std::vector<Index> image;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        long long v;
        if (!(ls >> v))
            throw ParseError("point map line " + std::to_string(lineno) + ": expected an integer");
        image.push_back(static_cast<Index>(v));
    }
    return PointMap(std::move(image), num_target);
}

inline void save_point_map(const std::filesystem::path& path, const PointMap& map)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path.string());
    write_point_map(out, map);
}

inline PointMap load_point_map(const std::filesystem::path& path, Index num_target)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open point map " + path.string());
    return read_point_map(in, num_target);
}

} // namespace bayesmap
