#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace foodcal {

struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

// Axis-aligned pixel box; (x, y) is the top-left pixel, w/h are pixel counts.
struct PixelBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

// Rectangular 0/1 raster, row-major.
class BinaryMask {
public:
    BinaryMask(int width, int height);
    BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    bool in_bounds(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    bool at(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
    // Out-of-bounds reads are background.
    bool test(int x, int y) const noexcept { return in_bounds(x, y) && at(x, y); }
    void set(int x, int y, bool on = true) noexcept { bits_[index(x, y)] = on ? 1 : 0; }

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::size_t count() const noexcept;
    bool empty() const noexcept { return count() == 0; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_;
    int height_;
    std::vector<std::uint8_t> bits_;
};

// Closed boundary loop of integer pixel coordinates; the closing edge back to
// points.front() is implicit.
struct Contour {
    std::vector<Point> points;
};

struct ShapeStats {
    PixelBox bbox;
    double area_px = 0.0;
    double perimeter_px = 0.0;
};

// 8-connected foreground components, each returned as a full-size mask.
// Ordered by (min-y, min-x) of the component.
std::vector<BinaryMask> connected_components(const BinaryMask& mask);

// Moore-neighbour trace of the outer boundary of the component containing the
// topmost-then-leftmost foreground pixel. Clockwise with y pointing down.
// Throws Error(EmptyComponent) on an all-zero mask.
Contour trace_contour(const BinaryMask& component);

// Shoelace area, closed arc length and tight vertex bbox of a contour polygon.
ShapeStats shape_stats(const Contour& contour);

// Tight bounding box of all foreground pixels; {0,0,0,0} when empty.
PixelBox foreground_bbox(const BinaryMask& mask);

// Binary PGM (P5). Any sample >= half of maxval (>= 128 for 8-bit) is foreground.
BinaryMask read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace foodcal
