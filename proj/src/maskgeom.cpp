#include "foodcal/maskgeom.hpp"

#include "foodcal/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace foodcal {

namespace {

// Clockwise on screen (y down): E, SE, S, SW, W, NW, N, NE.
constexpr std::array<Point, 8> kDirs{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
constexpr int kWest = 4;

int direction_of(Point d) {
    for (int i = 0; i < 8; ++i) {
        if (kDirs[i] == d) return i;
    }
    return -1;
}

Point step(Point p, int dir) { return {p.x + kDirs[dir].x, p.y + kDirs[dir].y}; }

}  // namespace

BinaryMask::BinaryMask(int width, int height) : BinaryMask(width, height, {}) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidDimension, "mask dimensions must be >= 1");
    }
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bits_.empty()) {
        bits_.assign(n, 0);
    } else if (bits_.size() != n) {
        throw Error(ErrorCode::InvalidDimension, "mask bit count does not match width*height");
    }
    for (auto& b : bits_) {
        if (b > 1) throw Error(ErrorCode::InvalidDimension, "mask values must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<BinaryMask> connected_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
    struct Extent {
        int min_y;
        int min_x;
    };
    std::vector<Extent> extents;
    std::vector<BinaryMask> out;
    std::vector<Point> stack;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
            const int id = static_cast<int>(out.size());
            BinaryMask comp(w, h);
            Extent ext{y, x};
            stack.assign(1, {x, y});
            label[static_cast<std::size_t>(y) * w + x] = id;
            while (!stack.empty()) {
                const Point p = stack.back();
                stack.pop_back();
                comp.set(p.x, p.y);
                ext.min_x = std::min(ext.min_x, p.x);
                for (int d = 0; d < 8; ++d) {
                    const Point q = step(p, d);
                    if (!mask.test(q.x, q.y)) continue;
                    auto& l = label[static_cast<std::size_t>(q.y) * w + q.x];
                    if (l >= 0) continue;
                    l = id;
                    stack.push_back(q);
                }
            }
            out.push_back(std::move(comp));
            extents.push_back(ext);
        }
    }

    // Raster discovery already orders by min-y; min-x needs an explicit sort.
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (extents[a].min_y != extents[b].min_y) return extents[a].min_y < extents[b].min_y;
        return extents[a].min_x < extents[b].min_x;
    });
    std::vector<BinaryMask> sorted;
    sorted.reserve(out.size());
    for (auto i : order) sorted.push_back(std::move(out[i]));
    return sorted;
}

Contour trace_contour(const BinaryMask& component) {
    Point start{-1, -1};
    for (int y = 0; y < component.height() && start.x < 0; ++y) {
        for (int x = 0; x < component.width(); ++x) {
            if (component.at(x, y)) {
                start = {x, y};
                break;
            }
        }
    }
    if (start.x < 0) throw Error(ErrorCode::EmptyComponent, "mask has no foreground pixel");

    // Returns the first foreground neighbour of p scanning clockwise from the
    // direction after `backtrack`, plus the direction it was found in.
    auto next_from = [&](Point p, int backtrack, Point& found) -> int {
        for (int k = 1; k <= 7; ++k) {
            const int d = (backtrack + k) % 8;
            const Point q = step(p, d);
            if (component.test(q.x, q.y)) {
                found = q;
                return d;
            }
        }
        return -1;
    };

    Contour contour;
    contour.points.push_back(start);

    Point first_move{};
    int dir = next_from(start, kWest, first_move);
    if (dir < 0) return contour;  // isolated pixel

    Point p = start;
    int backtrack = kWest;
    // Upper bound on loop length: every boundary pixel is entered at most 4 times.
    const std::size_t limit = 4 * component.count() + 8;
    for (std::size_t iter = 0; iter < limit; ++iter) {
        Point q{};
        dir = next_from(p, backtrack, q);
        if (p == start && q == first_move && iter > 0) break;
        // The pixel scanned just before q is background; it becomes q's backtrack.
        const Point bg = step(p, (dir + 7) % 8);
        backtrack = direction_of({bg.x - q.x, bg.y - q.y});
        contour.points.push_back(q);
        p = q;
    }
    if (contour.points.size() > 1 && contour.points.back() == start) contour.points.pop_back();
    return contour;
}

ShapeStats shape_stats(const Contour& contour) {
    ShapeStats stats;
    const auto& pts = contour.points;
    if (pts.empty()) throw Error(ErrorCode::EmptyComponent, "empty contour");

    int min_x = pts[0].x, max_x = pts[0].x, min_y = pts[0].y, max_y = pts[0].y;
    double twice_area = 0.0;
    double perimeter = 0.0;
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point a = pts[i];
        const Point b = pts[(i + 1) % n];
        min_x = std::min(min_x, a.x);
        max_x = std::max(max_x, a.x);
        min_y = std::min(min_y, a.y);
        max_y = std::max(max_y, a.y);
        twice_area += static_cast<double>(a.x) * b.y - static_cast<double>(b.x) * a.y;
        perimeter += std::hypot(static_cast<double>(b.x - a.x), static_cast<double>(b.y - a.y));
    }
    stats.bbox = {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
    stats.area_px = std::abs(twice_area) / 2.0;
    stats.perimeter_px = n > 1 ? perimeter : 0.0;
    return stats;
}

PixelBox foreground_bbox(const BinaryMask& mask) {
    int min_x = mask.width(), min_y = mask.height(), max_x = -1, max_y = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
        }
    }
    if (max_x < 0) return {};
    return {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    while (in) {
        const int c = in.get();
        if (c == EOF) break;
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            if (!tok.empty()) break;
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

BinaryMask read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    if (next_token(in) != "P5") throw Error(ErrorCode::ParseError, path.string() + ": not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, path.string() + ": malformed PGM header");
    }
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
        throw Error(ErrorCode::ParseError, path.string() + ": invalid PGM dimensions or maxval");
    }
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw Error(ErrorCode::ParseError, path.string() + ": truncated PGM payload");
    }
    const int threshold = maxval == 255 ? 128 : (maxval + 1) / 2;
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
        bits[i] = v >= threshold ? 1 : 0;
    }
    return BinaryMask(w, h, std::move(bits));
}

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
    std::vector<char> row(static_cast<std::size_t>(mask.width()));
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) row[x] = mask.at(x, y) ? static_cast<char>(255) : 0;
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace foodcal
