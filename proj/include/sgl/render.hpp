#pragma once

#include "sgl/geometry.hpp"
#include "sgl/graph.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace sgl {

struct Rgb {
    std::uint8_t r = 255;
    std::uint8_t g = 255;
    std::uint8_t b = 255;

    bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// 8-bit RGB raster, row-major, top row first.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = kWhite)
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * 3) {
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    const std::vector<std::uint8_t>& bytes() const noexcept { return data_; }

    Rgb at(int x, int y) const {
        const std::size_t i = offset(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const std::size_t i = offset(x, y);
        data_[i] = c.r;
        data_[i + 1] = c.g;
        data_[i + 2] = c.b;
    }

    bool operator==(const Image&) const = default;

private:
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

enum class View { Front = 0, Side = 1, Top = 2, Oblique = 3 };

inline constexpr View kViews[] = {View::Front, View::Side, View::Top, View::Oblique};

/// Orthographic camera with a square viewport of side 2 * half_size metres
/// centred on `center`. `forward` points into the scene.
struct OrthoCamera {
    Vec3 center;
    Vec3 right;
    Vec3 up;
    Vec3 forward;
    double half_size = 1.0;

    bool operator==(const OrthoCamera&) const = default;
};

inline constexpr double kObliqueAzimuthDeg = 45.0;
inline constexpr double kObliqueElevationDeg = 35.0;

/// Four canonical cameras. Front sits on -y looking along +y; side sits on +x
/// looking along -x (image right is +y); top looks down -z (image up is +y);
/// oblique sits at azimuth 45 deg from front towards +x, elevation 35 deg.
struct CameraRig {
    std::array<OrthoCamera, 4> views;
    double margin = 0.10;
    int quadrant_size = 256;

    static CameraRig standard(double margin = 0.10, int quadrant_size = 256) {
        CameraRig rig;
        rig.margin = margin;
        rig.quadrant_size = quadrant_size;
        rig.views[0] = {{}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}, 1.0};
        rig.views[1] = {{}, {0, 1, 0}, {0, 0, 1}, {-1, 0, 0}, 1.0};
        rig.views[2] = {{}, {1, 0, 0}, {0, 1, 0}, {0, 0, -1}, 1.0};
        const double az = deg_to_rad(kObliqueAzimuthDeg);
        const double el = deg_to_rad(kObliqueElevationDeg);
        const Vec3 to_camera{std::sin(az) * std::cos(el), -std::cos(az) * std::cos(el), std::sin(el)};
        const Vec3 forward = to_camera * -1.0;
        const Vec3 right = normalized(cross(forward, {0, 0, 1}));
        const Vec3 up = cross(right, forward);
        rig.views[3] = {{}, right, up, forward, 1.0};
        return rig;
    }

    const OrthoCamera& camera(View v) const { return views[static_cast<std::size_t>(v)]; }

    void validate() const {
        if (!(margin >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "camera margin must be >= 0");
        if (quadrant_size < 64)
            throw Error(ErrorCode::InvalidArgument, "camera quadrant size must be >= 64 px");
    }

    bool operator==(const CameraRig&) const = default;
};

/// Continuous pixel coordinates of a world point inside one quadrant
/// (0..size on both axes, y growing downwards) plus view depth.
struct PixelPoint {
    double x;
    double y;
    double depth;
};

inline PixelPoint project_to_pixel(const OrthoCamera& cam, int size, const Vec3& p) {
    const Vec3 d = p - cam.center;
    const double u = dot(d, cam.right) / cam.half_size;
    const double v = dot(d, cam.up) / cam.half_size;
    return {(u + 1.0) * 0.5 * size, (1.0 - v) * 0.5 * size, dot(d, cam.forward)};
}

/// Fits every camera so all box corners project inside its viewport with
/// `margin` of the fitted extent on each side. Depends only on the boxes and
/// the rig's margin/size, so it is idempotent.
inline CameraRig frame_cameras(std::span<const OrientedBox> boxes, const CameraRig& rig) {
    if (boxes.empty())
        throw Error(ErrorCode::InvalidArgument, "frame_cameras needs at least one box");
    rig.validate();
    CameraRig out = CameraRig::standard(rig.margin, rig.quadrant_size);
    std::vector<Vec3> pts;
    pts.reserve(boxes.size() * 8);
    for (const auto& b : boxes) {
        for (const auto& c : corners(b))
            pts.push_back(c);
    }
    for (auto& cam : out.views) {
        double rlo = std::numeric_limits<double>::infinity(), rhi = -rlo;
        double ulo = rlo, uhi = -rlo, flo = rlo, fhi = -rlo;
        for (const auto& p : pts) {
            const double r = dot(p, cam.right), u = dot(p, cam.up), f = dot(p, cam.forward);
            rlo = std::min(rlo, r);
            rhi = std::max(rhi, r);
            ulo = std::min(ulo, u);
            uhi = std::max(uhi, u);
            flo = std::min(flo, f);
            fhi = std::max(fhi, f);
        }
        cam.center = cam.right * (0.5 * (rlo + rhi)) + cam.up * (0.5 * (ulo + uhi)) +
                     cam.forward * (0.5 * (flo + fhi));
        const double extent = std::max(rhi - rlo, uhi - ulo);
        cam.half_size = 0.5 * extent * (1.0 + 2.0 * rig.margin);
    }
    return out;
}

/// Stable per-id colour, never white.
inline Rgb node_color(std::string_view id) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : id) {
        h ^= c;
        h *= 1099511628211ull;
    }
    const double hue = static_cast<double>(h % 3600) / 10.0;
    const double sat = 0.65, val = 0.85;
    const double c = val * sat;
    const double hp = hue / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
    }
    const double m = val - c;
    auto to8 = [&](double v) { return static_cast<std::uint8_t>(std::lround((v + m) * 255.0)); };
    return {to8(r), to8(g), to8(b)};
}

enum class MontageSubject { X1, X2, XAll, Custom };

inline const char* to_string(MontageSubject s) {
    switch (s) {
    case MontageSubject::X1: return "X1";
    case MontageSubject::X2: return "X2";
    case MontageSubject::XAll: return "Xall";
    case MontageSubject::Custom: return "custom";
    }
    return "custom";
}

/// 2x2 montage: front top-left, side top-right, top-down bottom-left,
/// oblique bottom-right.
struct ViewMontage {
    Image pixels;
    MontageSubject subject = MontageSubject::Custom;
    CameraRig camera;
};

inline std::pair<int, int> quadrant_origin(View v, int size) {
    switch (v) {
    case View::Front: return {0, 0};
    case View::Side: return {size, 0};
    case View::Top: return {0, size};
    case View::Oblique: return {size, size};
    }
    return {0, 0};
}

namespace detail {

inline constexpr std::array<std::array<int, 3>, 12> kBoxTriangles{{
    {0, 2, 6}, {0, 6, 4}, // -x
    {1, 3, 7}, {1, 7, 5}, // +x
    {0, 1, 5}, {0, 5, 4}, // -y
    {2, 3, 7}, {2, 7, 6}, // +y
    {0, 1, 3}, {0, 3, 2}, // -z
    {4, 5, 7}, {4, 7, 6}, // +z
}};

inline double edge_fn(const PixelPoint& a, const PixelPoint& b, double px, double py) {
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

inline void raster_triangle(Image& img, std::vector<double>& zbuf, int ox, int oy, int size,
                            const PixelPoint& a, const PixelPoint& b, const PixelPoint& c, Rgb color) {
    const double area = edge_fn(a, b, c.x, c.y);
    if (std::fabs(area) < 1e-12)
        return;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double w0 = edge_fn(b, c, px, py) / area;
            const double w1 = edge_fn(c, a, px, py) / area;
            const double w2 = edge_fn(a, b, px, py) / area;
            if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0)
                continue;
            const double depth = w0 * a.depth + w1 * b.depth + w2 * c.depth;
            double& z = zbuf[static_cast<std::size_t>(y) * size + x];
            if (depth < z) {
                z = depth;
                img.set(ox + x, oy + y, color);
            }
        }
    }
}

inline std::vector<OrientedBox> boxes_for(const SceneGraph& graph, std::span<const NodeId> ids) {
    std::vector<OrientedBox> out;
    out.reserve(ids.size());
    for (const auto& id : ids)
        out.push_back(world_box(graph.node(id)));
    return out;
}

} // namespace detail

/// Rasterizes `subject_ids` with an already framed rig. Nodes are drawn in
/// graph order with a z-buffer, flat colour per node on white.
inline Image render_views(const SceneGraph& graph, std::span<const NodeId> subject_ids,
                          const CameraRig& framed) {
    const int size = framed.quadrant_size;
    Image img(2 * size, 2 * size);
    std::vector<const ObjectNode*> drawn;
    for (const auto& n : graph.nodes()) {
        if (std::find(subject_ids.begin(), subject_ids.end(), n.id) != subject_ids.end())
            drawn.push_back(&n);
    }
    for (View v : kViews) {
        const auto& cam = framed.camera(v);
        const auto [ox, oy] = quadrant_origin(v, size);
        std::vector<double> zbuf(static_cast<std::size_t>(size) * size,
                                 std::numeric_limits<double>::infinity());
        for (const ObjectNode* n : drawn) {
            const auto cs = corners(world_box(*n));
            std::array<PixelPoint, 8> pp;
            for (std::size_t i = 0; i < 8; ++i)
                pp[i] = project_to_pixel(cam, size, cs[i]);
            const Rgb color = node_color(n->id);
            for (const auto& t : detail::kBoxTriangles)
                detail::raster_triangle(img, zbuf, ox, oy, size, pp[t[0]], pp[t[1]], pp[t[2]], color);
        }
    }
    return img;
}

inline void require_ids(const SceneGraph& graph, std::span<const NodeId> ids) {
    for (const auto& id : ids) {
        if (!graph.contains(id))
            throw Error(ErrorCode::UnknownId, "unknown node id '" + id + "'");
    }
}

/// Renders `subject_ids` under a framing fitted to `all_ids`. Subjects must be
/// part of `all_ids` so every drawn box lies inside its quadrant.
inline ViewMontage render_montage(const SceneGraph& graph, std::span<const NodeId> subject_ids,
                                  std::span<const NodeId> all_ids,
                                  const CameraRig& rig = CameraRig::standard(),
                                  MontageSubject subject = MontageSubject::Custom) {
    rig.validate();
    require_ids(graph, subject_ids);
    require_ids(graph, all_ids);
    for (const auto& id : subject_ids) {
        if (std::find(all_ids.begin(), all_ids.end(), id) == all_ids.end())
            throw Error(ErrorCode::InvalidArgument, "subject '" + id + "' is outside the framed set");
    }
    CameraRig framed = rig;
    if (!all_ids.empty()) {
        const auto boxes = detail::boxes_for(graph, all_ids);
        framed = frame_cameras(boxes, rig);
    }
    return {render_views(graph, subject_ids, framed), subject, framed};
}

struct MontageTriplet {
    ViewMontage x1;
    ViewMontage x2;
    ViewMontage all;
};

/// X1, X2 and X1 u X2 montages under one framing fitted to X1 u X2.
inline MontageTriplet capture_triplet(const SceneGraph& graph, std::span<const NodeId> x1,
                                      std::span<const NodeId> x2,
                                      const CameraRig& rig = CameraRig::standard()) {
    if (x1.empty() || x2.empty())
        throw Error(ErrorCode::InvalidArgument, "capture_triplet needs non-empty X1 and X2");
    for (const auto& id : x1) {
        if (std::find(x2.begin(), x2.end(), id) != x2.end())
            throw Error(ErrorCode::InvalidArgument, "X1 and X2 overlap on '" + id + "'");
    }
    require_ids(graph, x1);
    require_ids(graph, x2);
    std::vector<NodeId> all(x1.begin(), x1.end());
    all.insert(all.end(), x2.begin(), x2.end());
    const auto boxes = detail::boxes_for(graph, all);
    const CameraRig framed = frame_cameras(boxes, rig);
    return {{render_views(graph, x1, framed), MontageSubject::X1, framed},
            {render_views(graph, x2, framed), MontageSubject::X2, framed},
            {render_views(graph, all, framed), MontageSubject::XAll, framed}};
}

/// Holds the rig template used for every capture during optimization.
class ViewCapturer {
public:
    ViewCapturer() = default;
    explicit ViewCapturer(CameraRig rig) : rig_(std::move(rig)) { rig_.validate(); }

    const CameraRig& rig() const noexcept { return rig_; }

    MontageTriplet capture(const SceneGraph& graph, std::span<const NodeId> x1,
                           std::span<const NodeId> x2) const {
        return capture_triplet(graph, x1, x2, rig_);
    }

private:
    CameraRig rig_ = CameraRig::standard();
};

/// Binary PPM (P6).
inline std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    out.append(img.bytes().begin(), img.bytes().end());
    return out;
}

/// Truecolour 8-bit PNG, unfiltered rows, zlib level 6.
inline std::string encode_png(const Image& img) {
    auto put32 = [](std::string& s, std::uint32_t v) {
        s.push_back(static_cast<char>((v >> 24) & 0xff));
        s.push_back(static_cast<char>((v >> 16) & 0xff));
        s.push_back(static_cast<char>((v >> 8) & 0xff));
        s.push_back(static_cast<char>(v & 0xff));
    };
    auto chunk = [&](std::string& out, const char* type, const std::string& data) {
        put32(out, static_cast<std::uint32_t>(data.size()));
        std::string body(type, 4);
        body += data;
        out += body;
        const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                                 static_cast<uInt>(body.size()));
        put32(out, static_cast<std::uint32_t>(crc));
    };

    std::string raw;
    const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
    raw.reserve((stride + 1) * img.height());
    for (int y = 0; y < img.height(); ++y) {
        raw.push_back('\0');
        const auto* row = img.bytes().data() + static_cast<std::size_t>(y) * stride;
        raw.append(reinterpret_cast<const char*>(row), stride);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::string z(zlen, '\0');
    if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error(ErrorCode::Io, "png deflate failed");
    z.resize(zlen);

    std::string ihdr;
    put32(ihdr, static_cast<std::uint32_t>(img.width()));
    put32(ihdr, static_cast<std::uint32_t>(img.height()));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    chunk(out, "IHDR", ihdr);
    chunk(out, "IDAT", z);
    chunk(out, "IEND", "");
    return out;
}

} // namespace sgl
