#include "percmap/targets.hpp"

#include <algorithm>
#include <cmath>

#include "percmap/errors.hpp"

namespace percmap {

std::vector<Point2> keypoints_of(const MapInstance& inst) { return inst.points; }

HeatmapTarget make_heatmap_target(const VectorMap& map, const CameraRig& rig, double sigma,
                                  double z_ground) {
  PERCMAP_REQUIRE(sigma > 0.0, "heatmap sigma must be positive");
  PERCMAP_REQUIRE(!rig.cameras.empty(), "heatmap target needs at least one camera");
  const int h = rig.cameras.front().image_height;
  const int w = rig.cameras.front().image_width;
  for (const auto& cam : rig.cameras) {
    PERCMAP_REQUIRE(cam.image_height == h && cam.image_width == w,
                    "all cameras must share one image size");
  }
  const std::size_t nc = kNumCategories;
  Tensor target = Tensor::zeros({rig.size(), static_cast<std::size_t>(h), static_cast<std::size_t>(w), nc});
  auto data = target.mutable_data();

  const double radius = 3.0 * sigma;
  const double r2 = radius * radius;
  const int reach = static_cast<int>(std::ceil(radius));
  const double denom = 2.0 * sigma * sigma;

  for (const auto& inst : map.instances) {
    if (inst.category.id < 0 || inst.category.id >= kNumCategories) continue;
    const std::size_t ch = static_cast<std::size_t>(inst.category.id);
    for (const Point2& kp : keypoints_of(inst)) {
      for (const auto& hit : visible_cameras(rig, {kp.x, kp.y, z_ground})) {
        const int u0 = static_cast<int>(std::floor(hit.u));
        const int v0 = static_cast<int>(std::floor(hit.v));
        for (int dv = -reach; dv <= reach; ++dv) {
          const int v = v0 + dv;
          if (v < 0 || v >= h) continue;
          for (int du = -reach; du <= reach; ++du) {
            const int u = u0 + du;
            if (u < 0 || u >= w) continue;
            const double d2 = static_cast<double>(du * du + dv * dv);
            if (d2 > r2) continue;
            const double val = std::exp(-d2 / denom);
            double& cell = data[((hit.index * h + v) * w + u) * nc + ch];
            cell = std::max(cell, val);
          }
        }
      }
    }
  }
  return {target, sigma};
}

namespace {

struct CellPoint {
  double c;  // column coordinate
  double r;  // row coordinate
};

// floor/ceil into [lo, hi] without overflowing on far-away coordinates.
int floor_clamped(double v, int lo, int hi) {
  return static_cast<int>(std::clamp(std::floor(v), static_cast<double>(lo), static_cast<double>(hi)));
}
int ceil_clamped(double v, int lo, int hi) {
  return static_cast<int>(std::clamp(std::ceil(v), static_cast<double>(lo), static_cast<double>(hi)));
}

double segment_dist2(CellPoint p, CellPoint a, CellPoint b) {
  const double dx = b.c - a.c, dy = b.r - a.r;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.c - a.c) * dx + (p.r - a.r) * dy) / len2, 0.0, 1.0);
  const double ex = p.c - (a.c + t * dx), ey = p.r - (a.r + t * dy);
  return ex * ex + ey * ey;
}

}  // namespace

std::vector<std::size_t> raster_cells(const std::vector<Point2>& points, bool closed,
                                      const BevGrid& grid, const RasterOptions& opts) {
  PERCMAP_REQUIRE(opts.line_width >= 1.0, "raster line width must be >= 1 cell");
  std::vector<CellPoint> pts;
  pts.reserve(points.size());
  for (const auto& p : points) pts.push_back({grid.col_coord(p.x), grid.row_coord(p.y)});

  std::vector<char> hit(grid.num_cells(), 0);
  const double r = opts.line_width / 2.0;
  const double r2 = r * r;

  const std::size_t nseg = closed && pts.size() > 2 ? pts.size() : pts.size() - 1;
  for (std::size_t s = 0; s < nseg; ++s) {
    const CellPoint a = pts[s];
    const CellPoint b = pts[(s + 1) % pts.size()];
    // Only cells whose centers can lie within r of the segment.
    const int c0 = floor_clamped(std::min(a.c, b.c) - r - 0.5, 0, grid.width);
    const int c1 = ceil_clamped(std::max(a.c, b.c) + r - 0.5, -1, grid.width - 1);
    const int r0 = floor_clamped(std::min(a.r, b.r) - r - 0.5, 0, grid.height);
    const int r1 = ceil_clamped(std::max(a.r, b.r) + r - 0.5, -1, grid.height - 1);
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col) {
        if (segment_dist2({col + 0.5, row + 0.5}, a, b) < r2)
          hit[static_cast<std::size_t>(row) * grid.width + col] = 1;
      }
  }

  if (closed && opts.fill_closed && pts.size() >= 3) {
    // Scanline fill through cell-center rows.
    std::vector<double> xs;
    for (int row = 0; row < grid.height; ++row) {
      const double yc = row + 0.5;
      xs.clear();
      for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
        const CellPoint pi = pts[i], pj = pts[j];
        if ((pi.r > yc) != (pj.r > yc)) xs.push_back((pj.c - pi.c) * (yc - pi.r) / (pj.r - pi.r) + pi.c);
      }
      std::sort(xs.begin(), xs.end());
      // A center has an odd number of crossings strictly to its right iff
      // xs[2k] <= xc < xs[2k+1] for some k.
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        const int first = floor_clamped(xs[k] - 0.5, 0, grid.width);
        const int last = ceil_clamped(xs[k + 1] - 0.5, -1, grid.width - 1);
        for (int col = first; col <= last; ++col) {
          const double xc = col + 0.5;
          if (xs[k] <= xc && xc < xs[k + 1]) hit[static_cast<std::size_t>(row) * grid.width + col] = 1;
        }
      }
    }
  }

  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < hit.size(); ++i)
    if (hit[i]) cells.push_back(i);
  return cells;
}

RasterMask rasterize_instances(const VectorMap& map, const BevGrid& grid, const RasterOptions& opts,
                               RasterValue value) {
  validate_grid(grid);
  const std::size_t nc = kNumCategories;
  Tensor mask = Tensor::zeros({static_cast<std::size_t>(grid.height), static_cast<std::size_t>(grid.width), nc});
  auto data = mask.mutable_data();
  for (const auto& inst : map.instances) {
    if (inst.category.id < 0 || inst.category.id >= kNumCategories) continue;
    const double v = value == RasterValue::kBinary ? 1.0 : inst.confidence;
    for (std::size_t cell : raster_cells(inst.points, inst.closed(), grid, opts)) {
      double& m = data[cell * nc + static_cast<std::size_t>(inst.category.id)];
      m = std::max(m, v);
    }
  }
  return {mask, opts.line_width};
}

}  // namespace percmap
