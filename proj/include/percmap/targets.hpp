#pragma once

#include <cstddef>
#include <vector>

#include "percmap/camera.hpp"
#include "percmap/map_core.hpp"
#include "percmap/tensor.hpp"

namespace percmap {

// Per-camera Gaussian keypoint heatmaps, [N, H_I, W_I, N_c] in [0, 1].
struct HeatmapTarget {
  Tensor heatmap;
  double sigma = 3.0;
};

struct RasterOptions {
  double line_width = 1.0;  // cells
  bool fill_closed = true;  // closed instances are filled, not just outlined
};

enum class RasterValue { kBinary, kConfidence };

// BEV masks, [H, W, N_c].
struct RasterMask {
  Tensor mask;
  double line_width = 1.0;
};

// The instance's stored (pre-resampling) vertices.
std::vector<Point2> keypoints_of(const MapInstance& inst);

// Each keypoint visible in a camera splats exp(-d^2 / (2 sigma^2)) around its
// floored pixel into its category channel, out to radius 3 sigma; overlaps
// combine by max. All cameras must share one image size.
HeatmapTarget make_heatmap_target(const VectorMap& map, const CameraRig& rig, double sigma,
                                  double z_ground = 0.0);

// Flattened cell indices (row * width + col) covered by one instance, sorted
// and unique. A cell is covered when its center lies within line_width / 2
// (strictly, in cell units) of a segment of the chain, or, for filled closed
// instances, inside the polygon (crossing-number rule).
std::vector<std::size_t> raster_cells(const std::vector<Point2>& points, bool closed,
                                      const BevGrid& grid, const RasterOptions& opts);

// Binary masks for ground truth; for predictions each covered cell holds the
// maximum confidence among instances covering it.
RasterMask rasterize_instances(const VectorMap& map, const BevGrid& grid, const RasterOptions& opts,
                               RasterValue value = RasterValue::kBinary);

}  // namespace percmap
