#pragma once

#include "etchpit/image.hpp"

#include <string>
#include <vector>

/// Classical segmentation of candidate etch pits: illumination correction,
/// thresholding, binary morphology, connected components, ellipse fitting
/// and shape gating.
namespace etchpit::imgproc {

struct ContrastParams {
    int ball_radius = 50;
    double clahe_clip = 2.0;
    int clahe_tiles = 8;
    /// Residual quantile mapped to black after background subtraction.
    double stretch_quantile = 0.005;
    /// Lower bound on the stretch range so pit-free tiles keep their noise small.
    double min_contrast = 0.3;
};

/// Background estimate for dark features on a bright field: grayscale
/// closing with a ball of the given radius (pixel units, ball height in
/// 8-bit gray levels). Large radii run on a max-pooled copy and are
/// interpolated back, as in the classic rolling-ball implementation.
/// The result is >= img everywhere.
GrayImage rolling_ball_background(const GrayImage& img, int radius);

/// Contrast-limited adaptive histogram equalization on a tiles x tiles grid
/// (256 levels, bilinear interpolation between tile mappings). `clip` is
/// relative to the mean bin height; clip <= 0 disables clipping.
/// Throws SizingError if the image is smaller than the tile grid.
GrayImage clahe(const GrayImage& img, double clip, int tiles);

/// Rolling-ball subtraction, robust stretch of the residual, then CLAHE.
GrayImage correct_contrast(const GrayImage& img, const ContrastParams& params = {});

enum class MorphOp { Erode, Open, Dilate };

struct MorphStep {
    MorphOp op = MorphOp::Open;
    int radius = 1;
};
using MorphPlan = std::vector<MorphStep>;

/// Parses "open:1,erode:2"; empty string gives an empty plan.
MorphPlan parse_morph_plan(const std::string& text);
std::string to_string(const MorphPlan& plan);

/// Foreground = intensity strictly below `threshold` (pits are dark).
BinaryMask threshold_dark(const GrayImage& img, double threshold);

// Disk structuring elements of the given radius. Erosion treats pixels
// outside the mask as foreground, dilation as background.
BinaryMask erode(const BinaryMask& m, int radius);
BinaryMask dilate(const BinaryMask& m, int radius);
BinaryMask open(const BinaryMask& m, int radius);
BinaryMask apply_morphology(const BinaryMask& m, const MorphPlan& plan);

/// A candidate etch pit: an 8-connected set of foreground pixels.
struct Blob {
    std::vector<Point> pixels;  // raster order
    Rect bbox;
    double cx = 0.0;
    double cy = 0.0;

    std::size_t area() const { return pixels.size(); }
    /// Pixel mask in bbox coordinates.
    BinaryMask local_mask() const;
};

Blob make_blob(std::vector<Point> pixels);

/// 8-connected component labeling; components smaller than `min_area` are dropped.
std::vector<Blob> label_components(const BinaryMask& m, std::size_t min_area = 4);

std::vector<Blob> segment_candidates(const GrayImage& img, double threshold, const MorphPlan& plan,
                                     std::size_t min_area = 4);

struct EllipseFit {
    double cx = 0.0;
    double cy = 0.0;
    double major = 0.0;        // full axis length, pixels
    double minor = 0.0;
    double orientation = 0.0;  // radians in [0, pi), measured from +x towards +y
    bool degenerate = false;
};

/// Second-central-moment ellipse (axis = 4 sqrt(eigenvalue)). Collinear
/// pixel sets get minor = 1 and the degenerate flag.
EllipseFit fit_ellipse(const Blob& blob);

/// Length of the traced outer boundary chain (8-connected, axial step 1,
/// diagonal step sqrt(2)).
double boundary_length(const Blob& blob);

struct ShapeDescriptors {
    double lengthiness = 1.0;  // major / minor
    double compactness = 1.0;  // area / ellipse area
    double circularity = 1.0;  // 4 pi area / perimeter^2
};

ShapeDescriptors describe(const Blob& blob, const EllipseFit& fit);

struct GateLimits {
    double max_lengthiness = 3.0;
    double min_compactness = 0.6;
    double min_circularity = 0.6;
};

enum RejectReason : unsigned {
    kRejectNone = 0,
    kRejectDegenerate = 1u << 0,
    kRejectLengthiness = 1u << 1,
    kRejectCompactness = 1u << 2,
    kRejectCircularity = 1u << 3,
};

struct GateVerdict {
    bool keep = false;
    unsigned reasons = kRejectNone;
    ShapeDescriptors descriptors;

    bool rejected_for(RejectReason r) const { return (reasons & r) != 0; }
    /// "keep" or a '+'-joined list of reasons, e.g. "lengthiness+circularity".
    std::string verdict_string() const;
};

GateVerdict shape_gate(const Blob& blob, const EllipseFit& fit, const GateLimits& limits = {});

/// Image region around a blob.
struct Patch {
    GrayImage image;
    BinaryMask mask;  // blob pixels, patch coordinates
    Blob blob;        // tile coordinates
    Rect region;      // tile coordinates, inclusive
    int border = 10;
    bool clipped = false;

    Point origin() const { return {region.x0, region.y0}; }
};

/// Crop of the blob bbox grown by `border`, clipped to the image.
Patch extract_patch(const GrayImage& img, const Blob& blob, int border = 10);

}  // namespace etchpit::imgproc
