//! Binary silhouette rendering, tight cropping, and 4-channel patch assembly.
//!
//! Silhouettes only: no z-buffer, color, or anti-aliasing. Pixel centers sit
//! at integer coordinates. Triangle filling uses exact integer edge functions
//! on a 1/256-pixel grid with the top-left fill rule, so identical inputs
//! always produce bit-identical masks.

use std::io::Write;
use std::path::Path;

use image::{Rgb, RgbImage, Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, MeshModel, Pixel2, Pose, MIN_DEPTH};

/// Side length of the assembled scorer patch.
pub const PATCH_SIZE: u32 = 112;

/// Fixed-point fractional bits for the rasterizer.
const SUBPIXEL_BITS: i64 = 8;
const SUBPIXEL_ONE: i64 = 1 << SUBPIXEL_BITS;

/// How silhouettes are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Splat each visible vertex onto its nearest pixel, then dilate once.
    VertexSplat,
    /// Fill every front-facing-depth triangle (default; closed silhouettes).
    TriangleFill,
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; (width * height) as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// One 3x3 morphological dilation pass.
    pub fn dilate3x3(&self) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                'neigh: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0
                            && ny >= 0
                            && nx < self.width as i64
                            && ny < self.height as i64
                            && self.get(nx as u32, ny as u32)
                        {
                            out.set(x as u32, y as u32, true);
                            break 'neigh;
                        }
                    }
                }
            }
        }
        out
    }

    /// Writes the mask as a binary PGM (P5, maxval 255, values 0/255).
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Inclusive integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    /// Intersection-over-union of two inclusive rectangles.
    pub fn iou(&self, other: &PixelRect) -> f64 {
        let ix0 = self.x0.max(other.x0);
        let iy0 = self.y0.max(other.y0);
        let ix1 = self.x1.min(other.x1);
        let iy1 = self.y1.min(other.y1);
        if ix0 > ix1 || iy0 > iy1 {
            return 0.0;
        }
        let inter = (ix1 - ix0 + 1) as u64 * (iy1 - iy0 + 1) as u64;
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

/// The 4-channel scorer input: a 112x112 RGB crop, its aligned binary mask,
/// and the source rectangle both were cropped from.
#[derive(Debug, Clone)]
pub struct Patch4 {
    pub rgb: RgbImage,
    pub mask: BinaryMask,
    pub source_bbox: PixelRect,
}

impl Patch4 {
    /// RGBA view with the mask in the alpha channel (0 or 255).
    pub fn to_rgba(&self) -> RgbaImage {
        let mut out = RgbaImage::new(PATCH_SIZE, PATCH_SIZE);
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                let Rgb([r, g, b]) = *self.rgb.get_pixel(x, y);
                let a = if self.mask.get(x, y) { 255 } else { 0 };
                out.put_pixel(x, y, Rgba([r, g, b, a]));
            }
        }
        out
    }

    /// Writes the RGBA encoding as a PNG file.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.to_rgba().save(path)?;
        Ok(())
    }

    /// Zeroes RGB outside the mask, for scorers that want masked patches.
    pub fn masked_rgb(&self) -> RgbImage {
        let mut out = self.rgb.clone();
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                if !self.mask.get(x, y) {
                    out.put_pixel(x, y, Rgb([0, 0, 0]));
                }
            }
        }
        out
    }
}

/// Renders the mesh silhouette under a pose.
///
/// Fails when fewer than half of the vertices have positive depth. Vertex
/// splatting follows each visible vertex to its nearest pixel and dilates
/// once; triangle filling rasterizes every face whose three vertices have
/// positive depth. Out-of-image fragments are dropped.
pub fn render_mask(
    mesh: &MeshModel,
    pose: &Pose,
    k: &CameraIntrinsics,
    mode: MaskMode,
) -> Result<BinaryMask> {
    let verts = mesh.vertices();
    let cam: Vec<crate::geometry::Vec3> =
        verts.iter().map(|v| pose.transform_point(v)).collect();
    let visible = cam.iter().filter(|p| p.z > MIN_DEPTH).count();
    if visible * 2 < verts.len() {
        return Err(Error::AllVerticesBehindCamera);
    }
    let projected: Vec<Option<Pixel2>> = cam
        .iter()
        .map(|p| {
            if p.z > MIN_DEPTH {
                Some(Pixel2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
            } else {
                None
            }
        })
        .collect();

    let mut mask = BinaryMask::new(k.image_width, k.image_height);
    match mode {
        MaskMode::VertexSplat => {
            for p in projected.iter().flatten() {
                let x = p.x.round();
                let y = p.y.round();
                if x >= 0.0 && y >= 0.0 && x < k.image_width as f64 && y < k.image_height as f64 {
                    mask.set(x as u32, y as u32, true);
                }
            }
            mask = mask.dilate3x3();
        }
        MaskMode::TriangleFill => {
            for face in mesh.faces() {
                let (Some(a), Some(b), Some(c)) = (
                    projected[face[0]],
                    projected[face[1]],
                    projected[face[2]],
                ) else {
                    continue;
                };
                fill_triangle(&mut mask, &a, &b, &c);
            }
        }
    }
    Ok(mask)
}

fn snap(v: f64) -> i64 {
    (v * SUBPIXEL_ONE as f64).round() as i64
}

/// Cross product of (b - a) x (p - a) in fixed-point coordinates.
#[inline]
fn orient2d(ax: i64, ay: i64, bx: i64, by: i64, px: i64, py: i64) -> i64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// An edge counts its boundary pixels when it is a "top" edge (horizontal,
/// pointing +x) or a "left" edge (pointing -y) of a positively oriented
/// triangle; the opposite boundary belongs to the adjacent triangle.
#[inline]
fn edge_bias(ax: i64, ay: i64, bx: i64, by: i64) -> i64 {
    let dy = by - ay;
    let dx = bx - ax;
    if dy < 0 || (dy == 0 && dx > 0) {
        0
    } else {
        -1
    }
}

fn fill_triangle(mask: &mut BinaryMask, a: &Pixel2, b: &Pixel2, c: &Pixel2) {
    let (mut x0, mut y0) = (snap(a.x), snap(a.y));
    let (mut x1, mut y1) = (snap(b.x), snap(b.y));
    let (x2, y2) = (snap(c.x), snap(c.y));

    let mut area = orient2d(x0, y0, x1, y1, x2, y2);
    if area == 0 {
        return;
    }
    if area < 0 {
        std::mem::swap(&mut x0, &mut x1);
        std::mem::swap(&mut y0, &mut y1);
        area = -area;
    }
    debug_assert!(area > 0);

    let min_x = (x0.min(x1).min(x2) >> SUBPIXEL_BITS).max(0);
    let max_x = ((x0.max(x1).max(x2) + SUBPIXEL_ONE - 1) >> SUBPIXEL_BITS)
        .min(mask.width as i64 - 1);
    let min_y = (y0.min(y1).min(y2) >> SUBPIXEL_BITS).max(0);
    let max_y = ((y0.max(y1).max(y2) + SUBPIXEL_ONE - 1) >> SUBPIXEL_BITS)
        .min(mask.height as i64 - 1);

    let bias0 = edge_bias(x1, y1, x2, y2);
    let bias1 = edge_bias(x2, y2, x0, y0);
    let bias2 = edge_bias(x0, y0, x1, y1);

    for py in min_y..=max_y {
        let sy = py << SUBPIXEL_BITS;
        for px in min_x..=max_x {
            let sx = px << SUBPIXEL_BITS;
            let w0 = orient2d(x1, y1, x2, y2, sx, sy) + bias0;
            let w1 = orient2d(x2, y2, x0, y0, sx, sy) + bias1;
            let w2 = orient2d(x0, y0, x1, y1, sx, sy) + bias2;
            if w0 >= 0 && w1 >= 0 && w2 >= 0 {
                mask.set(px as u32, py as u32, true);
            }
        }
    }
}

/// Minimal axis-aligned rectangle (inclusive) containing all set pixels.
pub fn tight_bbox(mask: &BinaryMask) -> Result<PixelRect> {
    let mut x0 = u32::MAX;
    let mut y0 = u32::MAX;
    let mut x1 = 0u32;
    let mut y1 = 0u32;
    let mut any = false;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                any = true;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    Ok(PixelRect { x0, y0, x1, y1 })
}

/// Crops image and mask to the mask's tight bounding box, zero-pads the
/// shorter side symmetrically to a square, and resizes to 112x112 (bilinear
/// for RGB, nearest for the mask). A crop already at 112x112 passes through
/// bit-exact.
pub fn assemble_patch(image: &RgbImage, mask: &BinaryMask) -> Result<Patch4> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    let bbox = tight_bbox(mask)?;
    let (w, h) = (bbox.width(), bbox.height());
    let side = w.max(h);
    let off_x = (side - w) / 2;
    let off_y = (side - h) / 2;

    // square zero-padded canvases
    let mut canvas_rgb = RgbImage::new(side, side);
    let mut canvas_mask = BinaryMask::new(side, side);
    for y in 0..h {
        for x in 0..w {
            let src = (bbox.x0 + x, bbox.y0 + y);
            canvas_rgb.put_pixel(off_x + x, off_y + y, *image.get_pixel(src.0, src.1));
            canvas_mask.set(off_x + x, off_y + y, mask.get(src.0, src.1));
        }
    }

    let rgb = resize_bilinear(&canvas_rgb, PATCH_SIZE, PATCH_SIZE);
    let mask_out = resize_nearest(&canvas_mask, PATCH_SIZE, PATCH_SIZE);
    Ok(Patch4 { rgb, mask: mask_out, source_bbox: bbox })
}

/// Bilinear resize with pixel centers at (i + 0.5) * scale - 0.5; exact copy
/// when the size is unchanged.
fn resize_bilinear(src: &RgbImage, dst_w: u32, dst_h: u32) -> RgbImage {
    if src.width() == dst_w && src.height() == dst_h {
        return src.clone();
    }
    let mut dst = RgbImage::new(dst_w, dst_h);
    let sx = src.width() as f64 / dst_w as f64;
    let sy = src.height() as f64 / dst_h as f64;
    for y in 0..dst_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, src.height() as f64 - 1.0);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(src.height() - 1);
        let wy = fy - y0 as f64;
        for x in 0..dst_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, src.width() as f64 - 1.0);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(src.width() - 1);
            let wx = fx - x0 as f64;
            let mut out = [0u8; 3];
            for (ch, value) in out.iter_mut().enumerate() {
                let p00 = src.get_pixel(x0, y0)[ch] as f64;
                let p10 = src.get_pixel(x1, y0)[ch] as f64;
                let p01 = src.get_pixel(x0, y1)[ch] as f64;
                let p11 = src.get_pixel(x1, y1)[ch] as f64;
                let top = p00 * (1.0 - wx) + p10 * wx;
                let bot = p01 * (1.0 - wx) + p11 * wx;
                *value = (top * (1.0 - wy) + bot * wy).round().clamp(0.0, 255.0) as u8;
            }
            dst.put_pixel(x, y, Rgb(out));
        }
    }
    dst
}

/// Nearest-neighbor resize for boolean rasters; exact copy when unchanged.
fn resize_nearest(src: &BinaryMask, dst_w: u32, dst_h: u32) -> BinaryMask {
    if src.width() == dst_w && src.height() == dst_h {
        return src.clone();
    }
    let mut dst = BinaryMask::new(dst_w, dst_h);
    let sx = src.width() as f64 / dst_w as f64;
    let sy = src.height() as f64 / dst_h as f64;
    for y in 0..dst_h {
        let fy = (((y as f64 + 0.5) * sy).floor() as u32).min(src.height() - 1);
        for x in 0..dst_w {
            let fx = (((x as f64 + 0.5) * sx).floor() as u32).min(src.width() - 1);
            dst.set(x, y, src.get(fx, fy));
        }
    }
    dst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_box_mesh, Mat3, MeshModel, Vec3};

    fn small_k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 200, 200).unwrap()
    }

    /// Analytic scanline oracle for an axis-aligned rectangle under the
    /// top-left rule: x in [x0, x1), y in [y0, y1) for integer centers.
    fn rect_pixels(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let first_x = x0.ceil() as i64;
        let first_y = y0.ceil() as i64;
        let mut y = first_y;
        while (y as f64) < y1 {
            let mut x = first_x;
            while (x as f64) < x1 {
                out.push((x as u32, y as u32));
                x += 1;
            }
            y += 1;
        }
        out
    }

    #[test]
    fn triangle_fill_matches_rectangle_oracle() {
        // unit square at depth 1 projects to the square [50,150]x[50,150]
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let mesh = MeshModel::new(verts, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let mask = render_mask(&mesh, &pose, &small_k(), MaskMode::TriangleFill).unwrap();

        let expect = rect_pixels(50.0, 50.0, 150.0, 150.0);
        let mut count = 0;
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let inside = expect.contains(&(x, y));
                assert_eq!(mask.get(x, y), inside, "pixel ({x},{y}) mismatch");
                if inside {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 100 * 100);
    }

    #[test]
    fn shared_diagonal_has_no_gaps_or_double_cover() {
        // rasterize the two triangles separately and xor them: their union
        // must equal the rectangle and their intersection must be empty
        let a = Pixel2::new(30.25, 20.75);
        let b = Pixel2::new(90.5, 25.25);
        let c = Pixel2::new(85.75, 80.5);
        let d = Pixel2::new(25.5, 75.25);
        let mut m1 = BinaryMask::new(120, 100);
        let mut m2 = BinaryMask::new(120, 100);
        fill_triangle(&mut m1, &a, &b, &c);
        fill_triangle(&mut m2, &a, &c, &d);
        let mut quad = BinaryMask::new(120, 100);
        fill_triangle(&mut quad, &a, &b, &c);
        fill_triangle(&mut quad, &a, &c, &d);
        for y in 0..100 {
            for x in 0..120 {
                assert!(
                    !(m1.get(x, y) && m2.get(x, y)),
                    "double cover at ({x},{y}) on the shared diagonal"
                );
                assert_eq!(quad.get(x, y), m1.get(x, y) | m2.get(x, y));
            }
        }
    }

    #[test]
    fn vertex_splat_single_point() {
        let verts = vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let mesh = MeshModel::new(verts, vec![]).unwrap();
        let mask = render_mask(&mesh, &Pose::identity(), &small_k(), MaskMode::VertexSplat).unwrap();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let expect = (49..=51).contains(&x) && (49..=51).contains(&y);
                assert_eq!(mask.get(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn behind_camera_render_fails() {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.2, 0.2), 1);
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, -5.0)).unwrap();
        assert!(matches!(
            render_mask(&mesh, &pose, &small_k(), MaskMode::TriangleFill),
            Err(Error::AllVerticesBehindCamera)
        ));
    }

    #[test]
    fn splat_vertices_lie_in_or_near_fill() {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.4, 0.3, 0.35), 2);
        let pose = Pose::from_axis_angle(
            Vec3::new(0.3, 1.0, 0.2),
            0.6,
            Vec3::new(0.05, -0.04, 1.6),
        )
        .unwrap();
        let k = small_k();
        let fill = render_mask(&mesh, &pose, &k, MaskMode::TriangleFill).unwrap();
        for v in mesh.vertices() {
            let pc = pose.transform_point(v);
            if pc.z <= MIN_DEPTH {
                continue;
            }
            let px = (k.fx * pc.x / pc.z + k.cx).round();
            let py = (k.fy * pc.y / pc.z + k.cy).round();
            if px < 0.0 || py < 0.0 || px >= k.image_width as f64 || py >= k.image_height as f64 {
                continue;
            }
            // each projected vertex is within Chebyshev distance 1 of fill
            let near = (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let (nx, ny) = (px as i64 + dx, py as i64 + dy);
                    nx >= 0
                        && ny >= 0
                        && (nx as u32) < fill.width()
                        && (ny as u32) < fill.height()
                        && fill.get(nx as u32, ny as u32)
                })
            });
            assert!(near, "vertex pixel ({px},{py}) not adjacent to filled region");
        }
    }

    #[test]
    fn render_is_deterministic() {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.4, 0.3, 0.35), 2);
        let pose = Pose::from_axis_angle(Vec3::new(1.0, 0.4, -0.3), 0.8, Vec3::new(0.0, 0.02, 1.4))
            .unwrap();
        let a = render_mask(&mesh, &pose, &small_k(), MaskMode::TriangleFill).unwrap();
        let b = render_mask(&mesh, &pose, &small_k(), MaskMode::TriangleFill).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pose_shift_moves_bbox_center() {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.2, 0.2), 2);
        let k = small_k();
        let z = 1.5;
        let p0 = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, z)).unwrap();
        let dx = 0.3;
        let p1 = Pose::new(Mat3::identity(), Vec3::new(dx, 0.0, z)).unwrap();
        let b0 = tight_bbox(&render_mask(&mesh, &p0, &k, MaskMode::TriangleFill).unwrap()).unwrap();
        let b1 = tight_bbox(&render_mask(&mesh, &p1, &k, MaskMode::TriangleFill).unwrap()).unwrap();
        let c0 = (b0.x0 as f64 + b0.x1 as f64) / 2.0;
        let c1 = (b1.x0 as f64 + b1.x1 as f64) / 2.0;
        let expect = k.fx * dx / z;
        assert!(((c1 - c0) - expect).abs() <= 2.0, "shift {} vs {}", c1 - c0, expect);
    }

    #[test]
    fn tight_bbox_cases() {
        let mut m = BinaryMask::new(32, 32);
        assert!(matches!(tight_bbox(&m), Err(Error::EmptyMask)));
        m.set(7, 9, true);
        assert_eq!(tight_bbox(&m).unwrap(), PixelRect { x0: 7, y0: 9, x1: 7, y1: 9 });
        m.set(0, 0, true);
        m.set(10, 20, true);
        assert_eq!(tight_bbox(&m).unwrap(), PixelRect { x0: 0, y0: 0, x1: 10, y1: 20 });

        let mut full = BinaryMask::new(8, 4);
        for y in 0..4 {
            for x in 0..8 {
                full.set(x, y, true);
            }
        }
        assert_eq!(tight_bbox(&full).unwrap(), PixelRect { x0: 0, y0: 0, x1: 7, y1: 3 });
    }

    #[test]
    fn tight_bbox_idempotent() {
        let mut m = BinaryMask::new(64, 64);
        m.set(5, 6, true);
        m.set(20, 33, true);
        m.set(11, 12, true);
        let bbox = tight_bbox(&m).unwrap();
        let mut cropped = BinaryMask::new(bbox.width(), bbox.height());
        for y in 0..bbox.height() {
            for x in 0..bbox.width() {
                cropped.set(x, y, m.get(bbox.x0 + x, bbox.y0 + y));
            }
        }
        let inner = tight_bbox(&cropped).unwrap();
        assert_eq!(
            inner,
            PixelRect { x0: 0, y0: 0, x1: bbox.width() - 1, y1: bbox.height() - 1 }
        );
    }

    #[test]
    fn patch_passthrough_when_already_112() {
        let mut img = RgbImage::new(112, 112);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
        }
        let mut mask = BinaryMask::new(112, 112);
        mask.set(0, 0, true);
        mask.set(111, 111, true);
        mask.set(30, 40, true);
        let patch = assemble_patch(&img, &mask).unwrap();
        assert_eq!(patch.source_bbox, PixelRect { x0: 0, y0: 0, x1: 111, y1: 111 });
        assert_eq!(patch.rgb, img);
        assert_eq!(patch.mask, mask);
    }

    #[test]
    fn patch_downscale_checkerboard() {
        // nearest-neighbor oracle: a 2x downscale of a 2-px checkerboard keeps
        // roughly one quarter of the set pixels
        let mut img = RgbImage::new(224, 224);
        for (_, _, p) in img.enumerate_pixels_mut() {
            *p = Rgb([128, 128, 128]);
        }
        let mut mask = BinaryMask::new(224, 224);
        mask.set(0, 0, true);
        mask.set(223, 223, true);
        let mut original = 2usize;
        for y in 0..224u32 {
            for x in 0..224u32 {
                if (x / 2 + y / 2) % 2 == 0 && !(x == 0 && y == 0) && !(x == 223 && y == 223) {
                    mask.set(x, y, true);
                    original += 1;
                }
            }
        }
        let patch = assemble_patch(&img, &mask).unwrap();
        let got = patch.mask.count_set() as f64;
        let ratio = got / original as f64;
        assert!((0.2..=0.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn patch_rejects_empty_and_mismatched() {
        let img = RgbImage::new(64, 64);
        let empty = BinaryMask::new(64, 64);
        assert!(matches!(assemble_patch(&img, &empty), Err(Error::EmptyMask)));
        let wrong = BinaryMask::new(32, 64);
        assert!(matches!(
            assemble_patch(&img, &wrong),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rgba_alpha_carries_mask() {
        let mut img = RgbImage::new(112, 112);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgb([(x % 13) as u8 * 19, (y % 7) as u8 * 31, 200]);
        }
        let mut mask = BinaryMask::new(112, 112);
        mask.set(0, 0, true);
        mask.set(111, 111, true);
        mask.set(64, 9, true);
        let patch = assemble_patch(&img, &mask).unwrap();
        let rgba = patch.to_rgba();
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                let a = rgba.get_pixel(x, y)[3];
                assert!(a == 0 || a == 255);
                assert_eq!(a == 255, patch.mask.get(x, y));
            }
        }
        // PNG round-trip preserves the 4 channels exactly
        let tmp = tempfile::Builder::new().suffix(".png").tempfile().unwrap();
        patch.write_png(tmp.path()).unwrap();
        let loaded = image::open(tmp.path()).unwrap().to_rgba8();
        assert_eq!(loaded, rgba);
    }

    #[test]
    fn pgm_layout() {
        let mut m = BinaryMask::new(3, 2);
        m.set(1, 0, true);
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        assert_eq!(&buf[..11], b"P5\n3 2\n255\n");
        assert_eq!(&buf[11..], &[0, 255, 0, 0, 0, 0]);
    }
}
