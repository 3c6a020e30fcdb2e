//! Synthetic lunar terrain, downward camera rendering and patch tiling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Desk-scale camera image side in pixels.
pub const IMAGE_SIDE: usize = 64;
/// Default patch side; gives 64 patches per image.
pub const PATCH_SIDE: usize = 8;
pub const GRID_COLS: usize = 30;
pub const GRID_ROWS: usize = 10;

/// One landing region of the logical cell grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// Partition of the surface rectangle into equal landing cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGrid {
    pub cols: usize,
    pub rows: usize,
    pub width_m: f64,
    pub height_m: f64,
}

impl CellGrid {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self) -> f64 {
        self.width_m / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.height_m / self.rows as f64
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index % self.cols, index / self.cols)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col < self.cols && cell.row < self.rows
    }

    /// Cell containing a ground point; points on the far edges belong to the
    /// last row/column. `None` outside the surface.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        if !(0.0..=self.width_m).contains(&x) || !(0.0..=self.height_m).contains(&y) {
            return None;
        }
        let col = ((x / self.cell_width()) as usize).min(self.cols - 1);
        let row = ((y / self.cell_height()) as usize).min(self.rows - 1);
        Some(Cell::new(col, row))
    }

    pub fn center(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.col as f64 + 0.5) * self.cell_width(),
            (cell.row as f64 + 0.5) * self.cell_height(),
        )
    }
}

/// Grayscale albedo raster of the landing area.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMap {
    pub width_m: f64,
    pub height_m: f64,
    /// Ground size of one albedo sample, meters.
    pub resolution_m: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `ny` rows of `nx` samples, values in [0, 1].
    pub albedo: Vec<f64>,
    pub cells: CellGrid,
    pub target_cell: Cell,
}

/// Terrain synthesis knobs.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceParams {
    pub resolution_m: f64,
    /// Lattice spacing of the coarsest noise octave, meters.
    pub noise_wavelength_m: f64,
    pub noise_octaves: usize,
    pub base_albedo: f64,
    pub noise_contrast: f64,
    pub crater_radius_m: (f64, f64),
    pub crater_depth: (f64, f64),
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            resolution_m: 5.0,
            noise_wavelength_m: 320.0,
            noise_octaves: 3,
            base_albedo: 0.5,
            noise_contrast: 0.22,
            crater_radius_m: (12.0, 90.0),
            crater_depth: (0.12, 0.35),
        }
    }
}

/// Generates a surface with default terrain parameters.
pub fn generate_surface(seed: u64, crater_count: usize, size_m: (f64, f64)) -> Result<SurfaceMap> {
    SurfaceParams::default().generate(seed, crater_count, size_m)
}

impl SurfaceParams {
    pub fn generate(&self, seed: u64, crater_count: usize, size_m: (f64, f64)) -> Result<SurfaceMap> {
        let (width_m, height_m) = size_m;
        if !(width_m > 0.0 && height_m > 0.0) {
            return Err(Error::invalid(format!(
                "surface dimensions must be positive, got {width_m} x {height_m}"
            )));
        }
        if !(self.resolution_m > 0.0) || !(self.noise_wavelength_m > 0.0) {
            return Err(Error::invalid("resolution and noise wavelength must be positive"));
        }
        let nx = ((width_m / self.resolution_m).ceil() as usize).max(1);
        let ny = ((height_m / self.resolution_m).ceil() as usize).max(1);
        let mut rng = rng::seeded(seed);

        let mut albedo = vec![self.base_albedo; nx * ny];
        let mut amp = 1.0;
        let mut norm = 0.0;
        let mut wavelength = self.noise_wavelength_m;
        let mut octaves = Vec::with_capacity(self.noise_octaves);
        for _ in 0..self.noise_octaves {
            octaves.push((ValueNoise::new(&mut rng, width_m, height_m, wavelength), amp));
            norm += amp;
            amp *= 0.5;
            wavelength *= 0.5;
        }
        if norm > 0.0 {
            for iy in 0..ny {
                let y = (iy as f64 + 0.5) * self.resolution_m;
                for ix in 0..nx {
                    let x = (ix as f64 + 0.5) * self.resolution_m;
                    let n: f64 = octaves.iter().map(|(o, a)| a * o.sample(x, y)).sum();
                    albedo[iy * nx + ix] += self.noise_contrast * n / norm;
                }
            }
        }

        let (rmin, rmax) = self.crater_radius_m;
        let (dmin, dmax) = self.crater_depth;
        for _ in 0..crater_count {
            let cx = rng.random::<f64>() * width_m;
            let cy = rng.random::<f64>() * height_m;
            let radius = (rmin.ln() + rng.random::<f64>() * (rmax.ln() - rmin.ln())).exp();
            let depth = dmin + rng.random::<f64>() * (dmax - dmin);
            stamp_crater(&mut albedo, nx, ny, self.resolution_m, cx, cy, radius, depth);
        }
        for a in &mut albedo {
            *a = a.clamp(0.0, 1.0);
        }

        let cells = CellGrid {
            cols: GRID_COLS,
            rows: GRID_ROWS,
            width_m,
            height_m,
        };
        let target_cell = Cell::new(rng.random_range(0..GRID_COLS), rng.random_range(0..GRID_ROWS));
        Ok(SurfaceMap {
            width_m,
            height_m,
            resolution_m: self.resolution_m,
            nx,
            ny,
            albedo,
            cells,
            target_cell,
        })
    }
}

/// Dark cosine bowl with a brighter raised rim.
#[allow(clippy::too_many_arguments)]
fn stamp_crater(
    albedo: &mut [f64],
    nx: usize,
    ny: usize,
    res: f64,
    cx: f64,
    cy: f64,
    radius: f64,
    depth: f64,
) {
    let outer = 1.35 * radius;
    let x0 = (((cx - outer) / res).floor().max(0.0)) as usize;
    let x1 = (((cx + outer) / res).ceil() as usize).min(nx);
    let y0 = (((cy - outer) / res).floor().max(0.0)) as usize;
    let y1 = (((cy + outer) / res).ceil() as usize).min(ny);
    let pi = std::f64::consts::PI;
    for iy in y0..y1 {
        let y = (iy as f64 + 0.5) * res;
        for ix in x0..x1 {
            let x = (ix as f64 + 0.5) * res;
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            let delta = if r < radius {
                -depth * 0.5 * (1.0 + (pi * r / radius).cos())
            } else if r < outer {
                let t = (r - radius) / (outer - radius);
                0.45 * depth * (pi * t).sin()
            } else {
                0.0
            };
            albedo[iy * nx + ix] += delta;
        }
    }
}

/// Smoothstep-interpolated lattice noise in [-1, 1].
struct ValueNoise {
    spacing: f64,
    lx: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut SimRng, width: f64, height: f64, spacing: f64) -> Self {
        let lx = (width / spacing).ceil() as usize + 2;
        let ly = (height / spacing).ceil() as usize + 2;
        let lattice = (0..lx * ly).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Self { spacing, lx, lattice }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = x / self.spacing;
        let fy = y / self.spacing;
        let ix = fx.floor() as usize;
        let iy = fy.floor() as usize;
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let tx = smooth(fx - ix as f64);
        let ty = smooth(fy - iy as f64);
        let v = |i: usize, j: usize| self.lattice[j * self.lx + i];
        let a = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let b = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        a * (1.0 - ty) + b * ty
    }
}

impl SurfaceMap {
    /// Bilinear albedo lookup with edge clamping.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x / self.resolution_m - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = (y / self.resolution_m - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let ix = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let iy = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let tx = if self.nx > 1 { fx - ix as f64 } else { 0.0 };
        let ty = if self.ny > 1 { fy - iy as f64 } else { 0.0 };
        let ix1 = (ix + 1).min(self.nx - 1);
        let iy1 = (iy + 1).min(self.ny - 1);
        let v = |i: usize, j: usize| self.albedo[j * self.nx + i];
        let a = v(ix, iy) * (1.0 - tx) + v(ix1, iy) * tx;
        let b = v(ix, iy1) * (1.0 - tx) + v(ix1, iy1) * tx;
        a * (1.0 - ty) + b * ty
    }

    /// Albedo raster as an image (one pixel per sample).
    pub fn albedo_image(&self) -> CameraImage {
        CameraImage {
            width: self.nx,
            height: self.ny,
            pixels: self.albedo.clone(),
            origin_cell: None,
        }
    }
}

/// Grayscale image with pixel values in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    /// Surface cell under the image center, when rendered from a surface.
    pub origin_cell: Option<Cell>,
}

impl CameraImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} values, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            origin_cell: None,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            origin_cell: None,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Pinhole camera looking straight down.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    /// tan(half field of view).
    pub half_fov_tan: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self { half_fov_tan: 0.5 }
    }
}

impl Camera {
    /// Ground width covered at a given altitude.
    pub fn footprint_at(&self, altitude_m: f64) -> f64 {
        2.0 * altitude_m * self.half_fov_tan
    }
}

/// Renders the `IMAGE_SIDE` square window of width `footprint_m` centered
/// below `position`.
pub fn render_observation(surface: &SurfaceMap, position: [f64; 3], footprint_m: f64) -> Result<CameraImage> {
    render_with_side(surface, position, footprint_m, IMAGE_SIDE)
}

pub fn render_with_side(
    surface: &SurfaceMap,
    position: [f64; 3],
    footprint_m: f64,
    side: usize,
) -> Result<CameraImage> {
    let [cx, cy, alt] = position;
    if !(alt > 0.0) {
        return Err(Error::invalid(format!("altitude must be positive, got {alt}")));
    }
    if !(footprint_m > 0.0) || side == 0 {
        return Err(Error::invalid("footprint and image side must be positive"));
    }
    let half = footprint_m / 2.0;
    if cx + half <= 0.0 || cx - half >= surface.width_m || cy + half <= 0.0 || cy - half >= surface.height_m {
        return Err(Error::OutOfBounds(format!(
            "footprint of {footprint_m} m centered at ({cx}, {cy}) misses the surface"
        )));
    }
    let step = footprint_m / side as f64;
    // Box-filter when a pixel spans several albedo samples.
    let sub = ((step / surface.resolution_m).ceil() as usize).clamp(1, 4);
    let mut pixels = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let mut acc = 0.0;
            for si in 0..sub {
                for sj in 0..sub {
                    let y = cy - half + (i as f64 + (si as f64 + 0.5) / sub as f64) * step;
                    let x = cx - half + (j as f64 + (sj as f64 + 0.5) / sub as f64) * step;
                    acc += surface.sample(x, y);
                }
            }
            pixels.push((acc / (sub * sub) as f64).clamp(0.0, 1.0));
        }
    }
    Ok(CameraImage {
        width: side,
        height: side,
        pixels,
        origin_cell: surface.cells.cell_at(cx.clamp(0.0, surface.width_m), cy.clamp(0.0, surface.height_m)),
    })
}

/// Image cut into `b`-by-`b` patches, row-major over the patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub b: usize,
    pub cols: usize,
    pub rows: usize,
    pub patches: Vec<Vec<f64>>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

pub fn split_patches(image: &CameraImage, b: usize) -> Result<PatchGrid> {
    if b == 0 || image.width % b != 0 || image.height % b != 0 {
        return Err(Error::invalid(format!(
            "patch side {b} does not divide {}x{} image",
            image.width, image.height
        )));
    }
    let cols = image.width / b;
    let rows = image.height / b;
    let mut patches = Vec::with_capacity(cols * rows);
    for pr in 0..rows {
        for pc in 0..cols {
            let mut p = Vec::with_capacity(b * b);
            for r in 0..b {
                let start = (pr * b + r) * image.width + pc * b;
                p.extend_from_slice(&image.pixels[start..start + b]);
            }
            patches.push(p);
        }
    }
    Ok(PatchGrid { b, cols, rows, patches })
}

pub fn merge_patches(grid: &PatchGrid) -> Result<CameraImage> {
    let b = grid.b;
    if grid.patches.len() != grid.cols * grid.rows || grid.patches.iter().any(|p| p.len() != b * b) {
        return Err(Error::invalid("patch grid shape is inconsistent"));
    }
    let width = grid.cols * b;
    let height = grid.rows * b;
    let mut pixels = vec![0.0; width * height];
    for (k, p) in grid.patches.iter().enumerate() {
        let (pr, pc) = (k / grid.cols, k % grid.cols);
        for r in 0..b {
            let start = (pr * b + r) * width + pc * b;
            pixels[start..start + b].copy_from_slice(&p[r * b..(r + 1) * b]);
        }
    }
    Ok(CameraImage {
        width,
        height,
        pixels,
        origin_cell: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_surface(seed: u64, craters: usize) -> SurfaceMap {
        generate_surface(seed, craters, (6000.0, 2000.0)).unwrap()
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(generate_surface(1, 0, (0.0, 10.0)), Err(Error::InvalidArgument(_))));
        assert!(matches!(generate_surface(1, 0, (10.0, -1.0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = small_surface(7, 12);
        let b = small_surface(7, 12);
        assert_eq!(a.albedo, b.albedo);
        let c = small_surface(8, 12);
        let differing = a.albedo.iter().zip(&c.albedo).filter(|(x, y)| x != y).count();
        assert!(differing as f64 >= 0.01 * a.albedo.len() as f64);
    }

    #[test]
    fn craters_change_the_noise_field() {
        let plain = small_surface(1, 0);
        let cratered = small_surface(1, 40);
        assert!(plain.albedo.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(plain.albedo, cratered.albedo);
    }

    #[test]
    fn cell_grid_tiles_surface() {
        let s = small_surface(3, 0);
        assert_eq!(s.cells.len(), 300);
        assert!(s.cells.contains(s.target_cell));
        assert_eq!(s.cells.cell_at(0.0, 0.0), Some(Cell::new(0, 0)));
        assert_eq!(s.cells.cell_at(6000.0, 2000.0), Some(Cell::new(29, 9)));
        assert_eq!(s.cells.cell_at(6000.1, 10.0), None);
        for i in 0..s.cells.len() {
            assert_eq!(s.cells.index(s.cells.cell(i)), i);
        }
    }

    #[test]
    fn render_above_cell_center_reports_that_cell() {
        let s = small_surface(5, 30);
        let (x, y) = s.cells.center(s.target_cell);
        let img = render_observation(&s, [x, y, 500.0], 200.0).unwrap();
        assert_eq!(img.origin_cell, Some(s.target_cell));
        assert_eq!(img.pixels.len(), IMAGE_SIDE * IMAGE_SIDE);
        let again = render_observation(&s, [x, y, 500.0], 200.0).unwrap();
        assert_eq!(img, again);
    }

    #[test]
    fn moving_one_cell_shifts_origin_by_one() {
        let s = small_surface(5, 0);
        let (x, y) = s.cells.center(Cell::new(4, 3));
        let a = render_observation(&s, [x, y, 100.0], 200.0).unwrap();
        let b = render_observation(&s, [x + s.cells.cell_width(), y, 100.0], 200.0).unwrap();
        let c = render_observation(&s, [x, y + s.cells.cell_height(), 100.0], 200.0).unwrap();
        assert_eq!(a.origin_cell, Some(Cell::new(4, 3)));
        assert_eq!(b.origin_cell, Some(Cell::new(5, 3)));
        assert_eq!(c.origin_cell, Some(Cell::new(4, 4)));
    }

    #[test]
    fn render_errors() {
        let s = small_surface(5, 0);
        assert!(matches!(
            render_observation(&s, [100.0, 100.0, 0.0], 100.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            render_observation(&s, [-500.0, 100.0, 10.0], 100.0),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn split_merge_identity_and_counts() {
        let s = small_surface(2, 10);
        let img = render_observation(&s, [1000.0, 700.0, 300.0], 250.0).unwrap();
        let grid = split_patches(&img, 8).unwrap();
        assert_eq!(grid.len(), 64);
        assert!(grid.patches.iter().all(|p| p.len() == 64));
        let back = merge_patches(&grid).unwrap();
        assert_eq!(back.pixels, img.pixels);
        assert!(matches!(split_patches(&img, 7), Err(Error::InvalidArgument(_))));
    }
}
