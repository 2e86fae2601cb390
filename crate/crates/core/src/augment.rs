//! Geometric augmentation applied jointly to images and poses, plus HSV
//! color jitter (which leaves poses untouched).
//!
//! The image-plane map is
//!
//! ```text
//! p' = c + s · F · Rot(θ) · F⁻¹ · (p − c) + (shift_x · W, shift_y · H)
//! ```
//!
//! with `c` the principal point and `F = diag(fx, fy)`. Conjugating by `F`
//! makes the in-plane rotation exactly the image of a camera-frame
//! `Rz(θ)` pre-rotation; with square pixels it is a plain rotation about `c`.
//! Poses follow the same map: `R' = Rz(θ)·R`, the projected center moves by
//! the affine map and depth becomes `tz / s`, so
//! `project(t') == affine(project(t))` holds by construction.

use image::{GrayImage, ImageBuffer, Luma, Pixel, RgbImage};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bop_io::{BopGtInfoEntry, BopScene, BopSceneGtEntry, DepthImage, SceneImages};
use crate::geometry::{project, recover_translation, rot_z, CameraIntrinsics, GeometryError, Pose};
use crate::scenegen::mask_bbox;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("image is {got:?} but the camera expects {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("image {0} has no loaded RGB/depth/mask data")]
    MissingImages(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One concrete geometric augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    /// In-plane rotation, degrees.
    pub angle_deg: f64,
    /// Translation as a fraction of image width / height.
    pub shift: [f64; 2],
    pub scale: f64,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        Self { angle_deg: 0.0, shift: [0.0, 0.0], scale: 1.0 }
    }
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self::identity()
    }
}

/// Sampling ranges. Angle and shift give magnitudes; their signs are drawn
/// uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentRanges {
    pub angle_deg: (f64, f64),
    pub shift: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self { angle_deg: (0.0, 10.0), shift: (0.0, 0.10), scale: (0.9, 1.1) }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<(), AugmentError> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(AugmentError::InvalidRange(format!("{name}: ({lo}, {hi})")));
    }
    Ok(())
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn signed<R: Rng>(rng: &mut R, range: (f64, f64)) -> f64 {
    let magnitude = uniform(rng, range);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

impl AugmentRanges {
    pub fn validate(&self) -> Result<(), AugmentError> {
        check_range("angle_deg", self.angle_deg)?;
        check_range("shift", self.shift)?;
        check_range("scale", self.scale)?;
        if self.angle_deg.0 < 0.0 || self.shift.0 < 0.0 {
            return Err(AugmentError::InvalidRange("angle and shift ranges are magnitudes and must be non-negative".into()));
        }
        if self.scale.0 <= 0.0 {
            return Err(AugmentError::InvalidRange(format!("scale must be positive, got {:?}", self.scale)));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<AugmentationParams, AugmentError> {
        self.validate()?;
        let angle_deg = signed(rng, self.angle_deg);
        let shift = [signed(rng, self.shift), signed(rng, self.shift)];
        let scale = uniform(rng, self.scale);
        Ok(AugmentationParams { angle_deg, shift, scale })
    }
}

pub fn sample_params(seed: u64, ranges: &AugmentRanges) -> Result<AugmentationParams, AugmentError> {
    ranges.sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// The image-plane affine map `p ↦ c + A·(p − c) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageAffine {
    pub linear: Matrix2<f64>,
    pub center: Vector2<f64>,
    pub offset: Vector2<f64>,
}

impl ImageAffine {
    pub fn new(params: &AugmentationParams, k: &CameraIntrinsics) -> Self {
        let (s, c) = params.angle_deg.to_radians().sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        let f = Matrix2::new(k.fx, 0.0, 0.0, k.fy);
        let f_inv = Matrix2::new(1.0 / k.fx, 0.0, 0.0, 1.0 / k.fy);
        Self {
            linear: params.scale * f * rot * f_inv,
            center: k.principal_point(),
            offset: Vector2::new(params.shift[0] * k.width as f64, params.shift[1] * k.height as f64),
        }
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.center + self.linear * (p - self.center) + self.offset
    }

    /// Source position for an output pixel.
    fn source_of(&self, inverse: &Matrix2<f64>, q: &Vector2<f64>) -> Vector2<f64> {
        self.center + inverse * (q - self.center - self.offset)
    }

    fn inverse_linear(&self) -> Matrix2<f64> {
        self.linear.try_inverse().expect("scale is positive, so the map is invertible")
    }
}

pub fn apply_to_pose(pose: &Pose, params: &AugmentationParams, k: &CameraIntrinsics) -> Result<Pose, AugmentError> {
    let affine = ImageAffine::new(params, k);
    let center = affine.apply(&project(&pose.translation, k)?);
    let tz = pose.translation.z / params.scale;
    let translation = recover_translation(&center, tz, k)?;
    Ok(Pose { rotation: rot_z(params.angle_deg.to_radians()) * pose.rotation, translation })
}

fn check_dims(w: u32, h: u32, k: &CameraIntrinsics) -> Result<(), AugmentError> {
    if (w, h) != (k.width, k.height) {
        return Err(AugmentError::DimensionMismatch { expected: (k.width, k.height), got: (w, h) });
    }
    Ok(())
}

/// Inside the source image, treating each pixel as the unit square around
/// its integer center.
fn inside(p: &Vector2<f64>, w: u32, h: u32) -> bool {
    p.x >= -0.5 && p.y >= -0.5 && p.x < w as f64 - 0.5 && p.y < h as f64 - 0.5
}

/// Bilinear warp of an 8-bit RGB image; exposed areas become black.
pub fn apply_to_image(image: &RgbImage, params: &AugmentationParams, k: &CameraIntrinsics) -> Result<RgbImage, AugmentError> {
    let (w, h) = image.dimensions();
    check_dims(w, h, k)?;
    let affine = ImageAffine::new(params, k);
    let inv = affine.inverse_linear();
    let src = image.as_raw();
    let mut out = vec![0u8; src.len()];
    let at = |x: i64, y: i64, ch: usize| -> f64 {
        let x = x.clamp(0, w as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        src[(y * w as usize + x) * 3 + ch] as f64
    };
    crate::par::for_each_row(&mut out, w as usize * 3, |y, row| {
        for x in 0..w as usize {
            let p = affine.source_of(&inv, &Vector2::new(x as f64, y as f64));
            if !inside(&p, w, h) {
                continue;
            }
            let (x0, y0) = (p.x.floor(), p.y.floor());
            let (ax, ay) = (p.x - x0, p.y - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for ch in 0..3 {
                let top = at(x0, y0, ch) * (1.0 - ax) + at(x0 + 1, y0, ch) * ax;
                let bottom = at(x0, y0 + 1, ch) * (1.0 - ax) + at(x0 + 1, y0 + 1, ch) * ax;
                row[x * 3 + ch] = (top * (1.0 - ay) + bottom * ay).round().clamp(0.0, 255.0) as u8;
            }
        }
    });
    Ok(RgbImage::from_raw(w, h, out).expect("buffer sized from source"))
}

/// Nearest-neighbour warp with a per-value transform; exposed areas get
/// `P::Subpixel::default()` (zero).
fn warp_nearest<P, F>(
    image: &ImageBuffer<P, Vec<P::Subpixel>>,
    params: &AugmentationParams,
    k: &CameraIntrinsics,
    map_value: F,
) -> Result<ImageBuffer<P, Vec<P::Subpixel>>, AugmentError>
where
    P: Pixel,
    P::Subpixel: Default + Send + Sync,
    F: Fn(P::Subpixel) -> P::Subpixel + Sync + Send,
{
    let (w, h) = image.dimensions();
    check_dims(w, h, k)?;
    let affine = ImageAffine::new(params, k);
    let inv = affine.inverse_linear();
    let n = P::CHANNEL_COUNT as usize;
    let src = image.as_raw();
    let mut out = vec![P::Subpixel::default(); src.len()];
    crate::par::for_each_row(&mut out, w as usize * n, |y, row| {
        for x in 0..w as usize {
            let p = affine.source_of(&inv, &Vector2::new(x as f64, y as f64));
            if !inside(&p, w, h) {
                continue;
            }
            let sx = (p.x.round() as i64).clamp(0, w as i64 - 1) as usize;
            let sy = (p.y.round() as i64).clamp(0, h as i64 - 1) as usize;
            let s = (sy * w as usize + sx) * n;
            for ch in 0..n {
                row[x * n + ch] = map_value(src[s + ch]);
            }
        }
    });
    Ok(ImageBuffer::from_raw(w, h, out).expect("buffer sized from source"))
}

/// Nearest-neighbour warp of a binary / label mask.
pub fn apply_to_mask(mask: &GrayImage, params: &AugmentationParams, k: &CameraIntrinsics) -> Result<GrayImage, AugmentError> {
    warp_nearest::<Luma<u8>, _>(mask, params, k, |v| v)
}

/// Nearest-neighbour warp of a depth image; depths are divided by the scale
/// factor, consistent with `tz' = tz / scale`.
pub fn apply_to_depth(depth: &DepthImage, params: &AugmentationParams, k: &CameraIntrinsics) -> Result<DepthImage, AugmentError> {
    let s = params.scale;
    warp_nearest::<Luma<u16>, _>(depth, params, k, move |v| {
        if v == 0 {
            0
        } else {
            (v as f64 / s).round().clamp(1.0, u16::MAX as f64) as u16
        }
    })
}

/// HSV jitter: hue rotation in degrees, saturation and value factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorJitterParams {
    pub hue_deg: f64,
    pub saturation: f64,
    pub value: f64,
}

impl ColorJitterParams {
    pub fn identity() -> Self {
        Self { hue_deg: 0.0, saturation: 1.0, value: 1.0 }
    }
}

impl Default for ColorJitterParams {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorJitterRanges {
    /// Hue shift magnitude, degrees; sign drawn uniformly.
    pub hue_deg: (f64, f64),
    pub saturation: (f64, f64),
    pub value: (f64, f64),
}

impl Default for ColorJitterRanges {
    fn default() -> Self {
        Self { hue_deg: (0.0, 10.0), saturation: (0.7, 1.3), value: (0.7, 1.3) }
    }
}

impl ColorJitterRanges {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<ColorJitterParams, AugmentError> {
        check_range("hue_deg", self.hue_deg)?;
        check_range("saturation", self.saturation)?;
        check_range("value", self.value)?;
        if self.saturation.0 < 0.0 || self.value.0 < 0.0 || self.hue_deg.0 < 0.0 {
            return Err(AugmentError::InvalidRange("color jitter ranges must be non-negative".into()));
        }
        Ok(ColorJitterParams {
            hue_deg: signed(rng, self.hue_deg),
            saturation: uniform(rng, self.saturation),
            value: uniform(rng, self.value),
        })
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Per-pixel HSV transform; saturation and value are clamped to `[0, 1]`.
pub fn apply_color_jitter(image: &RgbImage, params: &ColorJitterParams) -> RgbImage {
    let (w, h) = image.dimensions();
    let src = image.as_raw();
    let mut out = vec![0u8; src.len()];
    let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    crate::par::for_each_row(&mut out, w as usize * 3, |y, row| {
        let line = &src[y * w as usize * 3..(y + 1) * w as usize * 3];
        for (px, dst) in line.chunks_exact(3).zip(row.chunks_exact_mut(3)) {
            let (hh, s, v) = rgb_to_hsv(px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0);
            let (r, g, b) =
                hsv_to_rgb(hh + params.hue_deg, (s * params.saturation).clamp(0.0, 1.0), (v * params.value).clamp(0.0, 1.0));
            dst[0] = to_u8(r);
            dst[1] = to_u8(g);
            dst[2] = to_u8(b);
        }
    });
    RgbImage::from_raw(w, h, out).expect("buffer sized from source")
}

/// Geometric and color ranges for augmenting whole scenes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneAugmentConfig {
    pub geometric: AugmentRanges,
    pub color: ColorJitterRanges,
}

impl SceneAugmentConfig {
    /// Parses `[geometric]` / `[color]` tables; missing keys keep defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, AugmentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| AugmentError::InvalidRange(e.to_string()))?;
        cfg.geometric.validate()?;
        cfg.color.sample(&mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(cfg)
    }
}

/// Random stream for one image of one scene.
pub fn image_rng(seed: u64, scene_id: u32, im_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scene_id as u64) << 32) | im_id as u64);
    rng
}

/// Augments every image of a loaded scene: RGB (affine + color jitter),
/// depth, both mask sets and the poses, then recomputes `scene_gt_info`.
/// The camera matrix is unchanged because the map is centered on the
/// principal point. Each image draws from its own stream, so the result is
/// independent of processing order.
pub fn augment_scene(scene: &BopScene, scene_id: u32, seed: u64, cfg: &SceneAugmentConfig) -> Result<BopScene, AugmentError> {
    let ids: Vec<u32> = scene.gt.keys().copied().collect();
    let per_image = crate::par::map(&ids, |&im| -> Result<_, AugmentError> {
        let images = scene.images.get(&im).ok_or(AugmentError::MissingImages(im))?;
        let cam = &scene.camera[&im];
        let (w, h) = images.rgb.dimensions();
        let k = cam.intrinsics(w, h);
        k.validate()?;
        let mut rng = image_rng(seed, scene_id, im);
        let params = cfg.geometric.sample(&mut rng)?;
        let color = cfg.color.sample(&mut rng)?;

        let rgb = apply_color_jitter(&apply_to_image(&images.rgb, &params, &k)?, &color);
        let depth = apply_to_depth(&images.depth, &params, &k)?;
        let masks = images.masks.iter().map(|m| apply_to_mask(m, &params, &k)).collect::<Result<Vec<_>, _>>()?;
        let masks_visib = images.masks_visib.iter().map(|m| apply_to_mask(m, &params, &k)).collect::<Result<Vec<_>, _>>()?;
        let gt = scene.gt[&im]
            .iter()
            .map(|e| Ok(BopSceneGtEntry::from_pose(e.obj_id, &apply_to_pose(&e.pose(), &params, &k)?)))
            .collect::<Result<Vec<_>, AugmentError>>()?;
        let gt_info = masks.iter().zip(&masks_visib).map(|(m, v)| mask_info(m, v, &depth)).collect();
        Ok((im, gt, gt_info, SceneImages { rgb, depth, masks, masks_visib }))
    });
    let mut out = BopScene { camera: scene.camera.clone(), ..Default::default() };
    for r in per_image {
        let (im, gt, info, images) = r?;
        out.gt.insert(im, gt);
        if !scene.gt_info.is_empty() {
            out.gt_info.insert(im, info);
        }
        out.images.insert(im, images);
    }
    Ok(out)
}

fn mask_info(mask: &GrayImage, visib: &GrayImage, depth: &DepthImage) -> BopGtInfoEntry {
    let all = mask.pixels().filter(|p| p.0[0] != 0).count();
    let vis = visib.pixels().filter(|p| p.0[0] != 0).count();
    let valid = mask.enumerate_pixels().filter(|(x, y, p)| p.0[0] != 0 && depth.get_pixel(*x, *y).0[0] != 0).count();
    BopGtInfoEntry {
        bbox_obj: mask_bbox(mask),
        bbox_visib: mask_bbox(visib),
        px_count_all: all as u64,
        px_count_valid: valid as u64,
        px_count_visib: vis as u64,
        visib_fract: if all == 0 { 0.0 } else { (vis as f64 / all as f64).min(1.0) },
    }
}
