//! Images handed to the pipeline: 8-bit RGB rasters or virtual scenes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    apply_transform, normalize_degrees, sin_cos_degrees, GeometryError, Point, Quad,
    RotationTransform,
};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("crop region lies entirely outside the {width}×{height} canvas")]
    EmptyCrop { width: u32, height: u32 },
    #[error("operation requires a raster image, got a virtual scene")]
    NotRaster,
    #[error("cannot read image {path}: {source}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Write {
        path: String,
        source: image::ImageError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Row-major RGB8 pixel buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidInput(format!(
                "raster dimensions must be positive, got {width}×{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImagingError::InvalidInput(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// All-black image.
    pub fn black(width: u32, height: u32) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![0; width as usize * height as usize * 3])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        f: impl Fn(u32, u32) -> [u8; 3],
    ) -> Result<Self, ImagingError> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Bilinear sample at continuous pixel-index coordinates (pixel centres
    /// at integers). Points within half a pixel of the border clamp to the
    /// edge; anything further out is black.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [u8; 3] {
        let (w, h) = (self.width as f64, self.height as f64);
        if x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5 {
            return [0; 3];
        }
        let x = x.clamp(0.0, w - 1.0);
        let y = y.clamp(0.0, h - 1.0);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as u32, y0 as u32);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (p00, p10, p01, p11) = (
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
        );
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

/// One ground-truth text instance of a virtual scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextInstance {
    pub text: String,
    pub center: Point,
    /// Degrees CCW from horizontal, in `[0, 360)`.
    pub orientation: f64,
    pub box_w: f64,
    pub box_h: f64,
}

impl TextInstance {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.text.is_empty() {
            return Err(ImagingError::InvalidInput("text instance has empty text".into()));
        }
        if !(self.box_w > 0.0 && self.box_h > 0.0) || !self.box_w.is_finite() || !self.box_h.is_finite() {
            return Err(ImagingError::InvalidInput(format!(
                "text instance {:?} has non-positive box {}×{}",
                self.text, self.box_w, self.box_h
            )));
        }
        if !(0.0..360.0).contains(&self.orientation) {
            return Err(ImagingError::InvalidInput(format!(
                "orientation {} outside [0, 360)",
                self.orientation
            )));
        }
        if !self.center.is_finite() {
            return Err(ImagingError::InvalidInput("non-finite instance center".into()));
        }
        Ok(())
    }

    /// The instance's oriented rectangle in scene coordinates.
    pub fn quad(&self) -> Result<Quad, GeometryError> {
        Quad::oriented_rect(self.center, self.box_w, self.box_h, self.orientation)
    }
}

/// Metadata-only image: a canvas and the text instances on it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescriptor {
    pub width: u32,
    pub height: u32,
    pub instances: Vec<TextInstance>,
}

impl SceneDescriptor {
    pub fn new(width: u32, height: u32, instances: Vec<TextInstance>) -> Result<Self, ImagingError> {
        let scene = Self {
            width,
            height,
            instances,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.width == 0 || self.height == 0 {
            return Err(ImagingError::InvalidInput("scene canvas must be non-empty".into()));
        }
        for inst in &self.instances {
            inst.validate()?;
            let c = inst.center;
            if c.x < 0.0 || c.y < 0.0 || c.x > self.width as f64 || c.y > self.height as f64 {
                return Err(ImagingError::InvalidInput(format!(
                    "instance {:?} center ({}, {}) outside {}×{} canvas",
                    inst.text, c.x, c.y, self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageContent {
    Raster(RasterImage),
    Virtual(SceneDescriptor),
}

/// An image plus the identifier it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRef {
    pub id: String,
    pub content: ImageContent,
}

impl ImageRef {
    pub fn raster(id: impl Into<String>, img: RasterImage) -> Self {
        Self {
            id: id.into(),
            content: ImageContent::Raster(img),
        }
    }

    pub fn scene(id: impl Into<String>, scene: SceneDescriptor) -> Self {
        Self {
            id: id.into(),
            content: ImageContent::Virtual(scene),
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        match &self.content {
            ImageContent::Raster(r) => (r.width, r.height),
            ImageContent::Virtual(s) => (s.width, s.height),
        }
    }

    pub fn as_raster(&self) -> Option<&RasterImage> {
        match &self.content {
            ImageContent::Raster(r) => Some(r),
            ImageContent::Virtual(_) => None,
        }
    }

    pub fn as_scene(&self) -> Option<&SceneDescriptor> {
        match &self.content {
            ImageContent::Virtual(s) => Some(s),
            ImageContent::Raster(_) => None,
        }
    }
}

/// Canvas size that holds a `width × height` image rotated by `angle`.
pub fn rotated_canvas(width: u32, height: u32, angle: f64) -> (u32, u32) {
    let (s, c) = sin_cos_degrees(angle);
    let (s, c) = (s.abs(), c.abs());
    let (w, h) = (width as f64, height as f64);
    // slack absorbs rounding in the trig products
    let dim = |v: f64| ((v - 1e-9).ceil() as u32).max(1);
    (dim(w * c + h * s), dim(w * s + h * c))
}

/// The transform used by [`rotate_image`]: rotation about the source centre,
/// then a shift that centres the result on the expanded canvas.
pub fn rotation_for(width: u32, height: u32, angle: f64) -> Result<RotationTransform, ImagingError> {
    if !angle.is_finite() {
        return Err(ImagingError::InvalidInput(format!("non-finite angle {angle}")));
    }
    let (nw, nh) = rotated_canvas(width, height, angle);
    let pivot = Point::new(width as f64 / 2.0, height as f64 / 2.0);
    let offset = Point::new(
        nw as f64 / 2.0 - width as f64 / 2.0,
        nh as f64 / 2.0 - height as f64 / 2.0,
    );
    Ok(RotationTransform::new(angle, pivot, offset)?)
}

/// Rotates the image by `angle` degrees CCW onto an expanded canvas and
/// returns the exact transform from source to output coordinates.
pub fn rotate_image(img: &ImageRef, angle: f64) -> Result<(ImageRef, RotationTransform), ImagingError> {
    let (w, h) = img.dimensions();
    let t = rotation_for(w, h, angle)?;
    let content = match &img.content {
        ImageContent::Raster(r) => ImageContent::Raster(rotate_raster(r, &t)?),
        ImageContent::Virtual(s) => ImageContent::Virtual(rotate_scene(s, &t)?),
    };
    Ok((
        ImageRef {
            id: img.id.clone(),
            content,
        },
        t,
    ))
}

fn rotate_scene(scene: &SceneDescriptor, t: &RotationTransform) -> Result<SceneDescriptor, ImagingError> {
    let (width, height) = rotated_canvas(scene.width, scene.height, t.angle);
    let instances = scene
        .instances
        .iter()
        .map(|inst| {
            Ok(TextInstance {
                text: inst.text.clone(),
                center: apply_transform(t, inst.center)?,
                orientation: normalize_degrees(inst.orientation + t.angle),
                box_w: inst.box_w,
                box_h: inst.box_h,
            })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    Ok(SceneDescriptor {
        width,
        height,
        instances,
    })
}

fn rotate_raster(src: &RasterImage, t: &RotationTransform) -> Result<RasterImage, ImagingError> {
    let (w, h) = (src.width, src.height);
    let quarter = t.angle / 90.0;
    if quarter.fract() == 0.0 {
        return Ok(rotate_quarter_turns(src, quarter as u32));
    }
    let (nw, nh) = rotated_canvas(w, h, t.angle);
    let inv = crate::geometry::invert_transform(t);
    let mut pixels = Vec::with_capacity(nw as usize * nh as usize * 3);
    for v in 0..nh {
        for u in 0..nw {
            let q = Point::new(u as f64 + 0.5, v as f64 + 0.5);
            let p = apply_transform(&inv, q)?;
            pixels.extend_from_slice(&src.sample_bilinear(p.x - 0.5, p.y - 0.5));
        }
    }
    RasterImage::new(nw, nh, pixels)
}

/// Exact permutation for multiples of 90°. With y pointing down, a CCW
/// quarter turn in the `(x, y)` plane sends `(x, y)` to `(h-1-y, x)`.
fn rotate_quarter_turns(src: &RasterImage, turns: u32) -> RasterImage {
    let mut cur = src.clone();
    for _ in 0..turns % 4 {
        let (w, h) = (cur.width, cur.height);
        let mut pixels = vec![0u8; cur.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (h - 1 - y, x);
                let di = (ny as usize * h as usize + nx as usize) * 3;
                let si = (y as usize * w as usize + x as usize) * 3;
                pixels[di..di + 3].copy_from_slice(&cur.pixels[si..si + 3]);
            }
        }
        cur = RasterImage {
            width: h,
            height: w,
            pixels,
        };
    }
    cur
}

/// Crops the axis-aligned bounds of `q` (clamped to the canvas) and resamples
/// the crop to `out_w × out_h` bilinearly.
pub fn crop_and_resize(img: &ImageRef, q: &Quad, out_w: u32, out_h: u32) -> Result<ImageRef, ImagingError> {
    let src = img.as_raster().ok_or(ImagingError::NotRaster)?;
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::InvalidInput("output size must be positive".into()));
    }
    let (w, h) = (src.width as f64, src.height as f64);
    let (x0, y0, x1, y1) = q.bounds();
    let x0 = x0.floor().max(0.0);
    let y0 = y0.floor().max(0.0);
    let x1 = x1.ceil().min(w);
    let y1 = y1.ceil().min(h);
    if x1 <= x0 || y1 <= y0 {
        return Err(ImagingError::EmptyCrop {
            width: src.width,
            height: src.height,
        });
    }
    let sx = (x1 - x0) / out_w as f64;
    let sy = (y1 - y0) / out_h as f64;
    let out = RasterImage::from_fn(out_w, out_h, |u, v| {
        let px = x0 + (u as f64 + 0.5) * sx - 0.5;
        let py = y0 + (v as f64 + 0.5) * sy - 0.5;
        src.sample_bilinear(px, py)
    })?;
    Ok(ImageRef::raster(img.id.clone(), out))
}

/// Loads a PNG (or any format the decoder recognizes) as RGB8.
pub fn load_image(path: &Path) -> Result<ImageRef, ImagingError> {
    let read_err = |source| ImagingError::Read {
        path: path.display().to_string(),
        source,
    };
    let decoded = image::ImageReader::open(path)
        .map_err(|e| read_err(image::ImageError::IoError(e)))?
        .with_guessed_format()
        .map_err(|e| read_err(image::ImageError::IoError(e)))?
        .decode()
        .map_err(read_err)?
        .into_rgb8();
    let (w, h) = decoded.dimensions();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ImageRef::raster(id, RasterImage::new(w, h, decoded.into_raw())?))
}

pub fn save_image(img: &ImageRef, path: &Path) -> Result<(), ImagingError> {
    let r = img.as_raster().ok_or(ImagingError::NotRaster)?;
    image::save_buffer_with_format(
        path,
        &r.pixels,
        r.width,
        r.height,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| ImagingError::Write {
        path: path.display().to_string(),
        source,
    })
}
