//! Rotation as translation: resample a 2-D image on a polar grid so that a
//! rotation about the grid center becomes a circular shift along the
//! angular axis. Radial samples become channels.

use super::{argmax, top_margin, Estimate, RestorationResult, DEGENERATE_MARGIN};
use crate::error::{Error, Result};
use crate::net::{Activation, CircularFilter, ConstantBias, EquivariantLayer, EquivariantNetwork};
use crate::tensor::{CircularTensor, MultiTensor, Shape};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialMode {
    /// Radius `R a^i` for channel `i`.
    Geometric,
    /// Radius `i R / n_r` for channel `i`.
    Linear,
}

/// Polar sampling grid for a 2-D image.
///
/// Coordinates are `(x, y) = (column, row)` with pixel centers on integers,
/// so an image of width `w` covers `[-0.5, w - 0.5]` horizontally.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGridSpec {
    pub angular_bins: usize,
    pub radial_bins: usize,
    /// Outer radius `R` in pixels.
    pub radius: f64,
    /// Radial decay `a`.
    pub decay: f64,
    /// `None` means the image center.
    pub center: Option<(f64, f64)>,
    pub radial: RadialMode,
}

impl PolarGridSpec {
    pub fn new(angular_bins: usize, radial_bins: usize, radius: f64, decay: f64) -> Result<Self> {
        let spec = Self {
            angular_bins,
            radial_bins,
            radius,
            decay,
            center: None,
            radial: RadialMode::Geometric,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angular_bins == 0 || self.radial_bins == 0 {
            return Err(Error::Config(
                "polar grid needs at least one bin per axis".into(),
            ));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Config(format!(
                "R must be positive, got {}",
                self.radius
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!(
                "a must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if let Some((x, y)) = self.center {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::Config("center must be finite".into()));
            }
        }
        Ok(())
    }

    /// Shape of the angular axis.
    pub fn angular_shape(&self) -> Shape {
        Shape::new(&[self.angular_bins]).expect("validated")
    }

    /// Radius of every channel, outermost first in geometric mode.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.radial_bins)
            .map(|i| match self.radial {
                RadialMode::Geometric => self.radius * self.decay.powi(i as i32),
                RadialMode::Linear => i as f64 * self.radius / self.radial_bins as f64,
            })
            .collect()
    }

    pub fn bin_degrees(&self) -> f64 {
        360.0 / self.angular_bins as f64
    }

    pub fn center_for(&self, shape: &Shape) -> (f64, f64) {
        self.center.unwrap_or_else(|| image_center(shape))
    }

    /// Parses `key = value` lines: `angular_bins`, `radial_bins`, `R`, `a`,
    /// optional `center_x`, `center_y`, `radial` (`geometric` or
    /// `linear`) and `interpolation` (only `bilinear`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut angular: Option<usize> = None;
        let mut radial_bins: Option<usize> = None;
        let mut radius: Option<f64> = None;
        let mut decay: Option<f64> = None;
        let (mut cx, mut cy): (Option<f64>, Option<f64>) = (None, None);
        let mut radial = RadialMode::Geometric;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || {
                Error::Config(format!(
                    "line {}: bad value {value:?} for {key}",
                    lineno + 1
                ))
            };
            match key {
                "angular_bins" => angular = Some(value.parse().map_err(|_| bad())?),
                "radial_bins" => radial_bins = Some(value.parse().map_err(|_| bad())?),
                "R" => radius = Some(value.parse().map_err(|_| bad())?),
                "a" => decay = Some(value.parse().map_err(|_| bad())?),
                "center_x" => cx = Some(value.parse().map_err(|_| bad())?),
                "center_y" => cy = Some(value.parse().map_err(|_| bad())?),
                "radial" => {
                    radial = match value {
                        "geometric" => RadialMode::Geometric,
                        "linear" => RadialMode::Linear,
                        _ => return Err(bad()),
                    }
                }
                "interpolation" if value == "bilinear" => {}
                "interpolation" => return Err(bad()),
                _ => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
        }
        fn need<T>(v: Option<T>, k: &str) -> Result<T> {
            v.ok_or_else(|| Error::Config(format!("missing key {k}")))
        }
        let center = match (cx, cy) {
            (Some(x), Some(y)) => Some((x, y)),
            (None, None) => None,
            _ => return Err(Error::Config("center_x and center_y go together".into())),
        };
        let spec = Self {
            angular_bins: need(angular, "angular_bins")?,
            radial_bins: need(radial_bins, "radial_bins")?,
            radius: need(radius, "R")?,
            decay: need(decay, "a")?,
            center,
            radial,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "angular_bins = {}", self.angular_bins);
        let _ = writeln!(s, "radial_bins = {}", self.radial_bins);
        let _ = writeln!(s, "R = {:?}", self.radius);
        let _ = writeln!(s, "a = {:?}", self.decay);
        if let Some((x, y)) = self.center {
            let _ = writeln!(s, "center_x = {x:?}");
            let _ = writeln!(s, "center_y = {y:?}");
        }
        let radial = match self.radial {
            RadialMode::Geometric => "geometric",
            RadialMode::Linear => "linear",
        };
        let _ = writeln!(s, "radial = {radial}");
        let _ = writeln!(s, "interpolation = bilinear");
        s
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn image_center(shape: &Shape) -> (f64, f64) {
    let d = shape.dims();
    ((d[1] as f64 - 1.0) / 2.0, (d[0] as f64 - 1.0) / 2.0)
}

fn require_2d(image: &CircularTensor) -> Result<(usize, usize)> {
    match image.shape().dims() {
        &[h, w] => Ok((h, w)),
        d => Err(Error::Input(format!(
            "polar resampling is implemented for 2-D images, got arity {}",
            d.len()
        ))),
    }
}

/// `(cos, sin)` of `2 pi i / n`. When `n` is a multiple of 4 the angle is
/// reduced to the first quadrant first, so quarter turns are exact.
fn cos_sin_fraction(i: i64, n: usize) -> (f64, f64) {
    let i = i.rem_euclid(n as i64) as usize;
    let (quadrant, j, base) = if n % 4 == 0 {
        let q = n / 4;
        (i / q, i % q, n)
    } else {
        (0, i, n)
    };
    let t = 2.0 * PI * j as f64 / base as f64;
    let (mut c, mut s) = if j == 0 {
        (1.0, 0.0)
    } else {
        (t.cos(), t.sin())
    };
    for _ in 0..quadrant {
        (c, s) = (-s, c);
    }
    (c, s)
}

fn cos_sin_degrees(deg: f64) -> (f64, f64) {
    let quarters = deg / 90.0;
    if quarters.fract() == 0.0 && quarters.abs() < 1e15 {
        cos_sin_fraction(quarters as i64, 4)
    } else {
        let t = deg.to_radians();
        (t.cos(), t.sin())
    }
}

/// Bilinear sample at `(x, y)`; pixels outside the image read 0.
fn bilinear(v: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let pix = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            v[r as usize * w + c as usize]
        }
    };
    let top = pix(y0, x0) * (1.0 - fx) + pix(y0, x0 + 1.0) * fx;
    let bottom = pix(y0 + 1.0, x0) * (1.0 - fx) + pix(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Channel `i` at angular position `j` holds the bilinear sample at angle
/// `2 pi j / n` and radius `radii()[i]` about the center.
pub fn to_polar(image: &CircularTensor, spec: &PolarGridSpec) -> Result<MultiTensor> {
    spec.validate()?;
    let (h, w) = require_2d(image)?;
    let (cx, cy) = spec.center_for(image.shape());
    let r = spec.radius;
    if cx - r < -0.5 || cx + r > w as f64 - 0.5 || cy - r < -0.5 || cy + r > h as f64 - 0.5 {
        return Err(Error::Input(format!(
            "R = {r} from center ({cx}, {cy}) leaves the {h}x{w} image"
        )));
    }
    let n = spec.angular_bins;
    let dirs: Vec<(f64, f64)> = (0..n as i64).map(|j| cos_sin_fraction(j, n)).collect();
    let v = image.vectorize();
    let mut data = Vec::with_capacity(n * spec.radial_bins);
    for rad in spec.radii() {
        for &(c, s) in &dirs {
            data.push(bilinear(v, h, w, cx + rad * c, cy + rad * s));
        }
    }
    MultiTensor::new(spec.angular_shape(), spec.radial_bins, data)
}

fn rotate_with(
    image: &CircularTensor,
    c: f64,
    s: f64,
    center: Option<(f64, f64)>,
) -> Result<CircularTensor> {
    let (h, w) = require_2d(image)?;
    let (cx, cy) = center.unwrap_or_else(|| image_center(image.shape()));
    let v = image.vectorize();
    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        let vy = row as f64 - cy;
        for col in 0..w {
            let vx = col as f64 - cx;
            out.push(bilinear(
                v,
                h,
                w,
                cx + c * vx + s * vy,
                cy - s * vx + c * vy,
            ));
        }
    }
    CircularTensor::new(image.shape().clone(), out)
}

/// Rotates by `degrees` about `center` (image center if `None`) so that
/// the polar tensor shifts forward along the angular axis.
///
/// Quarter turns of a square image about its center are exact
/// permutations.
pub fn rotate_image(
    image: &CircularTensor,
    degrees: f64,
    center: Option<(f64, f64)>,
) -> Result<CircularTensor> {
    let (c, s) = cos_sin_degrees(degrees);
    rotate_with(image, c, s, center)
}

/// Rotates by `k` of `n` angular bins.
pub fn rotate_image_bins(
    image: &CircularTensor,
    k: i64,
    n: usize,
    center: Option<(f64, f64)>,
) -> Result<CircularTensor> {
    let (c, s) = cos_sin_fraction(k, n);
    rotate_with(image, c, s, center)
}

/// One-layer matched filter for the pose of `template`.
///
/// Each radial channel of the template's polar tensor, minus its mean, is
/// a dense filter on that channel; the output is the summed correlation
/// over angular shifts, so it peaks at shift 0 for the template itself.
pub fn build_rotation_estimator(
    template: &CircularTensor,
    spec: &PolarGridSpec,
) -> Result<EquivariantNetwork> {
    let polar = to_polar(template, spec)?;
    let shape = spec.angular_shape();
    let n = shape.len() as f64;
    let mut filters = Vec::with_capacity(polar.channels());
    let mut energy = 0.0;
    for c in 0..polar.channels() {
        let ch = polar.channel(c);
        let mean = ch.iter().sum::<f64>() / n;
        let base: Vec<f64> = ch.iter().map(|v| v - mean).collect();
        energy += base.iter().map(|v| v * v).sum::<f64>();
        filters.push(CircularFilter::dense(CircularTensor::new(
            shape.clone(),
            base,
        )?));
    }
    if energy == 0.0 {
        return Err(Error::Precondition(
            "template is rotationally constant on the polar grid; it has no pose".into(),
        ));
    }
    let layer = EquivariantLayer::new(
        polar.channels(),
        1,
        filters,
        vec![ConstantBias(0.0)],
        Activation::Identity,
    )?;
    EquivariantNetwork::new(shape, polar.channels(), vec![layer])
}

/// Estimates the rotation bin `k` and rotates the image back by `k` bins.
pub fn restore_rotation(
    net: &EquivariantNetwork,
    image: &CircularTensor,
    spec: &PolarGridSpec,
) -> Result<RestorationResult> {
    if net.shape().dims() != [spec.angular_bins] || net.in_channels() != spec.radial_bins {
        return Err(Error::Shape(format!(
            "network takes {}x{}, polar grid gives {}x{}",
            net.in_channels(),
            net.shape(),
            spec.radial_bins,
            spec.angular_bins
        )));
    }
    if net.out_channels() != 1 {
        return Err(Error::Shape(
            "estimator must have one output channel".into(),
        ));
    }
    let polar = to_polar(image, spec)?;
    let out = net.forward(&polar)?.into_vec();
    let k = argmax(&out);
    let restored = rotate_image_bins(image, -(k as i64), spec.angular_bins, spec.center)?;
    let margin = top_margin(&out);
    Ok(RestorationResult {
        estimate: Estimate::RotationBin(k),
        restored: restored.into(),
        raw_output: out,
        margin,
        degenerate: !(margin >= DEGENERATE_MARGIN),
    })
}
