//! Velocity models, point forcings, and the PML damping profile.
//!
//! The analytic models live on the unit cube; a gridded model carries its own
//! physical extents and answers point queries by nearest-sample lookup. Shot
//! centers and related positions are stored proportionally, so the same
//! forcing definition works on any box.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Polynomial PML damping profile.
///
/// `sigma(depth) = amplitude * (depth / (gamma*h))^exponent`, clamped at the
/// full layer depth `gamma*h`. `depth` measures how far a point sits inside
/// the absorbing layer; the profile vanishes at the onset and reaches
/// `amplitude` at the layer's far end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmlProfile {
    /// Layer thickness in grid points.
    pub gamma: usize,
    /// Peak damping value, reached at full depth.
    pub amplitude: f64,
    /// Polynomial takeoff exponent.
    pub exponent: u32,
    /// Grid spacing along the layer's axis.
    pub h: f64,
}

impl PmlProfile {
    pub fn new(gamma: usize, amplitude: f64, exponent: u32, h: f64) -> Self {
        PmlProfile {
            gamma,
            amplitude,
            exponent,
            h,
        }
    }

    /// Damping value at the given depth into the layer.
    pub fn sigma(&self, depth: f64) -> Result<f64> {
        if depth < 0.0 {
            return Err(Error::Domain(format!("negative PML depth {depth}")));
        }
        let full = self.gamma as f64 * self.h;
        if self.amplitude == 0.0 || full == 0.0 {
            return Ok(0.0);
        }
        let t = (depth.min(full)) / full;
        Ok(self.amplitude * t.powi(self.exponent as i32))
    }
}

/// Flat scalar field sampled on a regular grid, `i1` fastest.
#[derive(Clone, Debug)]
pub struct GriddedField {
    pub dims: [usize; 3],
    pub samples: Vec<f32>,
}

#[derive(Clone, Debug)]
enum ModelKind {
    Uniform(f64),
    Barrier,
    Wedge,
    TwoLayer,
    Waveguide,
    Gridded(GriddedField),
}

/// A wave-speed field `c(x)` over a box `[0, e1] x [0, e2] x [0, e3]`.
#[derive(Clone, Debug)]
pub struct VelocityModel {
    kind: ModelKind,
    extents: [f64; 3],
    c_min: f64,
    c_max: f64,
}

/// Wave speed inside the barrier model's slab.
pub const BARRIER_SPEED: f64 = 1e10;

impl VelocityModel {
    /// Constant unit-cube model `c(x) = speed`.
    pub fn uniform(speed: f64) -> Result<Self> {
        VelocityModel::uniform_on(speed, [1.0; 3])
    }

    /// Constant model over an arbitrary box.
    pub fn uniform_on(speed: f64, extents: [f64; 3]) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(Error::Config(format!("wave speed must be positive: {speed}")));
        }
        if extents.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config(format!("non-positive extents {extents:?}")));
        }
        Ok(VelocityModel {
            kind: ModelKind::Uniform(speed),
            extents,
            c_min: speed,
            c_max: speed,
        })
    }

    /// Unit speed everywhere except a thin near-impenetrable slab
    /// `[0,1] x [0.25,0.3] x [0,0.75]`.
    pub fn barrier() -> Self {
        VelocityModel {
            kind: ModelKind::Barrier,
            extents: [1.0; 3],
            c_min: 1.0,
            c_max: BARRIER_SPEED,
        }
    }

    /// Three-layer model with two dipping interfaces.
    pub fn wedge() -> Self {
        VelocityModel {
            kind: ModelKind::Wedge,
            extents: [1.0; 3],
            c_min: 1.5,
            c_max: 3.0,
        }
    }

    /// Speed 4 for `x2 < 0.5`, speed 1 above.
    pub fn two_layer() -> Self {
        VelocityModel {
            kind: ModelKind::TwoLayer,
            extents: [1.0; 3],
            c_min: 1.0,
            c_max: 4.0,
        }
    }

    /// A slow cylindrical channel along the `x3` axis.
    pub fn waveguide() -> Self {
        VelocityModel {
            kind: ModelKind::Waveguide,
            extents: [1.0; 3],
            c_min: 0.75,
            c_max: 1.25,
        }
    }

    /// Model backed by a sampled field over the given physical extents.
    pub fn gridded(field: GriddedField, extents: [f64; 3]) -> Result<Self> {
        let n = field.dims.iter().product::<usize>();
        if n == 0 {
            return Err(Error::Config("gridded model has an empty dimension".into()));
        }
        if field.samples.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: field.samples.len(),
            });
        }
        if extents.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config(format!("non-positive extents {extents:?}")));
        }
        let mut c_min = f64::INFINITY;
        let mut c_max = 0.0f64;
        for &s in &field.samples {
            let s = s as f64;
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config(format!("non-positive sample {s} in gridded model")));
            }
            c_min = c_min.min(s);
            c_max = c_max.max(s);
        }
        Ok(VelocityModel {
            kind: ModelKind::Gridded(field),
            extents,
            c_min,
            c_max,
        })
    }

    /// Load a gridded model from a raw little-endian `f32` file (`i1`
    /// fastest) and a text header holding `n1 n2 n3 e1 e2 e3`.
    pub fn load_gridded(data_path: &Path, header_path: &Path) -> Result<Self> {
        let header = fs::read_to_string(header_path)?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(Error::Parse(format!(
                "velocity header {} must hold exactly 6 numbers (n1 n2 n3 e1 e2 e3), found {}",
                header_path.display(),
                tokens.len()
            )));
        }
        let mut dims = [0usize; 3];
        for (k, tok) in tokens[..3].iter().enumerate() {
            dims[k] = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad dimension {tok:?} in velocity header")))?;
        }
        let mut extents = [0f64; 3];
        for (k, tok) in tokens[3..].iter().enumerate() {
            extents[k] = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad extent {tok:?} in velocity header")))?;
        }
        let n = dims.iter().product::<usize>();
        let mut raw = Vec::new();
        fs::File::open(data_path)?.read_to_end(&mut raw)?;
        if raw.len() != 4 * n {
            return Err(Error::Parse(format!(
                "velocity file {} holds {} bytes, expected {} for dims {:?}",
                data_path.display(),
                raw.len(),
                4 * n,
                dims
            )));
        }
        let samples = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        VelocityModel::gridded(GriddedField { dims, samples }, extents)
    }

    /// Write a gridded model in the format [`VelocityModel::load_gridded`]
    /// reads. Errors if the model is not gridded.
    pub fn save_gridded(&self, data_path: &Path, header_path: &Path) -> Result<()> {
        let ModelKind::Gridded(field) = &self.kind else {
            return Err(Error::Config("only gridded models can be saved".into()));
        };
        let mut f = fs::File::create(data_path)?;
        for &s in &field.samples {
            f.write_all(&s.to_le_bytes())?;
        }
        let [n1, n2, n3] = field.dims;
        let [e1, e2, e3] = self.extents;
        fs::write(header_path, format!("{n1} {n2} {n3}\n{e1} {e2} {e3}\n"))?;
        Ok(())
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    /// Smallest wave speed in the model.
    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    /// Largest wave speed in the model.
    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Shortest wavelength `2 pi c_min / omega` at angular frequency `omega`.
    pub fn lambda_min(&self, omega: f64) -> f64 {
        2.0 * std::f64::consts::PI * self.c_min / omega
    }

    /// Short name used in reports and CSV output.
    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Uniform(_) => "uniform",
            ModelKind::Barrier => "barrier",
            ModelKind::Wedge => "wedge",
            ModelKind::TwoLayer => "two-layer",
            ModelKind::Waveguide => "waveguide",
            ModelKind::Gridded(_) => "gridded",
        }
    }

    /// Wave speed at a physical point. Points outside the closed box error.
    pub fn speed_at(&self, x: [f64; 3]) -> Result<f64> {
        for k in 0..3 {
            if x[k] < 0.0 || x[k] > self.extents[k] {
                return Err(Error::OutsideBox(x[0], x[1], x[2]));
            }
        }
        let u = [
            x[0] / self.extents[0],
            x[1] / self.extents[1],
            x[2] / self.extents[2],
        ];
        Ok(match &self.kind {
            ModelKind::Uniform(c) => *c,
            ModelKind::Barrier => {
                if u[1] >= 0.25 && u[1] <= 0.3 && u[2] <= 0.75 {
                    BARRIER_SPEED
                } else {
                    1.0
                }
            }
            ModelKind::Wedge => {
                if u[2] <= 0.4 + 0.1 * u[1] {
                    2.0
                } else if u[2] <= 0.8 - 0.2 * u[1] {
                    1.5
                } else {
                    3.0
                }
            }
            ModelKind::TwoLayer => {
                if u[1] < 0.5 {
                    4.0
                } else {
                    1.0
                }
            }
            ModelKind::Waveguide => {
                let r2 = (u[0] - 0.5).powi(2) + (u[1] - 0.5).powi(2);
                1.25 * (1.0 - 0.4 * (-32.0 * r2).exp())
            }
            ModelKind::Gridded(field) => {
                let mut idx = [0usize; 3];
                for k in 0..3 {
                    let n = field.dims[k];
                    idx[k] = if n == 1 {
                        0
                    } else {
                        ((u[k] * (n - 1) as f64).round() as usize).min(n - 1)
                    };
                }
                let flat =
                    idx[0] + idx[1] * field.dims[0] + idx[2] * field.dims[0] * field.dims[1];
                field.samples[flat] as f64
            }
        })
    }
}

/// The supported forcing shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForcingKind {
    /// One Gaussian shot near the top face.
    SingleShot,
    /// Sum of three Gaussian shots.
    ThreeShot,
    /// A Gaussian beam tilted along a fixed direction.
    GaussianBeam,
    /// A plane wave along the same direction.
    PlaneWave,
}

impl ForcingKind {
    /// Parse the short names used on the command line (`f0`..`f3`).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "f0" | "single-shot" => Ok(ForcingKind::SingleShot),
            "f1" | "three-shot" => Ok(ForcingKind::ThreeShot),
            "f2" | "beam" => Ok(ForcingKind::GaussianBeam),
            "f3" | "plane-wave" => Ok(ForcingKind::PlaneWave),
            other => Err(Error::Config(format!("unknown forcing {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ForcingKind::SingleShot => "f0",
            ForcingKind::ThreeShot => "f1",
            ForcingKind::GaussianBeam => "f2",
            ForcingKind::PlaneWave => "f3",
        }
    }
}

/// A right-hand-side field evaluated at physical points.
///
/// Shot centers are proportional coordinates, scaled to the box when the
/// forcing is evaluated. `resolution` is the grid resolution `n` that sets
/// the single-shot amplitude and width.
#[derive(Clone, Debug)]
pub struct Forcing {
    pub kind: ForcingKind,
    pub centers: [[f64; 3]; 3],
    pub direction: [f64; 3],
    pub resolution: f64,
    extents: [f64; 3],
}

impl Forcing {
    /// Standard shot positions and beam direction on the given box.
    pub fn new(kind: ForcingKind, resolution: f64, extents: [f64; 3]) -> Result<Self> {
        let s3 = 3.0f64.sqrt();
        Forcing::with_geometry(
            kind,
            resolution,
            extents,
            [[0.5, 0.5, 0.1], [0.25, 0.25, 0.1], [0.75, 0.75, 0.5]],
            [1.0 / s3, 1.0 / s3, -1.0 / s3],
        )
    }

    /// Fully explicit constructor; validates the direction and centers.
    pub fn with_geometry(
        kind: ForcingKind,
        resolution: f64,
        extents: [f64; 3],
        centers: [[f64; 3]; 3],
        direction: [f64; 3],
    ) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::Config(format!(
                "forcing resolution must be positive: {resolution}"
            )));
        }
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "forcing direction must have unit norm, got {norm}"
            )));
        }
        for c in &centers {
            if c.iter().any(|&u| !(0.0..=1.0).contains(&u)) {
                return Err(Error::Config(format!(
                    "shot center {c:?} must lie in the unit box (proportional coordinates)"
                )));
            }
        }
        Ok(Forcing {
            kind,
            centers,
            direction,
            resolution,
            extents,
        })
    }

    fn center_phys(&self, which: usize) -> [f64; 3] {
        let c = self.centers[which];
        [
            c[0] * self.extents[0],
            c[1] * self.extents[1],
            c[2] * self.extents[2],
        ]
    }

    fn shot(&self, x: [f64; 3], which: usize) -> f64 {
        let n = self.resolution;
        let c = self.center_phys(which);
        let r2 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>();
        n * (-10.0 * n * r2).exp()
    }

    /// Forcing amplitude at a physical point.
    pub fn amplitude_at(&self, x: [f64; 3], omega: f64) -> Complex64 {
        match self.kind {
            ForcingKind::SingleShot => Complex64::new(self.shot(x, 0), 0.0),
            ForcingKind::ThreeShot => {
                Complex64::new(self.shot(x, 0) + self.shot(x, 1) + self.shot(x, 2), 0.0)
            }
            ForcingKind::GaussianBeam => {
                let c = self.center_phys(2);
                let r2 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>();
                let phase = omega * (0..3).map(|k| x[k] * self.direction[k]).sum::<f64>();
                Complex64::from_polar(1.0, phase) * (-4.0 * omega * r2).exp()
            }
            ForcingKind::PlaneWave => {
                let phase = omega * (0..3).map(|k| x[k] * self.direction[k]).sum::<f64>();
                Complex64::from_polar(1.0, phase)
            }
        }
    }
}
