//! Euler-Bernoulli beam modes and impulse response by modal superposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Clamped at `s = 0`, free at `s = L`.
    ClampedFree,
    PinnedPinned,
}

/// Uniform rectangular beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub length_m: f64,
    pub youngs_modulus_pa: f64,
    pub density_kg_m3: f64,
    pub width_m: f64,
    pub thickness_m: f64,
    /// One ratio per mode, or a single ratio applied to every mode.
    pub modal_damping: Vec<f64>,
    pub mode_count: usize,
    pub boundary: Boundary,
}

pub const ACRYLIC_YOUNGS_PA: f64 = 3.2e9;
pub const ACRYLIC_DENSITY: f64 = 1180.0;
pub const DEFAULT_DAMPING: f64 = 0.02;
pub const DEFAULT_MODE_COUNT: usize = 8;

impl BeamSpec {
    /// 10 mm x 3 mm acrylic strip of the given free length, keeping at most
    /// eight modes and only those below the Nyquist limit of `rate_hz`.
    pub fn acrylic_rod(length_m: f64, rate_hz: f64) -> Result<Self> {
        let mut spec = BeamSpec {
            length_m,
            youngs_modulus_pa: ACRYLIC_YOUNGS_PA,
            density_kg_m3: ACRYLIC_DENSITY,
            width_m: 0.010,
            thickness_m: 0.003,
            modal_damping: vec![DEFAULT_DAMPING],
            mode_count: DEFAULT_MODE_COUNT,
            boundary: Boundary::ClampedFree,
        };
        let basis = ModalBasis::new(&spec)?;
        let below = basis
            .frequencies_hz()
            .iter()
            .take_while(|&&f| 2.0 * f < rate_hz)
            .count();
        spec.mode_count = below.max(1);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_m", self.length_m),
            ("youngs_modulus_pa", self.youngs_modulus_pa),
            ("density_kg_m3", self.density_kg_m3),
            ("width_m", self.width_m),
            ("thickness_m", self.thickness_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("beam {name} must be positive, got {v}")));
            }
        }
        if self.mode_count == 0 {
            return Err(Error::InvalidParameter("mode_count must be at least 1".into()));
        }
        if self.modal_damping.is_empty()
            || (self.modal_damping.len() != 1 && self.modal_damping.len() != self.mode_count)
        {
            return Err(Error::InvalidParameter(
                "modal_damping needs one ratio or one per mode".into(),
            ));
        }
        if let Some(z) = self.modal_damping.iter().find(|z| !(0.0..1.0).contains(*z)) {
            return Err(Error::InvalidParameter(format!("damping ratio {z} outside [0, 1)")));
        }
        Ok(())
    }

    pub fn damping(&self, mode: usize) -> f64 {
        if self.modal_damping.len() == 1 {
            self.modal_damping[0]
        } else {
            self.modal_damping[mode]
        }
    }

    pub fn area(&self) -> f64 {
        self.width_m * self.thickness_m
    }

    pub fn second_moment(&self) -> f64 {
        self.width_m * self.thickness_m.powi(3) / 12.0
    }
}

/// Root `n` (1-based) of `cosh(x) cos(x) + 1 = 0`, by bisection.
///
/// The equation is solved in the overflow-free form `cos(x) + 1/cosh(x) = 0`;
/// root `n` is the unique sign change inside `((n-1)pi, n pi)`.
pub fn cantilever_root(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::RootSolver { mode: 0 });
    }
    let f = |x: f64| x.cos() + 1.0 / x.cosh();
    let mut lo = (n as f64 - 1.0) * std::f64::consts::PI + if n == 1 { 1.0 } else { 0.0 };
    let mut hi = n as f64 * std::f64::consts::PI;
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::RootSolver { mode: n });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::RootSolver { mode: n })
}

/// Natural frequencies, mode shapes and modal masses of a beam.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    boundary: Boundary,
    length: f64,
    /// Wavenumber `beta_n` in 1/m.
    betas: Vec<f64>,
    /// Clamped-free shape coefficient and its complement `1 - sigma`.
    sigmas: Vec<(f64, f64)>,
    omegas: Vec<f64>,
    masses: Vec<f64>,
}

impl ModalBasis {
    pub fn new(spec: &BeamSpec) -> Result<Self> {
        spec.validate()?;
        let l = spec.length_m;
        let mu = spec.density_kg_m3 * spec.area();
        let stiffness = (spec.youngs_modulus_pa * spec.second_moment() / (mu * l.powi(4))).sqrt();
        let mut betas = Vec::with_capacity(spec.mode_count);
        let mut sigmas = Vec::with_capacity(spec.mode_count);
        for n in 1..=spec.mode_count {
            let bl = match spec.boundary {
                Boundary::ClampedFree => cantilever_root(n)?,
                Boundary::PinnedPinned => n as f64 * std::f64::consts::PI,
            };
            betas.push(bl / l);
            sigmas.push(clamped_free_sigma(bl));
        }
        let omegas: Vec<f64> = betas.iter().map(|b| (b * l).powi(2) * stiffness).collect();
        // both shape families normalise to int_0^L phi^2 ds = L (clamped-free)
        // or L/2 (pinned-pinned)
        let norm = match spec.boundary {
            Boundary::ClampedFree => l,
            Boundary::PinnedPinned => l / 2.0,
        };
        let masses = vec![mu * norm; spec.mode_count];
        Ok(ModalBasis {
            boundary: spec.boundary,
            length: l,
            betas,
            sigmas,
            omegas,
            masses,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.betas.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Angular natural frequencies (rad/s).
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.omegas
            .iter()
            .map(|w| w / (2.0 * std::f64::consts::PI))
            .collect()
    }

    pub fn modal_masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn beta(&self, mode: usize) -> f64 {
        self.betas[mode]
    }

    /// Shape of `mode` (0-based) at `s` metres from the clamped/left end.
    pub fn shape(&self, mode: usize, s: f64) -> f64 {
        self.shape_derivative(mode, s, 0)
    }

    /// `order`-th spatial derivative (0..=3) of a mode shape.
    pub fn shape_derivative(&self, mode: usize, s: f64, order: u32) -> f64 {
        let b = self.betas[mode];
        let x = b * s;
        let scale = b.powi(order as i32);
        match self.boundary {
            Boundary::PinnedPinned => {
                let v = match order % 4 {
                    0 => x.sin(),
                    1 => x.cos(),
                    2 => -x.sin(),
                    _ => -x.cos(),
                };
                scale * v
            }
            Boundary::ClampedFree => {
                let (sigma, one_minus) = self.sigmas[mode];
                let (ep, em) = (x.exp(), (-x).exp());
                // cosh - sigma sinh and sinh - sigma cosh, without cancellation
                let ch = 0.5 * (one_minus * ep + (1.0 + sigma) * em);
                let sh = 0.5 * (one_minus * ep - (1.0 + sigma) * em);
                let (c, sn) = (x.cos(), x.sin());
                let v = match order % 4 {
                    0 => ch - c + sigma * sn,
                    1 => sh + sn + sigma * c,
                    2 => ch + c - sigma * sn,
                    _ => sh - sn - sigma * c,
                };
                scale * v
            }
        }
    }
}

/// `sigma = (cosh bl + cos bl) / (sinh bl + sin bl)` and `1 - sigma`.
fn clamped_free_sigma(bl: f64) -> (f64, f64) {
    let den = bl.sinh() + bl.sin();
    let sigma = (bl.cosh() + bl.cos()) / den;
    let one_minus = (-(-bl).exp() + bl.sin() - bl.cos()) / den;
    (sigma, one_minus)
}

/// Impulsive tap at `position_m` measured from the free end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapStimulus {
    pub position_m: f64,
    pub impulse_ns: f64,
    pub onset_s: f64,
}

impl TapStimulus {
    pub fn validate(&self, spec: &BeamSpec) -> Result<()> {
        if !(0.0..=spec.length_m).contains(&self.position_m) {
            return Err(Error::InvalidParameter(format!(
                "tap position {} m outside [0, {}]",
                self.position_m, spec.length_m
            )));
        }
        if !(self.impulse_ns >= 0.0 && self.impulse_ns.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "impulse must be non-negative, got {}",
                self.impulse_ns
            )));
        }
        if !(self.onset_s >= 0.0) {
            return Err(Error::InvalidParameter("tap onset must be non-negative".into()));
        }
        Ok(())
    }

    /// Tap location in beam coordinates (distance from the clamped end).
    pub fn beam_coordinate(&self, spec: &BeamSpec) -> f64 {
        spec.length_m - self.position_m
    }
}

/// Peak amplitude of each modal coordinate for a tap,
/// `J phi_n(a) / (m_n omega_dn)`.
pub fn modal_amplitudes(basis: &ModalBasis, spec: &BeamSpec, tap: &TapStimulus) -> Vec<f64> {
    let a = tap.beam_coordinate(spec);
    (0..basis.mode_count())
        .map(|n| {
            let z = spec.damping(n);
            let wd = basis.omegas[n] * (1.0 - z * z).sqrt();
            tap.impulse_ns * basis.shape(n, a) / (basis.masses[n] * wd)
        })
        .collect()
}

/// Modal coordinates `q_n(t_i)` for `samples` instants at `rate_hz`.
/// Output is mode-major: `q[n * samples + i]`.
pub fn modal_coordinates(
    basis: &ModalBasis,
    spec: &BeamSpec,
    tap: &TapStimulus,
    rate_hz: f64,
    samples: usize,
) -> Vec<f64> {
    let amps = modal_amplitudes(basis, spec, tap);
    let mut q = vec![0.0; basis.mode_count() * samples];
    for (n, &amp) in amps.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let z = spec.damping(n);
        let w = basis.omegas[n];
        let wd = w * (1.0 - z * z).sqrt();
        let row = &mut q[n * samples..(n + 1) * samples];
        for (i, out) in row.iter_mut().enumerate() {
            let dt = i as f64 / rate_hz - tap.onset_s;
            if dt >= 0.0 {
                *out = amp * (-z * w * dt).exp() * (wd * dt).sin();
            }
        }
    }
    q
}
