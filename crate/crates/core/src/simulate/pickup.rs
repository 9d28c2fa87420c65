//! Coupling of beam motion at the grip into per-taxel pressure signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::beam::{modal_coordinates, BeamSpec, ModalBasis, TapStimulus};
use crate::error::{Error, Result};
use crate::model::{AnalogSignal, TaxelLayout};

/// Reference impulse used to calibrate pickup gains (N s).
pub const REFERENCE_IMPULSE_NS: f64 = 0.01;
/// Row pitch of the taxel lattice along the rod axis.
const ROW_PITCH_M: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PickupQuantity {
    /// Bending strain, proportional to curvature `y''(s, t)`.
    Strain,
    Displacement,
}

/// Maps beam motion near the grasp point to taxel pressure.
///
/// Each taxel samples `quantity` at its own position along the rod and
/// scales it by its gain; Gaussian noise is added per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPickup {
    pub grasp_position_m: f64,
    /// Position of every taxel along the beam (m from the clamp).
    pub taxel_positions_m: Vec<f64>,
    pub taxel_gains: Vec<f64>,
    pub noise_std: f64,
    pub quantity: PickupQuantity,
    pub layouts: Vec<TaxelLayout>,
}

impl GraspPickup {
    pub fn validate(&self, spec: &BeamSpec) -> Result<()> {
        if self.taxel_gains.is_empty() || self.taxel_gains.len() != self.taxel_positions_m.len() {
            return Err(Error::InvalidParameter(
                "pickup needs one gain and one position per taxel".into(),
            ));
        }
        let layout_taxels: usize = self.layouts.iter().map(TaxelLayout::taxel_count).sum();
        if layout_taxels != self.taxel_gains.len() {
            return Err(Error::InvalidParameter("pickup layouts disagree with taxel count".into()));
        }
        if self.taxel_gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter("taxel gains must be finite".into()));
        }
        if self.taxel_gains.iter().all(|&g| g == 0.0) {
            return Err(Error::InvalidParameter("at least one taxel gain must be nonzero".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidParameter("noise_std must be non-negative".into()));
        }
        if self
            .taxel_positions_m
            .iter()
            .any(|s| !(0.0..=spec.length_m).contains(s))
        {
            return Err(Error::InvalidParameter("taxel position outside the beam".into()));
        }
        Ok(())
    }

    pub fn taxel_count(&self) -> usize {
        self.taxel_gains.len()
    }

    /// Default event-skin pickup: one or two 8x5 lattices around the grasp
    /// point, rows along the rod axis.
    ///
    /// Gains fall off smoothly from the lattice centre with a seeded 10 %
    /// per-taxel perturbation; the second finger sits on the opposite face
    /// and sees strain with inverted sign. Gains are normalised so that a
    /// reference tap at the free end produces a unit first-mode peak at
    /// the lattice centre, and noise is 1 % of that peak.
    pub fn nuskin(spec: &BeamSpec, fingers: usize, grasp_position_m: f64, seed: u64) -> Result<Self> {
        if !(1..=2).contains(&fingers) {
            return Err(Error::InvalidParameter("fingers must be 1 or 2".into()));
        }
        let scale = 1.0 / reference_first_mode_peak(spec, grasp_position_m, PickupQuantity::Strain)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["left", "right"];
        let mut layouts = Vec::new();
        let mut gains = Vec::new();
        let mut positions = Vec::new();
        for (f, name) in names.iter().enumerate().take(fingers) {
            let layout = TaxelLayout::nuskin(*name);
            let sign = if f == 0 { 1.0 } else { -1.0 };
            let (rc, cc) = ((layout.rows - 1) as f64 / 2.0, (layout.cols - 1) as f64 / 2.0);
            for r in 0..layout.rows {
                for c in 0..layout.cols {
                    let d2 = ((r as f64 - rc) / 3.0).powi(2) + ((c as f64 - cc) / 2.0).powi(2);
                    let falloff = 0.25 + 0.75 * (-0.5 * d2).exp();
                    let jitter = 1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0);
                    gains.push(sign * scale * falloff * jitter);
                    let s = (grasp_position_m + (r as f64 - rc) * ROW_PITCH_M).clamp(0.0, spec.length_m);
                    positions.push(s);
                }
            }
            layouts.push(layout);
        }
        Ok(GraspPickup {
            grasp_position_m,
            taxel_positions_m: positions,
            taxel_gains: gains,
            noise_std: 0.01,
            quantity: PickupQuantity::Strain,
            layouts,
        })
    }

    /// Single-channel pressure pickup at the grasp point.
    pub fn hydrophone(spec: &BeamSpec, grasp_position_m: f64) -> Result<Self> {
        let scale = 1.0 / reference_first_mode_peak(spec, grasp_position_m, PickupQuantity::Strain)?;
        Ok(GraspPickup {
            grasp_position_m,
            taxel_positions_m: vec![grasp_position_m],
            taxel_gains: vec![scale],
            noise_std: 0.01,
            quantity: PickupQuantity::Strain,
            layouts: vec![TaxelLayout {
                rows: 1,
                cols: 1,
                finger_id: "PAC".into(),
            }],
        })
    }
}

/// First-mode peak of `quantity` at `s` for a reference tap at the free end.
fn reference_first_mode_peak(spec: &BeamSpec, s: f64, quantity: PickupQuantity) -> Result<f64> {
    let basis = ModalBasis::new(spec)?;
    let tap = TapStimulus {
        position_m: 0.0,
        impulse_ns: REFERENCE_IMPULSE_NS,
        onset_s: 0.0,
    };
    let amp = super::beam::modal_amplitudes(&basis, spec, &tap)[0];
    let peak = (amp * basis.shape_derivative(0, s, quantity_order(quantity))).abs();
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grasp position {s} m does not couple to the first mode"
        )));
    }
    Ok(peak)
}

fn quantity_order(q: PickupQuantity) -> u32 {
    match q {
        PickupQuantity::Strain => 2,
        PickupQuantity::Displacement => 0,
    }
}

/// Per-taxel pressure signals for one tap.
///
/// Refuses to synthesize when `rate_hz` does not exceed twice the highest
/// retained modal frequency. With `noise_std == 0` the output is a
/// deterministic linear function of the impulse.
pub fn synthesize_response<R: Rng + ?Sized>(
    spec: &BeamSpec,
    tap: &TapStimulus,
    pickup: &GraspPickup,
    rate_hz: f64,
    duration_s: f64,
    rng: &mut R,
) -> Result<Vec<AnalogSignal>> {
    let basis = ModalBasis::new(spec)?;
    tap.validate(spec)?;
    pickup.validate(spec)?;
    let max_mode_hz = basis.frequencies_hz().last().copied().unwrap_or(0.0);
    if !(rate_hz > 2.0 * max_mode_hz) {
        return Err(Error::Aliasing { rate_hz, max_mode_hz });
    }
    if !(duration_s > 0.0) {
        return Err(Error::InvalidParameter("duration must be positive".into()));
    }
    let samples = (duration_s * rate_hz).round() as usize;
    let q = modal_coordinates(&basis, spec, tap, rate_hz, samples);
    let order = quantity_order(pickup.quantity);
    let noise = if pickup.noise_std > 0.0 {
        Some(Normal::new(0.0, pickup.noise_std).expect("validated noise std"))
    } else {
        None
    };
    let modes = basis.mode_count();
    let mut out = Vec::with_capacity(pickup.taxel_count());
    for (k, (&s, &gain)) in pickup
        .taxel_positions_m
        .iter()
        .zip(&pickup.taxel_gains)
        .enumerate()
    {
        let weights: Vec<f64> = (0..modes)
            .map(|n| gain * basis.shape_derivative(n, s, order))
            .collect();
        let mut x = vec![0.0; samples];
        for (n, w) in weights.iter().enumerate() {
            let row = &q[n * samples..(n + 1) * samples];
            for (xi, qi) in x.iter_mut().zip(row) {
                *xi += w * qi;
            }
        }
        if let Some(dist) = &noise {
            for xi in &mut x {
                *xi += dist.sample(rng);
            }
        }
        out.push(AnalogSignal::new(x, rate_hz, format!("taxel{k}"))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::beam::Boundary;

    fn spec(modes: usize, zeta: f64) -> BeamSpec {
        BeamSpec {
            length_m: 0.2,
            youngs_modulus_pa: 3.2e9,
            density_kg_m3: 1180.0,
            width_m: 0.01,
            thickness_m: 0.003,
            modal_damping: vec![zeta],
            mode_count: modes,
            boundary: Boundary::ClampedFree,
        }
    }

    fn tap(pos: f64, j: f64) -> TapStimulus {
        TapStimulus {
            position_m: pos,
            impulse_ns: j,
            onset_s: 0.01,
        }
    }

    fn quiet(p: &GraspPickup) -> GraspPickup {
        GraspPickup {
            noise_std: 0.0,
            ..p.clone()
        }
    }

    #[test]
    fn zero_impulse_gives_zero_signal() {
        let s = spec(4, 0.02);
        let p = quiet(&GraspPickup::nuskin(&s, 1, 0.01, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = synthesize_response(&s, &tap(0.05, 0.0), &p, 4000.0, 0.1, &mut rng).unwrap();
        assert!(out.iter().all(|sig| sig.samples().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn doubling_impulse_doubles_output() {
        let s = spec(5, 0.02);
        let p = quiet(&GraspPickup::nuskin(&s, 2, 0.01, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = synthesize_response(&s, &tap(0.07, 0.01), &p, 4000.0, 0.1, &mut rng).unwrap();
        let b = synthesize_response(&s, &tap(0.07, 0.02), &p, 4000.0, 0.1, &mut rng).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.samples().iter().zip(y.samples()) {
                assert_eq!(2.0 * u, *v);
            }
        }
    }

    #[test]
    fn nyquist_guard_refuses() {
        let s = spec(8, 0.02);
        let p = GraspPickup::nuskin(&s, 1, 0.01, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = synthesize_response(&s, &tap(0.1, 0.01), &p, 4000.0, 0.1, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Aliasing { .. }));
    }

    #[test]
    fn single_undamped_mode_is_pure_sinusoid() {
        let s = spec(1, 0.0);
        let p = quiet(&GraspPickup::hydrophone(&s, 0.01).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rate = 4000.0;
        let t = TapStimulus {
            position_m: 0.0,
            impulse_ns: 0.01,
            onset_s: 0.0,
        };
        let out = synthesize_response(&s, &t, &p, rate, 1.0, &mut rng).unwrap();
        let x = out[0].samples();
        let basis = ModalBasis::new(&s).unwrap();
        let w = basis.omegas()[0];
        // closed-form oscillator: unit peak at the grip by calibration
        for (i, &v) in x.iter().enumerate() {
            let expect = (w * i as f64 / rate).sin();
            assert!((v - expect).abs() < 1e-9, "sample {i}: {v} vs {expect}");
        }
        // naive DFT peak bin matches the modal frequency within one bin
        let n = x.len();
        let mag = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let peak = (1..n / 2).max_by(|&a, &b| mag(a).total_cmp(&mag(b))).unwrap();
        let expected_bin = basis.frequencies_hz()[0] * n as f64 / rate;
        assert!((peak as f64 - expected_bin).abs() <= 1.0);
    }

    #[test]
    fn damped_rms_decays_window_by_window() {
        let s = spec(5, 0.03);
        let p = quiet(&GraspPickup::hydrophone(&s, 0.01).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = TapStimulus {
            position_m: 0.02,
            impulse_ns: 0.01,
            onset_s: 0.0,
        };
        let out = synthesize_response(&s, &t, &p, 4000.0, 0.6, &mut rng).unwrap();
        let x = out[0].samples();
        let rms: Vec<f64> = x
            .chunks(200)
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
            .collect();
        for w in rms.windows(2) {
            assert!(w[1] <= w[0], "{rms:?}");
        }
    }

    #[test]
    fn tap_at_mode_node_leaves_mode_silent() {
        let s = spec(3, 0.02);
        let basis = ModalBasis::new(&s).unwrap();
        // interior zero of mode 2 by bisection
        let (mut lo, mut hi) = (0.05 * s.length_m, 0.95 * s.length_m);
        let f = |x: f64| basis.shape(1, x);
        assert!(f(lo).signum() != f(hi).signum());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid).signum() == f(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let node = 0.5 * (lo + hi);
        let t = TapStimulus {
            position_m: s.length_m - node,
            impulse_ns: 0.01,
            onset_s: 0.0,
        };
        let amps = crate::simulate::beam::modal_amplitudes(&basis, &s, &t);
        let free_end = crate::simulate::beam::modal_amplitudes(
            &basis,
            &s,
            &TapStimulus { position_m: 0.0, ..t },
        );
        assert!(amps[1].abs() / free_end[1].abs() < 1e-6);
        assert!(amps[0].abs() > 0.0);
    }

    #[test]
    fn pickup_validation() {
        let s = spec(3, 0.02);
        let mut p = GraspPickup::nuskin(&s, 1, 0.01, 0).unwrap();
        assert_eq!(p.taxel_count(), 40);
        p.taxel_gains.iter_mut().for_each(|g| *g = 0.0);
        assert!(p.validate(&s).is_err());
        assert!(GraspPickup::nuskin(&s, 3, 0.01, 0).is_err());
        assert_eq!(GraspPickup::nuskin(&s, 2, 0.01, 0).unwrap().taxel_count(), 80);
    }
}
