//! Chiral, sublattice and particle-hole identities of the walk, checked as operator equations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::SpinorField;
use crate::linalg::{eigenphases, max_abs, phase_multiset_distance};
use crate::operators::{BlochCell, Flux, GaugeField, RealSpaceWalk, TimeFrame};
use crate::{CMatrix, Result, C64};

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_SEED: u64 = 20;
pub const PROBE_STATES: usize = 20;
pub const FOLDING_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, serde::Serialize)]
pub struct SymmetryReport {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
    pub seed: Option<u64>,
}

impl SymmetryReport {
    fn new(name: &str, residual: f64, seed: Option<u64>) -> Self {
        Self::with_tolerance(name, residual, seed, SYMMETRY_TOLERANCE)
    }

    fn with_tolerance(name: &str, residual: f64, seed: Option<u64>, tol: f64) -> Self {
        SymmetryReport { name: name.to_string(), residual, pass: residual < tol, seed }
    }
}

/// `sigma_x` in the spin-major Bloch basis of an `n`-site cell.
pub fn gamma(n: usize) -> CMatrix {
    let mut g = CMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        g[(j, n + j)] = C64::new(1.0, 0.0);
        g[(n + j, j)] = C64::new(1.0, 0.0);
    }
    g
}

/// `max |Gamma W Gamma - W^dagger|` in one frame.
pub fn chiral_residual(cell: &BlochCell, k: (f64, f64), frame: TimeFrame) -> f64 {
    let w = cell.step(k.0, k.1, frame);
    let g = gamma(cell.n());
    max_abs(&(&g * &w * &g - w.adjoint()))
}

/// Chiral symmetry in both symmetric frames, maximized over `k_set`.
pub fn check_chiral(p: i64, q: i64, k_set: &[(f64, f64)]) -> Result<SymmetryReport> {
    let cell = BlochCell::landau(Flux::new(p, q)?);
    Ok(check_chiral_cell(&cell, k_set))
}

pub fn check_chiral_cell(cell: &BlochCell, k_set: &[(f64, f64)]) -> SymmetryReport {
    let r = k_set
        .par_iter()
        .map(|&k| chiral_residual(cell, k, TimeFrame::Primed).max(chiral_residual(cell, k, TimeFrame::DoublePrimed)))
        .reduce(|| 0.0, f64::max);
    SymmetryReport::new("chiral", r, None)
}

/// Seeded random normalized states on the lattice of `gauge`.
pub fn random_states(gauge: &GaugeField, count: usize, seed: u64) -> Vec<SpinorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut s = SpinorField::zeros(gauge.geometry);
            for a in s.amplitudes.iter_mut() {
                *a = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            s.normalize();
            s
        })
        .collect()
}

fn apply(walk: &RealSpaceWalk, s: &SpinorField) -> Result<SpinorField> {
    let mut out = s.clone();
    let mut scratch = Vec::new();
    walk.step(&mut out, &mut scratch)?;
    Ok(out)
}

fn max_diff(a: &SpinorField, b: &SpinorField) -> f64 {
    a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `chi W chi^dagger = -W` with `chi = (-1)^y` on a torus with even `Ly`.
///
/// Only the original frame flips both coordinate parities every step; the split
/// frames move some paths by zero in one direction, so they fail this identity.
pub fn check_alternating_sublattice(gauge: &GaugeField, frame: TimeFrame, seed: u64) -> Result<SymmetryReport> {
    let geo = gauge.geometry;
    if geo.ly % 2 != 0 {
        return Err(crate::WalkError::param("ly", geo.ly, "alternating sublattice needs an even ring"));
    }
    let walk = RealSpaceWalk::from_gauge(gauge, frame, 1)?;
    let chi = |s: &SpinorField| {
        let mut t = s.clone();
        let n = geo.sites();
        for y in (1..geo.ly).step_by(2) {
            for x in 0..geo.lx {
                let i = geo.site(x, y);
                t.amplitudes[i] = -t.amplitudes[i];
                t.amplitudes[n + i] = -t.amplitudes[n + i];
            }
        }
        t
    };
    let mut r: f64 = 0.0;
    for s in random_states(gauge, PROBE_STATES, seed) {
        let lhs = chi(&apply(&walk, &chi(&s))?);
        let mut rhs = apply(&walk, &s)?;
        rhs.amplitudes.iter_mut().for_each(|z| *z = -*z);
        r = r.max(max_diff(&lhs, &rhs));
    }
    Ok(SymmetryReport::new("alternating_sublattice", r, Some(seed)))
}

/// Largest amplitude that one step transfers between the `x + y` parity sublattices.
/// Holds in the original frame only, like [`check_alternating_sublattice`].
pub fn check_conserved_sublattice(gauge: &GaugeField, frame: TimeFrame, seed: u64) -> Result<SymmetryReport> {
    let geo = gauge.geometry;
    let walk = RealSpaceWalk::from_gauge(gauge, frame, 1)?;
    let n = geo.sites();
    let mut r: f64 = 0.0;
    for (i, mut s) in random_states(gauge, PROBE_STATES, seed).into_iter().enumerate() {
        let keep = i % 2;
        for y in 0..geo.ly {
            for x in 0..geo.lx {
                if (x + y) % 2 != keep {
                    let j = geo.site(x, y);
                    s.amplitudes[j] = C64::new(0.0, 0.0);
                    s.amplitudes[n + j] = C64::new(0.0, 0.0);
                }
            }
        }
        let out = apply(&walk, &s)?;
        for y in 0..geo.ly {
            for x in 0..geo.lx {
                if (x + y) % 2 != keep {
                    let j = geo.site(x, y);
                    r = r.max(out.amplitudes[j].norm()).max(out.amplitudes[n + j].norm());
                }
            }
        }
    }
    Ok(SymmetryReport::new("conserved_sublattice", r, Some(seed)))
}

/// Particle-hole `W(phi, k)* = W(-phi, -k)` and time reversal
/// `Gamma W'(phi, k)* Gamma = W'(-phi, -k)^dagger` in Bloch form.
pub fn check_particle_hole(p: i64, q: i64, k_set: &[(f64, f64)]) -> Result<Vec<SymmetryReport>> {
    let f = Flux::new(p, q)?;
    let (a, b) = (BlochCell::landau(f), BlochCell::landau(f.negated()));
    let g = gamma(a.n());
    let (ph, tr) = k_set
        .par_iter()
        .map(|&(kx, ky)| {
            let mut ph: f64 = 0.0;
            for frame in TimeFrame::ALL {
                let w = a.step(kx, ky, frame);
                let wm = b.step(-kx, -ky, frame);
                ph = ph.max(max_abs(&(w.map(|z| z.conj()) - wm)));
            }
            let w = a.step(kx, ky, TimeFrame::Primed).map(|z| z.conj());
            let wm = b.step(-kx, -ky, TimeFrame::Primed);
            let tr = max_abs(&(&g * w * &g - wm.adjoint()));
            (ph, tr)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    Ok(vec![SymmetryReport::new("particle_hole", ph, None), SymmetryReport::new("time_reversal", tr, None)])
}

/// Real-space particle-hole identity `W(A)* psi = W(-A) psi` on random states.
pub fn check_particle_hole_real(gauge: &GaugeField, frame: TimeFrame, seed: u64) -> Result<SymmetryReport> {
    let neg = GaugeField::from_links(
        gauge.geometry,
        gauge.ax_link.iter().map(|a| -a).collect(),
        gauge.ay_link.iter().map(|a| -a).collect(),
    )?;
    let (w, wm) = (RealSpaceWalk::from_gauge(gauge, frame, 1)?, RealSpaceWalk::from_gauge(&neg, frame, 1)?);
    let conj = |s: &SpinorField| {
        let mut t = s.clone();
        t.amplitudes.iter_mut().for_each(|z| *z = z.conj());
        t
    };
    let mut r: f64 = 0.0;
    for s in random_states(gauge, PROBE_STATES, seed) {
        let lhs = conj(&apply(&w, &conj(&s))?);
        let rhs = apply(&wm, &s)?;
        r = r.max(max_diff(&lhs, &rhs));
    }
    Ok(SymmetryReport::new("particle_hole_real_space", r, Some(seed)))
}

/// Reciprocal vector of the `(x + y)`-parity sublattice zone for a `q`-site cell.
pub fn sublattice_vector(q: usize) -> (f64, f64) {
    use std::f64::consts::PI;
    if q % 2 == 0 {
        (0.0, PI)
    } else {
        (-PI / q as f64, PI)
    }
}

/// Eigenphase multisets at `k` and `k + g2` in every frame.
pub fn check_spectrum_folding(p: i64, q: i64, k_set: &[(f64, f64)]) -> Result<SymmetryReport> {
    let cell = BlochCell::landau(Flux::new(p, q)?);
    let g = sublattice_vector(cell.n());
    let r = k_set
        .par_iter()
        .map(|&(kx, ky)| {
            TimeFrame::ALL
                .iter()
                .map(|&f| {
                    let a = eigenphases(&cell.step(kx, ky, f), 0.0);
                    let b = eigenphases(&cell.step(kx + g.0, ky + g.1, f), 0.0);
                    phase_multiset_distance(&a, &b)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(SymmetryReport::with_tolerance("spectrum_folding", r, None, FOLDING_TOLERANCE))
}

/// Quasienergies at `(kx, ky + pi)` equal those at `k` shifted by `pi`, in every frame.
pub fn check_alternating_spectrum(p: i64, q: i64, k_set: &[(f64, f64)]) -> Result<SymmetryReport> {
    use std::f64::consts::PI;
    let cell = BlochCell::landau(Flux::new(p, q)?);
    let r = k_set
        .par_iter()
        .map(|&(kx, ky)| {
            TimeFrame::ALL
                .iter()
                .map(|&f| {
                    let a: Vec<f64> = eigenphases(&cell.step(kx, ky, f), 0.0).iter().map(|e| e + PI).collect();
                    let b = eigenphases(&cell.step(kx, ky + PI, f), 0.0);
                    phase_multiset_distance(&a, &b)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(SymmetryReport::with_tolerance("alternating_spectrum", r, None, FOLDING_TOLERANCE))
}

/// Seeded uniform k points over the magnetic zone of a `q`-site cell.
pub fn random_k_points(q: usize, count: usize, seed: u64) -> Vec<(f64, f64)> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.random_range(-PI / q as f64..PI / q as f64), rng.random_range(-PI..PI)))
        .collect()
}

/// Every Bloch identity for one flux, at `count` seeded k points.
pub fn bloch_suite(p: i64, q: i64, count: usize, seed: u64) -> Result<Vec<SymmetryReport>> {
    let ks = random_k_points(q as usize, count, seed);
    let mut out = vec![check_chiral(p, q, &ks)?];
    out.extend(check_particle_hole(p, q, &ks)?);
    out.push(check_spectrum_folding(p, q, &ks)?);
    out.push(check_alternating_spectrum(p, q, &ks)?);
    for r in out.iter_mut() {
        r.seed = Some(seed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::LatticeGeometry;

    #[test]
    fn original_frame_is_not_chiral() {
        let cell = BlochCell::landau(Flux::new(0, 1).unwrap());
        assert!(chiral_residual(&cell, (0.3, -0.7), TimeFrame::Original) > 0.1);
        assert!(chiral_residual(&cell, (0.3, -0.7), TimeFrame::Primed) < 1e-13);
    }

    #[test]
    fn zero_field_torus_identities() {
        let g = GaugeField::zero(LatticeGeometry::torus(8, 8));
        assert!(check_alternating_sublattice(&g, TimeFrame::Original, 1).unwrap().pass);
        assert!(check_conserved_sublattice(&g, TimeFrame::Original, 1).unwrap().pass);
        assert!(check_particle_hole_real(&g, TimeFrame::Original, 1).unwrap().pass);
    }

    #[test]
    fn split_frames_mix_sublattices() {
        let g = GaugeField::zero(LatticeGeometry::torus(8, 8));
        assert!(!check_conserved_sublattice(&g, TimeFrame::Primed, 1).unwrap().pass);
    }
}
