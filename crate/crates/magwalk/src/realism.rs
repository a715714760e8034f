//! Floquet phase imprinting: sawtooth folding, finite optical resolution, superlattices,
//! alignment scans and the motional-excitation budget.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use rustfft::{num_complex::Complex64 as FC64, FftPlanner};
use statrs::function::erf::{erfc, erfc_inv};

use crate::operators::{BlochCell, FieldPhases, Flux, LatticeGeometry, TimeFrame};
use crate::spectra::{band_structure_for_cell, bulk_gap_table, BandStructure};
use crate::{Result, WalkError};

/// Default imaging wavelength over lattice constant.
pub const LAMBDA_RATIO: f64 = 1.43;
pub const NUMERICAL_APERTURE: f64 = 0.92;

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Gaussian PSF width in lattice units: the Abbe radius `lambda/(2 NA)` is taken as the
/// 1%-99% rise distance of an imaged edge.
pub fn psf_sigma(na: f64, lambda_ratio: f64) -> f64 {
    let z99 = -SQRT_2 * erfc_inv(2.0 * 0.99);
    lambda_ratio / (2.0 * na) / (2.0 * z99)
}

/// Piecewise-linear ideal phase ramp `Theta(v) = 2 pi \int_0^v phi`, with `phi` constant on unit
/// columns `[x, x + 1)`. Outside the listed columns the profile repeats (`periodic`) or
/// continues with the end values.
#[derive(Clone, Debug)]
pub struct Ramp {
    pub phi: Vec<f64>,
    pub periodic: bool,
    prefix: Vec<f64>,
}

impl Ramp {
    pub fn new(phi: Vec<f64>, periodic: bool) -> Self {
        let mut prefix = vec![0.0];
        for &f in &phi {
            prefix.push(prefix.last().unwrap() + 2.0 * PI * f);
        }
        Ramp { phi, periodic, prefix }
    }

    pub fn uniform(phi: f64) -> Self {
        Ramp::new(vec![phi], true)
    }

    fn len(&self) -> i64 {
        self.phi.len() as i64
    }

    /// `(Theta(x), slope)` at the left end of column `x`.
    fn column(&self, x: i64) -> (f64, f64) {
        let n = self.len();
        if self.periodic {
            let (c, r) = (x.div_euclid(n), x.rem_euclid(n) as usize);
            (c as f64 * self.prefix[n as usize] + self.prefix[r], 2.0 * PI * self.phi[r])
        } else if x < 0 {
            let s = 2.0 * PI * self.phi[0];
            (s * x as f64, s)
        } else if x >= n {
            let s = 2.0 * PI * self.phi[n as usize - 1];
            (self.prefix[n as usize] + s * (x - n) as f64, s)
        } else {
            (self.prefix[x as usize], 2.0 * PI * self.phi[x as usize])
        }
    }

    pub fn value(&self, v: f64) -> f64 {
        let x = v.floor();
        let (t, s) = self.column(x as i64);
        t + s * (v - x)
    }
}

/// Ramp folded into steps of `2 pi` at levels `Theta = c + 2 pi n`.
pub fn folded(ramp: &Ramp, c: f64, v: f64) -> f64 {
    let t = ramp.value(v);
    t - 2.0 * PI * ((t - c) / (2.0 * PI)).floor()
}

/// Folded ramp convolved with a normalized Gaussian of width `sigma`, evaluated at `u0`. The
/// integrand is linear between kinks and fold steps, so each piece integrates in closed form.
pub fn blurred_fold(ramp: &Ramp, c: f64, sigma: f64, u0: f64) -> f64 {
    if sigma <= 0.0 {
        return folded(ramp, c, u0);
    }
    let (lo, hi) = (u0 - 10.0 * sigma, u0 + 10.0 * sigma);
    let mut cuts = vec![lo, hi];
    let mut x = lo.floor() as i64;
    while (x as f64) < hi {
        let (a, b) = ((x as f64).max(lo), ((x + 1) as f64).min(hi));
        if x as f64 > lo {
            cuts.push(x as f64);
        }
        let (ta, tb) = (ramp.value(a), ramp.value(b));
        let (t0, t1) = (ta.min(tb), ta.max(tb));
        let n0 = ((t0 - c) / (2.0 * PI)).ceil() as i64;
        let n1 = ((t1 - c) / (2.0 * PI)).floor() as i64;
        for n in n0..=n1 {
            let level = c + 2.0 * PI * n as f64;
            if tb != ta {
                cuts.push(a + (level - ta) / (tb - ta) * (b - a));
            }
        }
        x += 1;
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let (mut acc, mut weight) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let (v1, v2) = (w[0], w[1]);
        if v2 <= v1 {
            continue;
        }
        let mid = 0.5 * (v1 + v2);
        let (f1, f2) = (folded(ramp, c, mid) + ramp.value(v1) - ramp.value(mid), folded(ramp, c, mid) + ramp.value(v2) - ramp.value(mid));
        let slope = (f2 - f1) / (v2 - v1);
        let offset = f1 - slope * v1;
        let (z1, z2) = ((v1 - u0) / sigma, (v2 - u0) / sigma);
        let mass = norm_cdf(z2) - norm_cdf(z1);
        acc += (offset + slope * u0) * mass + slope * sigma * (norm_pdf(z1) - norm_pdf(z2));
        weight += mass;
    }
    acc / weight
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PhaseProfile {
    /// spin-up imprint phase per lattice site, in `[0, 2 pi)`
    pub theta: Vec<f64>,
    pub phi: f64,
    pub m: usize,
    pub relative_shift: f64,
    pub na: Option<f64>,
    pub lambda_ratio: f64,
    /// PSF width in lattice units (zero without blur)
    pub sigma: f64,
}

impl PhaseProfile {
    /// Landau-gauge phases `2 pi phi x/m mod 2 pi` at the same sites.
    pub fn ideal(&self) -> Vec<f64> {
        (0..self.theta.len()).map(|x| (2.0 * PI * self.phi * x as f64 / self.m as f64).rem_euclid(2.0 * PI)).collect()
    }

    /// Largest circular deviation from [`PhaseProfile::ideal`] over the sites the superlattice
    /// occupies.
    pub fn max_site_error(&self) -> f64 {
        let ideal = self.ideal();
        (0..self.theta.len())
            .step_by(self.m)
            .map(|x| crate::linalg::wrap_angle(self.theta[x] - ideal[x]).abs())
            .fold(0.0, f64::max)
    }

    /// Phases seen by the superlattice sites `x = 0, m, 2m, ...`.
    pub fn superlattice_phases(&self) -> Vec<f64> {
        self.theta.iter().step_by(self.m).copied().collect()
    }
}

/// Sawtooth imprint for uniform flux `phi` per superlattice plaquette on an `m`-superlattice.
/// Edges sit at superlattice coordinates `n/phi - relative_shift`; `na = None` means no blur.
pub fn sawtooth_profile(phi: f64, m: usize, relative_shift: f64, na: Option<f64>, lambda_ratio: f64, length: usize) -> Result<PhaseProfile> {
    if !(phi > 0.0 && phi <= 0.5) {
        return Err(WalkError::param("phi", phi, "folded slope must lie in (0, 1/2]"));
    }
    if m == 0 || !m.is_power_of_two() {
        return Err(WalkError::param("m", m, "supershift must be 1, 2, 4, ..."));
    }
    if let Some(a) = na {
        if !(a > 0.0 && a <= 1.0) {
            return Err(WalkError::param("na", a, "numerical aperture must lie in (0, 1]"));
        }
    }
    let sigma = na.map_or(0.0, |a| psf_sigma(a, lambda_ratio));
    let ramp = Ramp::uniform(phi);
    let c = -2.0 * PI * phi * relative_shift;
    let su = sigma / m as f64;
    let theta = (0..length)
        .map(|x| blurred_fold(&ramp, c, su, x as f64 / m as f64).rem_euclid(2.0 * PI))
        .collect();
    Ok(PhaseProfile { theta, phi, m, relative_shift, na, lambda_ratio, sigma })
}

/// Imprinted phases for a column flux profile on a ring or open row, lattice units (`m = 1`);
/// folds are offset by `-2 pi phi_ref shift`.
pub fn imprint_row(ramp: &Ramp, phi_ref: f64, relative_shift: f64, sigma: f64, length: usize) -> Vec<f64> {
    let c = -2.0 * PI * phi_ref * relative_shift;
    (0..length).map(|x| blurred_fold(ramp, c, sigma, x as f64).rem_euclid(2.0 * PI)).collect()
}

/// Imprint over a 2D flux map (`flux[y * (lx - 1) + x]` on an open lattice, or `y * lx + x` on a
/// ring): rows are imprinted independently and then mixed along y by the PSF, using row weights
/// `Phi((y' + 1/2 - y)/sigma) - Phi((y' - 1/2 - y)/sigma)`. The mixing acts on `e^{i theta}`.
pub fn imprint_2d(geometry: LatticeGeometry, flux: &[f64], phi_ref: f64, relative_shift: f64, sigma: f64) -> Vec<f64> {
    let (px, _) = geometry.plaquette_dims();
    let periodic = geometry.bc_x == crate::operators::Boundary::Periodic;
    let rows: Vec<Vec<f64>> = (0..geometry.ly)
        .into_par_iter()
        .map(|y| {
            let py = y.min(flux.len() / px - 1);
            let ramp = Ramp::new(flux[py * px..(py + 1) * px].to_vec(), periodic);
            imprint_row(&ramp, phi_ref, relative_shift, sigma, geometry.lx)
        })
        .collect();
    let mut out = vec![0.0; geometry.sites()];
    for y in 0..geometry.ly {
        for x in 0..geometry.lx {
            let mut z = crate::C64::new(0.0, 0.0);
            if sigma <= 0.0 {
                z = crate::C64::from_polar(1.0, rows[y][x]);
            } else {
                let reach = (10.0 * sigma).ceil() as i64;
                for dy in -reach..=reach {
                    let yy = y as i64 + dy;
                    if yy < 0 || yy >= geometry.ly as i64 {
                        continue;
                    }
                    let w = norm_cdf((dy as f64 + 0.5) / sigma) - norm_cdf((dy as f64 - 0.5) / sigma);
                    z += crate::C64::from_polar(w, rows[yy as usize][x]);
                }
            }
            out[geometry.site(x, y)] = z.arg().rem_euclid(2.0 * PI);
        }
    }
    out
}

/// Site-diagonal phases `exp(i sigma_z theta)` replacing the ideal field operator.
pub fn field_op_from_profile(profile: &PhaseProfile) -> FieldPhases {
    FieldPhases::from_site_phase(&profile.theta)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ScanRow {
    pub m: usize,
    pub shift: f64,
    /// smallest width among the gaps of the ideal spectrum
    pub min_gap: f64,
    pub gaps: Vec<f64>,
}

/// Width `min_k E_{b+1} - max_k E_b` of the gap above band `b`, zero when closed.
pub fn labelled_gap_width(bands: &BandStructure, b: usize) -> f64 {
    let nb = bands.n_bands();
    let upper = if b + 1 < nb { bands.band_min(b + 1) } else { bands.band_min(0) + 2.0 * PI };
    (upper - bands.band_max(b)).max(0.0)
}

/// Gap widths of the uniform-flux walk with the imprinted profile, scanned over shift and `m`.
pub fn gap_width_scan(flux: Flux, m_list: &[usize], na: Option<f64>, shifts: &[f64], lambda_ratio: f64, grid: usize) -> Result<Vec<ScanRow>> {
    let labels: Vec<usize> = bulk_gap_table(&BlochCell::landau(flux), flux, 32)?.gaps.iter().map(|g| g.below).collect();
    let q = flux.q as usize;
    let jobs: Vec<(usize, f64)> = m_list.iter().flat_map(|&m| shifts.iter().map(move |&s| (m, s))).collect();
    jobs.par_iter()
        .map(|&(m, shift)| {
            let profile = sawtooth_profile(flux.value(), m, shift, na, lambda_ratio, q * m)?;
            let cell = BlochCell::from_y_phases(profile.superlattice_phases());
            let bands = band_structure_for_cell(&cell, flux, grid, grid, TimeFrame::Original)?;
            let gaps: Vec<f64> = labels.iter().map(|&b| labelled_gap_width(&bands, b)).collect();
            let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(ScanRow { m, shift, min_gap, gaps })
        })
        .collect()
}

/// Harmonic-well estimate `sqrt(2) phi^2 sinc^2(pi tau/tau_HO) / sqrt(V0/E_R)`.
pub fn p_ex_perturbative(phi: f64, v0_over_er: f64, tau_over_tau_ho: f64) -> f64 {
    let x = PI * tau_over_tau_ho;
    let sinc = if x == 0.0 {
        1.0
    } else if tau_over_tau_ho.fract() == 0.0 {
        0.0
    } else {
        x.sin() / x
    };
    SQRT_2 * phi * phi * sinc * sinc / v0_over_er.sqrt()
}

pub fn shallow_lattice_warning(v0_over_er: f64) -> Option<String> {
    (v0_over_er < 100.0).then(|| format!("V0/E_R = {v0_over_er} is not deep; the harmonic estimate is unreliable"))
}

/// Coupling `(hbar/tau) B x0` with `x0 = 1/(pi (8 V0/E_R)^{1/4})`, in units of `hbar/tau`.
pub fn assembled_coupling(phi: f64, v0_over_er: f64) -> f64 {
    2.0 * PI * phi / (PI * (8.0 * v0_over_er).powf(0.25))
}

/// Closed-form prefactor `2^{1/4} phi (E_R/V0)^{1/4}` of the flashed-gradient coupling.
pub fn coupling_prefactor(phi: f64, v0_over_er: f64) -> f64 {
    2f64.powf(0.25) * phi / v0_over_er.powf(0.25)
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SplitStepGrid {
    /// spatial points per lattice site
    pub points_per_site: usize,
    pub window_sites: usize,
    /// real-time steps per harmonic period (at least `min_steps` overall)
    pub steps_per_period: usize,
    pub min_steps: usize,
}

impl Default for SplitStepGrid {
    fn default() -> Self {
        SplitStepGrid { points_per_site: 128, window_sites: 5, steps_per_period: 2000, min_steps: 400 }
    }
}

impl SplitStepGrid {
    fn refined(&self) -> Self {
        SplitStepGrid {
            points_per_site: 2 * self.points_per_site,
            steps_per_period: 2 * self.steps_per_period,
            min_steps: 2 * self.min_steps,
            ..*self
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ExcitationBudget {
    pub v0_over_er: f64,
    pub phi: f64,
    pub tau_over_tau_ho: f64,
    pub p_ex_perturbative: f64,
    pub p_ex_numeric: Option<f64>,
}

/// Harmonic period of one well in units of `hbar/E_R`.
pub fn tau_ho(v0_over_er: f64) -> f64 {
    2.0 * PI / (2.0 * v0_over_er).sqrt()
}

/// Split-operator propagation in one well of `V0 sin^2(pi x)` (lengths in lattice constants,
/// energies in `E_R`, kinetic term `k^2/(2 pi^2)`).
struct Propagator {
    n: usize,
    x: Vec<f64>,
    k2: Vec<f64>,
    v: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Propagator {
    fn new(v0: f64, grid: &SplitStepGrid) -> Self {
        let n = grid.points_per_site * grid.window_sites;
        let len = grid.window_sites as f64;
        let dx = len / n as f64;
        let x: Vec<f64> = (0..n).map(|i| -len / 2.0 + dx * i as f64).collect();
        let k2 = (0..n)
            .map(|i| {
                let j = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                let k = 2.0 * PI * j / len;
                k * k / (2.0 * PI * PI)
            })
            .collect();
        let v = x.iter().map(|&xi| v0 * (PI * xi).sin().powi(2)).collect();
        let mut planner = FftPlanner::new();
        Propagator { n, fft: planner.plan_fft_forward(n), ifft: planner.plan_fft_inverse(n), x, k2, v }
    }

    /// One Strang step with potential `v + force * x`; `imaginary` relaxes instead.
    fn step(&self, psi: &mut [FC64], dt: f64, force: f64, imaginary: bool) {
        let half = |e: f64| if imaginary { FC64::new((-e * dt / 2.0).exp(), 0.0) } else { FC64::from_polar(1.0, -e * dt / 2.0) };
        for i in 0..self.n {
            psi[i] *= half(self.v[i] + force * self.x[i]);
        }
        self.fft.process(psi);
        for i in 0..self.n {
            let e = self.k2[i];
            psi[i] *= if imaginary { FC64::new((-e * dt).exp(), 0.0) } else { FC64::from_polar(1.0, -e * dt) };
        }
        self.ifft.process(psi);
        let scale = 1.0 / self.n as f64;
        for i in 0..self.n {
            psi[i] *= half(self.v[i] + force * self.x[i]) * scale;
        }
    }

    fn normalize(psi: &mut [FC64]) {
        let s: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= s);
    }

    fn ground_state(&self, v0: f64) -> Vec<FC64> {
        let width2 = 1.0 / (PI * PI * (2.0 * v0).sqrt());
        let mut psi: Vec<FC64> = self.x.iter().map(|&x| FC64::new((-x * x / (2.0 * width2)).exp(), 0.0)).collect();
        Self::normalize(&mut psi);
        let dt = tau_ho(v0) / 400.0;
        let mut prev = psi.clone();
        for it in 0..200_000 {
            self.step(&mut psi, dt, 0.0, true);
            Self::normalize(&mut psi);
            if it % 100 == 99 {
                let d: f64 = psi.iter().zip(&prev).map(|(a, b)| (a - b).norm_sqr()).sum();
                if d < 1e-28 {
                    break;
                }
                prev.copy_from_slice(&psi);
            }
        }
        psi
    }
}

fn split_step_once(phi: f64, v0: f64, tau_ratio: f64, grid: &SplitStepGrid) -> f64 {
    let prop = Propagator::new(v0, grid);
    let g = prop.ground_state(v0);
    let tau = tau_ratio * tau_ho(v0);
    let steps = ((tau_ratio * grid.steps_per_period as f64).ceil() as usize).max(grid.min_steps);
    let dt = tau / steps as f64;
    let force = 2.0 * PI * phi / tau;
    let mut psi = g.clone();
    let mut reference = g;
    for _ in 0..steps {
        prop.step(&mut psi, dt, force, false);
        prop.step(&mut reference, dt, 0.0, false);
    }
    let overlap: FC64 = reference.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
    (1.0 - overlap.norm_sqr()).max(0.0)
}

/// Excitation probability after flashing the gradient for `tau`, measured against the
/// unperturbed evolution of the relaxed ground state and checked against a doubled grid.
pub fn p_ex_splitstep(phi: f64, v0_over_er: f64, tau_over_tau_ho: f64, grid: SplitStepGrid) -> Result<f64> {
    if grid.points_per_site < 16 {
        return Err(WalkError::param("points_per_site", grid.points_per_site, "need at least 16 points per site"));
    }
    let width = (1.0 / (PI * PI * (2.0 * v0_over_er).sqrt())).sqrt();
    if width * grid.points_per_site as f64 <= 4.0 {
        return Err(WalkError::param(
            "points_per_site",
            grid.points_per_site,
            format!("ground-state width {width:.4} sites is not resolved"),
        ));
    }
    if !(tau_over_tau_ho > 0.0) {
        return Err(WalkError::param("tau_over_tauHO", tau_over_tau_ho, "must be positive"));
    }
    let coarse = split_step_once(phi, v0_over_er, tau_over_tau_ho, &grid);
    let fine = split_step_once(phi, v0_over_er, tau_over_tau_ho, &grid.refined());
    let floor = 1e-12;
    if (coarse - fine).abs() > 0.1 * fine.max(floor) && (coarse - fine).abs() > floor {
        return Err(WalkError::NotConverged { coarse, fine });
    }
    Ok(fine)
}

pub fn excitation_budget(phi: f64, v0_over_er: f64, tau_over_tau_ho: f64, numeric: Option<SplitStepGrid>) -> Result<ExcitationBudget> {
    let p_num = match numeric {
        Some(g) => Some(p_ex_splitstep(phi, v0_over_er, tau_over_tau_ho, g)?),
        None => None,
    };
    Ok(ExcitationBudget {
        v0_over_er,
        phi,
        tau_over_tau_ho,
        p_ex_perturbative: p_ex_perturbative(phi, v0_over_er, tau_over_tau_ho),
        p_ex_numeric: p_num,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psf_width() {
        assert!((psf_sigma(0.92, 1.43) - 0.167042).abs() < 1e-5);
    }

    #[test]
    fn ideal_profile_is_landau() {
        let p = sawtooth_profile(1.0 / 3.0, 1, 0.5, None, LAMBDA_RATIO, 12).unwrap();
        assert!(p.max_site_error() < 1e-12);
    }

    #[test]
    fn blur_of_linear_ramp_is_identity() {
        // far from any fold a Gaussian leaves a linear function unchanged
        let r = Ramp::uniform(0.01);
        let v = blurred_fold(&r, -PI, 0.3, 3.0);
        assert!((v - r.value(3.0)).abs() < 1e-12);
    }

    #[test]
    fn blurred_step_hits_midpoint() {
        let r = Ramp::uniform(1.0 / 3.0);
        // fold at u = 3 when c = 0: value jumps from 2 pi to 0
        let v = blurred_fold(&r, 0.0, 0.2, 3.0);
        assert!((v - PI).abs() < 1e-9);
    }

    #[test]
    fn perturbative_limits() {
        assert!((p_ex_perturbative(1.0 / 3.0, 850.0, 0.0) - 5.389e-3).abs() < 1e-6);
        assert_eq!(p_ex_perturbative(1.0 / 3.0, 850.0, 1.0), 0.0);
    }

    #[test]
    fn coupling_composition() {
        assert!((assembled_coupling(0.3, 850.0) - coupling_prefactor(0.3, 850.0)).abs() < 1e-12);
        let c = coupling_prefactor(1.0 / 3.0, 850.0);
        assert!((c * c - p_ex_perturbative(1.0 / 3.0, 850.0, 0.0)).abs() < 1e-15);
    }
}
