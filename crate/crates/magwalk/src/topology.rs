//! Chern numbers, RLBL gap invariants, chiral winding numbers and the bulk-boundary check.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::linalg::{kron, quasienergy, unitary_eigen, wrap_angle};
use crate::operators::{effective_hamiltonian, spectral_flow_operator, BlochCell, Flux, TimeFrame, HALF_STEP_UP};
use crate::spectra::{band_structure_for_cell, BandGroup, BandStructure, DiracPoint, Gap, GapTable, RibbonSpectrum, EDGE_THRESHOLD};
use crate::{CMatrix, Result, WalkError, C64};

#[derive(Clone, Debug, serde::Serialize)]
pub struct ChernResult {
    pub band_group: BandGroup,
    pub value: i64,
    pub grid: (usize, usize),
    /// `|C' - C|` after random per-k rephasing of every eigenvector
    pub gauge_check: f64,
    /// largest plaquette field strength, a resolution diagnostic
    pub max_field: f64,
}

/// Minimal separation between the group's energies and the rest allowed at any grid point.
pub const ISOLATION: f64 = 1e-8;

fn group_vectors(bands: &BandStructure, idx: usize, cols: &[usize]) -> CMatrix {
    let v = &bands.eigenvectors[idx];
    CMatrix::from_fn(v.nrows(), cols.len(), |r, c| v[(r, cols[c])])
}

fn link(a: &CMatrix, b: &CMatrix) -> C64 {
    (a.adjoint() * b).determinant()
}

fn check_isolated(bands: &BandStructure, group: BandGroup) -> Result<()> {
    for iy in 0..bands.ny {
        for ix in 0..bands.nx {
            let e = &bands.energies[bands.index(ix, iy)];
            let mut sep = f64::INFINITY;
            for (i, &a) in e.iter().enumerate() {
                if !group.contains(i) {
                    continue;
                }
                for (j, &b) in e.iter().enumerate() {
                    if !group.contains(j) {
                        sep = sep.min(wrap_angle(a - b).abs());
                    }
                }
            }
            if sep < ISOLATION {
                let (kx, ky) = bands.k(ix, iy);
                return Err(WalkError::NotIsolated { group: group.to_string(), gap: sep, kx, ky });
            }
        }
    }
    Ok(())
}

/// Integer vortex count and float flux sum on given vectors.
fn link_variable_sum(bands: &BandStructure, vecs: &[CMatrix]) -> Result<(i64, f64, f64)> {
    let (nx, ny) = (bands.nx, bands.ny);
    let mut ux = Vec::with_capacity(nx * ny);
    let mut uy = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let here = &vecs[bands.index(ix, iy)];
            let lx = link(here, &vecs[bands.index(ix + 1, iy)]);
            let ly = link(here, &vecs[bands.index(ix, iy + 1)]);
            for l in [lx, ly] {
                if l.norm() < 1e-10 {
                    return Err(WalkError::Quantization {
                        what: format!("link variable vanishes at grid {nx}x{ny}"),
                        residual: l.norm(),
                    });
                }
            }
            ux.push(lx / lx.norm());
            uy.push(ly / ly.norm());
        }
    }
    let (mut vortices, mut flux, mut max_field) = (0i64, 0.0, 0.0f64);
    for iy in 0..ny {
        for ix in 0..nx {
            let a = bands.index(ix, iy);
            let b = bands.index(ix + 1, iy);
            let c = bands.index(ix, iy + 1);
            let f = (ux[a] * uy[b] * ux[c].conj() * uy[a].conj()).arg();
            let curl = ux[a].arg() + uy[b].arg() - ux[c].arg() - uy[a].arg();
            vortices += ((curl - f) / (2.0 * PI)).round() as i64;
            flux += f;
            max_field = max_field.max(f.abs());
        }
    }
    Ok((-vortices, flux / (2.0 * PI), max_field))
}

/// Link-variable Chern number of a band group on the grid of `bands`.
pub fn chern_number(bands: &BandStructure, group: BandGroup) -> Result<ChernResult> {
    check_isolated(bands, group)?;
    let cols = group.indices();
    let vecs: Vec<CMatrix> = (0..bands.nx * bands.ny).map(|i| group_vectors(bands, i, &cols)).collect();
    let (value, flux, max_field) = link_variable_sum(bands, &vecs)?;
    let residual = (flux - value as f64).abs();
    if residual > 1e-6 {
        return Err(WalkError::Quantization { what: format!("Chern number of {group}"), residual });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let rephased: Vec<CMatrix> = vecs
        .iter()
        .map(|v| {
            let mut w = v.clone();
            for mut col in w.column_iter_mut() {
                col *= C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
            }
            w
        })
        .collect();
    let (_, flux2, _) = link_variable_sum(bands, &rephased)?;
    Ok(ChernResult {
        band_group: group,
        value,
        grid: (bands.nx, bands.ny),
        gauge_check: (flux2 - flux).abs(),
        max_field,
    })
}

/// Chern number on an `n x n` grid, doubled until the value is stable under one more doubling
/// and no plaquette carries more than `pi/2`.
pub fn chern_number_converged(cell: &BlochCell, flux: Flux, group: BandGroup, n: usize, n_max: usize) -> Result<ChernResult> {
    let mut grid = n;
    let mut prev: Option<ChernResult> = None;
    while grid <= n_max {
        let bands = band_structure_for_cell(cell, flux, grid, grid, TimeFrame::Original)?;
        let r = match chern_number(&bands, group) {
            Ok(r) => r,
            Err(WalkError::Quantization { .. }) => {
                prev = None;
                grid *= 2;
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some(p) = &prev {
            if p.value == r.value && p.max_field < PI / 2.0 {
                return Ok(p.clone());
            }
        }
        prev = Some(r);
        grid *= 2;
    }
    Err(WalkError::Quantization {
        what: format!("Chern number of {group} did not stabilize up to grid {n_max}"),
        residual: f64::NAN,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct RlblResult {
    pub energy: f64,
    pub value: i64,
    pub raw_flow: f64,
    pub s: usize,
    pub k_probe: (f64, f64),
    /// values at every probe checked
    pub probes: Vec<((f64, f64), i64)>,
}

pub const RLBL_S: usize = 15;
pub const RLBL_PROBE: (f64, f64) = (0.1, 0.1);
const SECOND_PROBE: (f64, f64) = (-0.37, 0.23);

/// Spectral flow `(1/2 pi) [sum E(2 pi/s) - sum E(0)]` at one quasimomentum.
pub fn spectral_flow(flux: Flux, energy: f64, s: usize, k: (f64, f64)) -> Result<f64> {
    let mut total = [0.0; 2];
    for (slot, beta) in [0.0, 2.0 * PI / s as f64].into_iter().enumerate() {
        let u = spectral_flow_operator(flux.p, flux.q, beta, energy, k.0, k.1, s)?;
        let (vals, _) = unitary_eigen(&u);
        for l in vals {
            let dist = (l + C64::new(1.0, 0.0)).norm();
            if dist < 1e-8 {
                return Err(WalkError::GaplessAtCut { energy: energy + PI, distance: dist });
            }
            total[slot] += quasienergy(l, 0.0);
        }
    }
    Ok((total[1] - total[0]) / (2.0 * PI))
}

fn quantized_flow(flux: Flux, energy: f64, s: usize, k: (f64, f64)) -> Result<(i64, f64, usize)> {
    let mut s = s;
    for _ in 0..4 {
        let raw = spectral_flow(flux, energy, s, k)?;
        if (raw - raw.round()).abs() < 1e-6 {
            return Ok((raw.round() as i64, raw, s));
        }
        s *= 2;
    }
    let raw = spectral_flow(flux, energy, s, k)?;
    Err(WalkError::Quantization {
        what: format!("RLBL flow at E = {energy}"),
        residual: (raw - raw.round()).abs(),
    })
}

/// RLBL invariant of the gap containing `energy`, checked on a second quasimomentum.
pub fn rlbl_invariant(p: i64, q: i64, energy: f64, s: usize, k_probe: (f64, f64), gaps: &GapTable) -> Result<RlblResult> {
    let flux = Flux::new(p, q)?;
    if s < 1 {
        return Err(WalkError::param("s", s, "must be at least 1"));
    }
    if gaps.find(energy).is_none() {
        return Err(WalkError::NotInGap { energy });
    }
    let (value, raw, s_used) = quantized_flow(flux, energy, s, k_probe)?;
    let mut probes = vec![(k_probe, value)];
    let other = if k_probe == SECOND_PROBE { RLBL_PROBE } else { SECOND_PROBE };
    let (v2, _, _) = quantized_flow(flux, energy, s, other)?;
    probes.push((other, v2));
    if v2 != value {
        return Err(WalkError::Quantization {
            what: format!("RLBL value depends on the probe: {value} at {k_probe:?}, {v2} at {other:?}"),
            residual: (v2 - value).abs() as f64,
        });
    }
    Ok(RlblResult { energy, value, raw_flow: raw, s: s_used, k_probe, probes })
}

/// RLBL invariants at the midgap energy of every gap, in gap-table order.
pub fn rlbl_all_gaps(p: i64, q: i64, s: usize, gaps: &GapTable) -> Result<Vec<RlblResult>> {
    gaps.gaps.par_iter().map(|g| rlbl_invariant(p, q, g.midgap, s, RLBL_PROBE, gaps)).collect()
}

/// Closed loop in the Brillouin zone parametrized by `t` in `[0, 1)`.
#[derive(Clone, Copy, Debug)]
pub enum Contour {
    Circle { center: (f64, f64), radius: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Contour {
    pub fn point(&self, t: f64) -> (f64, f64) {
        match *self {
            Contour::Circle { center, radius } => {
                let a = 2.0 * PI * t;
                (center.0 + radius * a.cos(), center.1 + radius * a.sin())
            }
            Contour::Rectangle { x0, x1, y0, y1 } => {
                let (w, h) = (x1 - x0, y1 - y0);
                let s = t.rem_euclid(1.0) * 2.0 * (w + h);
                if s < w {
                    (x0 + s, y0)
                } else if s < w + h {
                    (x1, y0 + s - w)
                } else if s < 2.0 * w + h {
                    (x1 - (s - w - h), y1)
                } else {
                    (x0, y1 - (s - 2.0 * w - h))
                }
            }
        }
    }
}

pub const CONTOUR_POINTS: usize = 256;
pub const DET_FLOOR: f64 = 1e-8;

/// `(1/2 pi i) \oint d log det h` with adaptive bisection keeping every phase step below `pi/2`.
/// `reversed` traverses the contour backwards.
pub fn winding_number(h: impl Fn(f64, f64) -> Result<CMatrix>, contour: &Contour, reversed: bool) -> Result<i64> {
    let det_at = |t: f64| -> Result<C64> {
        let t = if reversed { 1.0 - t } else { t };
        let (kx, ky) = contour.point(t);
        let d = h(kx, ky)?.determinant();
        if d.norm() < DET_FLOOR {
            return Err(WalkError::DeterminantVanishes { value: d.norm() });
        }
        Ok(d)
    };
    fn segment(det_at: &dyn Fn(f64) -> Result<C64>, t0: f64, d0: C64, t1: f64, d1: C64, depth: u32) -> Result<f64> {
        let step = (d1 / d0).arg();
        if step.abs() <= PI / 2.0 || depth > 40 {
            return Ok(step);
        }
        let tm = 0.5 * (t0 + t1);
        let dm = det_at(tm)?;
        Ok(segment(det_at, t0, d0, tm, dm, depth + 1)? + segment(det_at, tm, dm, t1, d1, depth + 1)?)
    }
    let mut total = 0.0;
    let first = det_at(0.0)?;
    let mut prev = first;
    for i in 1..=CONTOUR_POINTS {
        let t = i as f64 / CONTOUR_POINTS as f64;
        let d = if i == CONTOUR_POINTS { first } else { det_at(t)? };
        total += segment(&det_at, (i - 1) as f64 / CONTOUR_POINTS as f64, prev, t, d, 0)?;
        prev = d;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// `kron(Hadamard, I_n)`, which diagonalizes `Gamma = sigma_x` in the spin-major basis.
pub fn chiral_rotation(n: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = CMatrix::from_row_slice(2, 2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)]);
    kron(&h, &CMatrix::identity(n, n))
}

/// Upper-right `n x n` block of `R M R^dagger`.
pub fn chiral_block(m: &CMatrix, upper: bool, right: bool) -> CMatrix {
    let n = m.nrows() / 2;
    let r = chiral_rotation(n);
    let t = &r * m * r.adjoint();
    let (r0, c0) = (if upper { 0 } else { n }, if right { n } else { 0 });
    t.view((r0, c0), (n, n)).into_owned()
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct DiracCharge {
    pub k: (f64, f64),
    pub energy: f64,
    pub nu_primed: i64,
    pub nu_doubleprimed: i64,
    pub nu0: i64,
    pub nu_pi: i64,
    /// half-step cross-check windings of the `b` and `d` blocks of `W_up`
    pub nu_b: i64,
    pub nu_d: i64,
}

/// Topological charges of a Dirac point from the effective Hamiltonians of both chiral frames,
/// cross-checked on the half-step operator: `nu0 = nu[b]` and `nu_pi = -nu[d]`.
pub fn dirac_charges(p: i64, q: i64, point: &DiracPoint, radius: f64) -> Result<DiracCharge> {
    let cell = BlochCell::landau(Flux::new(p, q)?);
    dirac_charges_cell(&cell, point, radius)
}

pub fn dirac_charges_cell(cell: &BlochCell, point: &DiracPoint, radius: f64) -> Result<DiracCharge> {
    let contour = Contour::Circle { center: point.k, radius };
    let heff_block = |frame: TimeFrame| {
        move |kx: f64, ky: f64| -> Result<CMatrix> {
            let h = effective_hamiltonian(&cell.step(kx, ky, frame), 0.0)?;
            Ok(chiral_block(&h.matrix, true, true))
        }
    };
    let nu_p = winding_number(heff_block(TimeFrame::Primed), &contour, false)?;
    let nu_pp = winding_number(heff_block(TimeFrame::DoublePrimed), &contour, false)?;
    let (kx, ky) = point.k;
    if (nu_p + nu_pp) % 2 != 0 {
        return Err(WalkError::ChargeMismatch { kx, ky, detail: format!("nu' = {nu_p} and nu'' = {nu_pp} have different parity") });
    }
    let half = |upper: bool| move |kx: f64, ky: f64| -> Result<CMatrix> { Ok(chiral_block(&cell.product(HALF_STEP_UP, kx, ky), upper, true)) };
    let nu_b = winding_number(half(true), &contour, false)?;
    let nu_d = winding_number(half(false), &contour, false)?;
    let nu0 = (nu_p + nu_pp) / 2;
    let nu_pi = (nu_p - nu_pp) / 2;
    if nu0 != nu_b || nu_pi != -nu_d {
        return Err(WalkError::ChargeMismatch {
            kx,
            ky,
            detail: format!("effective Hamiltonian gives (nu0, nu_pi) = ({nu0}, {nu_pi}); half step gives nu[b] = {nu_b}, nu[d] = {nu_d}"),
        });
    }
    Ok(DiracCharge { k: point.k, energy: point.energy, nu_primed: nu_p, nu_doubleprimed: nu_pp, nu0, nu_pi, nu_b, nu_d })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct Crossing {
    pub ky: f64,
    pub sign: i64,
    pub edge: Option<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EdgeCount {
    pub edge_site: usize,
    /// signed crossings times the edge orientation
    pub net: i64,
    pub modes: usize,
    pub expected: i64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct BulkBoundaryReport {
    pub gap: Gap,
    pub fiducial_energy: f64,
    pub crossings: Vec<Crossing>,
    pub edges: Vec<EdgeCount>,
    /// crossings whose edge weight fell inside `[0.4, 0.6]`
    pub ambiguous: Vec<Crossing>,
    pub unassigned_net: i64,
}

impl BulkBoundaryReport {
    pub fn holds(&self) -> bool {
        self.ambiguous.is_empty() && self.unassigned_net == 0 && self.edges.iter().all(|e| e.net == e.expected)
    }

    /// Fails on ambiguous classification, suggesting a finer ky grid.
    pub fn require_unambiguous(&self) -> Result<()> {
        match self.ambiguous.first() {
            Some(c) => Err(WalkError::AmbiguousEdge { ky: c.ky, weight: c.weight }),
            None => Ok(()),
        }
    }
}

/// Counts crossings of the midgap energy by ribbon branches, matched between neighbouring `ky`
/// by eigenvector overlap, and attributes each to the edge holding most of its weight.
///
/// A branch crossing upward counts `+1`. Edge `i` is oriented with weight `-1` when the inside
/// region lies at larger `x` (even `i`, the first edge of a stripe) and `+1` otherwise; the
/// oriented net count is compared with `r_inside - r_outside`.
pub fn bulk_boundary_check(ribbon: &RibbonSpectrum, r_inside: i64, r_outside: i64, gap: &Gap) -> BulkBoundaryReport {
    let e_star = gap.midgap;
    let nk = ribbon.ky.len();
    let window = gap.width;
    let mut crossings = Vec::new();
    for j in 0..nk {
        let jn = (j + 1) % nk;
        let (ea, eb) = (&ribbon.energies[j], &ribbon.energies[jn]);
        let (va, vb) = (&ribbon.eigenvectors[j], &ribbon.eigenvectors[jn]);
        for s in 0..ea.len() {
            let da = wrap_angle(ea[s] - e_star);
            if da.abs() > window {
                continue;
            }
            let col = va.column(s);
            let (mut best, mut t_best) = (0.0, 0);
            for t in 0..eb.len() {
                if wrap_angle(eb[t] - e_star).abs() > 2.0 * window {
                    continue;
                }
                let o = col.dotc(&vb.column(t)).norm();
                if o > best {
                    best = o;
                    t_best = t;
                }
            }
            let db = wrap_angle(eb[t_best] - e_star);
            let sign = if da < 0.0 && db >= 0.0 {
                1
            } else if da >= 0.0 && db < 0.0 {
                -1
            } else {
                continue;
            };
            let ky = 0.5 * (ribbon.ky[j] + if jn == 0 { ribbon.ky[0] + 2.0 * PI } else { ribbon.ky[jn] });
            let weights: Vec<f64> = (0..ribbon.edges.len())
                .map(|e| 0.5 * (ribbon.edge_weights[j][s][e] + ribbon.edge_weights[jn][t_best][e]))
                .collect();
            let (edge, weight) = weights
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(e, &w)| (Some(e), w))
                .unwrap_or((None, 0.0));
            let edge = if weight > EDGE_THRESHOLD { edge } else { None };
            crossings.push(Crossing { ky, sign, edge, weight });
        }
    }
    let ambiguous: Vec<Crossing> = crossings.iter().filter(|c| (0.4..=0.6).contains(&c.weight)).cloned().collect();
    let edges = ribbon
        .edges
        .iter()
        .enumerate()
        .map(|(i, &site)| {
            let orientation = if i % 2 == 0 { -1 } else { 1 };
            let mine: Vec<&Crossing> = crossings.iter().filter(|c| c.edge == Some(i)).collect();
            EdgeCount {
                edge_site: site,
                net: orientation * mine.iter().map(|c| c.sign).sum::<i64>(),
                modes: mine.len(),
                expected: r_inside - r_outside,
            }
        })
        .collect();
    let unassigned_net = crossings.iter().filter(|c| c.edge.is_none()).map(|c| c.sign).sum();
    BulkBoundaryReport { gap: *gap, fiducial_energy: e_star, crossings, edges, ambiguous, unassigned_net }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_contour_closes() {
        let c = Contour::Rectangle { x0: 0.0, x1: 2.0, y0: 0.0, y1: 1.0 };
        assert_eq!(c.point(0.0), (0.0, 0.0));
        let (x, y) = c.point(0.5);
        assert!((x - 2.0).abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn winding_of_scalar_loop() {
        let h = |kx: f64, ky: f64| Ok(CMatrix::from_element(1, 1, C64::new(kx, ky)));
        let c = Contour::Circle { center: (0.0, 0.0), radius: 1.0 };
        assert_eq!(winding_number(h, &c, false).unwrap(), 1);
        assert_eq!(winding_number(h, &c, true).unwrap(), -1);
        let h2 = |kx: f64, ky: f64| Ok(CMatrix::from_element(1, 1, C64::new(kx, ky).powi(3)));
        assert_eq!(winding_number(h2, &c, false).unwrap(), 3);
    }

    #[test]
    fn vanishing_determinant_rejected() {
        let h = |kx: f64, _ky: f64| Ok(CMatrix::from_element(1, 1, C64::new(kx - 1.0, 0.0)));
        let c = Contour::Circle { center: (0.0, 0.0), radius: 1.0 };
        assert!(matches!(winding_number(h, &c, false), Err(WalkError::DeterminantVanishes { .. })));
    }
}
