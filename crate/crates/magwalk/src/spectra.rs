//! Quasienergy bands on the magnetic Brillouin zone, gaps, Dirac points, the butterfly and
//! ribbon spectra.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::linalg::{eigenphases, quasienergy, unitary_eigen, wrap_angle};
use crate::operators::{BlochCell, Flux, TimeFrame};
use crate::{CMatrix, Result, WalkError};

/// Energies and Bloch vectors on an `nx * ny` grid, flattened as `iy * nx + ix`.
#[derive(Clone, Debug)]
pub struct BandStructure {
    pub flux: Flux,
    pub cell_size: usize,
    pub nx: usize,
    pub ny: usize,
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// ascending quasienergies in `[-pi, pi]` at each k (see [`sorted_eigen`])
    pub energies: Vec<Vec<f64>>,
    /// columns ordered like `energies`
    pub eigenvectors: Vec<CMatrix>,
}

impl BandStructure {
    pub fn n_bands(&self) -> usize {
        2 * self.cell_size
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        (iy % self.ny) * self.nx + ix % self.nx
    }

    pub fn k(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.kx[ix % self.nx], self.ky[iy % self.ny])
    }

    pub fn band_min(&self, b: usize) -> f64 {
        self.energies.iter().map(|e| e[b]).fold(f64::INFINITY, f64::min)
    }

    pub fn band_max(&self, b: usize) -> f64 {
        self.energies.iter().map(|e| e[b]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sorted quasienergies and matching eigenvectors of a unitary.
///
/// Eigenvalues sitting on `-1` within `1e-12` are split evenly between `-pi` and `pi`, so that a
/// band touching at `E = pi` keeps band labels continuous across the grid.
pub fn sorted_eigen(u: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (vals, vecs) = unitary_eigen(u);
    let mut order: Vec<(f64, usize)> = vals.iter().enumerate().map(|(i, &l)| (quasienergy(l, 0.0), i)).collect();
    let at_cut: Vec<usize> = (0..order.len()).filter(|&i| PI - order[i].0 < 1e-12).collect();
    for &i in &at_cut[..at_cut.len() / 2] {
        order[i].0 = -PI;
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let e = order.iter().map(|o| o.0).collect();
    let v = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, order[c].1)]);
    (e, v)
}

/// Grid over `[-pi/n, pi/n) x [-pi, pi)`.
pub fn bz_grid(n: usize, nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>) {
    let a = 2.0 * PI / n as f64;
    let kx = (0..nx).map(|i| -a / 2.0 + a * i as f64 / nx as f64).collect();
    let ky = (0..ny).map(|j| -PI + 2.0 * PI * j as f64 / ny as f64).collect();
    (kx, ky)
}

pub fn band_structure(p: i64, q: i64, nx: usize, ny: usize) -> Result<BandStructure> {
    let flux = Flux::new(p, q)?;
    band_structure_for_cell(&BlochCell::landau(flux), flux, nx, ny, TimeFrame::Original)
}

/// Band structure of an arbitrary magnetic cell; `flux` is the nominal label.
pub fn band_structure_for_cell(cell: &BlochCell, flux: Flux, nx: usize, ny: usize, frame: TimeFrame) -> Result<BandStructure> {
    if nx < 4 || ny < 4 {
        return Err(WalkError::param("grid", format!("{nx}x{ny}"), "both sides must be at least 4"));
    }
    let (kx, ky) = bz_grid(cell.n(), nx, ny);
    let results: Vec<(Vec<f64>, CMatrix)> = (0..nx * ny)
        .into_par_iter()
        .map(|i| sorted_eigen(&cell.step(kx[i % nx], ky[i / nx], frame)))
        .collect();
    let (energies, eigenvectors) = results.into_iter().unzip();
    Ok(BandStructure {
        flux,
        cell_size: cell.n(),
        nx,
        ny,
        kx,
        ky,
        energies,
        eigenvectors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Gap {
    /// index of the band below; the zone-edge gap sits above the top band
    pub below: usize,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    /// representative energy, wrapped into `(-pi, pi]`
    pub midgap: f64,
}

impl Gap {
    /// Whether `e` (mod 2 pi) lies strictly inside the gap.
    pub fn contains(&self, e: f64) -> bool {
        let d = wrap_angle(e - self.midgap).abs();
        d < self.width / 2.0
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct GapTable {
    pub gaps: Vec<Gap>,
    pub n_bands: usize,
    pub threshold: f64,
}

pub const GAP_THRESHOLD: f64 = 1e-6;

pub fn gap_table(bands: &BandStructure) -> GapTable {
    gap_table_with_threshold(bands, GAP_THRESHOLD)
}

/// Smallest arc `(start, end)` covering a set of phases, with `start` in `(-pi, pi]`.
fn covering_arc(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    let (mut best, mut at) = (values[0] + 2.0 * PI - values[m - 1], 0);
    for i in 1..m {
        let g = values[i] - values[i - 1];
        if g > best {
            best = g;
            at = i;
        }
    }
    let start = values[at];
    (start, start + 2.0 * PI - best)
}

/// Energies measured upward from `cut` into `[0, 2 pi]`, sorted at each k. Values already in
/// range keep their place, which preserves the split of touchings at `pi`.
fn relabel(bands: &BandStructure, cut: f64) -> Vec<Vec<f64>> {
    bands
        .energies
        .iter()
        .map(|es| {
            let mut u: Vec<f64> = es
                .iter()
                .map(|&e| {
                    let d = e - cut;
                    if (0.0..=2.0 * PI).contains(&d) {
                        d
                    } else {
                        d.rem_euclid(2.0 * PI)
                    }
                })
                .collect();
            u.sort_by(f64::total_cmp);
            u
        })
        .collect()
}

/// Largest change of any label between neighbouring grid points (periodic in both directions).
fn max_label_step(u: &[Vec<f64>], nx: usize, ny: usize) -> f64 {
    let mut m: f64 = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let a = &u[iy * nx + ix];
            for b in [&u[iy * nx + (ix + 1) % nx], &u[((iy + 1) % ny) * nx + ix]] {
                for (x, y) in a.iter().zip(b.iter()) {
                    m = m.max((x - y).abs());
                }
            }
        }
    }
    m
}

/// Bulk gaps on the sampled grid.
///
/// Bands are labelled upward from a cut, either the zone boundary or the middle of the widest
/// hole left by all samples, whichever makes every label vary least between neighbouring k. The
/// gaps are then the spaces between consecutive label ranges, so the table does not depend on
/// where the zone boundary falls. Each gap carries the zone index (ascending from `-pi`) of the
/// band below it.
pub fn gap_table_with_threshold(bands: &BandStructure, threshold: f64) -> GapTable {
    let nb = bands.n_bands();
    let mut all: Vec<f64> = bands.energies.iter().flatten().copied().collect();
    let (start, end) = covering_arc(&mut all);
    let hole_cut = wrap_angle(end + (start + 2.0 * PI - end) / 2.0);
    let (cut, u) = [-PI, hole_cut]
        .into_iter()
        .map(|c| (c, relabel(bands, c)))
        .min_by(|a, b| max_label_step(&a.1, bands.nx, bands.ny).total_cmp(&max_label_step(&b.1, bands.nx, bands.ny)))
        .expect("two candidates");
    let (mut lo, mut hi) = (vec![f64::INFINITY; nb], vec![f64::NEG_INFINITY; nb]);
    for row in &u {
        for (j, &x) in row.iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    let mut offsets = vec![0usize; nb + 1];
    for es in &bands.energies {
        offsets[es.iter().filter(|&&e| e < cut).count()] += 1;
    }
    let offset = (0..=nb).max_by_key(|&o| (offsets[o], std::cmp::Reverse(o))).unwrap_or(0);
    let mut gaps = Vec::new();
    for j in 0..nb {
        let upper = if j + 1 < nb { lo[j + 1] } else { lo[0] + 2.0 * PI };
        let width = upper - hi[j];
        if width > threshold {
            let lower = wrap_angle(cut + hi[j]);
            gaps.push(Gap {
                below: (j + offset) % nb,
                lower,
                upper: lower + width,
                width,
                midgap: wrap_angle(lower + width / 2.0),
            });
        }
    }
    gaps.sort_by_key(|g| g.below);
    GapTable { gaps, n_bands: nb, threshold }
}

impl GapTable {
    /// Drops gaps that contain the energy of a located band touching.
    pub fn without_touchings(&self, points: &[DiracPoint]) -> GapTable {
        let gaps = self
            .gaps
            .iter()
            .filter(|g| !points.iter().any(|p| g.contains(p.energy)))
            .copied()
            .collect();
        GapTable { gaps, ..self.clone() }
    }

    pub fn find(&self, energy: f64) -> Option<&Gap> {
        self.gaps.iter().find(|g| g.contains(energy))
    }

    /// Band groups between consecutive gaps, as cyclic index ranges.
    pub fn band_groups(&self) -> Vec<BandGroup> {
        let n = self.gaps.len();
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        for i in 0..n {
            let start = (self.gaps[i].below + 1) % self.n_bands;
            let end = self.gaps[(i + 1) % n].below;
            let len = (end + self.n_bands - start) % self.n_bands + 1;
            out.push(BandGroup { start, len, n_bands: self.n_bands });
        }
        out.sort_by_key(|g| g.start);
        out
    }
}

/// Gap table with touchings that the grid misses removed.
pub fn resolved_gap_table(bands: &BandStructure, points: &[DiracPoint]) -> GapTable {
    gap_table(bands).without_touchings(points)
}

/// Gap table of a Bloch cell on an `n x n` grid, touchings removed.
pub fn bulk_gap_table(cell: &BlochCell, flux: Flux, n: usize) -> Result<GapTable> {
    let bands = band_structure_for_cell(cell, flux, n, n, TimeFrame::Original)?;
    let points = find_dirac_points_cell(cell, n, 1e-8)?;
    Ok(resolved_gap_table(&bands, &points))
}

/// Cyclic range of band indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct BandGroup {
    pub start: usize,
    pub len: usize,
    pub n_bands: usize,
}

impl BandGroup {
    pub fn new(start: usize, len: usize, n_bands: usize) -> Self {
        BandGroup { start, len, n_bands }
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len).map(|i| (self.start + i) % self.n_bands).collect()
    }

    pub fn contains(&self, b: usize) -> bool {
        (b + self.n_bands - self.start) % self.n_bands < self.len
    }
}

impl std::fmt::Display for BandGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.indices())
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DiracPoint {
    pub k: (f64, f64),
    /// 0 or pi
    pub energy: f64,
    pub gap: f64,
}

/// Separation of the two eigenphases that bracket `e0` on the circle.
pub fn local_gap(energies: &[f64], e0: f64) -> f64 {
    let mut below = f64::INFINITY;
    let mut above = f64::INFINITY;
    for &e in energies {
        let d = wrap_angle(e - e0);
        if d >= 0.0 {
            above = above.min(d);
        }
        if d <= 0.0 {
            below = below.min(-d);
        }
    }
    above + below
}

pub fn find_dirac_points(p: i64, q: i64, grid: usize, tol: f64) -> Result<Vec<DiracPoint>> {
    let flux = Flux::new(p, q)?;
    find_dirac_points_cell(&BlochCell::landau(flux), grid, tol)
}

pub fn find_dirac_points_cell(cell: &BlochCell, grid: usize, tol: f64) -> Result<Vec<DiracPoint>> {
    if !(tol > 0.0) {
        return Err(WalkError::param("tol", tol, "must be positive"));
    }
    if grid < 4 {
        return Err(WalkError::param("grid", grid, "must be at least 4"));
    }
    let n = cell.n();
    let (kx, ky) = bz_grid(n, grid, grid);
    let spectra: Vec<Vec<f64>> = (0..grid * grid)
        .into_par_iter()
        .map(|i| eigenphases(&cell.step(kx[i % grid], ky[i / grid], TimeFrame::Original), 0.0))
        .collect();
    let h = (kx[1] - kx[0], ky[1] - ky[0]);
    let mut found = Vec::new();
    for e0 in [0.0, PI] {
        let g: Vec<f64> = spectra.iter().map(|s| local_gap(s, e0)).collect();
        let at = |ix: i64, iy: i64| g[(iy.rem_euclid(grid as i64) * grid as i64 + ix.rem_euclid(grid as i64)) as usize];
        let mut candidates = Vec::new();
        for iy in 0..grid as i64 {
            for ix in 0..grid as i64 {
                let v = at(ix, iy);
                let is_min = (-1..=1).all(|dy| (-1..=1).all(|dx| (dx == 0 && dy == 0) || v <= at(ix + dx, iy + dy)));
                if is_min {
                    candidates.push((kx[ix as usize], ky[iy as usize]));
                }
            }
        }
        let refined: Vec<DiracPoint> = candidates
            .par_iter()
            .map(|&c| refine_touching(cell, c, h, e0))
            .filter(|d| d.gap < tol)
            .collect();
        for d in refined {
            let dup = found.iter().any(|o: &DiracPoint| {
                o.energy == d.energy && bz_distance(o.k, d.k, n) < h.0.min(h.1) / 2.0
            });
            if !dup {
                found.push(d);
            }
        }
    }
    found.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.k.0.total_cmp(&b.k.0))
            .then(a.k.1.total_cmp(&b.k.1))
    });
    Ok(found)
}

fn wrap_k(k: (f64, f64), n: usize) -> (f64, f64) {
    let a = 2.0 * PI / n as f64;
    let kx = (k.0 + a / 2.0).rem_euclid(a) - a / 2.0;
    let ky = (k.1 + PI).rem_euclid(2.0 * PI) - PI;
    (kx, ky)
}

fn bz_distance(a: (f64, f64), b: (f64, f64), n: usize) -> f64 {
    let d = wrap_k((a.0 - b.0, a.1 - b.1), n);
    d.0.hypot(d.1)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Coordinate-wise golden-section descent of the local gap at `e0`.
fn refine_touching(cell: &BlochCell, start: (f64, f64), h: (f64, f64), e0: f64) -> DiracPoint {
    let gap_at = |kx: f64, ky: f64| local_gap(&eigenphases(&cell.step(kx, ky, TimeFrame::Original), 0.0), e0);
    let (mut kx, mut ky) = start;
    let (mut hx, mut hy) = h;
    let mut g = gap_at(kx, ky);
    for _ in 0..40 {
        kx = golden_min(|t| gap_at(t, ky), kx - hx, kx + hx);
        ky = golden_min(|t| gap_at(kx, t), ky - hy, ky + hy);
        let g_new = gap_at(kx, ky);
        if g_new < 1e-13 || (g - g_new).abs() < 1e-15 {
            g = g_new;
            break;
        }
        g = g_new;
        hx *= 0.5;
        hy *= 0.5;
    }
    DiracPoint { k: wrap_k((kx, ky), cell.n()), energy: e0, gap: g }
}

/// Cone slope along x and y: half the splitting of the touching bands per unit `dk`.
pub fn cone_speed(cell: &BlochCell, point: &DiracPoint, dk: f64) -> (f64, f64) {
    let gap_at = |kx: f64, ky: f64| local_gap(&eigenphases(&cell.step(kx, ky, TimeFrame::Original), 0.0), point.energy);
    let (kx, ky) = point.k;
    let vx = (gap_at(kx + dk, ky) + gap_at(kx - dk, ky)) / (4.0 * dk);
    let vy = (gap_at(kx, ky + dk) + gap_at(kx, ky - dk)) / (4.0 * dk);
    (vx, vy)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ButterflyColumn {
    pub flux: Flux,
    /// sorted eigenphases at each sampled k
    pub energies: Vec<Vec<f64>>,
}

impl ButterflyColumn {
    pub fn n_bands(&self) -> usize {
        self.energies.first().map_or(0, |e| e.len())
    }

    /// Level energies `E_0, E_1, ...` at and above zero at the first sampled k, from the states
    /// with `|E| < pi/2`. These are mirror symmetric with two zero modes in the middle; each level
    /// `n >= 1` is the mean of the `n`-th pair above them.
    pub fn landau_levels(&self, n_max: usize) -> Vec<f64> {
        let mut e: Vec<f64> = self.energies[0].iter().copied().filter(|x| x.abs() < PI / 2.0).collect();
        e.sort_by(f64::total_cmp);
        let mid = e.len() / 2;
        let mut out = vec![(e[mid - 1].abs() + e[mid].abs()) / 2.0];
        for n in 1..=n_max {
            if mid + 2 * n < e.len() {
                out.push((e[mid + 2 * n - 1] + e[mid + 2 * n]) / 2.0);
            }
        }
        out
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ButterflyData {
    pub k_samples: usize,
    pub columns: Vec<ButterflyColumn>,
}

pub fn butterfly_column(flux: Flux, k_samples: usize) -> ButterflyColumn {
    let cell = BlochCell::landau(flux);
    let n = cell.n();
    let a = 2.0 * PI / n as f64;
    let kx: Vec<f64> = (0..k_samples).map(|i| -a / 2.0 + a * i as f64 / k_samples as f64).collect();
    let ky: Vec<f64> = (0..k_samples).map(|j| -PI + 2.0 * PI * j as f64 / k_samples as f64).collect();
    let energies = (0..k_samples * k_samples)
        .into_par_iter()
        .map(|i| eigenphases(&cell.step(kx[i % k_samples], ky[i / k_samples], TimeFrame::Original), 0.0))
        .collect();
    ButterflyColumn { flux, energies }
}

/// Columns for every reduced `p/q` in `[0, 1)` with `q <= q_max`, ordered by flux.
pub fn butterfly(q_max: i64, k_samples: usize) -> Result<ButterflyData> {
    if q_max < 2 {
        return Err(WalkError::param("q_max", q_max, "must be at least 2"));
    }
    if k_samples < 1 {
        return Err(WalkError::param("k_samples", k_samples, "must be at least 1"));
    }
    let mut fluxes: Vec<Flux> = (1..=q_max)
        .flat_map(|q| (0..q).filter_map(move |p| Flux::new(p, q).ok()))
        .collect();
    fluxes.sort_by(|a, b| (a.p * b.q).cmp(&(b.p * a.q)));
    let columns = fluxes.par_iter().map(|&f| butterfly_column(f, k_samples)).collect();
    Ok(ButterflyData { k_samples, columns })
}

/// Spectrum of the x-ring of `lx` sites as a function of `ky`.
#[derive(Clone, Debug)]
pub struct RibbonSpectrum {
    /// flux through the plaquette between columns `x` and `x + 1`
    pub flux_profile: Vec<f64>,
    pub lx: usize,
    pub ky: Vec<f64>,
    pub energies: Vec<Vec<f64>>,
    pub eigenvectors: Vec<CMatrix>,
    /// sites where the flux profile changes
    pub edges: Vec<usize>,
    pub window: usize,
    /// `[ky][state][edge]`
    pub edge_weights: Vec<Vec<Vec<f64>>>,
}

pub const EDGE_WINDOW: usize = 5;
pub const EDGE_THRESHOLD: f64 = 0.5;

impl RibbonSpectrum {
    pub fn bulk_weight(&self, iky: usize, state: usize) -> f64 {
        1.0 - self.edge_weights[iky][state].iter().sum::<f64>()
    }

    pub fn left_weight(&self, iky: usize, state: usize) -> f64 {
        self.edge_weights[iky][state].first().copied().unwrap_or(0.0)
    }

    pub fn right_weight(&self, iky: usize, state: usize) -> f64 {
        self.edge_weights[iky][state].get(1).copied().unwrap_or(0.0)
    }
}

/// Sites where a periodic flux profile changes value.
pub fn profile_edges(flux_profile: &[f64]) -> Vec<usize> {
    let n = flux_profile.len();
    (0..n).filter(|&x| (flux_profile[x] - flux_profile[(x + n - 1) % n]).abs() > 1e-12).collect()
}

/// Landau-gauge y-link phases of a column flux profile, checking that the ring closes.
pub fn ring_phases(flux_profile: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = flux_profile.iter().sum();
    if (total - total.round()).abs() > 1e-9 {
        return Err(WalkError::Incommensurate {
            axis: 'x',
            detail: format!("total flux {total} around the ring is not an integer"),
        });
    }
    let mut theta = Vec::with_capacity(flux_profile.len());
    let mut acc = 0.0;
    for &f in flux_profile {
        theta.push(2.0 * PI * acc);
        acc += f;
    }
    Ok(theta)
}

pub fn ribbon_spectrum(flux_profile: &[f64], ky_grid: &[f64], window: usize) -> Result<RibbonSpectrum> {
    let theta = ring_phases(flux_profile)?;
    let mut r = ribbon_spectrum_from_phases(&theta, profile_edges(flux_profile), ky_grid, window)?;
    r.flux_profile = flux_profile.to_vec();
    Ok(r)
}

/// Ribbon spectrum for explicit y-link phases (e.g. an imprinted profile).
pub fn ribbon_spectrum_from_phases(theta_y: &[f64], edges: Vec<usize>, ky_grid: &[f64], window: usize) -> Result<RibbonSpectrum> {
    let lx = theta_y.len();
    if lx < 2 {
        return Err(WalkError::param("lx", lx, "ring needs at least 2 sites"));
    }
    let ring = |a: usize, b: usize| {
        let d = (a as i64 - b as i64).rem_euclid(lx as i64) as usize;
        d.min(lx - d)
    };
    for (i, &a) in edges.iter().enumerate() {
        for &b in &edges[i + 1..] {
            if ring(a, b) <= 2 * window {
                return Err(WalkError::param("edge_window", window, format!("windows around edges {a} and {b} overlap")));
            }
        }
    }
    let cell = BlochCell::from_y_phases(theta_y.to_vec());
    let results: Vec<(Vec<f64>, CMatrix, Vec<Vec<f64>>)> = ky_grid
        .par_iter()
        .map(|&ky| {
            let (e, v) = sorted_eigen(&cell.step(0.0, ky, TimeFrame::Original));
            let w = (0..2 * lx)
                .map(|s| {
                    edges
                        .iter()
                        .map(|&edge| {
                            (0..lx)
                                .filter(|&x| ring(x, edge) <= window)
                                .map(|x| v[(x, s)].norm_sqr() + v[(lx + x, s)].norm_sqr())
                                .sum()
                        })
                        .collect()
                })
                .collect();
            (e, v, w)
        })
        .collect();
    let mut energies = Vec::new();
    let mut eigenvectors = Vec::new();
    let mut edge_weights = Vec::new();
    for (e, v, w) in results {
        energies.push(e);
        eigenvectors.push(v);
        edge_weights.push(w);
    }
    Ok(RibbonSpectrum {
        flux_profile: Vec::new(),
        lx,
        ky: ky_grid.to_vec(),
        energies,
        eigenvectors,
        edges,
        window,
        edge_weights,
    })
}

/// Flux profile of the stripe geometry: `phi_in` on plaquettes `[left, right)`, `phi_out` elsewhere.
pub fn stripe_profile(lx: usize, left: usize, right: usize, phi_out: f64, phi_in: f64) -> Vec<f64> {
    (0..lx).map(|x| if (left..right).contains(&x) { phi_in } else { phi_out }).collect()
}

pub fn uniform_ky_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| -PI + 2.0 * PI * (j as f64 + 0.5) / n as f64).collect()
}
