//! Unitaries of the walk protocol in real space and in Bloch form.
//!
//! Conventions: lattice constant, step duration, charge and hbar are 1. Spin components are
//! ordered (up, down) with `sigma_z = diag(1, -1)`. Up moves along `+e_d` under the shift
//! `S_d`, down moves along `-e_d`. The link phase `theta_d(r)` belongs to the link from `r` to
//! `r + e_d`; the field operator `F_d` gives up at `r` the phase of its incoming link
//! `theta_d(r - e_d)` and down at `r` the phase `-theta_d(r)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Matrix2;

use crate::dynamics::SpinorField;
use crate::error::{Result, WalkError};
use crate::linalg::{quasienergy, unitary_eigen};
use crate::{CMatrix, C64};

pub fn build_coin() -> Matrix2<C64> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    Matrix2::new(s, -s, s, s)
}

/// Coin used by the step operator. The default is the Hadamard-like rotation `exp(-i sigma_y pi/4)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coin(pub Matrix2<C64>);

impl Default for Coin {
    fn default() -> Self {
        Coin(build_coin())
    }
}

impl Coin {
    /// `exp(-i sigma_y theta)`; keeps the chiral symmetry `sigma_x C sigma_x = C^dagger`.
    pub fn rotation(theta: f64) -> Self {
        let (c, s) = (theta.cos(), theta.sin());
        Coin(Matrix2::new(
            C64::new(c, 0.0),
            C64::new(-s, 0.0),
            C64::new(s, 0.0),
            C64::new(c, 0.0),
        ))
    }

    /// Hadamard-like coin followed by `exp(-i sigma_z eta)`, which breaks chiral symmetry.
    pub fn with_sigma_z(eta: f64) -> Self {
        let z = Matrix2::new(
            C64::from_polar(1.0, -eta),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::from_polar(1.0, eta),
        );
        Coin(build_coin() * z)
    }

    #[inline]
    fn apply(&self, up: C64, down: C64) -> (C64, C64) {
        let m = &self.0;
        (m[(0, 0)] * up + m[(0, 1)] * down, m[(1, 0)] * up + m[(1, 1)] * down)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFrame {
    /// `W = F S_y C S_x C`
    Original,
    /// `W' = W_up W_down`
    Primed,
    /// `W'' = W_down W_up`
    DoublePrimed,
}

impl std::str::FromStr for TimeFrame {
    type Err = WalkError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(TimeFrame::Original),
            "primed" => Ok(TimeFrame::Primed),
            "doubleprimed" => Ok(TimeFrame::DoublePrimed),
            _ => Err(WalkError::param("frame", s, "expected original, primed or doubleprimed")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpinMask {
    Up,
    Down,
    Both,
}

impl SpinMask {
    fn up(self) -> bool {
        matches!(self, SpinMask::Up | SpinMask::Both)
    }
    fn down(self) -> bool {
        matches!(self, SpinMask::Down | SpinMask::Both)
    }
}

/// Elementary factor of a step, listed in application order by [`TimeFrame::factors`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Coin,
    /// `D_d = F_d S_d` restricted to the given spin components.
    Move(Axis, SpinMask),
}

use Factor::{Coin as FCoin, Move};

impl TimeFrame {
    pub fn factors(self) -> &'static [Factor] {
        const ORIGINAL: &[Factor] = &[
            FCoin,
            Move(Axis::X, SpinMask::Both),
            FCoin,
            Move(Axis::Y, SpinMask::Both),
        ];
        const PRIMED: &[Factor] = &[
            Move(Axis::Y, SpinMask::Down),
            FCoin,
            Move(Axis::X, SpinMask::Both),
            FCoin,
            Move(Axis::Y, SpinMask::Up),
        ];
        const DOUBLE: &[Factor] = &[
            Move(Axis::X, SpinMask::Up),
            FCoin,
            Move(Axis::Y, SpinMask::Both),
            FCoin,
            Move(Axis::X, SpinMask::Down),
        ];
        match self {
            TimeFrame::Original => ORIGINAL,
            TimeFrame::Primed => PRIMED,
            TimeFrame::DoublePrimed => DOUBLE,
        }
    }

    pub const ALL: [TimeFrame; 3] = [TimeFrame::Original, TimeFrame::Primed, TimeFrame::DoublePrimed];
}

/// Half-step operator `W_up = D_{y,up} C D_{x,up}` in application order.
pub const HALF_STEP_UP: &[Factor] = &[Move(Axis::X, SpinMask::Up), FCoin, Move(Axis::Y, SpinMask::Up)];
/// Half-step operator `W_down = D_{x,down} C D_{y,down}` in application order.
pub const HALF_STEP_DOWN: &[Factor] = &[Move(Axis::Y, SpinMask::Down), FCoin, Move(Axis::X, SpinMask::Down)];

/// Reduced flux `p/q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Flux {
    pub p: i64,
    pub q: i64,
}

impl Flux {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        if q <= 0 || gcd(p.unsigned_abs(), q.unsigned_abs()) != 1 {
            return Err(WalkError::NotCoprime { p, q });
        }
        Ok(Flux { p, q })
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn negated(&self) -> Flux {
        Flux { p: -self.p, q: self.q }
    }
}

impl std::fmt::Display for Flux {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// One row of sites repeated along x with Bloch phase `exp(i kx n c)` between cells `c`,
/// the y direction being translation invariant.
///
/// Basis ordering is spin-major: index `s * n + j`.
#[derive(Clone, Debug)]
pub struct BlochCell {
    /// link phase from site `j` to `j + 1` (the last one links into the next cell)
    pub theta_x: Vec<f64>,
    /// y-link phase at site `j`
    pub theta_y: Vec<f64>,
    pub supershift: usize,
    pub coin: Coin,
}

impl BlochCell {
    /// Landau gauge `theta_x = 0`, `theta_y(j) = 2 pi phi j` on a `q`-site cell.
    pub fn landau(flux: Flux) -> Self {
        let q = flux.q as usize;
        let theta_y = (0..q).map(|j| 2.0 * PI * flux.value() * j as f64).collect();
        Self::from_y_phases(theta_y)
    }

    pub fn from_y_phases(theta_y: Vec<f64>) -> Self {
        BlochCell {
            theta_x: vec![0.0; theta_y.len()],
            theta_y,
            supershift: 1,
            coin: Coin::default(),
        }
    }

    pub fn with_supershift(mut self, m: usize) -> Self {
        self.supershift = m;
        self
    }

    pub fn with_coin(mut self, coin: Coin) -> Self {
        self.coin = coin;
        self
    }

    pub fn n(&self) -> usize {
        self.theta_y.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    /// Phase of cell `c` relative to cell 0 and the site inside the cell for position `x`.
    fn locate(&self, x: i64, kx: f64) -> (usize, C64) {
        let n = self.n() as i64;
        let c = x.div_euclid(n);
        let j = x.rem_euclid(n) as usize;
        (j, C64::from_polar(1.0, kx * (n * c) as f64))
    }

    fn link_x(&self, x: i64) -> f64 {
        self.theta_x[x.rem_euclid(self.n() as i64) as usize]
    }

    fn apply_factor(&self, f: Factor, v: &mut [C64], scratch: &mut [C64], kx: f64, ky: f64) {
        let n = self.n();
        let m = self.supershift as i64;
        match f {
            Factor::Coin => {
                for j in 0..n {
                    let (u, d) = self.coin.apply(v[j], v[n + j]);
                    v[j] = u;
                    v[n + j] = d;
                }
            }
            Factor::Move(Axis::X, mask) => {
                scratch.copy_from_slice(v);
                for j in 0..n {
                    let x = j as i64;
                    if mask.up() {
                        let (src, bloch) = self.locate(x - m, kx);
                        let a: f64 = (1..=m).map(|t| self.link_x(x - t)).sum();
                        v[j] = scratch[src] * bloch * C64::from_polar(1.0, a);
                    }
                    if mask.down() {
                        let (src, bloch) = self.locate(x + m, kx);
                        let a: f64 = (0..m).map(|t| self.link_x(x + t)).sum();
                        v[n + j] = scratch[n + src] * bloch * C64::from_polar(1.0, -a);
                    }
                }
            }
            Factor::Move(Axis::Y, mask) => {
                for j in 0..n {
                    let t = self.theta_y[j];
                    if mask.up() {
                        v[j] *= C64::from_polar(1.0, t - ky);
                    }
                    if mask.down() {
                        v[n + j] *= C64::from_polar(1.0, ky - t);
                    }
                }
            }
        }
    }

    /// Dense matrix of a product of factors given in application order.
    pub fn product(&self, factors: &[Factor], kx: f64, ky: f64) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        let mut v = vec![C64::new(0.0, 0.0); d];
        let mut scratch = v.clone();
        for col in 0..d {
            v.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            v[col] = C64::new(1.0, 0.0);
            for &f in factors {
                self.apply_factor(f, &mut v, &mut scratch, kx, ky);
            }
            for (row, z) in v.iter().enumerate() {
                out[(row, col)] = *z;
            }
        }
        out
    }

    pub fn step(&self, kx: f64, ky: f64, frame: TimeFrame) -> CMatrix {
        self.product(frame.factors(), kx, ky)
    }

    /// Diagonal field operator `F_y` alone.
    pub fn field_y(&self) -> CMatrix {
        let n = self.n();
        let mut out = CMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            out[(j, j)] = C64::from_polar(1.0, self.theta_y[j]);
            out[(n + j, n + j)] = C64::from_polar(1.0, -self.theta_y[j]);
        }
        out
    }

    /// Bare shift `S_y = exp(-i sigma_z ky)`.
    pub fn shift_y(&self, ky: f64) -> CMatrix {
        let n = self.n();
        let mut out = CMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            out[(j, j)] = C64::from_polar(1.0, -ky);
            out[(n + j, n + j)] = C64::from_polar(1.0, ky);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BlochUnitary {
    pub flux: Flux,
    pub kx: f64,
    pub ky: f64,
    pub frame: TimeFrame,
    pub matrix: CMatrix,
}

/// Step operator of the uniform-flux walk on the `q`-site magnetic cell in the Landau gauge.
///
/// The operator is exactly periodic in `kx` with period `2 pi / q` and in `ky` with `2 pi`, so
/// momenta outside the reduced zone are accepted.
pub fn bloch_step_operator(p: i64, q: i64, kx: f64, ky: f64, frame: TimeFrame) -> Result<BlochUnitary> {
    let flux = Flux::new(p, q)?;
    let matrix = BlochCell::landau(flux).step(kx, ky, frame);
    Ok(BlochUnitary {
        flux,
        kx,
        ky,
        frame,
        matrix,
    })
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub matrix: CMatrix,
    /// eigen-quasienergies in `(shift - pi, shift + pi]`, matching the columns of `eigenvectors`
    pub quasienergies: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub energy_shift: f64,
}

pub const CUT_TOLERANCE: f64 = 1e-8;

/// `H = i log(e^{i shift} U) + shift` through the unitary eigen-decomposition, with the branch
/// cut at quasienergy `shift + pi`.
pub fn effective_hamiltonian(u: &CMatrix, energy_shift: f64) -> Result<EffectiveHamiltonian> {
    let (vals, q) = unitary_eigen(u);
    let cut = -C64::from_polar(1.0, -energy_shift);
    let mut energies = Vec::with_capacity(vals.len());
    for &l in &vals {
        let dist = (l - cut).norm();
        let e = quasienergy(l, energy_shift);
        if dist < CUT_TOLERANCE {
            return Err(WalkError::GaplessAtCut { energy: e, distance: dist });
        }
        energies.push(e);
    }
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        energies.len(),
        energies.iter().map(|&e| C64::new(e, 0.0)),
    ));
    let matrix = &q * d * q.adjoint();
    Ok(EffectiveHamiltonian {
        matrix,
        quasienergies: energies,
        eigenvectors: q,
        energy_shift,
    })
}

impl EffectiveHamiltonian {
    /// `exp(-i H)` rebuilt from the eigen-decomposition.
    pub fn exponentiate(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.quasienergies.len(),
            self.quasienergies.iter().map(|&e| C64::from_polar(1.0, -e)),
        ));
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }
}

/// Step operator `e^{i shift} F_1 S_y C S_x C` on an `s q` supercell, where `F_1` carries the
/// y-link phases `beta floor(x/q) + 2 pi (p/q) x`.
pub fn spectral_flow_operator(p: i64, q: i64, beta: f64, energy_shift: f64, kx: f64, ky: f64, s: usize) -> Result<CMatrix> {
    let flux = Flux::new(p, q)?;
    if s < 1 {
        return Err(WalkError::param("s", s, "supercell multiplicity must be at least 1"));
    }
    let q = flux.q as usize;
    let b = 2.0 * PI * flux.value();
    let theta: Vec<f64> = (0..s * q).map(|x| beta * (x / q) as f64 + b * x as f64).collect();
    let w = BlochCell::from_y_phases(theta).step(kx, ky, TimeFrame::Original);
    Ok(w * C64::from_polar(1.0, energy_shift))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeGeometry {
    pub lx: usize,
    pub ly: usize,
    pub bc_x: Boundary,
    pub bc_y: Boundary,
}

impl LatticeGeometry {
    pub fn torus(lx: usize, ly: usize) -> Self {
        LatticeGeometry { lx, ly, bc_x: Boundary::Periodic, bc_y: Boundary::Periodic }
    }

    pub fn open(lx: usize, ly: usize) -> Self {
        LatticeGeometry { lx, ly, bc_x: Boundary::Open, bc_y: Boundary::Open }
    }

    pub fn sites(&self) -> usize {
        self.lx * self.ly
    }

    #[inline]
    pub fn site(&self, x: usize, y: usize) -> usize {
        y * self.lx + x
    }

    /// Neighbor index `r + d e_axis` or `None` when it falls off an open edge.
    pub fn offset(&self, x: usize, y: usize, axis: Axis, d: i64) -> Option<(usize, usize)> {
        let (len, bc, c) = match axis {
            Axis::X => (self.lx, self.bc_x, x),
            Axis::Y => (self.ly, self.bc_y, y),
        };
        let t = c as i64 + d;
        let t = match bc {
            Boundary::Periodic => t.rem_euclid(len as i64) as usize,
            Boundary::Open if t < 0 || t >= len as i64 => return None,
            Boundary::Open => t as usize,
        };
        Some(match axis {
            Axis::X => (t, y),
            Axis::Y => (x, t),
        })
    }

    /// Plaquette grid extent; open axes lose the last column or row.
    pub fn plaquette_dims(&self) -> (usize, usize) {
        let px = if self.bc_x == Boundary::Periodic { self.lx } else { self.lx.saturating_sub(1) };
        let py = if self.bc_y == Boundary::Periodic { self.ly } else { self.ly.saturating_sub(1) };
        (px, py)
    }
}

/// Peierls phases on every link of a finite lattice.
#[derive(Clone, Debug)]
pub struct GaugeField {
    pub geometry: LatticeGeometry,
    /// phase of link `(x, y) -> (x + 1, y)`, indexed by site
    pub ax_link: Vec<f64>,
    /// phase of link `(x, y) -> (x, y + 1)`, indexed by site
    pub ay_link: Vec<f64>,
}

impl GaugeField {
    pub fn zero(geometry: LatticeGeometry) -> Self {
        let n = geometry.sites();
        GaugeField { geometry, ax_link: vec![0.0; n], ay_link: vec![0.0; n] }
    }

    pub fn from_links(geometry: LatticeGeometry, ax_link: Vec<f64>, ay_link: Vec<f64>) -> Result<Self> {
        let n = geometry.sites();
        if ax_link.len() != n || ay_link.len() != n {
            return Err(WalkError::DimensionMismatch {
                expected: format!("{n} links per direction"),
                actual: format!("{} and {}", ax_link.len(), ay_link.len()),
            });
        }
        Ok(GaugeField { geometry, ax_link, ay_link })
    }

    /// Uniform flux `p/q` in the Landau gauge `A = (0, 2 pi phi x)`.
    ///
    /// A periodic x axis must hold an integer number of flux quanta per row.
    pub fn landau(flux: Flux, geometry: LatticeGeometry) -> Result<Self> {
        if geometry.bc_x == Boundary::Periodic && (flux.p * geometry.lx as i64) % flux.q != 0 {
            return Err(WalkError::Incommensurate {
                axis: 'x',
                detail: format!("Lx = {} is not a multiple of q = {}", geometry.lx, flux.q),
            });
        }
        Ok(Self::landau_with_seam(flux.value(), geometry, 0.0))
    }

    /// Landau gauge `theta_y = 2 pi phi (x - x0)` without the commensurability check.
    ///
    /// On a periodic x axis the plaquettes between columns `Lx - 1` and `0` then carry a flux
    /// defect of `-phi Lx` (mod 1); the caller accepts this seam explicitly.
    pub fn landau_with_seam(phi: f64, geometry: LatticeGeometry, x0: f64) -> Self {
        let mut g = Self::zero(geometry);
        for y in 0..geometry.ly {
            for x in 0..geometry.lx {
                g.ay_link[geometry.site(x, y)] = 2.0 * PI * phi * (x as f64 - x0);
            }
        }
        g
    }

    /// Piecewise Landau gauge for an arbitrary plaquette flux grid:
    /// `theta_x = 0`, `theta_y(x, y) = 2 pi sum_{x' < x} phi(x', y)`.
    ///
    /// `flux` is indexed `py * px_dim + px` over [`LatticeGeometry::plaquette_dims`]. A periodic x
    /// axis requires an integer total flux in every row.
    pub fn from_plaquette_flux(geometry: LatticeGeometry, flux: &[f64]) -> Result<Self> {
        let (px, py) = geometry.plaquette_dims();
        if flux.len() != px * py {
            return Err(WalkError::DimensionMismatch {
                expected: format!("{px}x{py} plaquettes"),
                actual: format!("{}", flux.len()),
            });
        }
        let mut g = Self::zero(geometry);
        for y in 0..geometry.ly {
            // open y: the top row of sites has no plaquette above; reuse the last row so the
            // dangling link phases stay continuous (they are never traversed)
            let row = y.min(py.saturating_sub(1));
            let mut acc = 0.0;
            for x in 0..geometry.lx {
                g.ay_link[geometry.site(x, y)] = 2.0 * PI * acc;
                if x < px {
                    acc += flux[row * px + x];
                }
            }
            if geometry.bc_x == Boundary::Periodic && py > 0 {
                let total = acc;
                if (total - total.round()).abs() > 1e-9 {
                    return Err(WalkError::Incommensurate {
                        axis: 'x',
                        detail: format!("row {y} carries {total} flux quanta"),
                    });
                }
            }
        }
        Ok(g)
    }

    /// Discrete gauge transformation `theta_d(r) += Lambda(r + e_d) - Lambda(r)`.
    pub fn gauge_transform(&self, lambda: &[f64]) -> GaugeField {
        let geo = self.geometry;
        let mut g = self.clone();
        for y in 0..geo.ly {
            for x in 0..geo.lx {
                let i = geo.site(x, y);
                if let Some((xn, yn)) = geo.offset(x, y, Axis::X, 1) {
                    g.ax_link[i] += lambda[geo.site(xn, yn)] - lambda[i];
                }
                if let Some((xn, yn)) = geo.offset(x, y, Axis::Y, 1) {
                    g.ay_link[i] += lambda[geo.site(xn, yn)] - lambda[i];
                }
            }
        }
        g
    }

    /// `(1/2 pi)` times the discrete curl around plaquette `(x, y)`, not reduced mod 1.
    pub fn plaquette_flux(&self, x: usize, y: usize) -> f64 {
        let geo = self.geometry;
        let (x1, _) = geo.offset(x, y, Axis::X, 1).expect("plaquette inside lattice");
        let (_, y1) = geo.offset(x, y, Axis::Y, 1).expect("plaquette inside lattice");
        let curl = self.ax_link[geo.site(x, y)] + self.ay_link[geo.site(x1, y)]
            - self.ax_link[geo.site(x, y1)]
            - self.ay_link[geo.site(x, y)];
        curl / (2.0 * PI)
    }

    pub fn plaquette_flux_grid(&self) -> Vec<f64> {
        let (px, py) = self.geometry.plaquette_dims();
        let mut out = Vec::with_capacity(px * py);
        for y in 0..py {
            for x in 0..px {
                out.push(self.plaquette_flux(x, y));
            }
        }
        out
    }

    /// Phase accumulated along the L-shaped path from `a` to `b` (x first when `x_first`),
    /// taking the shortest displacement on periodic axes.
    pub fn path_phase(&self, a: (usize, usize), b: (usize, usize), x_first: bool) -> f64 {
        let geo = self.geometry;
        let disp = |from: usize, to: usize, len: usize, bc: Boundary| -> i64 {
            let d = to as i64 - from as i64;
            match bc {
                Boundary::Open => d,
                Boundary::Periodic => {
                    let l = len as i64;
                    let mut d = d.rem_euclid(l);
                    if d > l / 2 {
                        d -= l;
                    }
                    d
                }
            }
        };
        let dx = disp(a.0, b.0, geo.lx, geo.bc_x);
        let dy = disp(a.1, b.1, geo.ly, geo.bc_y);
        let mut pos = a;
        let mut phase = 0.0;
        let mut walk = |pos: &mut (usize, usize), axis: Axis, n: i64| {
            let step = n.signum();
            for _ in 0..n.abs() {
                let links = match axis {
                    Axis::X => &self.ax_link,
                    Axis::Y => &self.ay_link,
                };
                let next = geo.offset(pos.0, pos.1, axis, step).expect("path stays on lattice");
                if step > 0 {
                    phase += links[geo.site(pos.0, pos.1)];
                } else {
                    phase -= links[geo.site(next.0, next.1)];
                }
                *pos = next;
            }
        };
        if x_first {
            walk(&mut pos, Axis::X, dx);
            walk(&mut pos, Axis::Y, dy);
        } else {
            walk(&mut pos, Axis::Y, dy);
            walk(&mut pos, Axis::X, dx);
        }
        phase
    }
}

/// Site-diagonal spin-dependent phases of a field operator `F_d`.
#[derive(Clone, Debug)]
pub struct FieldPhases {
    pub up: Vec<C64>,
    pub down: Vec<C64>,
}

impl FieldPhases {
    pub fn identity(sites: usize) -> Self {
        FieldPhases { up: vec![C64::new(1.0, 0.0); sites], down: vec![C64::new(1.0, 0.0); sites] }
    }

    /// `exp(i sigma_z theta(r))` from a per-site phase.
    pub fn from_site_phase(theta: &[f64]) -> Self {
        FieldPhases {
            up: theta.iter().map(|&t| C64::from_polar(1.0, t)).collect(),
            down: theta.iter().map(|&t| C64::from_polar(1.0, -t)).collect(),
        }
    }

    /// Field operator for a shift by `m` sites along `axis`: up picks up the `m` incoming
    /// links, down the `m` outgoing ones with opposite sign.
    pub fn from_gauge_supershift(gauge: &GaugeField, axis: Axis, m: usize) -> Self {
        let geo = gauge.geometry;
        let links = match axis {
            Axis::X => &gauge.ax_link,
            Axis::Y => &gauge.ay_link,
        };
        let mut out = Self::identity(geo.sites());
        for y in 0..geo.ly {
            for x in 0..geo.lx {
                let i = geo.site(x, y);
                let mut up = 0.0;
                for t in 1..=m as i64 {
                    if let Some((xs, ys)) = geo.offset(x, y, axis, -t) {
                        up += links[geo.site(xs, ys)];
                    }
                }
                let mut down = 0.0;
                for t in 0..m as i64 {
                    if let (Some((xs, ys)), Some(_)) = (geo.offset(x, y, axis, t), geo.offset(x, y, axis, t + 1)) {
                        down += links[geo.site(xs, ys)];
                    }
                }
                out.up[i] = C64::from_polar(1.0, up);
                out.down[i] = C64::from_polar(1.0, -down);
            }
        }
        out
    }
}

pub fn field_op_from_gauge(gauge: &GaugeField, direction: Axis) -> FieldPhases {
    FieldPhases::from_gauge_supershift(gauge, direction, 1)
}

/// Real-space step engine with precomputed field phases.
#[derive(Clone, Debug)]
pub struct RealSpaceWalk {
    pub geometry: LatticeGeometry,
    pub fx: FieldPhases,
    pub fy: FieldPhases,
    pub frame: TimeFrame,
    pub supershift: usize,
    pub coin: Coin,
}

impl RealSpaceWalk {
    pub fn from_gauge(gauge: &GaugeField, frame: TimeFrame, supershift: usize) -> Result<Self> {
        if supershift < 1 {
            return Err(WalkError::param("supershift_m", supershift, "must be at least 1"));
        }
        Ok(RealSpaceWalk {
            geometry: gauge.geometry,
            fx: FieldPhases::from_gauge_supershift(gauge, Axis::X, supershift),
            fy: field_op_from_gauge(gauge, Axis::Y),
            frame,
            supershift,
            coin: Coin::default(),
        })
    }

    /// Walk whose y field operator is the site phase `exp(i sigma_z theta(r))` and `F_x = 1`.
    pub fn from_site_phases(geometry: LatticeGeometry, theta_y: &[f64], frame: TimeFrame, supershift: usize) -> Result<Self> {
        if theta_y.len() != geometry.sites() {
            return Err(WalkError::DimensionMismatch {
                expected: format!("{} site phases", geometry.sites()),
                actual: theta_y.len().to_string(),
            });
        }
        if supershift < 1 {
            return Err(WalkError::param("supershift_m", supershift, "must be at least 1"));
        }
        Ok(RealSpaceWalk {
            geometry,
            fx: FieldPhases::identity(geometry.sites()),
            fy: FieldPhases::from_site_phase(theta_y),
            frame,
            supershift,
            coin: Coin::default(),
        })
    }

    fn check(&self, state: &SpinorField) -> Result<()> {
        if state.geometry != self.geometry || state.amplitudes.len() != 2 * self.geometry.sites() {
            return Err(WalkError::DimensionMismatch {
                expected: format!("{}x{} lattice", self.geometry.lx, self.geometry.ly),
                actual: format!("{}x{} lattice", state.geometry.lx, state.geometry.ly),
            });
        }
        Ok(())
    }

    /// Applies one step in place and returns the norm that left through open edges.
    pub fn step(&self, state: &mut SpinorField, scratch: &mut Vec<C64>) -> Result<f64> {
        self.apply(self.frame.factors(), state, scratch)
    }

    pub fn apply(&self, factors: &[Factor], state: &mut SpinorField, scratch: &mut Vec<C64>) -> Result<f64> {
        self.check(state)?;
        let mut leak = 0.0;
        for &f in factors {
            leak += self.apply_factor(f, &mut state.amplitudes, scratch);
        }
        Ok(leak)
    }

    fn apply_factor(&self, f: Factor, amps: &mut [C64], scratch: &mut Vec<C64>) -> f64 {
        let geo = self.geometry;
        let n = geo.sites();
        match f {
            Factor::Coin => {
                let (up, down) = amps.split_at_mut(n);
                for (u, d) in up.iter_mut().zip(down.iter_mut()) {
                    let (a, b) = self.coin.apply(*u, *d);
                    *u = a;
                    *d = b;
                }
                0.0
            }
            Factor::Move(axis, mask) => {
                let (m, field) = match axis {
                    Axis::X => (self.supershift as i64, &self.fx),
                    Axis::Y => (1, &self.fy),
                };
                let mut leak = 0.0;
                let (up, down) = amps.split_at_mut(n);
                if mask.up() {
                    leak += shift_component(geo, axis, m, up, &field.up, scratch);
                }
                if mask.down() {
                    leak += shift_component(geo, axis, -m, down, &field.down, scratch);
                }
                leak
            }
        }
    }
}

/// `psi'(r) = phase(r) psi(r - d e_axis)`; amplitude pushed across an open edge is removed
/// and its norm returned.
fn shift_component(geo: LatticeGeometry, axis: Axis, d: i64, comp: &mut [C64], phase: &[C64], scratch: &mut Vec<C64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(comp);
    let zero = C64::new(0.0, 0.0);
    let (len, bc) = match axis {
        Axis::X => (geo.lx as i64, geo.bc_x),
        Axis::Y => (geo.ly as i64, geo.bc_y),
    };
    let mut leak = 0.0;
    if bc == Boundary::Open {
        for y in 0..geo.ly {
            for x in 0..geo.lx {
                let c = match axis {
                    Axis::X => x as i64,
                    Axis::Y => y as i64,
                } + d;
                if c < 0 || c >= len {
                    leak += scratch[geo.site(x, y)].norm_sqr();
                }
            }
        }
    }
    for y in 0..geo.ly {
        for x in 0..geo.lx {
            let i = geo.site(x, y);
            let src = match axis {
                Axis::X => {
                    let s = x as i64 - d;
                    match bc {
                        Boundary::Periodic => Some(geo.site(s.rem_euclid(len) as usize, y)),
                        Boundary::Open if s < 0 || s >= len => None,
                        Boundary::Open => Some(geo.site(s as usize, y)),
                    }
                }
                Axis::Y => {
                    let s = y as i64 - d;
                    match bc {
                        Boundary::Periodic => Some(geo.site(x, s.rem_euclid(len) as usize)),
                        Boundary::Open if s < 0 || s >= len => None,
                        Boundary::Open => Some(geo.site(x, s as usize)),
                    }
                }
            };
            comp[i] = match src {
                Some(s) => scratch[s] * phase[i],
                None => zero,
            };
        }
    }
    leak
}

/// One full step of `state` under `gauge`; returns the leaked norm (zero on a torus).
pub fn real_space_step(state: &mut SpinorField, gauge: &GaugeField, frame: TimeFrame, supershift_m: usize) -> Result<f64> {
    let walk = RealSpaceWalk::from_gauge(gauge, frame, supershift_m)?;
    let mut scratch = Vec::new();
    walk.step(state, &mut scratch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenphases, max_abs, phase_multiset_distance, unitarity_defect};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn mat2(m: &CMatrix) -> [[C64; 2]; 2] {
        [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
    }

    #[test]
    fn coin_values() {
        let coin = build_coin();
        let s = FRAC_1_SQRT_2;
        assert_eq!(coin, Matrix2::new(c(s, 0.0), c(-s, 0.0), c(s, 0.0), c(s, 0.0)));
        let id = coin * coin.adjoint();
        assert!((id - Matrix2::identity()).iter().all(|z| z.norm() < 1e-15));
        let sq = coin * coin;
        let expect = Matrix2::new(c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
        assert!((sq - expect).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn zero_field_special_points() {
        let w = bloch_step_operator(0, 1, 0.0, 0.0, TimeFrame::Original).unwrap().matrix;
        let m = mat2(&w);
        assert!((m[0][1] - c(-1.0, 0.0)).norm() < 1e-15 && (m[1][0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(m[0][0].norm() < 1e-15 && m[1][1].norm() < 1e-15);
        let e = eigenphases(&w, 0.0);
        assert!((e[0] + PI / 2.0).abs() < 1e-14 && (e[1] - PI / 2.0).abs() < 1e-14);

        let w = bloch_step_operator(0, 1, PI / 2.0, -PI / 2.0, TimeFrame::Original).unwrap().matrix;
        assert!(max_abs(&(w - CMatrix::identity(2, 2))) < 1e-15);
        let w = bloch_step_operator(0, 1, PI / 2.0, PI / 2.0, TimeFrame::Original).unwrap().matrix;
        assert!(max_abs(&(w + CMatrix::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn rejects_non_coprime() {
        let err = bloch_step_operator(2, 6, 0.0, 0.0, TimeFrame::Original).unwrap_err();
        assert!(err.to_string().contains("2/6"));
        assert!(Flux::new(1, 0).is_err());
    }

    #[test]
    fn frames_share_spectrum_and_are_unitary() {
        for (p, q) in [(1, 3), (2, 5), (1, 4)] {
            for &(kx, ky) in &[(0.13, -0.71), (-0.2, 2.1)] {
                let ws: Vec<CMatrix> = TimeFrame::ALL
                    .iter()
                    .map(|&f| bloch_step_operator(p, q, kx, ky, f).unwrap().matrix)
                    .collect();
                for w in &ws {
                    assert!(unitarity_defect(w) < 1e-12);
                    assert!((w.determinant().norm() - 1.0).abs() < 1e-12);
                }
                let e0 = eigenphases(&ws[0], 0.0);
                for w in &ws[1..] {
                    assert!(phase_multiset_distance(&e0, &eigenphases(w, 0.0)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kx_periodicity_of_magnetic_cell() {
        let a = bloch_step_operator(1, 3, 0.3, 0.4, TimeFrame::Original).unwrap().matrix;
        let b = bloch_step_operator(1, 3, 0.3 + 2.0 * PI / 3.0, 0.4, TimeFrame::Original).unwrap().matrix;
        assert!(max_abs(&(a - b)) < 1e-13);
    }

    #[test]
    fn half_steps_compose_frames() {
        let cell = BlochCell::landau(Flux::new(1, 3).unwrap());
        let (kx, ky) = (0.21, -1.3);
        let up = cell.product(HALF_STEP_UP, kx, ky);
        let down = cell.product(HALF_STEP_DOWN, kx, ky);
        assert!(max_abs(&(&up * &down - cell.step(kx, ky, TimeFrame::Primed))) < 1e-13);
        assert!(max_abs(&(&down * &up - cell.step(kx, ky, TimeFrame::DoublePrimed))) < 1e-13);
        // W_down = sigma_x W_up^dagger sigma_x
        let sx = crate::linalg::kron(
            &CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
            &CMatrix::identity(3, 3),
        );
        assert!(max_abs(&(&sx * up.adjoint() * &sx - down)) < 1e-13);
    }

    #[test]
    fn minimal_coupling_identity() {
        let cell = BlochCell::landau(Flux::new(1, 3).unwrap());
        let ky = 0.77;
        let fs = cell.field_y() * cell.shift_y(ky);
        let n = cell.n();
        let mut expect = CMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            let a = cell.theta_y[j];
            expect[(j, j)] = C64::from_polar(1.0, -(ky - a));
            expect[(n + j, n + j)] = C64::from_polar(1.0, ky - a);
        }
        assert!(max_abs(&(fs - expect)) < 1e-12);
    }

    #[test]
    fn effective_hamiltonian_examples() {
        let h = effective_hamiltonian(&CMatrix::identity(2, 2), 0.0).unwrap();
        assert!(max_abs(&h.matrix) < 1e-15);

        let w = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let h = effective_hamiltonian(&w, 0.0).unwrap();
        // (pi/2) sigma_y
        let sy = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        assert!(max_abs(&(&h.matrix - sy * c(PI / 2.0, 0.0))) < 1e-14);

        let u = bloch_step_operator(1, 3, 0.17, 0.61, TimeFrame::Original).unwrap().matrix;
        let h = effective_hamiltonian(&u, 0.0).unwrap();
        assert!(max_abs(&(h.exponentiate() - &u)) < 1e-10);
        assert!(max_abs(&(&h.matrix - h.matrix.adjoint())) < 1e-12);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(6, h.quasienergies.iter().map(|&e| c(e, 0.0))));
        let dense_exp = (&h.eigenvectors * d * h.eigenvectors.adjoint() * c(0.0, -1.0)).exp();
        assert!(max_abs(&(dense_exp - &u)) < 1e-10);
    }

    #[test]
    fn effective_hamiltonian_cut() {
        let minus = -CMatrix::identity(2, 2);
        let err = effective_hamiltonian(&minus, 0.0).unwrap_err();
        assert!(matches!(err, WalkError::GaplessAtCut { .. }));
        let h = effective_hamiltonian(&minus, 0.5).unwrap();
        assert!(h.quasienergies.iter().all(|&e| (e - PI).abs() < 1e-12));
    }

    #[test]
    fn spectral_flow_beta_zero_folds() {
        let (kx, ky) = (0.1, 0.1);
        let s = 4;
        let w = spectral_flow_operator(1, 3, 0.0, 0.0, kx, ky, s).unwrap();
        assert!(unitarity_defect(&w) < 1e-12);
        let big = eigenphases(&w, 0.0);
        // folding: the big-cell Bloch phase kx*s*q is reached by kx + 2 pi j/(s q) on the q cell
        let mut folded = Vec::new();
        for j in 0..s {
            let k = kx + 2.0 * PI * j as f64 / (3 * s) as f64;
            folded.extend(eigenphases(&bloch_step_operator(1, 3, k, ky, TimeFrame::Original).unwrap().matrix, 0.0));
        }
        assert!(phase_multiset_distance(&big, &folded) < 1e-11);
        let w15 = spectral_flow_operator(1, 3, 2.0 * PI / 15.0, 0.3, kx, ky, 15).unwrap();
        assert!(unitarity_defect(&w15) < 1e-12);
        assert!(spectral_flow_operator(1, 3, 0.0, 0.0, kx, ky, 0).is_err());
    }

    #[test]
    fn landau_field_op() {
        let geo = LatticeGeometry::torus(6, 6);
        let g = GaugeField::landau(Flux::new(1, 3).unwrap(), geo).unwrap();
        let fy = field_op_from_gauge(&g, Axis::Y);
        let fx = field_op_from_gauge(&g, Axis::X);
        for y in 0..6 {
            for x in 0..6 {
                let i = geo.site(x, y);
                let ph = 2.0 * PI * x as f64 / 3.0;
                assert!((fy.up[i] - C64::from_polar(1.0, ph)).norm() < 1e-12);
                assert!((fy.down[i] - C64::from_polar(1.0, -ph)).norm() < 1e-12);
                assert!((fx.up[i] - c(1.0, 0.0)).norm() < 1e-15 && (fx.down[i] - c(1.0, 0.0)).norm() < 1e-15);
            }
        }
        for f in g.plaquette_flux_grid() {
            let r = f - 1.0 / 3.0;
            assert!((r - r.round()).abs() < 1e-12);
        }
        assert!(GaugeField::landau(Flux::new(1, 3).unwrap(), LatticeGeometry::torus(7, 6)).is_err());
    }

    #[test]
    fn pure_gauge_has_no_flux() {
        let geo = LatticeGeometry::torus(5, 4);
        let lambda: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let g = GaugeField::zero(geo).gauge_transform(&lambda);
        assert!(g.plaquette_flux_grid().iter().all(|f| f.abs() < 1e-14));
    }

    #[test]
    fn piecewise_landau_reproduces_flux() {
        let geo = LatticeGeometry { lx: 8, ly: 5, bc_x: Boundary::Open, bc_y: Boundary::Periodic };
        let (px, py) = geo.plaquette_dims();
        let flux: Vec<f64> = (0..px * py).map(|i| ((i * 7) % 5) as f64 / 10.0 - 0.2).collect();
        let g = GaugeField::from_plaquette_flux(geo, &flux).unwrap();
        for (a, b) in g.plaquette_flux_grid().iter().zip(&flux) {
            assert!((a - b).abs() < 1e-12);
        }
        let torus = LatticeGeometry::torus(6, 2);
        assert!(GaugeField::from_plaquette_flux(torus, &[0.1; 12]).is_err());
        assert!(GaugeField::from_plaquette_flux(torus, &[1.0 / 6.0; 12]).is_ok());
    }
}
