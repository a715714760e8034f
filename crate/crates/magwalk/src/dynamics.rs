//! Real-space evolution: wave packets, cyclotron orbits and edge transport along flux domains.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Result, WalkError};
use crate::linalg::{quasienergy, unitary_eigen, wrap_angle};
use crate::operators::{bloch_step_operator, Boundary, GaugeField, LatticeGeometry, RealSpaceWalk, TimeFrame};
use crate::C64;

/// Amplitudes over `(spin, y, x)`: index `s * Lx * Ly + y * Lx + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub geometry: LatticeGeometry,
    pub amplitudes: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(geometry: LatticeGeometry) -> Self {
        SpinorField { geometry, amplitudes: vec![C64::new(0.0, 0.0); 2 * geometry.sites()] }
    }

    pub fn single_site(geometry: LatticeGeometry, x: usize, y: usize, spin: (C64, C64)) -> Self {
        let mut s = Self::zeros(geometry);
        let i = geometry.site(x, y);
        s.amplitudes[i] = spin.0;
        s.amplitudes[geometry.sites() + i] = spin.1;
        s.normalize();
        s
    }

    #[inline]
    pub fn index(&self, spin: usize, x: usize, y: usize) -> usize {
        spin * self.geometry.sites() + self.geometry.site(x, y)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|z| *z /= n);
        }
    }

    pub fn inner(&self, other: &SpinorField) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Spin-summed probability per site.
    pub fn probability_map(&self) -> Vec<f64> {
        let n = self.geometry.sites();
        (0..n).map(|i| self.amplitudes[i].norm_sqr() + self.amplitudes[n + i].norm_sqr()).collect()
    }

    /// Support by sublattice parity `(x + y) mod 2`.
    pub fn parity_weights(&self) -> [f64; 2] {
        let geo = self.geometry;
        let p = self.probability_map();
        let mut w = [0.0; 2];
        for y in 0..geo.ly {
            for x in 0..geo.lx {
                w[(x + y) % 2] += p[geo.site(x, y)];
            }
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSelect {
    UpperCone,
    LowerCone,
    None,
}

#[derive(Clone, Copy, Debug)]
pub struct WavePacketSpec {
    pub center: (f64, f64),
    /// rms width of the probability density per axis; `0` with [`BandSelect::None`] puts the
    /// walker on the single site nearest `center`
    pub sigma: f64,
    pub k0: (f64, f64),
    pub band_select: BandSelect,
    /// spinor used when `band_select` is `None`
    pub spin: (C64, C64),
}

/// Eigenvector of the zero-field step operator at `k`, picking the larger (upper) or smaller
/// (lower) quasienergy.
pub fn cone_spinor(k: (f64, f64), band: BandSelect) -> (C64, C64) {
    let w = bloch_step_operator(0, 1, k.0, k.1, TimeFrame::Original).expect("zero flux is valid").matrix;
    let (vals, vecs) = unitary_eigen(&w);
    let e: Vec<f64> = vals.iter().map(|&l| quasienergy(l, 0.0)).collect();
    let pick = match band {
        BandSelect::LowerCone => usize::from(e[1] < e[0]),
        _ => usize::from(e[1] > e[0]),
    };
    (vecs[(0, pick)], vecs[(1, pick)])
}

fn displacement(a: f64, b: f64, len: usize, bc: Boundary) -> f64 {
    let d = b - a;
    match bc {
        Boundary::Open => d,
        Boundary::Periodic => {
            let l = len as f64;
            d - l * (d / l).round()
        }
    }
}

pub fn prepare_packet(spec: &WavePacketSpec, geometry: LatticeGeometry) -> Result<SpinorField> {
    prepare_packet_in_gauge(spec, &GaugeField::zero(geometry))
}

/// Gaussian packet with kinetic momentum `k0` at its center.
///
/// Each site carries the Peierls string from the center (mean of the two L-shaped paths), so
/// the momentum is measured locally whatever gauge origin is used.
pub fn prepare_packet_in_gauge(spec: &WavePacketSpec, gauge: &GaugeField) -> Result<SpinorField> {
    let geo = gauge.geometry;
    if spec.sigma < 0.0 || !spec.sigma.is_finite() {
        return Err(WalkError::param("sigma", spec.sigma, "must be non-negative"));
    }
    let (cx, cy) = spec.center;
    if cx < 0.0 || cy < 0.0 || cx > (geo.lx - 1) as f64 || cy > (geo.ly - 1) as f64 {
        return Err(WalkError::PacketOverflow(format!("center ({cx}, {cy}) outside the lattice")));
    }
    let spin = match spec.band_select {
        BandSelect::None => spec.spin,
        b => cone_spinor(spec.k0, b),
    };
    if spec.sigma == 0.0 {
        if spec.band_select != BandSelect::None {
            return Err(WalkError::param("sigma", 0, "a single-site start cannot select a band"));
        }
        return Ok(SpinorField::single_site(geo, cx.round() as usize, cy.round() as usize, spin));
    }
    let tail = |d: f64| (-d * d / (2.0 * spec.sigma * spec.sigma)).exp();
    let edge_dist = |c: f64, len: usize, bc: Boundary| match bc {
        Boundary::Open => c.min((len - 1) as f64 - c),
        Boundary::Periodic => len as f64 / 2.0,
    };
    let dmin = edge_dist(cx, geo.lx, geo.bc_x).min(edge_dist(cy, geo.ly, geo.bc_y));
    if tail(dmin) > 1e-8 {
        return Err(WalkError::PacketOverflow(format!(
            "density {:e} at distance {dmin} from the lattice edge",
            tail(dmin)
        )));
    }
    let origin = (cx.round() as usize, cy.round() as usize);
    let mut s = SpinorField::zeros(geo);
    let n = geo.sites();
    for y in 0..geo.ly {
        for x in 0..geo.lx {
            let dx = displacement(cx, x as f64, geo.lx, geo.bc_x);
            let dy = displacement(cy, y as f64, geo.ly, geo.bc_y);
            let env = (-(dx * dx + dy * dy) / (4.0 * spec.sigma * spec.sigma)).exp();
            if env < 1e-300 {
                continue;
            }
            let chi = 0.5 * (gauge.path_phase(origin, (x, y), true) + gauge.path_phase(origin, (x, y), false));
            let amp = C64::from_polar(env, spec.k0.0 * dx + spec.k0.1 * dy + chi);
            let i = geo.site(x, y);
            s.amplitudes[i] = amp * spin.0;
            s.amplitudes[n + i] = amp * spin.1;
        }
    }
    s.normalize();
    Ok(s)
}

/// Quasienergy estimate `-arg <psi|W|psi>` for a state concentrated in one narrow band.
pub fn quasienergy_expectation(state: &SpinorField, walk: &RealSpaceWalk) -> Result<f64> {
    let mut next = state.clone();
    let mut scratch = Vec::new();
    walk.step(&mut next, &mut scratch)?;
    Ok(-state.inner(&next).arg())
}

/// Flux landscape over the plaquettes of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub enum FluxLandscape {
    Uniform { phi: f64 },
    /// plaquette columns `x_left <= x < x_right` carry `phi_in`
    Stripe { phi_out: f64, phi_in: f64, x_left: usize, x_right: usize },
    /// plaquettes whose centers lie in the disk quadrant `x >= cx, y >= cy` of the given radius
    QuarterCircle { phi_out: f64, phi_in: f64, radius: f64, center: (f64, f64) },
    Grid { flux: Vec<f64> },
}

impl FluxLandscape {
    pub fn plaquette_flux(&self, geometry: LatticeGeometry) -> Result<Vec<f64>> {
        let (px, py) = geometry.plaquette_dims();
        let mut out = Vec::with_capacity(px * py);
        match self {
            FluxLandscape::Grid { flux } => {
                if flux.len() != px * py {
                    return Err(WalkError::DimensionMismatch {
                        expected: format!("{px}x{py} plaquettes"),
                        actual: flux.len().to_string(),
                    });
                }
                return Ok(flux.clone());
            }
            _ => {
                for y in 0..py {
                    for x in 0..px {
                        out.push(self.flux_at(x, y));
                    }
                }
            }
        }
        Ok(out)
    }

    fn flux_at(&self, x: usize, y: usize) -> f64 {
        match *self {
            FluxLandscape::Uniform { phi } => phi,
            FluxLandscape::Stripe { phi_out, phi_in, x_left, x_right } => {
                if (x_left..x_right).contains(&x) {
                    phi_in
                } else {
                    phi_out
                }
            }
            FluxLandscape::QuarterCircle { phi_out, phi_in, radius, center } => {
                let (u, v) = (x as f64 + 0.5 - center.0, y as f64 + 0.5 - center.1);
                if u >= 0.0 && v >= 0.0 && u * u + v * v <= radius * radius {
                    phi_in
                } else {
                    phi_out
                }
            }
            FluxLandscape::Grid { .. } => unreachable!(),
        }
    }

    /// Piecewise Landau gauge reproducing the landscape exactly on every plaquette.
    pub fn to_gauge(&self, geometry: LatticeGeometry) -> Result<GaugeField> {
        GaugeField::from_plaquette_flux(geometry, &self.plaquette_flux(geometry)?)
    }
}

/// Closed boundary of a quarter disk: the segment from the center along +x, the arc, and the
/// segment back along +y. Arc length runs counterclockwise from the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuarterCircleBoundary {
    pub center: (f64, f64),
    pub radius: f64,
}

impl QuarterCircleBoundary {
    pub fn perimeter(&self) -> f64 {
        self.radius * (2.0 + PI / 2.0)
    }

    /// Arc-length positions of the three corners: center, end of first segment, end of arc.
    pub fn corners(&self) -> [f64; 3] {
        let r = self.radius;
        [0.0, r, r + PI * r / 2.0]
    }

    pub fn point(&self, s: f64) -> (f64, f64) {
        let r = self.radius;
        let (cx, cy) = self.center;
        let s = s.rem_euclid(self.perimeter());
        if s < r {
            (cx + s, cy)
        } else if s < r + PI * r / 2.0 {
            let a = (s - r) / r;
            (cx + r * a.cos(), cy + r * a.sin())
        } else {
            (cx, cy + r - (s - r - PI * r / 2.0))
        }
    }

    /// Distance to the curve and arc-length position of the nearest point.
    pub fn nearest(&self, x: f64, y: f64) -> (f64, f64) {
        let r = self.radius;
        let (u, v) = (x - self.center.0, y - self.center.1);
        let mut best = (f64::INFINITY, 0.0);
        let t = u.clamp(0.0, r);
        let d = ((u - t).powi(2) + v * v).sqrt();
        if d < best.0 {
            best = (d, t);
        }
        let t = v.clamp(0.0, r);
        let d = (u * u + (v - t).powi(2)).sqrt();
        if d < best.0 {
            best = (d, self.perimeter() - t);
        }
        let a = v.atan2(u).clamp(0.0, PI / 2.0);
        let (ax, ay) = (r * a.cos(), r * a.sin());
        let d = ((u - ax).powi(2) + (v - ay).powi(2)).sqrt();
        if d < best.0 {
            best = (d, r + r * a);
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub final_state: SpinorField,
    /// `(step, probability map)` every `record_every` steps, starting with step 0
    pub maps: Vec<(usize, Vec<f64>)>,
    /// center of mass after every step, starting with step 0
    pub center_of_mass: Vec<(f64, f64)>,
    pub leakage: f64,
}

pub const LEAKAGE_LIMIT: f64 = 1e-6;

/// Applies `n_steps` steps, recording probability maps and the running center of mass.
pub fn evolve(state: &SpinorField, walk: &RealSpaceWalk, n_steps: usize, record_every: usize) -> Result<Evolution> {
    if n_steps < 1 {
        return Err(WalkError::param("n_steps", n_steps, "must be at least 1"));
    }
    if record_every < 1 {
        return Err(WalkError::param("record_every", record_every, "must be at least 1"));
    }
    let mut psi = state.clone();
    let mut scratch = Vec::new();
    let mut tracker = ComTracker::new(psi.geometry);
    let mut com = vec![tracker.update(&psi.probability_map())];
    let mut maps = vec![(0, psi.probability_map())];
    let mut leakage = 0.0;
    for step in 1..=n_steps {
        leakage += walk.step(&mut psi, &mut scratch)?;
        if leakage > LEAKAGE_LIMIT {
            return Err(WalkError::Leakage { leakage, limit: LEAKAGE_LIMIT, step });
        }
        let p = psi.probability_map();
        com.push(tracker.update(&p));
        if step % record_every == 0 {
            maps.push((step, p));
        }
    }
    Ok(Evolution { final_state: psi, maps, center_of_mass: com, leakage })
}

/// Center of mass that follows a packet continuously across periodic seams.
struct ComTracker {
    geometry: LatticeGeometry,
    last: Option<(f64, f64)>,
}

impl ComTracker {
    fn new(geometry: LatticeGeometry) -> Self {
        ComTracker { geometry, last: None }
    }

    fn axis_mean(p: &[f64], len: usize, bc: Boundary, coord: impl Fn(usize) -> usize) -> f64 {
        match bc {
            Boundary::Open => p.iter().enumerate().map(|(i, w)| w * coord(i) as f64).sum::<f64>() / p.iter().sum::<f64>(),
            Boundary::Periodic => {
                let z: C64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| C64::from_polar(w, 2.0 * PI * coord(i) as f64 / len as f64))
                    .sum();
                z.arg().rem_euclid(2.0 * PI) * len as f64 / (2.0 * PI)
            }
        }
    }

    fn update(&mut self, p: &[f64]) -> (f64, f64) {
        let geo = self.geometry;
        let lx = geo.lx;
        let mx = Self::axis_mean(p, geo.lx, geo.bc_x, |i| i % lx);
        let my = Self::axis_mean(p, geo.ly, geo.bc_y, |i| i / lx);
        let next = match self.last {
            None => (mx, my),
            Some((px, py)) => (
                px + displacement(px, mx, geo.lx, geo.bc_x),
                py + displacement(py, my, geo.ly, geo.bc_y),
            ),
        };
        self.last = Some(next);
        next
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CircleFit {
    pub center: (f64, f64),
    pub radius: f64,
    /// steps per revolution
    pub period: f64,
    /// +1 counterclockwise, -1 clockwise
    pub orientation: i32,
}

/// Algebraic (Kasa) circle fit of a track after dropping its first 5%, and the revolution
/// period from the unwrapped polar angle.
pub fn fit_circle(track: &[(f64, f64)]) -> Option<CircleFit> {
    let skip = track.len() / 20;
    let pts = &track[skip..];
    if pts.len() < 3 {
        return None;
    }
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for &(x, y) in pts {
        let row = Vector3::new(x, y, 1.0);
        let rhs = -(x * x + y * y);
        a += row * row.transpose();
        b += row * rhs;
    }
    let sol = a.lu().solve(&b)?;
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if r2 <= 0.0 {
        return None;
    }
    let mut angles = Vec::with_capacity(pts.len());
    let mut prev: Option<f64> = None;
    for &(x, y) in pts {
        let a = (y - cy).atan2(x - cx);
        let next = match prev {
            None => a,
            Some(p) => p + wrap_angle(a - p),
        };
        angles.push(next);
        prev = Some(next);
    }
    let n = angles.len() as f64;
    let tmean = (n - 1.0) / 2.0;
    let amean = angles.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &a) in angles.iter().enumerate() {
        let t = i as f64 - tmean;
        num += t * (a - amean);
        den += t * t;
    }
    let omega = num / den;
    Some(CircleFit {
        center: (cx, cy),
        radius: r2.sqrt(),
        period: 2.0 * PI / omega.abs(),
        orientation: if omega >= 0.0 { 1 } else { -1 },
    })
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct TrajectoryAnalysis {
    pub center_of_mass: Vec<(f64, f64)>,
    pub circle: Option<CircleFit>,
    /// `(step, boundary fraction)` for every recorded step
    pub boundary_fraction: Vec<(usize, f64)>,
}

impl TrajectoryAnalysis {
    pub fn from_evolution(ev: &Evolution) -> Self {
        TrajectoryAnalysis {
            center_of_mass: ev.center_of_mass.clone(),
            circle: fit_circle(&ev.center_of_mass),
            boundary_fraction: Vec::new(),
        }
    }
}

/// Probability within distance `d` of the boundary curve.
pub fn boundary_fraction(map: &[f64], geometry: LatticeGeometry, curve: &QuarterCircleBoundary, d: f64) -> f64 {
    let mut acc = 0.0;
    for y in 0..geometry.ly {
        for x in 0..geometry.lx {
            if curve.nearest(x as f64, y as f64).0 <= d {
                acc += map[geometry.site(x, y)];
            }
        }
    }
    acc.clamp(0.0, 1.0)
}

/// Connected stretch of near-boundary density along the curve.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct PacketComponent {
    /// arc-length centroid
    pub position: f64,
    pub weight: f64,
    pub extent: (f64, f64),
}

/// Splits the near-boundary density into connected components of the arc-length histogram
/// (unit bins, closed curve). Bins below `rel_threshold` of the peak bin separate components.
pub fn packet_components(map: &[f64], geometry: LatticeGeometry, curve: &QuarterCircleBoundary, d: f64, rel_threshold: f64) -> Vec<PacketComponent> {
    let per = curve.perimeter();
    // bins at least two sites wide so the integer-spaced straight edges leave no holes
    let nb = ((per / 2.0).floor() as usize).max(1);
    let mut hist = vec![0.0; nb];
    for y in 0..geometry.ly {
        for x in 0..geometry.lx {
            let (dist, s) = curve.nearest(x as f64, y as f64);
            if dist <= d {
                hist[((s / per * nb as f64) as usize).min(nb - 1)] += map[geometry.site(x, y)];
            }
        }
    }
    let peak = hist.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let on: Vec<bool> = hist.iter().map(|&h| h > rel_threshold * peak).collect();
    if on.iter().all(|&b| b) {
        let w: f64 = hist.iter().sum();
        return vec![PacketComponent { position: f64::NAN, weight: w, extent: (0.0, per) }];
    }
    // start scanning right after an empty bin so wrapped runs stay whole
    let start = on.iter().position(|&b| !b).unwrap();
    let bin = per / nb as f64;
    let mut comps = Vec::new();
    let mut i = 0;
    while i < nb {
        let b = (start + i) % nb;
        if !on[b] {
            i += 1;
            continue;
        }
        let first = i;
        let (mut w, mut m) = (0.0, 0.0);
        while i < nb && on[(start + i) % nb] {
            let bb = (start + i) % nb;
            let s = (start + i) as f64 * bin + bin / 2.0;
            w += hist[bb];
            m += hist[bb] * s;
            i += 1;
        }
        let lo = ((start + first) as f64 * bin).rem_euclid(per);
        let hi = ((start + i) as f64 * bin).rem_euclid(per);
        comps.push(PacketComponent { position: (m / w).rem_euclid(per), weight: w, extent: (lo, hi) });
    }
    comps
}

#[derive(Clone, Debug)]
pub struct EdgeExperiment {
    pub geometry: LatticeGeometry,
    pub phi_out: f64,
    pub phi_in: f64,
    pub boundary: QuarterCircleBoundary,
    pub start: (usize, usize),
    pub spin: (C64, C64),
    pub n_steps: usize,
    pub record_every: usize,
    pub window: f64,
}

impl EdgeExperiment {
    /// Quarter disk of the given radius with `phi_in` inside and `phi_out` outside, on an open
    /// lattice wide enough that nothing reaches its edges within `n_steps`, starting on the
    /// middle of the arc with spin `(up + down)/sqrt 2`.
    pub fn quarter_circle(radius: f64, phi_out: f64, phi_in: f64, n_steps: usize) -> Self {
        let r = radius.ceil() as usize;
        let half = n_steps + r + 4;
        let l = 2 * half + 1;
        let center = ((half - r / 2) as f64, (half - r / 2) as f64);
        let boundary = QuarterCircleBoundary { center, radius };
        let a = PI / 4.0;
        let start = (
            (center.0 + radius * a.cos()).round() as usize,
            (center.1 + radius * a.sin()).round() as usize,
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        EdgeExperiment {
            geometry: LatticeGeometry::open(l, l),
            phi_out,
            phi_in,
            boundary,
            start,
            spin: (C64::new(s, 0.0), C64::new(s, 0.0)),
            n_steps,
            record_every: 10,
            window: 5.0,
        }
    }

    pub fn landscape(&self) -> FluxLandscape {
        FluxLandscape::QuarterCircle {
            phi_out: self.phi_out,
            phi_in: self.phi_in,
            radius: self.boundary.radius,
            center: self.boundary.center,
        }
    }

    pub fn walk(&self) -> Result<RealSpaceWalk> {
        let gauge = self.landscape().to_gauge(self.geometry)?;
        RealSpaceWalk::from_gauge(&gauge, TimeFrame::Original, 1)
    }

    pub fn run(&self) -> Result<EdgeTransportReport> {
        self.run_with(&self.walk()?)
    }

    /// Runs with an externally built walk on the same lattice, e.g. with imprinted phases.
    pub fn run_with(&self, walk: &RealSpaceWalk) -> Result<EdgeTransportReport> {
        if self.boundary.nearest(self.start.0 as f64, self.start.1 as f64).0 > 2.0 {
            return Err(WalkError::param("start", format!("{:?}", self.start), "must be within 2 sites of the boundary"));
        }
        let psi = SpinorField::single_site(self.geometry, self.start.0, self.start.1, self.spin);
        let ev = evolve(&psi, walk, self.n_steps, self.record_every)?;
        let mut analysis = TrajectoryAnalysis::from_evolution(&ev);
        let mut components = Vec::new();
        for (step, map) in &ev.maps {
            analysis.boundary_fraction.push((*step, boundary_fraction(map, self.geometry, &self.boundary, self.window)));
            components.push((*step, packet_components(map, self.geometry, &self.boundary, self.window, 0.1)));
        }
        let transits = corner_transits(&components, &analysis.boundary_fraction, &self.boundary, 2);
        Ok(EdgeTransportReport { analysis, components, transits, maps: ev.maps, leakage: ev.leakage })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CornerTransit {
    pub corner: f64,
    pub step: usize,
    pub bulk_before: f64,
    pub bulk_after: f64,
}

impl CornerTransit {
    pub fn bulk_increase(&self) -> f64 {
        self.bulk_after - self.bulk_before
    }
}

#[derive(Clone, Debug)]
pub struct EdgeTransportReport {
    pub analysis: TrajectoryAnalysis,
    pub components: Vec<(usize, Vec<PacketComponent>)>,
    pub transits: Vec<CornerTransit>,
    pub maps: Vec<(usize, Vec<f64>)>,
    pub leakage: f64,
}

impl EdgeTransportReport {
    pub fn min_fraction_after(&self, step: usize) -> f64 {
        self.analysis
            .boundary_fraction
            .iter()
            .filter(|(s, _)| *s > step)
            .map(|(_, f)| *f)
            .fold(f64::INFINITY, f64::min)
    }
}

/// A transit is recorded when the centroid of a component that is followed from one record to the
/// next (nearest centroid within 8 sites) crosses a corner. The bulk fraction is compared
/// `half_window` records before and after.
fn corner_transits(components: &[(usize, Vec<PacketComponent>)], fractions: &[(usize, f64)], curve: &QuarterCircleBoundary, half_window: usize) -> Vec<CornerTransit> {
    let per = curve.perimeter();
    let mut out = Vec::new();
    for i in 1..components.len() {
        for c in &components[i].1 {
            if !c.position.is_finite() {
                continue;
            }
            let prev = components[i - 1]
                .1
                .iter()
                .filter(|p| p.position.is_finite())
                .map(|p| (p.position, wrap_circ(c.position - p.position, per)))
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            let Some((p0, ds)) = prev else { continue };
            if ds.abs() > 8.0 || ds == 0.0 {
                continue;
            }
            for &corner in &curve.corners() {
                let a = wrap_circ(p0 - corner, per);
                let b = a + ds;
                if a.signum() != b.signum() && a.abs() < 8.0 {
                    let lo = i.saturating_sub(half_window);
                    let hi = (i + half_window).min(fractions.len() - 1);
                    out.push(CornerTransit {
                        corner,
                        step: components[i].0,
                        bulk_before: 1.0 - fractions[lo].1,
                        bulk_after: 1.0 - fractions[hi].1,
                    });
                }
            }
        }
    }
    out
}

fn wrap_circ(d: f64, per: f64) -> f64 {
    d - per * (d / per).round()
}

/// Runs `n` steps under the primed-frame walk with flux `phi`, applies `sigma_x K`, runs `n`
/// steps with the flux reversed and undoes `sigma_x K`. Returns `max |psi_final - psi_0|`.
pub fn time_reversal_residual(gauge: &GaugeField, state: &SpinorField, n: usize) -> Result<f64> {
    let forward = RealSpaceWalk::from_gauge(gauge, TimeFrame::Primed, 1)?;
    let mut inverted = gauge.clone();
    inverted.ax_link.iter_mut().for_each(|t| *t = -*t);
    inverted.ay_link.iter_mut().for_each(|t| *t = -*t);
    let backward = RealSpaceWalk::from_gauge(&inverted, TimeFrame::Primed, 1)?;
    let mut psi = state.clone();
    let mut scratch = Vec::new();
    for _ in 0..n {
        forward.step(&mut psi, &mut scratch)?;
    }
    time_reversal(&mut psi);
    for _ in 0..n {
        backward.step(&mut psi, &mut scratch)?;
    }
    time_reversal(&mut psi);
    Ok(psi
        .amplitudes
        .iter()
        .zip(&state.amplitudes)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// `sigma_x` followed by elementwise complex conjugation (an involution).
pub fn time_reversal(psi: &mut SpinorField) {
    let n = psi.geometry.sites();
    let (up, down) = psi.amplitudes.split_at_mut(n);
    for (u, d) in up.iter_mut().zip(down.iter_mut()) {
        let (a, b) = (u.conj(), d.conj());
        *u = b;
        *d = a;
    }
}

/// Binary PGM (P5), 8 bit, scaled so the maximum maps to 255; row `y = 0` comes first.
pub fn write_pgm<W: Write>(out: W, map: &[f64], geometry: LatticeGeometry) -> std::io::Result<()> {
    write_pgm_raw(out, map, geometry.lx, geometry.ly)
}

/// [`write_pgm`] for a row-major `width x height` raster.
pub fn write_pgm_raw<W: Write>(mut out: W, map: &[f64], width: usize, height: usize) -> std::io::Result<()> {
    let max = map.iter().cloned().fold(0.0, f64::max);
    write!(out, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = map
        .iter()
        .map(|&p| if max > 0.0 { (p / max * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect();
    out.write_all(&bytes)
}

/// Real number with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// RFC 4180 writer (CRLF records).
pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out)
}

pub fn write_map_csv<W: Write>(out: W, map: &[f64], geometry: LatticeGeometry) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["x", "y", "probability"])?;
    for y in 0..geometry.ly {
        for x in 0..geometry.lx {
            w.write_record([x.to_string(), y.to_string(), fmt_real(map[geometry.site(x, y)])])?;
        }
    }
    w.flush()
}

pub fn write_trajectory_csv<W: Write>(out: W, com: &[(f64, f64)]) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["step", "x", "y"])?;
    for (i, (x, y)) in com.iter().enumerate() {
        w.write_record([i.to_string(), fmt_real(*x), fmt_real(*y)])?;
    }
    w.flush()
}
