//! Cross-checks against independent constructions and frozen reference values.

use std::f64::consts::PI;

use magwalk::dynamics::SpinorField;
use magwalk::linalg::{eigenphases, phase_multiset_distance};
use magwalk::operators::{BlochCell, Flux, GaugeField, LatticeGeometry, RealSpaceWalk, TimeFrame};
use magwalk::realism::{p_ex_perturbative, psf_sigma, tau_ho};
use magwalk::spectra::{bulk_gap_table, butterfly_column, sorted_eigen};
use magwalk::topology::chern_number_converged;
use magwalk::{CMatrix, C64};

/// Dense real-space step on a torus, built column by column.
fn dense_walk(gauge: &GaugeField) -> CMatrix {
    let geo = gauge.geometry;
    let walk = RealSpaceWalk::from_gauge(gauge, TimeFrame::Original, 1).unwrap();
    let dim = 2 * geo.sites();
    let mut m = CMatrix::zeros(dim, dim);
    let mut scratch = Vec::new();
    for c in 0..dim {
        let mut s = SpinorField::zeros(geo);
        s.amplitudes[c] = C64::new(1.0, 0.0);
        walk.step(&mut s, &mut scratch).unwrap();
        for (r, z) in s.amplitudes.iter().enumerate() {
            m[(r, c)] = *z;
        }
    }
    m
}

/// Bloch eigenphases at every momentum allowed on an `lx x ly` torus.
fn bloch_union(flux: Flux, lx: usize, ly: usize) -> Vec<f64> {
    let cell = BlochCell::landau(flux);
    let n = cell.n();
    let cells = lx / n;
    let mut out = Vec::new();
    for m in 0..cells {
        let kx = 2.0 * PI * m as f64 / (n * cells) as f64;
        for j in 0..ly {
            out.extend(eigenphases(&cell.step(kx, 2.0 * PI * j as f64 / ly as f64, TimeFrame::Original), 0.0));
        }
    }
    out
}

#[test]
fn torus_spectrum_is_union_of_bloch_spectra() {
    for (p, q, lx, ly) in [(0, 1, 4, 4), (1, 3, 6, 6), (2, 5, 10, 4), (1, 4, 8, 6)] {
        let f = Flux::new(p, q).unwrap();
        let gauge = GaugeField::landau(f, LatticeGeometry::torus(lx, ly)).unwrap();
        let real = eigenphases(&dense_walk(&gauge), 0.0);
        let bloch = bloch_union(f, lx, ly);
        assert!(phase_multiset_distance(&real, &bloch) < 1e-10, "{p}/{q}");
    }
}

/// Projector onto eigenvectors with phases in the arc `(lo, hi)` taken counterclockwise.
fn projector(cell: &BlochCell, k: (f64, f64), lo: f64, hi: f64) -> CMatrix {
    let (e, v) = sorted_eigen(&cell.step(k.0, k.1, TimeFrame::Original));
    let d = v.nrows();
    let span = (hi - lo).rem_euclid(2.0 * PI);
    let mut p = CMatrix::zeros(d, d);
    for (i, &ei) in e.iter().enumerate() {
        if (ei - lo).rem_euclid(2.0 * PI) < span {
            let c = v.column(i);
            p += &c * c.adjoint();
        }
    }
    p
}

/// Berry-curvature integral `(1/2 pi) sum i Tr P [dP/dkx, dP/dky]` on a midpoint grid.
fn projector_chern(cell: &BlochCell, lo: f64, hi: f64, n: usize) -> f64 {
    let a = 2.0 * PI / cell.n() as f64;
    let h = 1e-5;
    let mut total = 0.0;
    for ix in 0..n {
        for iy in 0..n {
            let k = (-a / 2.0 + a * (ix as f64 + 0.5) / n as f64, -PI + 2.0 * PI * (iy as f64 + 0.5) / n as f64);
            let p = projector(cell, k, lo, hi);
            let dx = (projector(cell, (k.0 + h, k.1), lo, hi) - projector(cell, (k.0 - h, k.1), lo, hi)) / C64::new(2.0 * h, 0.0);
            let dy = (projector(cell, (k.0, k.1 + h), lo, hi) - projector(cell, (k.0, k.1 - h), lo, hi)) / C64::new(2.0 * h, 0.0);
            let f = (C64::new(0.0, 1.0) * (&p * (&dx * &dy - &dy * &dx)).trace()).re;
            total += f * (a / n as f64) * (2.0 * PI / n as f64);
        }
    }
    total / (2.0 * PI)
}

#[test]
fn link_variable_chern_matches_berry_curvature_on_finer_grid() {
    for (p, q) in [(1, 3), (2, 5)] {
        let f = Flux::new(p, q).unwrap();
        let cell = BlochCell::landau(f);
        let table = bulk_gap_table(&cell, f, 32).unwrap();
        let mut gaps = table.gaps.clone();
        gaps.sort_by(|a, b| a.midgap.total_cmp(&b.midgap));
        let groups = table.band_groups();
        for (i, g) in gaps.iter().enumerate() {
            let next = gaps[(i + 1) % gaps.len()];
            let group = groups.iter().find(|b| b.start == (g.below + 1) % table.n_bands).unwrap();
            let link = chern_number_converged(&cell, f, *group, 32, 256).unwrap();
            // the link-variable value follows the (1/2 pi i) ln U convention, opposite to the
            // Berry curvature of i <u|grad u>
            let berry = projector_chern(&cell, g.midgap, next.midgap, 4 * link.grid.0);
            assert!((berry + link.value as f64).abs() < 1e-2, "{p}/{q} above {}: {berry} vs {}", g.midgap, link.value);
        }
    }
}

#[test]
fn zero_energy_landau_pair_carries_chern_two() {
    for q in [3, 5, 7] {
        let f = Flux::new(1, q).unwrap();
        let cell = BlochCell::landau(f);
        let table = bulk_gap_table(&cell, f, 32).unwrap();
        let group = table
            .band_groups()
            .into_iter()
            .find(|g| g.indices().contains(&(q as usize)) && g.indices().contains(&(q as usize - 1)))
            .unwrap();
        assert_eq!(group.len, 2);
        assert_eq!(chern_number_converged(&cell, f, group, 32, 256).unwrap().value, 2, "1/{q}");
    }
}

#[test]
fn third_flux_gap_widths_frozen() {
    let f = Flux::new(1, 3).unwrap();
    let table = bulk_gap_table(&BlochCell::landau(f), f, 32).unwrap();
    let below: Vec<usize> = table.gaps.iter().map(|g| g.below).collect();
    assert_eq!(below, vec![0, 1, 3, 4]);
    for g in &table.gaps {
        assert!((g.width - 1.135_658_7).abs() < 1e-6, "{g:?}");
    }
}

#[test]
fn weak_field_landau_levels_follow_dirac_scaling() {
    let f = Flux::new(1, 200).unwrap();
    let levels = butterfly_column(f, 1).landau_levels(3);
    assert!(levels[0].abs() < 1e-10);
    for n in 1..=3 {
        let want = (4.0 * PI * n as f64 * f.value()).sqrt();
        assert!((levels[n] - want).abs() / want < 0.01, "n={n}: {} vs {want}", levels[n]);
    }
}

#[test]
fn psf_edge_rise_equals_abbe_radius() {
    // 1%-99% rise of a Gaussian-blurred step spans 2 z_0.99 sigma
    let z99 = 2.326_347_874_040_841;
    let abbe = 1.43 / (2.0 * 0.92);
    assert!((psf_sigma(0.92, 1.43) - abbe / (2.0 * z99)).abs() < 1e-12);
    assert!((psf_sigma(0.92, 1.43) - 0.167_037_338).abs() < 1e-9);
}

#[test]
fn perturbative_excitation_frozen() {
    assert!((tau_ho(850.0) - 2.0 * PI / 1700f64.sqrt()).abs() < 1e-15);
    assert!((p_ex_perturbative(1.0 / 3.0, 850.0, 0.5) - 2.184_355_253_699_152_6e-3).abs() < 1e-12);
    assert!(p_ex_perturbative(1.0 / 3.0, 850.0, 2.0) == 0.0);
}
