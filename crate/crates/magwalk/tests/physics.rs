use std::f64::consts::PI;

use magwalk::dynamics::{evolve, time_reversal_residual, EdgeExperiment, FluxLandscape, SpinorField};
use magwalk::linalg::wrap_angle;
use magwalk::operators::{Flux, GaugeField, LatticeGeometry, RealSpaceWalk, TimeFrame};
use magwalk::realism::imprint_2d;
use magwalk::spectra::{bulk_gap_table, profile_edges, ribbon_spectrum, stripe_profile, uniform_ky_grid, EDGE_WINDOW};
use magwalk::symmetry::random_states;
use magwalk::topology::{bulk_boundary_check, rlbl_invariant, RLBL_PROBE, RLBL_S};
use magwalk::operators::BlochCell;
use magwalk::C64;

#[test]
fn ideal_stripe_edges_match_rlbl_differences() {
    let (out, inn) = (Flux::new(-1, 3).unwrap(), Flux::new(1, 3).unwrap());
    let profile = stripe_profile(60, 15, 45, out.value(), inn.value());
    assert_eq!(profile_edges(&profile), vec![15, 45]);
    let ribbon = ribbon_spectrum(&profile, &uniform_ky_grid(256), EDGE_WINDOW).unwrap();
    let t_in = bulk_gap_table(&BlochCell::landau(inn), inn, 32).unwrap();
    let t_out = bulk_gap_table(&BlochCell::landau(out), out, 32).unwrap();
    assert_eq!(t_in.gaps.len(), 4);
    for gap in &t_in.gaps {
        let r_in = rlbl_invariant(inn.p, inn.q, gap.midgap, RLBL_S, RLBL_PROBE, &t_in).unwrap().value;
        let r_out = rlbl_invariant(out.p, out.q, gap.midgap, RLBL_S, RLBL_PROBE, &t_out).unwrap().value;
        assert_eq!(r_in, -r_out);
        let rep = bulk_boundary_check(&ribbon, r_in, r_out, gap);
        assert!(rep.holds(), "{rep:?}");
        assert!(rep.edges.iter().all(|e| e.modes >= 2 && e.net.abs() == 2));
    }
}

#[test]
fn uniform_ring_has_no_edge_branches() {
    let f = Flux::new(1, 3).unwrap();
    let profile = vec![f.value(); 30];
    let ribbon = ribbon_spectrum(&profile, &uniform_ky_grid(64), EDGE_WINDOW).unwrap();
    let table = bulk_gap_table(&BlochCell::landau(f), f, 32).unwrap();
    for gap in &table.gaps {
        let rep = bulk_boundary_check(&ribbon, 0, 0, gap);
        assert!(rep.crossings.is_empty(), "{:?}", rep.crossings);
    }
}

#[test]
fn single_site_start_stays_on_its_sublattice() {
    let geo = LatticeGeometry::torus(12, 12);
    let gauge = GaugeField::landau(Flux::new(1, 3).unwrap(), geo).unwrap();
    let walk = RealSpaceWalk::from_gauge(&gauge, TimeFrame::Original, 1).unwrap();
    let psi = SpinorField::single_site(geo, 4, 6, (C64::new(1.0, 0.0), C64::new(0.0, 0.0)));
    let ev = evolve(&psi, &walk, 50, 1).unwrap();
    for (step, map) in &ev.maps {
        for y in 0..12 {
            for x in 0..12 {
                if (x + y + 4 + 6 + 2 * step) % 2 == 1 {
                    assert!(map[geo.site(x, y)] < 1e-28, "step {step} site ({x}, {y})");
                }
            }
        }
    }
}

#[test]
fn zero_field_support_alternates_parity() {
    let geo = LatticeGeometry::torus(10, 10);
    let walk = RealSpaceWalk::from_gauge(&GaugeField::zero(geo), TimeFrame::Original, 1).unwrap();
    let psi = SpinorField::single_site(geo, 5, 5, (C64::new(0.0, 0.0), C64::new(1.0, 0.0)));
    let ev = evolve(&psi, &walk, 7, 1).unwrap();
    for (step, map) in &ev.maps {
        for y in 0..10 {
            for x in 0..10 {
                if map[geo.site(x, y)] > 1e-28 {
                    assert_eq!((x + step) % 2, 5 % 2, "x parity at step {step}");
                    assert_eq!((y + step) % 2, 5 % 2, "y parity at step {step}");
                }
            }
        }
    }
}

#[test]
fn unblurred_stripe_imprint_reproduces_the_gauge_walk() {
    let geo = LatticeGeometry::open(40, 40);
    let landscape = FluxLandscape::Stripe { phi_out: -1.0 / 3.0, phi_in: 1.0 / 3.0, x_left: 12, x_right: 28 };
    let flux = landscape.plaquette_flux(geo).unwrap();
    let theta = imprint_2d(geo, &flux, 1.0 / 3.0, 0.5, 0.0);
    let imprinted = RealSpaceWalk::from_site_phases(geo, &theta, TimeFrame::Original, 1).unwrap();
    let ideal = RealSpaceWalk::from_gauge(&landscape.to_gauge(geo).unwrap(), TimeFrame::Original, 1).unwrap();
    let psi = SpinorField::single_site(geo, 20, 20, (C64::new(0.6, 0.0), C64::new(0.0, 0.8)));
    let a = evolve(&psi, &ideal, 12, 12).unwrap();
    let b = evolve(&psi, &imprinted, 12, 12).unwrap();
    let (pa, pb) = (a.final_state.probability_map(), b.final_state.probability_map());
    let diff = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn unblurred_2d_imprint_matches_link_phases_row_by_row() {
    let exp = EdgeExperiment::quarter_circle(10.0, 1.0 / 3.0, -1.0 / 3.0, 30);
    let geo = exp.geometry;
    let flux = exp.landscape().plaquette_flux(geo).unwrap();
    let theta = imprint_2d(geo, &flux, 1.0 / 3.0, 0.5, 0.0);
    let gauge = GaugeField::from_plaquette_flux(geo, &flux).unwrap();
    for y in 0..geo.ly {
        let off = theta[geo.site(0, y)] - gauge.ay_link[geo.site(0, y)];
        for x in 0..geo.lx {
            let d = wrap_angle(theta[geo.site(x, y)] - gauge.ay_link[geo.site(x, y)] - off);
            assert!(d.abs() < 1e-9, "({x}, {y}): {d}");
        }
    }
}

#[test]
fn reversed_flux_undoes_the_walk() {
    let geo = LatticeGeometry::torus(12, 12);
    let gauge = GaugeField::landau(Flux::new(1, 3).unwrap(), geo).unwrap();
    let psi = random_states(&gauge, 1, 7).remove(0);
    assert!(time_reversal_residual(&gauge, &psi, 20).unwrap() < 1e-12);
}

#[test]
fn cone_packet_moves_at_the_bloch_group_velocity() {
    use magwalk::dynamics::{prepare_packet, BandSelect, WavePacketSpec};
    use magwalk::linalg::eigenphases;
    let k0 = (PI / 2.0 + 0.3, -PI / 2.0);
    let cell = BlochCell::landau(Flux::new(0, 1).unwrap());
    let upper = |kx: f64, ky: f64| eigenphases(&cell.step(kx, ky, TimeFrame::Original), 0.0)[1];
    let h = 1e-5;
    let v = ((upper(k0.0 + h, k0.1) - upper(k0.0 - h, k0.1)) / (2.0 * h), (upper(k0.0, k0.1 + h) - upper(k0.0, k0.1 - h)) / (2.0 * h));
    let geo = LatticeGeometry::torus(160, 160);
    let walk = RealSpaceWalk::from_gauge(&GaugeField::zero(geo), TimeFrame::Original, 1).unwrap();
    let spec = WavePacketSpec {
        center: (80.0, 80.0),
        sigma: 12.0,
        k0,
        band_select: BandSelect::UpperCone,
        spin: (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
    };
    let ev = evolve(&prepare_packet(&spec, geo).unwrap(), &walk, 40, 40).unwrap();
    let (x0, y0) = ev.center_of_mass[0];
    let (x1, y1) = ev.center_of_mass[40];
    let speed = (x1 - x0).hypot(y1 - y0) / 40.0;
    assert!((speed - v.0.hypot(v.1)).abs() < 0.1 * v.0.hypot(v.1), "{speed} vs {v:?}");
}
