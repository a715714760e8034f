use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use clap::Parser;
use serde_json::Value;

use magwalk::cli::{compute, flux_list, symmetry_reports, Cli, Outcome};
use magwalk::linalg::wrap_angle;
use magwalk::operators::{BlochCell, Flux};
use magwalk::spectra::{bulk_gap_table, butterfly_column, find_dirac_points, GapTable};
use magwalk::topology::{chern_number_converged, rlbl_all_gaps, RLBL_S};

struct Verdict {
    pass: bool,
    detail: String,
}

/// Checks that all must hold, each with a short label.
#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn add(&mut self, what: impl Into<String>, ok: bool) {
        self.0.push((what.into(), ok));
    }
    fn verdict(self, extra: String) -> Verdict {
        let pass = self.0.iter().all(|c| c.1);
        let failed: Vec<&str> = self.0.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        let detail = if failed.is_empty() { extra } else { format!("failed: {}; {extra}", failed.join(", ")) };
        Verdict { pass, detail }
    }
}

/// Outputs of every CLI run, kept for the determinism criterion.
#[derive(Default)]
struct Runs(Vec<(Vec<String>, Outcome)>);

impl Runs {
    fn run(&mut self, args: &[&str]) -> Outcome {
        let argv: Vec<String> = std::iter::once("magwalk").chain(args.iter().copied()).map(String::from).collect();
        let cli = Cli::try_parse_from(&argv).expect("valid arguments");
        let out = compute(&cli.command, cli.seed).expect("run succeeds");
        self.0.push((argv, out.clone()));
        out
    }
}

fn file<'a>(out: &'a Outcome, name: &str) -> &'a [u8] {
    &out.files.iter().find(|f| f.name == name).unwrap_or_else(|| panic!("missing {name}")).bytes
}

fn json(out: &Outcome, name: &str) -> Value {
    serde_json::from_slice(file(out, name)).expect("valid json")
}

fn csv_rows(out: &Outcome, name: &str) -> Vec<Vec<String>> {
    csv::Reader::from_reader(file(out, name))
        .records()
        .map(|r| r.expect("valid csv").iter().map(String::from).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().expect("number")
}

fn close(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    wrap_angle(a.0 - b.0).abs() < tol && wrap_angle(a.1 - b.1).abs() < tol
}

fn ac1() -> Verdict {
    let pts = find_dirac_points(0, 1, 64, 1e-8).expect("dirac points");
    let expected = [
        ((PI / 2.0, -PI / 2.0), 0.0),
        ((-PI / 2.0, PI / 2.0), 0.0),
        ((PI / 2.0, PI / 2.0), PI),
        ((-PI / 2.0, -PI / 2.0), PI),
    ];
    let mut c = Checks::default();
    c.add("exactly four points", pts.len() == 4);
    for (k, e) in expected {
        let hit = pts.iter().any(|p| close(p.k, k, 1e-8) && wrap_angle(p.energy - e).abs() < 1e-8 && p.gap < 1e-8);
        c.add(format!("point at ({:.4}, {:.4}) E={e:.4}", k.0, k.1), hit);
    }
    let max_gap = pts.iter().map(|p| p.gap).fold(0.0, f64::max);
    c.verdict(format!("{} points, largest gap {max_gap:.1e}", pts.len()))
}

fn ac2(runs: &mut Runs) -> Verdict {
    let out = runs.run(&["evolve", "--preset", "cyclotron"]);
    let s = json(&out, "summary.json");
    let circle = &s["circle"];
    let (r, t) = (circle["radius"].as_f64().unwrap_or(f64::NAN), circle["period"].as_f64().unwrap_or(f64::NAN));
    let mut c = Checks::default();
    c.add("radius in [145, 155]", (145.0..=155.0).contains(&r));
    c.add("period in [927, 957]", (927.0..=957.0).contains(&t));
    c.verdict(format!("radius {r:.2} sites, period {t:.1} steps"))
}

/// Gap midpoints and invariants of one flux.
struct Invariants {
    table: GapTable,
    rlbl: Vec<i64>,
    /// Chern number of the group above each gap, in gap order
    chern_above: Vec<i64>,
}

fn invariants(flux: Flux) -> Invariants {
    let cell = BlochCell::landau(flux);
    let table = bulk_gap_table(&cell, flux, 32).expect("gap table");
    let rlbl = rlbl_all_gaps(flux.p, flux.q, RLBL_S, &table).expect("rlbl").iter().map(|r| r.value).collect();
    let groups = table.band_groups();
    let chern_above = table
        .gaps
        .iter()
        .map(|g| {
            let start = (g.below + 1) % table.n_bands;
            let group = groups.iter().find(|b| b.start == start).expect("group above gap");
            chern_number_converged(&cell, flux, *group, 32, 256).expect("chern").value
        })
        .collect();
    Invariants { table, rlbl, chern_above }
}

fn gap_index(t: &GapTable, e: f64) -> Option<usize> {
    t.gaps.iter().position(|g| g.contains(e))
}

fn ac3() -> Verdict {
    let inv = invariants(Flux::new(1, 3).unwrap());
    let n = inv.table.gaps.len();
    let mut c = Checks::default();
    c.add("six gaps and six Chern numbers", n == 6);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| inv.table.gaps[a].midgap.total_cmp(&inv.table.gaps[b].midgap));
    let mut diff_ok = true;
    for w in 0..n {
        let (lo, hi) = (order[w], order[(w + 1) % n]);
        diff_ok &= inv.rlbl[hi] - inv.rlbl[lo] == inv.chern_above[lo];
    }
    c.add("R_above - R_below = C", n > 0 && diff_ok);
    c.add("sum of Chern numbers is zero", inv.chern_above.iter().sum::<i64>() == 0);
    let mut mirror_r = true;
    let mut mirror_c = true;
    let mut shift_r = true;
    for (i, g) in inv.table.gaps.iter().enumerate() {
        match gap_index(&inv.table, -g.midgap) {
            Some(j) => {
                mirror_r &= inv.rlbl[j] == -inv.rlbl[i];
                // the group above the gap at E mirrors to the group below the gap at -E
                let below_j = order[(order.iter().position(|&x| x == j).unwrap() + n - 1) % n];
                mirror_c &= inv.chern_above[below_j] == inv.chern_above[i];
            }
            None => {
                mirror_r = false;
                mirror_c = false;
            }
        }
        shift_r &= gap_index(&inv.table, g.midgap + PI).is_some_and(|j| inv.rlbl[j] == inv.rlbl[i]);
    }
    c.add("Chern set mirror symmetric", mirror_c);
    c.add("RLBL set mirror antisymmetric", mirror_r);
    c.add("RLBL equal at E and E + pi", shift_r);
    let mids: Vec<String> = order.iter().map(|&i| format!("{:.3}", inv.table.gaps[i].midgap)).collect();
    let rs: Vec<i64> = order.iter().map(|&i| inv.rlbl[i]).collect();
    let cs: Vec<i64> = order.iter().map(|&i| inv.chern_above[i]).collect();
    c.verdict(format!("{n} gaps at [{}], RLBL {rs:?}, Chern above {cs:?}", mids.join(", ")))
}

fn ac4() -> Verdict {
    let (a, b) = (invariants(Flux::new(1, 3).unwrap()), invariants(Flux::new(-1, 3).unwrap()));
    let mut c = Checks::default();
    c.add("same gap count", a.table.gaps.len() == b.table.gaps.len());
    for (i, g) in a.table.gaps.iter().enumerate() {
        let Some(j) = gap_index(&b.table, g.midgap) else {
            c.add(format!("gap at {:.3} present for -1/3", g.midgap), false);
            continue;
        };
        c.add(format!("R opposite at {:.3}", g.midgap), a.rlbl[i] == -b.rlbl[j]);
        c.add(format!("C opposite above {:.3}", g.midgap), a.chern_above[i] == -b.chern_above[j]);
    }
    c.verdict(format!("RLBL {:?} vs {:?}, Chern {:?} vs {:?}", a.rlbl, b.rlbl, a.chern_above, b.chern_above))
}

fn ac5(runs: &mut Runs) -> Verdict {
    let out = runs.run(&["stripe", "--lx", "60", "--left", "15", "--right", "45", "--phi-out", "-1/3", "--phi-in", "1/3", "--ky", "256", "--na", "0.92"]);
    let v = json(&out, "bulk_boundary.json");
    let gaps = v["gaps"].as_array().cloned().unwrap_or_default();
    let mut c = Checks::default();
    c.add("at least one gap", !gaps.is_empty());
    let mut desc = Vec::new();
    for g in &gaps {
        let rep = &g["report"];
        let mid = rep["gap"]["midgap"].as_f64().unwrap();
        let edges = rep["edges"].as_array().unwrap();
        let modes_ok = edges.len() == 2 && edges.iter().all(|e| e["modes"].as_u64().unwrap() >= 1);
        let net_ok = edges.iter().all(|e| e["net"] == e["expected"]);
        c.add(format!("branches on both edges at {mid:.3}"), modes_ok);
        c.add(format!("net crossings at {mid:.3}"), net_ok && g["holds"].as_bool().unwrap());
        let nets: Vec<String> = edges.iter().map(|e| format!("{}/{}", e["net"], e["expected"])).collect();
        desc.push(format!("{mid:.3}: {}", nets.join(" ")));
    }
    c.verdict(format!("net/expected per edge: {}", desc.join("; ")))
}

fn ac6(runs: &mut Runs) -> Verdict {
    let island = runs.run(&["edge", "--radius", "40", "--steps", "400"]);
    let control = runs.run(&["edge", "--radius", "40", "--steps", "400", "--control"]);
    let s = json(&island, "edge_summary.json");
    let min_after = s["min_fraction_after_20"].as_f64().unwrap();
    let max_inc = s["max_bulk_increase"].as_f64().unwrap_or(0.0);
    let ctl = csv_rows(&control, "boundary_fraction.csv");
    let ctl_fails = ctl.iter().any(|r| r[0].parse::<usize>().unwrap() <= 100 && num(&r[1]) < 0.6);
    let mut c = Checks::default();
    c.add("boundary fraction > 0.6 after step 20", min_after > 0.6);
    c.add("bulk increase per corner < 0.05", max_inc < 0.05);
    c.add("control drops below 0.6 by step 100", ctl_fails);
    let transits = s["transits"].as_array().map_or(0, |t| t.len());
    c.verdict(format!("min fraction {min_after:.3}, largest bulk increase {max_inc:.4} over {transits} transits"))
}

fn ac7() -> Verdict {
    let mut c = Checks::default();
    let mut desc = Vec::new();
    for q in [80, 120, 200] {
        let f = Flux::new(1, q).unwrap();
        let levels = butterfly_column(f, 1).landau_levels(2);
        for n in 1..=2 {
            let want = (4.0 * PI * n as f64 * f.value()).sqrt();
            let got = levels.get(n).copied().unwrap_or(f64::NAN);
            let rel = (got - want).abs() / want;
            c.add(format!("1/{q} n={n}"), rel < 0.1);
            desc.push(format!("1/{q} n={n} {:.2}%", 100.0 * rel));
        }
    }
    c.verdict(format!("relative deviations {}", desc.join(", ")))
}

fn ac8() -> Verdict {
    let mut c = Checks::default();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for f in flux_list(10) {
        for r in symmetry_reports(f, 20, 12, 20).expect("symmetry") {
            c.add(format!("{} at {}/{}", r.name, f.p, f.q), r.pass);
            let w = worst.entry(r.name.clone()).or_insert(0.0);
            *w = w.max(r.residual);
        }
    }
    let desc: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    c.verdict(format!("largest residuals: {}", desc.join(", ")))
}

fn ac9(runs: &mut Runs) -> Verdict {
    let out = runs.run(&["realism-pex", "--phi", "1/3", "--v0", "850", "--numeric"]);
    let rows = csv_rows(&out, "pex.csv");
    let mut c = Checks::default();
    let pert_max = rows.iter().map(|r| num(&r[1])).fold(0.0, f64::max);
    c.add("perturbative p_ex < 1e-2", pert_max < 1e-2);
    let mut worst_ratio: f64 = 1.0;
    for r in &rows {
        let (t, pp, pn) = (num(&r[0]), num(&r[1]), num(&r[2]));
        if (t - t.round()).abs() > 0.15 {
            let ratio = (pn / pp).max(pp / pn);
            worst_ratio = worst_ratio.max(ratio);
            c.add(format!("factor 2 at tau = {t:.2} tau_HO"), ratio <= 2.0);
        }
    }
    let at_one = rows.iter().find(|r| (num(&r[0]) - 1.0).abs() < 1e-9).map(|r| num(&r[2]));
    c.add("numeric p_ex < 1e-5 at tau_HO", at_one.is_some_and(|p| p < 1e-5));
    c.verdict(format!(
        "max perturbative {pert_max:.2e}, worst numeric/perturbative ratio {worst_ratio:.2}, numeric at tau_HO {:.2e}",
        at_one.unwrap_or(f64::NAN)
    ))
}

fn ac10(runs: &mut Runs) -> Verdict {
    let out = runs.run(&["realism-gap-scan", "--m", "1,2,4", "--na", "0.92", "--shifts", "20", "--grid", "48"]);
    let mut by_m: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in csv_rows(&out, "gap_scan.csv") {
        by_m.entry(r[0].parse().unwrap()).or_default().push((num(&r[1]), num(&r[2])));
    }
    let min_of = |m: usize| by_m[&m].iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_of = |m: usize| by_m[&m].iter().map(|p| p.1).fold(0.0, f64::max);
    let argmax = by_m[&1].iter().copied().fold((0.0, f64::NEG_INFINITY), |a, p| if p.1 > a.1 + 1e-12 { p } else { a });
    let mut c = Checks::default();
    c.add("m=1 maximal at shift 0.5", (argmax.0 - 0.5).abs() < 1e-9);
    c.add("min over shift non-decreasing in m", min_of(1) <= min_of(2) && min_of(2) <= min_of(4));
    c.add("m=4 within 10% of its maximum", min_of(4) >= 0.9 * max_of(4));
    let desc: Vec<String> = [1, 2, 4].iter().map(|&m| format!("m={m} min {:.4} max {:.4}", min_of(m), max_of(m))).collect();
    c.verdict(format!("{}; m=1 peak at shift {:.2}", desc.join(", "), argmax.0))
}

fn ac11(runs: &Runs) -> Verdict {
    let mut c = Checks::default();
    let mut extra = Runs::default();
    extra.run(&["bands", "--p", "1", "--q", "3"]);
    extra.run(&["chern", "--p", "1", "--q", "3"]);
    extra.run(&["rlbl", "--p", "1", "--q", "3", "--all-gaps"]);
    extra.run(&["butterfly", "--q-max", "12"]);
    extra.run(&["symmetry", "--q-max", "10"]);
    let mut count = 0;
    for (argv, first) in runs.0.iter().chain(extra.0.iter()) {
        let cli = Cli::try_parse_from(argv).expect("valid arguments");
        let second = compute(&cli.command, cli.seed).expect("run succeeds");
        let same = first.files.len() == second.files.len()
            && first.files.iter().zip(&second.files).all(|(a, b)| a.name == b.name && a.bytes == b.bytes);
        c.add(argv[1..].join(" "), same);
        count += first.files.len();
    }
    c.verdict(format!("{count} files compared across {} configurations", runs.0.len() + extra.0.len()))
}

fn main() {
    let mut runs = Runs::default();
    type Criterion<'a> = (&'a str, &'a str, f64, Box<dyn FnOnce(&mut Runs) -> Verdict + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("AC1", "zero-field Dirac points", 1.0, Box::new(|_| ac1())),
        ("AC2", "cyclotron orbit", 120.0, Box::new(ac2)),
        ("AC3", "invariant consistency at 1/3", 60.0, Box::new(|_| ac3())),
        ("AC4", "flux inversion", f64::INFINITY, Box::new(|_| ac4())),
        ("AC5", "bulk-boundary correspondence", 300.0, Box::new(ac5)),
        ("AC6", "edge transport", 60.0, Box::new(ac6)),
        ("AC7", "Landau levels", 300.0, Box::new(|_| ac7())),
        ("AC8", "symmetry suite", 60.0, Box::new(|_| ac8())),
        ("AC9", "motional excitations", 120.0, Box::new(ac9)),
        ("AC10", "alignment scan", 600.0, Box::new(ac10)),
    ];
    let mut passed = 0;
    let mut total = 0;
    let mut report = |id: &str, title: &str, budget: f64, v: Verdict, secs: f64| {
        let in_time = secs < budget;
        let ok = v.pass && in_time;
        total += 1;
        passed += ok as usize;
        let time = if budget.is_finite() { format!("{secs:.1} s of {budget:.0} s") } else { format!("{secs:.1} s") };
        let late = if in_time { "" } else { " over time budget;" };
        println!("{} {id} {title} ({time}):{late} {}", if ok { "PASS" } else { "FAIL" }, v.detail);
    };
    for (id, title, budget, f) in criteria {
        let t0 = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| f(&mut runs)))
            .unwrap_or_else(|e| Verdict { pass: false, detail: format!("panicked: {:?}", e.downcast_ref::<String>()) });
        report(id, title, budget, v, t0.elapsed().as_secs_f64());
    }
    let t0 = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(|| ac11(&runs)))
        .unwrap_or_else(|e| Verdict { pass: false, detail: format!("panicked: {:?}", e.downcast_ref::<String>()) });
    report("AC11", "determinism", f64::INFINITY, v, t0.elapsed().as_secs_f64());
    println!("{passed}/{total} acceptance criteria pass");
}
