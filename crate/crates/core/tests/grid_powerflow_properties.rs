use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;

use gsp_fdi::grid::{build_admittance_ac, build_admittance_dc, decompose, Bus, BusKind, GridCase, Line};
use gsp_fdi::powerflow::{injections_from_state, solve_ac, solve_ac_detailed, solve_dc, ComplexState, SolverOptions};

const IEEE14_EDGES: [(usize, usize); 20] = [
    (1, 2), (1, 5), (2, 3), (2, 4), (2, 5), (3, 4), (4, 5), (4, 7), (4, 9), (5, 6),
    (6, 11), (6, 12), (6, 13), (7, 8), (7, 9), (9, 10), (9, 14), (10, 11), (12, 13), (13, 14),
];

fn pattern(m: &nalgebra::DMatrix<f64>) -> BTreeSet<(usize, usize)> {
    let n = m.nrows();
    (0..n)
        .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
        .filter(|&(r, c)| m[(r, c)] != 0.0)
        .map(|(r, c)| (r + 1, c + 1))
        .collect()
}

/// Ring plus chords over `m` buses; bus 1 is the slack, the rest PQ loads.
fn ring_case(m: usize, lines: &[(f64, f64)], loads: &[(f64, f64)], zero_r: bool) -> GridCase {
    let buses = (1..=m)
        .map(|id| {
            let (p, q) = if id == 1 { (0.0, 0.0) } else { loads[id - 2] };
            Bus { id, kind: if id == 1 { BusKind::Slack } else { BusKind::Pq }, p: -p, q: -q, v: 1.0 }
        })
        .collect();
    let lines = (1..=m)
        .map(|k| {
            let (r, x) = lines[k - 1];
            Line { from: k, to: k % m + 1, r: if zero_r { 0.0 } else { r }, x }
        })
        .collect();
    GridCase::new(100.0, buses, lines).unwrap()
}

fn ring_strategy() -> impl Strategy<Value = (usize, Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    (3usize..=8).prop_flat_map(|m| {
        (
            Just(m),
            proptest::collection::vec((0.0..0.05f64, 0.05..0.3f64), m),
            proptest::collection::vec((0.0..0.3f64, 0.0..0.1f64), m - 1),
        )
    })
}

#[test]
fn ieee14_sparsity_matches_line_list() {
    let case = GridCase::ieee14();
    let expected: BTreeSet<_> = IEEE14_EDGES.iter().copied().collect();
    let pair = decompose(&build_admittance_ac(&case)).unwrap();
    let dc = build_admittance_dc(&case);
    assert_eq!(pattern(&pair.yj), expected);
    assert_eq!(pattern(&dc.yr), expected);
    // lossless branches leave gaps in the conductance pattern
    let lossless: BTreeSet<_> = [(4, 7), (4, 9), (5, 6), (7, 8), (7, 9)].into_iter().collect();
    assert_eq!(pattern(&pair.yr), &expected - &lossless);
}

#[test]
fn solver_mismatch_below_tolerance_on_bundled_cases() {
    for case in [GridCase::ieee14(), GridCase::ieee30()] {
        let sol = solve_ac_detailed(&case, &SolverOptions::default()).unwrap();
        assert!(sol.mismatch < 1e-8);
        assert!(sol.iterations <= 10);
    }
}

#[test]
fn dc_limit_under_dc_premises() {
    let mut case = GridCase::ieee14();
    for b in case.buses.iter_mut() {
        b.p *= 0.01;
        b.q *= 0.01;
        b.v = 1.0;
    }
    for line in case.lines.iter_mut() {
        line.r = 0.0;
    }
    let ac = solve_ac(&case, &SolverOptions::default()).unwrap().angles();
    let dc = solve_dc(&case).unwrap();
    for k in 1..14 {
        assert!((ac[k] / dc[k] - 1.0).abs() < 0.05, "bus {}: {} vs {}", k + 1, ac[k], dc[k]);
    }
}

#[test]
fn injections_round_trip_through_solver() {
    let case = GridCase::ieee14();
    let adm = build_admittance_ac(&case);
    let mags: Vec<f64> = (0..14).map(|k| 0.96 + 0.007 * ((k * 5) % 11) as f64).collect();
    let angles: Vec<f64> = (0..14).map(|k| if k == 0 { 0.0 } else { -0.02 * ((k * 3) % 13) as f64 }).collect();
    let target = ComplexState::from_polar(&mags, &angles);
    let s = injections_from_state(&adm, &target).unwrap().s;
    let mut set = case.clone();
    for (k, b) in set.buses.iter_mut().enumerate() {
        match b.kind {
            BusKind::Slack => b.v = mags[k],
            BusKind::Pv => {
                b.p = s[k].re;
                b.v = mags[k];
            }
            BusKind::Pq => {
                b.p = s[k].re;
                b.q = s[k].im;
            }
        }
    }
    let solved = solve_ac(&set, &SolverOptions::default()).unwrap();
    for (a, b) in solved.v.iter().zip(&target.v) {
        assert!((a - b).norm() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lossless_ac_susceptance_equals_dc_laplacian((m, lines, loads) in ring_strategy()) {
        let case = ring_case(m, &lines, &loads, true);
        let pair = decompose(&build_admittance_ac(&case)).unwrap();
        let dc = build_admittance_dc(&case);
        prop_assert!((&pair.yj - &dc.yr).amax() < 1e-9 * dc.yr.amax());
        prop_assert!(pair.yr.amax() == 0.0);
    }

    #[test]
    fn laplacian_rows_sum_to_zero((m, lines, loads) in ring_strategy()) {
        let case = ring_case(m, &lines, &loads, false);
        let pair = decompose(&build_admittance_ac(&case)).unwrap();
        for l in [&pair.yr, &pair.yj] {
            for r in 0..m {
                prop_assert!(l.row(r).sum().abs() < 1e-9 * l.amax().max(1.0));
            }
        }
    }

    #[test]
    fn losses_are_nonnegative((m, lines, loads) in ring_strategy()) {
        let case = ring_case(m, &lines, &loads, false);
        if let Ok(state) = solve_ac(&case, &SolverOptions::default()) {
            let s = injections_from_state(&build_admittance_ac(&case), &state).unwrap().s;
            let total: Complex64 = s.iter().sum();
            prop_assert!(total.re >= -1e-9);
            // pq setpoints are met
            for (k, b) in case.buses.iter().enumerate().skip(1) {
                prop_assert!((s[k] - Complex64::new(b.p, b.q)).norm() < 1e-8);
            }
        }
        let lossless = ring_case(m, &lines, &loads, true);
        if let Ok(state) = solve_ac(&lossless, &SolverOptions::default()) {
            let s = injections_from_state(&build_admittance_ac(&lossless), &state).unwrap().s;
            let total: Complex64 = s.iter().sum();
            prop_assert!(total.re.abs() < 1e-8);
        }
    }
}
