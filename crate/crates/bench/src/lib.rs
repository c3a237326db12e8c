//! Benchmark workloads shared by the criterion benches.

use std::f64::consts::PI;

use koebe_core::fixtures::{annulus_family, disk_pair, ellipse, ladder_fixture, two_squares};
use koebe_core::gap::gr_pair;
use koebe_core::grid::{build_refined_grid, QuotientGrid};
use koebe_core::koebe::{exterior_map, koebe_run};
use koebe_core::modulus::solve_modulus;
use koebe_core::{KoebeOptions, Refinement};

/// Gap ratio of the disk-pair fixture.
pub fn gap_ratio() -> f64 {
    let (a, b) = disk_pair();
    gr_pair(&a, &b).expect("disjoint disks")
}

/// Quotient grid of the ladder fixture at base resolution `n`.
pub fn ladder_grid(n: usize) -> QuotientGrid {
    let l = ladder_fixture();
    let (s, fam) = l.with_q(2);
    let r = Refinement::graded(l.w, l.ratio.powi(l.levels as i32) / 16.0, 8.0);
    build_refined_grid(&s, fam.window(), n, &r).expect("ladder grid")
}

/// Annulus extremal length at resolution `n`.
pub fn annulus_el(n: usize) -> f64 {
    let (s, fam, r) = annulus_family(PI);
    let g = build_refined_grid(&s, fam.window(), n, &r).expect("annulus grid");
    solve_modulus(&g, &fam, 0.05, 200).expect("annulus converges").el
}

/// Exterior map of an ellipse with `n` samples.
pub fn ellipse_map(n: usize) -> f64 {
    exterior_map(&ellipse(2.0, 1.0, n), 1e-3).expect("ellipse maps").radius
}

/// Koebe iteration on the two-squares fixture.
pub fn two_squares_koebe() -> usize {
    let opts = KoebeOptions::default();
    koebe_run(&two_squares(), &opts).expect("two squares").trace.rounds.len()
}

