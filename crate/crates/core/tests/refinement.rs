//! Grid-refinement studies of the patch solver and its diagnostics.

use patchwave::boundary_builder::{default_goursat, simple_wave_goursat, BcSettings, RarefactionWave, Sampling};
use patchwave::gas_model::GasParameters;
use patchwave::patch_solver::{march, PatchGrid, SolverSettings};
use patchwave::sonic_diagnostics::{diagnose_patch, DiagnosticsSettings};

fn wave() -> RarefactionWave {
    let gas = GasParameters { k: 1.0, gamma: 0.5, a: 0.01, b: 0.05, tau_min: 0.3, tau_max: 2.0 };
    RarefactionWave::new(gas, 2.0, 1.0).unwrap()
}

fn settings(n: usize) -> SolverSettings {
    SolverSettings { n_plus: n, n_minus: n, ..SolverSettings::default() }
}

fn default_grid(w: &RarefactionWave, n: usize) -> PatchGrid {
    let data = default_goursat(w, &BcSettings::default(), n, n, Sampling::default()).unwrap();
    march(&w.params, &data, &settings(n), false).unwrap()
}

#[test]
fn sound_speed_converges_at_second_order_at_fixed_intersections() {
    let w = wave();
    let grids: Vec<PatchGrid> = [50, 100, 200].iter().map(|&n| default_grid(&w, n)).collect();
    // Node (i, j) on the coarsest lattice is the intersection of the same two
    // boundary characteristics as (2i, 2j) and (4i, 4j) on the finer ones.
    for (i, j) in [(10, 10), (15, 15), (10, 20), (20, 10)] {
        let c: Vec<f64> = (0..3).map(|k| grids[k].node(i << k, j << k).c).collect();
        let order = ((c[0] - c[1]).abs() / (c[1] - c[2]).abs()).log2();
        assert!((1.7..=2.3).contains(&order), "({i}, {j}): order {order}, c {c:?}");
    }
}

#[test]
fn consistency_residual_shrinks_at_least_fourfold() {
    let w = wave();
    let corner = (0.9, w.eta4 + 0.3 * (w.eta1 - w.eta4));
    let res: Vec<(f64, f64)> = [25, 50, 100, 200]
        .iter()
        .map(|&n| {
            let data = simple_wave_goursat(&w, corner, 0.3, 0.3, n, n, Sampling::Uniform).unwrap();
            let g = march(&w.params, &data, &settings(n), false).unwrap();
            (g.residual(n / 2, n / 2), g.max_residual())
        })
        .collect();
    for p in res.windows(2) {
        assert!(p[0].0 / p[1].0 >= 4.0 && p[0].1 / p[1].1 >= 4.0, "{res:?}");
    }
}

#[test]
fn gradient_bound_constant_is_refinement_stable() {
    let w = wave();
    let m1: Vec<f64> = [100, 200]
        .iter()
        .map(|&n| {
            let g = default_grid(&w, n);
            diagnose_patch(&w.params, &g, &settings(n), &DiagnosticsSettings::default()).bounds.m1
        })
        .collect();
    assert!((m1[1] - m1[0]).abs() / m1[0] <= 0.1, "{m1:?}");
}

#[test]
fn frontier_families_increase_in_omega() {
    let w = wave();
    let g = default_grid(&w, 100);
    for i in 0..=g.n_minus {
        let w: Vec<f64> = (0..=g.n_plus).map(|j| g.node(i, j)).filter(|n| n.status.is_solved()).map(|n| n.omega()).collect();
        assert!(w.windows(2).all(|p| p[1] > p[0]), "family {i}");
    }
}
