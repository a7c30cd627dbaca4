//! Experiment-scale integration checks: the phase-diagram split across the
//! `u d = 1` boundary and precision-sweep edge cases.

use stepadapt::analysis::{phase_sweep, precision_vs_rate, TheoreticalClass};
use stepadapt::engine::{SimConfig, StopCriteria};
use stepadapt::error::Error;
use stepadapt::noise::NoiseModel;
use stepadapt::problem::TargetFunction;
use stepadapt::stepsize::StepRuleConfig;

fn base(seed: u64) -> SimConfig {
    SimConfig {
        problem: TargetFunction::tanh_problem(1.0).unwrap(),
        noise: NoiseModel::gaussian(0.1).unwrap(),
        rule: StepRuleConfig::Multiplicative {
            u: 1.05,
            d: 0.9,
            gbar: 0.5,
        },
        x0: 2.0,
        gamma0: 0.1,
        gamma1: 0.1,
        horizon: 20_000,
        seed,
        record_stride: 1,
        stop: StopCriteria::default(),
    }
}

#[test]
fn phase_diagram_splits_along_ud_boundary() {
    let u_grid: Vec<f64> = (0..5).map(|i| 1.02 + 0.07 * i as f64).collect();
    let d_grid: Vec<f64> = (0..5).map(|i| 0.7 + 0.07 * i as f64).collect();
    let diagram = phase_sweep(&u_grid, &d_grid, &base(314), 100).unwrap();
    assert_eq!(diagram.cells.len(), 25);

    for cell in &diagram.cells {
        assert!((0.0..=1.0).contains(&cell.empirical_conv_fraction));
        if cell.ud <= 0.95 {
            assert_eq!(cell.theoretical_class, TheoreticalClass::Converge);
            assert!(
                cell.empirical_conv_fraction >= 0.9,
                "u={} d={} conv={}",
                cell.u,
                cell.d,
                cell.empirical_conv_fraction
            );
        }
        if cell.ud >= 1.05 {
            assert_eq!(cell.theoretical_class, TheoreticalClass::Diverge);
            assert!(
                cell.empirical_conv_fraction <= 0.1,
                "u={} d={} conv={}",
                cell.u,
                cell.d,
                cell.empirical_conv_fraction
            );
        }
    }
}

#[test]
fn boundary_cell_is_flagged_indeterminate_with_empirics() {
    let diagram = phase_sweep(&[2.0], &[0.5], &base(7), 20).unwrap();
    assert_eq!(diagram.cells.len(), 1);
    let cell = &diagram.cells[0];
    assert_eq!(cell.theoretical_class, TheoreticalClass::Indeterminate);
    assert_eq!(cell.kappa, 0.5);
    assert!((0.0..=1.0).contains(&cell.empirical_conv_fraction));
    assert_eq!(cell.n_seeds, 20);
}

#[test]
fn precision_single_d_gives_single_row() {
    let rows = precision_vs_rate(1.1, &[0.8], &base(3), 20).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].boundary_abs_phi > 0.0);
}

#[test]
fn precision_rejects_ud_at_or_above_one() {
    let err = precision_vs_rate(1.1, &[0.95], &base(3), 4).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
}
