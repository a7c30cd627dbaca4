//! Fuzz the sampled-table target function: hostile tables must either be
//! rejected at construction or interpolate/extrapolate without panicking.

#![no_main]

use arbitrary::Arbitrary;
use libfuzzer_sys::fuzz_target;
use stepadapt::problem::TargetFunction;

#[derive(Arbitrary, Debug)]
struct TableInput {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m_bound: f64,
    radius: f64,
    zeros: Vec<f64>,
    probes: Vec<f64>,
}

fuzz_target!(|input: TableInput| {
    let Ok(f) = TargetFunction::table(
        "fuzz",
        input.xs,
        input.ys,
        input.m_bound,
        input.radius,
        input.zeros,
    ) else {
        return;
    };
    for &x in input.probes.iter().take(64) {
        let _ = f.evaluate(x);
        let _ = f.derivative(x);
        let _ = f.distance_to_zero_set(x);
    }
    let _ = f.estimate_sup_deriv(-1.0, 1.0, 64);
});
