//! Compares zero-filling, shallow dictionary learning and the deep variants
//! on the default phantom.
//!
//! ```text
//! cargo run --release -p mecdl --example desk_comparison -- [lines] [size] [lambda] [gamma] [iters] [inner]
//! ```

use mecdl::dictlearn::solve_shallow;
use mecdl::kspace::{forward, make_mask, DEFAULT_CENTER_FRACTION};
use mecdl::{adjoint, make_phantom, snr_db, solve, Boundary, PatchConfig, PhantomSpec, Regularizer, SolverConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

// Largest relative rise over `initial, trace...`.
fn worst_rise(rep: &mecdl::ReconReport<f64>) -> f64 {
    std::iter::once(rep.initial_objective)
        .chain(rep.objective_trace.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn main() -> mecdl::Result<()> {
    let lines: usize = arg(1, 32);
    let size: usize = arg(2, 256);
    let lambda: f64 = arg(3, 0.1);
    let gamma: f64 = arg(4, 0.05);
    let iters: usize = arg(5, 50);
    let inner: usize = arg(6, 30);
    let truth = make_phantom::<f64>(&PhantomSpec::spinal_cord(size, 8, 0))?;
    let masks = (0..8u64)
        .map(|j| make_mask(size, size, lines, DEFAULT_CENTER_FRACTION, j))
        .collect::<mecdl::Result<Vec<_>>>()?;
    let data = forward(&truth, &masks, 0.0, 0)?;
    println!("zero-fill      {:6.2} dB", snr_db(&adjoint(&data)?, &truth)?);

    let base = SolverConfig {
        lambda,
        gamma,
        outer_iters: iters,
        inner_iters: inner,
        patch: PatchConfig::new(12, 4, Boundary::Wraparound),
        ..SolverConfig::default()
    };
    let (_, rep) = solve_shallow(&data, &base, Some(&truth))?;
    println!(
        "shallow-dl     {:6.2} dB  iters {} time {:.1}s  worst rise {:.2e}",
        rep.final_snr_db.unwrap(),
        rep.iterations_run,
        rep.wall_time_s,
        worst_rise(&rep)
    );
    for (layers, reg) in [(3, Regularizer::RowSparse), (3, Regularizer::LowRank)] {
        let cfg = SolverConfig {
            layers,
            regularizer: reg,
            ..base.clone()
        };
        let (_, rep) = solve(&data, &cfg, Some(&truth))?;
        let worst = worst_rise(&rep);
        println!(
            "{:?}-{layers}  {:6.2} dB  iters {} time {:.1}s  init {:.4e} final {:.4e} worst rise {:.2e}",
            reg,
            rep.final_snr_db.unwrap(),
            rep.iterations_run,
            rep.wall_time_s,
            rep.initial_objective,
            rep.objective_trace.last().unwrap(),
            worst
        );
    }
    Ok(())
}
