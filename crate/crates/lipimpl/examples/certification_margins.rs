//! Prints the headroom of each certification against its threshold, for the
//! built-in problems. Useful when tuning tolerances or sampling plans.
//!
//! ```sh
//! cargo run -p lipimpl --example certification_margins
//! ```

use lipimpl::nalgebra::DVector;
use lipimpl::perturb::{delta_ladder_scan, empirical_lipschitz_quotient, theoretical_modulus};
use lipimpl::{
    alpha_search, contraction_scan, exclusion_region_check, problems, solve_implicit,
    verify_assumption_f, Forcing, OscillatorSpec, SolverConfig,
};

fn vec1(x: f64) -> DVector<f64> {
    DVector::from_vec(vec![x])
}

fn main() -> lipimpl::Result<()> {
    println!("== chord solver on the cubic ==");
    let config = problems::cubic_config();
    let problem = problems::cubic(&config)?;
    let mut worst_q: f64 = 0.0;
    for i in 0..11 {
        let x = -0.5 + 0.1 * i as f64;
        let (_, cert) = solve_implicit(&problem, &config, &vec1(x))?;
        worst_q = worst_q.max(cert.q_measured);
    }
    println!("  worst q_measured over the sweep: {worst_q:.6} (must stay < 1)");

    println!("== contraction scan at beta = 0.1 ==");
    let config = SolverConfig {
        beta: 0.1,
        ..problems::cubic_config()
    };
    let problem = problems::cubic(&config)?;
    let ys: Vec<DVector<f64>> = (0..=200)
        .map(|i| vec1(-0.1 + 0.2 * i as f64 / 200.0))
        .collect();
    let q_hat = contraction_scan(&problem, &config, &[vec1(0.0)], &ys)?;
    println!("  q_hat = {q_hat:.6} vs analytic bound 0.03");
    let found = alpha_search(&problem, &config, 16, 42)?;
    println!(
        "  alpha = {:.6}, max displacement {:.6} vs budget {:.6}",
        found.alpha,
        found.max_initial_displacement,
        config.beta * (1.0 - found.q_hat)
    );

    println!("== switching-time family of the oscillator ==");
    let spec = OscillatorSpec::new(0.01, Forcing::Zero, [1.0, 0.0])?;
    let family = spec.family()?;
    let config = SolverConfig::for_radius(family.radius());
    println!("  modulus R = {}", theoretical_modulus(&family, &config)?);
    for eps in [0.0, 1e-3, 1e-2] {
        let result =
            empirical_lipschitz_quotient(&family, &vec1(eps), 1e-2, 64, 1000, 0.1, &config)?;
        println!(
            "  eps = {eps:>6}: quotient_sup = {:.6} vs bound {:.2}",
            result.quotient_sup,
            result.modulus + result.margin
        );
    }

    println!("== deviation-field ladder (g = 0) ==");
    let v_samples: Vec<[f64; 2]> = (0..8)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / 8.0;
            [1.0 + 0.02 * angle.cos(), 0.02 * angle.sin()]
        })
        .chain([[1.0, 0.0]])
        .collect();
    let t_samples: Vec<f64> = (0..=32)
        .map(|i| std::f64::consts::TAU * i as f64 / 32.0)
        .collect();
    let report = verify_assumption_f(&spec, &[1e-1, 1e-2, 1e-3], &v_samples, &t_samples)?;
    for row in &report.rows {
        println!(
            "  eps = {:>6}: sup |y| = {:.6}, lip quotient = {:.6}",
            row.eps, row.sup_y, row.lip_quotient
        );
    }
    println!(
        "  spreads: sup {:.4}, lip {:.4} (budget 0.20 each), passed = {}",
        report.sup_spread, report.lip_spread, report.passed
    );

    println!("== exclusion region at eps = 0.01 ==");
    let scan = delta_ladder_scan(
        &family,
        &[vec1(1e-2)],
        &[1e-1, 1e-2, 1e-3],
        0.1,
        64,
        2,
        &config,
    )?;
    for row in &scan.rows {
        println!(
            "  delta = {:>5}: quotient_sup = {:.6}, certified = {}",
            row.delta, row.quotient_sup, row.ine_ok
        );
    }
    let report = exclusion_region_check(
        &spec,
        &family,
        [1.0, 0.0],
        [1.01, 0.0],
        1e-2,
        0.1,
        (400, 40),
        Some(&scan),
        &config,
    )?;
    println!(
        "  theta = {:.12}, exclusion width = {:.6}, min |F| off the interval = {:.6}, nv_ok = {}",
        report.theta,
        report.exclusion_interval[1] - report.exclusion_interval[0],
        report.min_abs_f,
        report.nv_ok
    );
    Ok(())
}
