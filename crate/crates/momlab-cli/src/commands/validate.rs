//! `momlab validate`: fast numerical self-checks of the closed-form layer
//! against independent numerical routes. Exits with code 2 when any suite
//! fails its tolerance.

use clap::Args;
use momlab::experiments::validate_product_radius;
use momlab::linalg::{
    block_diagonalize, build_permutation, double_embed_transpose, eig2, spectral_norm2,
    spectral_radius2, sym_eigen_default, system_matrix, DenseMat, Mat2, SymMatrix,
};
use momlab::optim::{asg_step, peek_y, state_space_step, OptState, StateSpaceVec};
use momlab::problems::{grad_exact, Quadratic};
use momlab::rng::Rng;
use momlab::theory::{
    curvature_block, slow_block_power, norm_rate_at, nesterov_defaults, rho, rho_lambda,
    variance_coeff, OptimizerParams, SpectrumBounds,
};
use serde::Serialize;

use super::{CmdResult, CommandOutcome};
use crate::output::OutputDir;

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Write report.json into this directory.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 20260101)]
    pub seed: u64,
}

#[derive(Serialize)]
struct CheckResult {
    name: String,
    passed: bool,
    detail: String,
}

fn check(name: &str, outcome: Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => {
            println!("[ ok ] {name}: {detail}");
            CheckResult {
                name: name.into(),
                passed: true,
                detail,
            }
        }
        Err(detail) => {
            println!("[FAIL] {name}: {detail}");
            CheckResult {
                name: name.into(),
                passed: false,
                detail,
            }
        }
    }
}

fn accelerated_rate_identity() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (q, l) in [
        (2.0, 1.0),
        (4.0, 1.0),
        (8.0, 1.0),
        (32.0, 1.0),
        (2000.0, 100.0),
    ] {
        let bounds = SpectrumBounds::new(l / q, l).expect("valid bounds");
        let rate = rho(&bounds, &nesterov_defaults(&bounds));
        let expected = (q.sqrt() - 1.0) / q.sqrt();
        worst = worst.max((rate - expected).abs());
    }
    if worst < 1e-12 {
        Ok(format!("max |rho - (sqrt(Q)-1)/sqrt(Q)| = {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e} >= 1e-12"))
    }
}

fn block_equivalences(seed: u64) -> Result<String, String> {
    let mut rng = Rng::labeled_substream(seed, b"validate-2x2");
    let (mu, l) = (0.5, 2.0);
    let mut worst_rho: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.uniform_in(mu, l);
        let p = OptimizerParams::new(rng.uniform_in(1e-3, 2.0 / l - 1e-9), rng.uniform_in(-0.95, 0.95))
            .expect("valid params");
        let block = curvature_block(lambda, &p);
        worst_rho = worst_rho.max((rho_lambda(lambda, &p) - spectral_radius2(&block)).abs());
        worst_norm = worst_norm.max((norm_rate_at(lambda, &p) - spectral_norm2(&block)).abs());
    }
    if worst_rho < 1e-12 && worst_norm < 1e-12 {
        Ok(format!(
            "1000 draws: |rho - radius| <= {worst_rho:.2e}, |R - norm| <= {worst_norm:.2e}"
        ))
    } else {
        Err(format!(
            "radius dev {worst_rho:.2e} / norm dev {worst_norm:.2e} >= 1e-12"
        ))
    }
}

fn product_rate_formula(seed: u64) -> Result<String, String> {
    let report = validate_product_radius(&[4.0, 16.0, 100.0], 200, seed);
    if report.passes() {
        Ok(format!(
            "600 patterns: max rel err {:.2e}; sandwich identity residual {:.2e}",
            report.max_relative_error, report.identity_max_residual
        ))
    } else {
        Err(format!(
            "max rel err {:.2e} / identity residual {:.2e}",
            report.max_relative_error, report.identity_max_residual
        ))
    }
}

fn jordan_power_formula() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for q in [4.0, 16.0] {
        let bounds = SpectrumBounds::new(1.0 / q, 1.0).expect("valid bounds");
        let p = nesterov_defaults(&bounds);
        let block = curvature_block(bounds.mu, &p);
        let mut brute = Mat2::identity();
        for k in 1..=50 {
            brute = brute.mul(&block);
            let closed = slow_block_power(&bounds, k);
            worst = worst.max(closed.max_abs_diff(&brute) / brute.max_abs().max(1e-300));
        }
    }
    if worst < 1e-10 {
        Ok(format!("k <= 50, Q in {{4, 16}}: max matrix-relative deviation {worst:.2e}"))
    } else {
        Err(format!("matrix-relative deviation {worst:.2e} >= 1e-10"))
    }
}

fn random_spectrum_matrix(spectrum: &[f64], rng: &mut Rng) -> SymMatrix {
    let d = spectrum.len();
    let mut u = DenseMat::identity(d);
    for p in 0..d {
        for q in (p + 1)..d {
            let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
            let (s, c) = angle.sin_cos();
            for r in 0..d {
                let up = u.get(r, p);
                let uq = u.get(r, q);
                u.set(r, p, c * up - s * uq);
                u.set(r, q, s * up + c * uq);
            }
        }
    }
    SymMatrix::from_fn_symmetric(d, |i, j| {
        (0..d).map(|k| u.get(i, k) * spectrum[k] * u.get(j, k)).sum()
    })
}

fn block_diagonalization_residual(seed: u64) -> Result<String, String> {
    let mut rng = Rng::labeled_substream(seed, b"validate-blockdiag");
    let mut worst: f64 = 0.0;
    for dim in [2usize, 4, 8] {
        for _ in 0..4 {
            let spectrum: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.2, 2.0)).collect();
            let h = random_spectrum_matrix(&spectrum, &mut rng);
            let (alpha, beta) = (rng.uniform_in(0.05, 0.8), rng.uniform_in(-0.9, 0.9));
            let eig = sym_eigen_default(&h).map_err(|e| e.to_string())?;
            let a = system_matrix(&h, alpha, beta);
            let w = double_embed_transpose(&eig.vectors);
            let conj = build_permutation(dim).conjugate(&w.matmul(&a).matmul(&w.transpose()));
            let blocks = block_diagonalize(&h, alpha, beta).map_err(|e| e.to_string())?;
            let mut expected = DenseMat::zeros(2 * dim, 2 * dim);
            for (j, b) in blocks.iter().enumerate() {
                expected.set(2 * j, 2 * j, b.a11);
                expected.set(2 * j, 2 * j + 1, b.a12);
                expected.set(2 * j + 1, 2 * j, b.a21);
                expected.set(2 * j + 1, 2 * j + 1, b.a22);
            }
            worst = worst.max(conj.max_abs_diff(&expected));
        }
    }
    if worst < 1e-10 {
        Ok(format!("d <= 8: max conjugation residual {worst:.2e}"))
    } else {
        Err(format!("conjugation residual {worst:.2e} >= 1e-10"))
    }
}

fn dual_path_equivalence(seed: u64) -> Result<String, String> {
    let mut rng = Rng::labeled_substream(seed, b"validate-dualpath");
    let mut worst: f64 = 0.0;
    for problem_idx in 0..20 {
        let d = 2 + rng.index(6);
        let diag: Vec<f64> = (0..d).map(|_| rng.uniform_in(0.3, 2.0)).collect();
        let linear: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let q = Quadratic::new(
            SymMatrix::from_diag(&diag),
            linear,
            0.0,
            SpectrumBounds::new(lo, hi).expect("valid bounds"),
        )
        .map_err(|e| e.to_string())?;
        let params = OptimizerParams::new(rng.uniform_in(0.05, 0.9), rng.uniform_in(-0.8, 0.8))
            .expect("valid params");
        let x0: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        // Half the problems share Gaussian noise draws between the paths.
        let noisy = problem_idx % 2 == 0;

        let mut state = OptState::new(x0.clone());
        let mut y = x0.clone();
        let mut z = StateSpaceVec::start(&x0, q.x_star());
        for _ in 0..100 {
            let noise: Vec<f64> = if noisy {
                (0..d).map(|_| 0.05 * rng.normal()).collect()
            } else {
                vec![0.0; d]
            };
            let mut g1 = grad_exact(&q, &y);
            for (g, n) in g1.value.iter_mut().zip(&noise) {
                *g += n;
            }
            state = asg_step(&state, &g1, &params).map_err(|e| e.to_string())?;
            y = peek_y(&state, &params);

            let y2: Vec<f64> = z.r.iter().zip(q.x_star()).map(|(r, s)| r + s).collect();
            let mut g2 = grad_exact(&q, &y2);
            for (g, n) in g2.value.iter_mut().zip(&noise) {
                *g += n;
            }
            z = state_space_step(&z, &g2, &params).map_err(|e| e.to_string())?;

            for (a, b) in y.iter().zip(z.r.iter().zip(q.x_star()).map(|(r, s)| r + s)) {
                let scale = 1.0_f64.max(b.abs());
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    if worst < 1e-9 {
        Ok(format!("20 problems x 100 steps: max relative deviation {worst:.2e}"))
    } else {
        Err(format!("relative deviation {worst:.2e} >= 1e-9"))
    }
}

fn permutation_identity(seed: u64) -> Result<String, String> {
    let mut rng = Rng::labeled_substream(seed, b"validate-permutation");
    for d in [1usize, 2, 5, 11] {
        let p = build_permutation(d);
        if !p.compose(&p.inverse()).is_identity() {
            return Err(format!("inverse composition failed at d = {d}"));
        }
        let blocks: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| (rng.index(41) as f64) - 20.0).collect())
            .collect();
        let mut m = DenseMat::zeros(2 * d, 2 * d);
        for i in 0..d {
            m.set(i, i, blocks[0][i]);
            m.set(i, d + i, blocks[1][i]);
            m.set(d + i, i, blocks[2][i]);
            m.set(d + i, d + i, blocks[3][i]);
        }
        let c = p.conjugate(&m);
        for j in 0..d {
            if c.get(2 * j, 2 * j) != blocks[0][j]
                || c.get(2 * j, 2 * j + 1) != blocks[1][j]
                || c.get(2 * j + 1, 2 * j) != blocks[2][j]
                || c.get(2 * j + 1, 2 * j + 1) != blocks[3][j]
            {
                return Err(format!("conjugation identity violated at d = {d}, block {j}"));
            }
        }
    }
    Ok("interleaving conjugation exact for d in {1, 2, 5, 11}".into())
}

fn variance_closed_forms() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (q, l) in [(2.0, 1.0), (8.0, 1.0), (32.0, 4.0)] {
        let bounds = SpectrumBounds::new(l / q, l).expect("valid bounds");
        let got = variance_coeff(&bounds, &nesterov_defaults(&bounds)).expect("stable");
        let sq = q.sqrt();
        let expected = (5.0 * q * q + 2.0 * q * sq + q)
            / (l * l * (sq + 1.0) * (sq + 1.0) * (2.0 * sq - 1.0));
        worst = worst.max(((got - expected) / expected).abs());

        let alpha = 2.0 / (bounds.mu + bounds.l);
        let got = variance_coeff(&bounds, &OptimizerParams::new(alpha, 0.0).expect("valid"))
            .expect("stable");
        let expected = 2.0 * q / (l * l);
        worst = worst.max(((got - expected) / expected).abs());
    }
    if worst < 1e-12 {
        Ok(format!("closed forms match to relative {worst:.2e}"))
    } else {
        Err(format!("relative deviation {worst:.2e} >= 1e-12"))
    }
}

fn nilpotent_fast_block() -> Result<String, String> {
    // The fast block at the unit-normalized step has both eigenvalues at
    // zero; dyadic momenta keep the evaluation exact.
    for beta in [0.0, 0.25, 0.5, 0.75] {
        let p = OptimizerParams::new(1.0, beta).expect("valid");
        let (r1, r2) = eig2(&curvature_block(1.0, &p));
        if r1.norm() > 1e-12 || r2.norm() > 1e-12 {
            return Err(format!("fast block not nilpotent at beta = {beta}"));
        }
    }
    Ok("fast block eigenvalues vanish at the unit-normalized step".into())
}

pub fn run(args: ValidateArgs) -> CmdResult {
    let results = vec![
        check("accelerated-rate-identity", accelerated_rate_identity()),
        check("2x2-equivalences", block_equivalences(args.seed)),
        check("product-rate-formula", product_rate_formula(args.seed)),
        check("jordan-power-formula", jordan_power_formula()),
        check("block-diagonalization", block_diagonalization_residual(args.seed)),
        check("dual-path-equivalence", dual_path_equivalence(args.seed)),
        check("permutation-identity", permutation_identity(args.seed)),
        check("variance-closed-forms", variance_closed_forms()),
        check("nilpotent-fast-block", nilpotent_fast_block()),
    ];
    let failed = results.iter().filter(|r| !r.passed).count();
    if let Some(dir) = &args.out {
        let out = OutputDir::create(dir)?;
        out.write_json("report.json", &results)?;
    }
    if failed == 0 {
        println!("all {} validation suites passed", results.len());
        Ok(CommandOutcome::Success)
    } else {
        println!("{failed} of {} validation suites FAILED", results.len());
        Ok(CommandOutcome::ValidationFailed)
    }
}
