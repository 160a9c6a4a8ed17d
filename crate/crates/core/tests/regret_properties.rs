mod common;

use common::{random_instance, Design};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapemmr::regret::{gamma_j, gamma_j_primal, gamma_jk, regret_matrix, RegretOptions};
use shapemmr::{
    build_constraints, ConstraintSystem, ResponseEstimate, ShapeSpec, TreatmentGrid, UtilitySpec,
};
use shapemmr_linprog::{solve_lp, LinearProgram, LpStatus};

fn perturbed(est: &ResponseEstimate, rng: &mut ChaCha8Rng, delta: f64) -> ResponseEstimate {
    let m0 = est.cell(0);
    let dir: Vec<f64> = m0.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    ResponseEstimate::new(vec![m0
        .iter()
        .zip(&dir)
        .map(|(a, d)| a + delta * d / norm)
        .collect()])
}

fn pair_norm(u: &UtilitySpec, j: usize, k: usize) -> f64 {
    if j == k {
        0.0
    } else {
        u.benefit(0, j).hypot(u.benefit(0, k))
    }
}

#[test]
fn single_dual_lp_matches_pairwise_primals() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..80 {
        let inst = random_instance(&mut rng, Design::Any, false);
        for j in 0..inst.cs.levels() {
            let cert = gamma_j(0, j, &inst.cs, &inst.est, &inst.u).unwrap();
            let (primal, _, _, _) = gamma_j_primal(0, j, &inst.cs, &inst.est, &inst.u).unwrap();
            assert!(
                (cert.value - primal).abs() <= 1e-8,
                "{} vs {}",
                cert.value,
                primal
            );
        }
    }
}

#[test]
fn certificates_are_feasible_and_attain_the_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..60 {
        let inst = random_instance(&mut rng, Design::Any, false);
        for j in 0..inst.cs.levels() {
            let cert = gamma_j(0, j, &inst.cs, &inst.est, &inst.u).unwrap();
            assert!(inst.cs.is_feasible(&cert.m_star, 1e-7));
            for (a, b) in inst.cs.select(&cert.m_star).iter().zip(inst.est.cell(0)) {
                assert!((a - b).abs() <= 1e-7);
            }
            assert!(cert.lambda.iter().all(|&l| l >= -1e-12));
            let k = cert.k;
            let v = |l: usize| inst.u.value(0, l, cert.m_star[l]);
            assert!((v(k) - v(j) - cert.value).abs() <= 1e-8);
        }
    }
}

#[test]
fn unit_lipschitz_constant_when_only_endpoints_are_observed() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..100 {
        let inst = random_instance(&mut rng, Design::Endpoints, true);
        for delta in [1e-3, 1e-2] {
            let pert = perturbed(&inst.est, &mut rng, delta);
            for j in 0..inst.cs.levels() {
                for k in 0..inst.cs.levels() {
                    let a = gamma_jk(0, j, k, &inst.cs, &inst.est, &inst.u).unwrap().0;
                    let Ok((b, _)) = gamma_jk(0, j, k, &inst.cs, &pert, &inst.u) else {
                        continue;
                    };
                    assert!((a - b).abs() <= pair_norm(&inst.u, j, k) * delta + 1e-9);
                }
            }
        }
    }
}

/// Value and equality multipliers of the pairwise LP, solved directly.
fn pair_lp(
    cs: &ConstraintSystem,
    m0: &[f64],
    u: &UtilitySpec,
    j: usize,
    k: usize,
) -> Option<(f64, Vec<f64>)> {
    let mut b = vec![0.0; cs.levels()];
    b[k] += u.benefit(0, k);
    b[j] -= u.benefit(0, j);
    let mut lp = LinearProgram::maximize(b);
    lp.a_ub = cs.s.clone();
    lp.b_ub = cs.r.clone();
    lp.a_eq = cs.f.clone();
    lp.b_eq = m0.to_vec();
    let sol = solve_lp(&lp).unwrap();
    (sol.status == LpStatus::Optimal).then_some((sol.objective, sol.eq_duals))
}

#[test]
fn multiplier_lipschitz_bound_on_general_designs() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..100 {
        let inst = random_instance(&mut rng, Design::Any, false);
        let pert = perturbed(&inst.est, &mut rng, 1e-3);
        for j in 0..inst.cs.levels() {
            for k in 0..inst.cs.levels() {
                let (a, eta_a) = pair_lp(&inst.cs, inst.est.cell(0), &inst.u, j, k).unwrap();
                let Some((b, eta_b)) = pair_lp(&inst.cs, pert.cell(0), &inst.u, j, k) else {
                    continue;
                };
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let kappa = norm(&eta_a).max(norm(&eta_b));
                assert!((a - b).abs() <= kappa * 1e-3 + 1e-9, "{a} {b} {kappa}");
            }
        }
    }
}

#[test]
fn extrapolation_amplifies_perturbations() {
    // Convexity bounds m(3) below by the line through the two observed points,
    // so moving m(1) by delta moves that bound by 3 delta.
    let g = TreatmentGrid::new(vec![0.0, 1.0, 2.0, 3.0], &[0.0, 1.0]).unwrap();
    let cs = build_constraints(&g, &ShapeSpec::decreasing_convex_unit()).unwrap();
    let u = UtilitySpec::per_level(vec![0.0, 0.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
    let est = ResponseEstimate::new(vec![vec![0.9, 0.7]]);
    let pert = ResponseEstimate::new(vec![vec![0.9, 0.71]]);
    let a = gamma_jk(0, 3, 0, &cs, &est, &u).unwrap().0;
    let b = gamma_jk(0, 3, 0, &cs, &pert, &u).unwrap().0;
    assert!((a + 0.3).abs() < 1e-9);
    assert!(((a - b).abs() - 0.03).abs() < 1e-9);
}

#[test]
fn extra_restrictions_never_raise_regret() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..60 {
        let inst = random_instance(&mut rng, Design::Any, false);
        let base = regret_matrix(&inst.cs, &inst.est, &inst.u, &RegretOptions::default()).unwrap();
        let mut tighter = inst.cs.clone();
        for _ in 0..3 {
            let a: Vec<f64> = (0..tighter.levels())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let at: f64 = a.iter().zip(&inst.truth).map(|(x, y)| x * y).sum();
            tighter.push_row(a, at + rng.gen_range(0.0..0.1));
        }
        let tight = regret_matrix(&tighter, &inst.est, &inst.u, &RegretOptions::default()).unwrap();
        for (x, y) in tight.gamma[0].iter().zip(&base.gamma[0]) {
            assert!(*x <= y + 1e-9);
        }
    }
}

#[test]
fn point_identification_reduces_to_utility_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..40 {
        let inst = random_instance(&mut rng, Design::Any, false);
        let grid = inst.grid.fully_observed();
        let cs = build_constraints(&grid, &inst.spec).unwrap();
        let est = ResponseEstimate::new(vec![inst.truth.clone()]);
        let rm = regret_matrix(&cs, &est, &inst.u, &RegretOptions::default()).unwrap();
        let v: Vec<f64> = (0..grid.len())
            .map(|l| inst.u.value(0, l, inst.truth[l]))
            .collect();
        let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..grid.len() {
            assert!((rm.get(0, j) - (best - v[j])).abs() <= 1e-9);
        }
    }
}

#[test]
fn every_regret_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..40 {
        let inst = random_instance(&mut rng, Design::Any, false);
        let rm = regret_matrix(&inst.cs, &inst.est, &inst.u, &RegretOptions::default()).unwrap();
        assert!(rm.gamma[0].iter().all(|&g| g >= -1e-12));
    }
}
