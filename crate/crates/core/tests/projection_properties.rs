mod common;

use common::{random_instance, random_member, Design};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapemmr::firststage::project_feasible;
use shapemmr::regret::identified_witness;
use shapemmr::ResponseEstimate;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[test]
fn projection_contract_on_random_infeasible_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut infeasible = 0;
    for _ in 0..60 {
        let inst = random_instance(&mut rng, Design::Any, false);
        let noisy: Vec<f64> = inst
            .est
            .cell(0)
            .iter()
            .map(|v| v + rng.gen_range(-0.6..0.6))
            .collect();
        let est = ResponseEstimate::new(vec![noisy.clone()]);
        if identified_witness(0, &inst.cs, &noisy).is_err() {
            infeasible += 1;
        }
        let proj = project_feasible(&est, &inst.cs).unwrap();
        let out = proj.estimate.cell(0).to_vec();

        // A shape-feasible extension exists.
        let w = &proj.witnesses[0];
        assert!(inst.cs.is_feasible(w, 1e-7));
        assert!(dist2(&inst.cs.select(w), &out).sqrt() <= 1e-7);

        // Idempotent.
        let again = project_feasible(&proj.estimate, &inst.cs).unwrap();
        assert!(dist2(again.estimate.cell(0), &out).sqrt() <= 1e-8);

        // No feasible witness is closer to the raw estimate.
        let d = dist2(&out, &noisy);
        for _ in 0..100 {
            let m = random_member(&mut rng, &inst.cs);
            assert!(d <= dist2(&inst.cs.select(&m), &noisy) + 1e-9);
        }
    }
    assert!(infeasible > 20, "only {infeasible} infeasible draws");
}

#[test]
fn projection_is_exact_for_an_isotonic_pair() {
    // Decreasing on two observed levels: the projection of an increasing pair
    // is its mean.
    let grid = shapemmr::TreatmentGrid::new(vec![0.0, 1.0, 2.0], &[0.0, 2.0]).unwrap();
    let spec = shapemmr::ShapeSpec::decreasing_convex_unit();
    let cs = shapemmr::build_constraints(&grid, &spec).unwrap();
    let est = ResponseEstimate::new(vec![vec![0.3, 0.7], vec![0.6, 0.2]]);
    let proj = project_feasible(&est, &cs).unwrap();
    assert!((proj.estimate.cell(0)[0] - 0.5).abs() < 1e-9);
    assert!((proj.estimate.cell(0)[1] - 0.5).abs() < 1e-9);
    assert_eq!(proj.estimate.cell(1), &[0.6, 0.2]);
    assert_eq!(proj.changed, vec![true, false]);
}
