#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use shapemmr::{
    build_constraints, ConstraintSystem, Curvature, Monotone, ResponseEstimate, ShapeSpec,
    TreatmentGrid, UtilitySpec,
};
use shapemmr_linprog::{solve_lp, LinearProgram, LpStatus};

/// Which levels are observed in a random design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    /// Only the two grid endpoints.
    Endpoints,
    /// Any subset of at least two levels.
    Any,
}

pub struct Instance {
    pub grid: TreatmentGrid,
    pub spec: ShapeSpec,
    pub cs: ConstraintSystem,
    pub truth: Vec<f64>,
    pub est: ResponseEstimate,
    pub u: UtilitySpec,
}

pub fn random_grid<R: Rng>(rng: &mut R, levels: usize, design: Design) -> TreatmentGrid {
    let mut values = vec![0.0];
    for _ in 1..levels {
        let last = *values.last().unwrap();
        values.push(last + rng.gen_range(0.5..2.0));
    }
    let observed: Vec<f64> = match design {
        Design::Endpoints => vec![values[0], values[levels - 1]],
        Design::Any => {
            let k = rng.gen_range(2..=levels);
            let mut idx: Vec<usize> = (0..levels).collect();
            idx.shuffle(rng);
            idx.truncate(k);
            idx.sort();
            idx.into_iter().map(|i| values[i]).collect()
        }
    };
    TreatmentGrid::new(values, &observed).unwrap()
}

pub fn random_spec<R: Rng>(rng: &mut R) -> ShapeSpec {
    let monotone = *[Monotone::None, Monotone::Decreasing, Monotone::Increasing]
        .choose(rng)
        .unwrap();
    let curvature = *[Curvature::None, Curvature::Convex, Curvature::Concave]
        .choose(rng)
        .unwrap();
    let lipschitz = rng.gen_bool(0.3).then(|| rng.gen_range(0.3..1.0));
    ShapeSpec {
        monotone,
        curvature,
        bounds: Some([0.0, 1.0]),
        lipschitz,
    }
}

/// A point of `{S m <= r}` averaged from a few LP vertices.
pub fn random_member<R: Rng>(rng: &mut R, cs: &ConstraintSystem) -> Vec<f64> {
    let n = cs.levels();
    let draws = 4;
    let mut m = vec![0.0; n];
    let mut weights: Vec<f64> = (0..draws).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    for w in weights {
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lp = LinearProgram::maximize(c);
        lp.a_ub = cs.s.clone();
        lp.b_ub = cs.r.clone();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        for (mi, xi) in m.iter_mut().zip(&sol.x) {
            *mi += w * xi;
        }
    }
    m
}

pub fn random_utility<R: Rng>(rng: &mut R, levels: usize, nonnegative: bool) -> UtilitySpec {
    let lo = if nonnegative { 0.0 } else { -1.0 };
    let b = (0..levels).map(|_| rng.gen_range(lo..1.0)).collect();
    let c = (0..levels).map(|_| rng.gen_range(-0.5..0.5)).collect();
    UtilitySpec::per_level(b, c).unwrap()
}

pub fn random_instance<R: Rng>(rng: &mut R, design: Design, nonnegative_benefit: bool) -> Instance {
    let levels = rng.gen_range(3..=7);
    let grid = random_grid(rng, levels, design);
    let spec = random_spec(rng);
    let cs = build_constraints(&grid, &spec).unwrap();
    let truth = random_member(rng, &cs);
    let est = ResponseEstimate::new(vec![cs.select(&truth)]);
    let u = random_utility(rng, levels, nonnegative_benefit);
    Instance {
        grid,
        spec,
        cs,
        truth,
        est,
        u,
    }
}
