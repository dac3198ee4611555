use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hhseg_core::distance::VectorField;
use hhseg_core::hedgehog::{
    apply_empty_cone_fix, build_constraint_edges, check_feasibility, polar_cone_contains, ConeParams,
    EdgeTag, HedgehogConstraints,
};
use hhseg_core::{Grid, LabelId, Labeling, NeighborhoodSystem};

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            return unit(v);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vectors sampled over the cone of half-angle `theta` around `v`:
/// the axis, nested rings, and the rim.
fn cone_samples(v: &[f64], theta: f64) -> Vec<Vec<f64>> {
    let mut out = vec![v.to_vec()];
    if v.len() == 2 {
        let steps = 4000;
        for i in 0..=steps {
            let phi = -theta + 2.0 * theta * i as f64 / steps as f64;
            let (s, c) = phi.sin_cos();
            out.push(vec![c * v[0] - s * v[1], s * v[0] + c * v[1]]);
        }
        return out;
    }
    // Orthonormal frame around v.
    let helper = if v[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let a = unit(vec![
        helper[1] * v[2] - helper[2] * v[1],
        helper[2] * v[0] - helper[0] * v[2],
        helper[0] * v[1] - helper[1] * v[0],
    ]);
    let b = vec![v[1] * a[2] - v[2] * a[1], v[2] * a[0] - v[0] * a[2], v[0] * a[1] - v[1] * a[0]];
    for ring in 1..=20 {
        let t = theta * ring as f64 / 20.0;
        let (st, ct) = t.sin_cos();
        for k in 0..720 {
            let (sp, cp) = (k as f64 * std::f64::consts::TAU / 720.0).sin_cos();
            out.push((0..3).map(|i| ct * v[i] + st * (cp * a[i] + sp * b[i])).collect());
        }
    }
    out
}

#[test]
fn dot_test_agrees_with_sampled_polar_cone_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    let mut inside = 0;
    while checked < 10_000 {
        let dim = if checked % 2 == 0 { 2 } else { 3 };
        let v = random_unit(&mut rng, dim);
        let e = random_unit(&mut rng, dim);
        let theta = rng.random_range(0.0..=std::f64::consts::FRAC_PI_2);
        // Sampling cannot resolve configurations right at the threshold.
        if (dot(&e, &v) + theta.sin()).abs() < 1e-3 {
            continue;
        }
        let oracle = cone_samples(&v, theta).iter().all(|z| dot(&e, z) <= 0.0);
        let got = polar_cone_contains(&v, &e, theta).unwrap();
        assert_eq!(got, oracle, "v={v:?} e={e:?} theta={theta}");
        checked += 1;
        inside += got as usize;
    }
    assert!(inside > 1000 && inside < 9000);
}

#[test]
fn non_unit_inputs_rejected() {
    assert!(polar_cone_contains(&[2.0, 0.0], &[-1.0, 0.0], 0.3).is_err());
    assert!(polar_cone_contains(&[1.0, 0.0], &[0.0, 0.5], 0.3).is_err());
}

fn field_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols * 2)
}

fn nbhd_strategy() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![4usize, 8, 16, 32])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_edge_sets_shrink_as_theta_grows(raw in field_strategy(5, 6), size in nbhd_strategy(),
                                           t1 in 0.0f64..std::f64::consts::FRAC_PI_2, t2 in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let grid = Grid::new(&[5, 6]).unwrap();
        let field = VectorField::from_raw(grid, &raw, 1e-6).unwrap();
        let nbhd = NeighborhoodSystem::build(2, size).unwrap();
        let wide = build_constraint_edges(&field, &nbhd, ConeParams::new(lo).unwrap()).unwrap();
        let tight = build_constraint_edges(&field, &nbhd, ConeParams::new(hi).unwrap()).unwrap();
        for e in tight.edges() {
            prop_assert!(wide.contains(e.from, e.to));
        }
    }

    #[test]
    fn raw_edges_pass_the_disjunction_and_nothing_else_does(raw in field_strategy(4, 5), size in nbhd_strategy(),
                                                            theta in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let grid = Grid::new(&[4, 5]).unwrap();
        let field = VectorField::from_raw(grid.clone(), &raw, 1e-6).unwrap();
        let nbhd = NeighborhoodSystem::build(2, size).unwrap();
        let set = build_constraint_edges(&field, &nbhd, ConeParams::new(theta).unwrap()).unwrap();
        let mut expected = 0;
        for p in 0..grid.len() {
            let cp = grid.coords(p).unwrap();
            for o in nbhd.offsets() {
                let Some(q) = grid.shifted(&cp, &o.delta) else { continue };
                let e: Vec<f64> = o.unit.clone();
                let at = |x: usize| field.get(x).map(|v| polar_cone_contains(v, &e, theta).unwrap()).unwrap_or(false);
                let want = at(p) || at(q);
                prop_assert_eq!(set.contains(p, q), want);
                expected += want as usize;
                if want {
                    prop_assert!(set.outgoing(p).iter().any(|x| x.to == q && x.tag == EdgeTag::Cone));
                }
            }
        }
        prop_assert_eq!(set.len(), expected);
    }

    #[test]
    fn fix_gives_every_defined_pixel_an_outgoing_edge(raw in field_strategy(5, 5), size in nbhd_strategy(),
                                                      theta in 0.0f64..=std::f64::consts::FRAC_PI_2) {
        let grid = Grid::new(&[5, 5]).unwrap();
        let field = VectorField::from_raw(grid.clone(), &raw, 1e-6).unwrap();
        let nbhd = NeighborhoodSystem::build(2, size).unwrap();
        let cone = ConeParams::new(theta).unwrap();
        let raw_set = build_constraint_edges(&field, &nbhd, cone).unwrap();
        let fixed = apply_empty_cone_fix(&raw_set, &field, &nbhd, cone).unwrap();
        for p in 0..grid.len() {
            let v = field.get(p);
            if v.is_none() {
                continue;
            }
            let cp = grid.coords(p).unwrap();
            // The most antiparallel direction may lead off the grid, in which case the fix is skipped.
            let best = nbhd
                .offsets()
                .iter()
                .min_by(|a, b| dot(&a.unit, v.unwrap()).total_cmp(&dot(&b.unit, v.unwrap())))
                .unwrap();
            if grid.shifted(&cp, &best.delta).is_some() {
                prop_assert!(!fixed.outgoing(p).is_empty(), "pixel {:?}", cp);
            }
        }
        for e in raw_set.edges() {
            prop_assert!(fixed.contains(e.from, e.to));
        }
    }

    #[test]
    fn feasibility_is_closure_under_edges(raw in field_strategy(3, 4), mask in 0u32..(1 << 12),
                                          theta in 0.0f64..std::f64::consts::FRAC_PI_2) {
        let grid = Grid::new(&[3, 4]).unwrap();
        let field = VectorField::from_raw(grid.clone(), &raw, 1e-6).unwrap();
        let nbhd = NeighborhoodSystem::build(2, 8).unwrap();
        let set = build_constraint_edges(&field, &nbhd, ConeParams::new(theta).unwrap()).unwrap();
        let k = LabelId(2);
        let a: Vec<LabelId> = (0..12).map(|p| if mask >> p & 1 == 1 { k } else { LabelId(1) }).collect();
        let closed = set.edges().iter().all(|e| a[e.from] != k || a[e.to] == k);
        let labeling = Labeling::new(grid, vec![LabelId(1), k], LabelId(1), a).unwrap();
        let mut constraints = HedgehogConstraints::new();
        constraints.insert(k, set);
        prop_assert_eq!(check_feasibility(&labeling, &constraints).is_ok(), closed);
    }
}
