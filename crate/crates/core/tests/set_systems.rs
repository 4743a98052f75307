use cuberobust::geometry::{sample_body, Parallelopiped};
use cuberobust::set_lemma::{intersection_sum_check, SetSystem};

/// Sets of points in the outer `frac` slab of each facet of the cube.
fn facet_slabs(points: &[Vec<f64>], d: usize, frac: f64) -> Vec<Vec<usize>> {
    let cut = 1.0 - 2.0 * frac;
    let mut sets = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            sets.push((0..points.len()).filter(|&k| s * points[k][i] >= cut).collect());
        }
    }
    sets
}

#[test]
fn facet_slab_systems_satisfy_the_sum_bound() {
    let d = 4;
    let set = sample_body(&Parallelopiped::standard(d), 20_000, 8).unwrap();
    let points: Vec<Vec<f64>> = (0..set.len()).map(|i| set.cloud().point(i).to_vec()).collect();
    let mut applicable = 0;
    for frac in [0.0005, 0.001, 0.002, 0.005] {
        let sys = SetSystem::new(points.len(), facet_slabs(&points, d, frac)).unwrap();
        let c = intersection_sum_check(&sys, 40.0).unwrap();
        if c.applicable {
            applicable += 1;
            assert!(c.holds, "frac {frac}: {c:?}");
        }
    }
    assert!(applicable >= 2, "{applicable}");
}
