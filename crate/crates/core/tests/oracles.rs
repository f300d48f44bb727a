use std::collections::HashMap;

use loctime::exact::{ExactQTable, ReturnSeries};
use loctime::experiments::{aggregate, simulate, ExperimentConfig, Moments};
use loctime::local_times::{LocalTimeState, ObservableF, ObservableId};
use loctime::walk::{validate_distribution, Probability, Site, StepDistribution};
use proptest::prelude::*;

/// Local times by re-scanning the whole path for each visited site.
fn brute_histogram(path: &[Vec<i64>]) -> HashMap<u64, u64> {
    let mut seen: Vec<&Vec<i64>> = Vec::new();
    let mut q = HashMap::new();
    for p in path {
        if seen.contains(&p) {
            continue;
        }
        seen.push(p);
        let visits = path.iter().filter(|x| *x == p).count() as u64;
        *q.entry(visits).or_insert(0) += 1;
    }
    q
}

fn positions(steps: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let dim = steps.first().map_or(1, Vec::len);
    let mut pos = vec![0; dim];
    let mut out = vec![pos.clone()];
    for s in steps {
        for (x, d) in pos.iter_mut().zip(s) {
            *x += d;
        }
        out.push(pos.clone());
    }
    out
}

#[test]
fn every_ten_step_simple_path_matches_recount() {
    let f = ObservableF::power(2.0).unwrap();
    for code in 0u32..1 << 10 {
        let steps: Vec<Vec<i64>> = (0..10).map(|i| vec![if code >> i & 1 == 1 { 1 } else { -1 }]).collect();
        let mut state = LocalTimeState::new(1, [f.clone()]);
        for s in &steps {
            state.ingest_offset(s);
        }
        let brute = brute_histogram(&positions(&steps));
        let h = state.histogram();
        for (&j, &c) in &brute {
            assert_eq!(h.get(j as u32), c, "path {code:#b} j={j}");
        }
        assert_eq!(h.iter().count(), brute.len());
        assert_eq!(state.range(), brute.values().sum::<u64>());
        assert_eq!(state.l_max() as u64, *brute.keys().max().unwrap());
        let g: f64 = brute.iter().map(|(j, c)| (j * j * c) as f64).sum();
        assert_eq!(state.functional_g(ObservableId(0)).unwrap(), g);
    }
}

/// `E Q_n(j)` by weighting every path of a small walk.
fn enumerate_eq(atoms: &[(i64, f64)], n: usize) -> Vec<f64> {
    let k = atoms.len();
    let mut eq = vec![0.0; n + 2];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        let mut w = 1.0;
        let mut steps = Vec::with_capacity(n);
        for _ in 0..n {
            let (d, p) = atoms[c % k];
            c /= k;
            w *= p;
            steps.push(vec![d]);
        }
        for (j, q) in brute_histogram(&positions(&steps)) {
            eq[j as usize] += w * q as f64;
        }
    }
    eq
}

#[test]
fn exact_table_matches_enumeration_for_skewed_walk() {
    let atoms = [(-1i64, 0.3), (0, 0.2), (2, 0.5)];
    let dist = validate_distribution(
        &atoms.iter().map(|&(d, p)| (Site(vec![d]), Probability::Float(p))).collect::<Vec<_>>(),
        1,
    )
    .unwrap();
    let series = ReturnSeries::compute(&dist, 8, usize::MAX).unwrap();
    let table = ExactQTable::full(&series, 8, None).unwrap();
    for n in 0..=7 {
        let oracle = enumerate_eq(&atoms, n);
        for (j, &v) in oracle.iter().enumerate().skip(1) {
            let got = table.eq(n, j).unwrap();
            assert!((got - v).abs() < 1e-12, "n={n} j={j}: {got} vs {v}");
        }
    }
}

#[test]
fn aggregation_is_order_insensitive() {
    let mut cfg = ExperimentConfig::new(StepDistribution::simple(3).unwrap(), 200, 24, 17);
    cfg.observables = vec![ObservableF::power(1.5).unwrap(), ObservableF::exactly([1])];
    cfg.alphas = vec![0.0];
    let traces = simulate(&cfg, false).unwrap();
    let forward = aggregate(&traces);
    let mut reversed = traces.clone();
    reversed.reverse();
    let backward = aggregate(&reversed);
    for (a, b) in forward.iter().flatten().zip(backward.iter().flatten()) {
        assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
        assert!((a.variance() - b.variance()).abs() <= 1e-12 * a.variance().max(1.0));
    }
}

fn step_strategy(dim: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(-2i64..=2, dim), 0..300)
}

proptest! {
    #[test]
    fn visits_are_conserved(steps in step_strategy(2)) {
        let mut state = LocalTimeState::new(2, []);
        for s in &steps {
            state.ingest_offset(s);
        }
        let h = state.histogram();
        prop_assert_eq!(h.total_visits(), steps.len() as u64 + 1);
        prop_assert_eq!(h.range(), state.range());
        prop_assert_eq!(state.functional_l(1.0).unwrap(), (steps.len() + 1) as f64);
    }

    #[test]
    fn running_functionals_match_replay(steps in step_strategy(3)) {
        let fs = vec![ObservableF::power(1.5).unwrap(), ObservableF::at_least(2), ObservableF::exactly([1, 3])];
        let mut state = LocalTimeState::new(3, fs.clone());
        for s in &steps {
            state.ingest_offset(s);
        }
        for (i, f) in fs.iter().enumerate() {
            let running = state.functional_g(ObservableId(i)).unwrap();
            let replay = state.replay_g(f);
            prop_assert!((running - replay).abs() <= 1e-9 * replay.abs().max(1.0));
        }
    }

    #[test]
    fn moments_merge_associatively(xs in prop::collection::vec(-1e3f64..1e3, 3..60), cut in 0.0f64..1.0, cut2 in 0.0f64..1.0) {
        let i = ((xs.len() - 2) as f64 * cut) as usize + 1;
        let j = i + ((xs.len() - i - 1) as f64 * cut2) as usize + 1;
        let a: Moments = xs[..i].iter().copied().collect();
        let b: Moments = xs[i..j].iter().copied().collect();
        let c: Moments = xs[j..].iter().copied().collect();
        let left = a.merge(&b).merge(&c);
        let right = a.merge(&b.merge(&c));
        let scale = left.variance().max(1.0);
        prop_assert!((left.mean - right.mean).abs() <= 1e-12 * left.mean.abs().max(1.0));
        prop_assert!((left.variance() - right.variance()).abs() <= 1e-12 * scale);
        prop_assert_eq!(left.count, xs.len() as u64);
    }
}
