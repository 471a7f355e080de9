use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use lyapedit::controller::stability_ratio;
use lyapedit::editors::objective;
use lyapedit::linalg::{gram, smallest_eigenvalue};
use lyapedit::oracle::check_sufficiency_empirical;
use lyapedit::{
    derive_params, run, solve_baseline, solve_edit_only, solve_lyaplock, AssociativeMemory, BacklogAccumulator, Dims,
    EditBatch, EditorKind, QueueState, RidgePolicy, RunConfig, StreamSource, StreamSpec,
};

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Memory, backlog of `past` columns in two batches, and a fresh batch.
fn instance(seed: u64, d0: usize, d1: usize, n: usize, m0: usize, past: usize) -> (AssociativeMemory, BacklogAccumulator, EditBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = randn(&mut rng, d1, d0);
    let k0 = randn(&mut rng, d0, m0);
    let mut mem = AssociativeMemory::new(w0, &k0).unwrap();
    mem.apply_delta(&(randn(&mut rng, d1, d0) * 0.3)).unwrap();
    let mut bk = BacklogAccumulator::new(Dims::new(d0, d1).unwrap());
    for cols in [past / 2, past - past / 2] {
        if cols > 0 {
            bk.absorb(&EditBatch::new(randn(&mut rng, d0, cols), randn(&mut rng, d1, cols)).unwrap()).unwrap();
        }
    }
    let batch = EditBatch::new(randn(&mut rng, d0, n), randn(&mut rng, d1, n)).unwrap();
    (mem, bk, batch)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_losses_match_explicit(seed: u64, d0 in 1usize..=16, d1 in 1usize..=16, m0x in 0usize..=240, parts in 1usize..=4) {
        let m0 = d0 + m0x % (257 - d0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = randn(&mut rng, d1, d0);
        let k0 = randn(&mut rng, d0, m0);
        let v0 = randn(&mut rng, d1, m0);
        let mem = AssociativeMemory::with_values(w0, &k0, &v0).unwrap();
        let w = randn(&mut rng, d1, d0);
        let explicit_pl = (&w * &k0 - &v0).norm_squared();
        let pl = mem.preservation_loss(&w).unwrap();
        prop_assert!(pl >= 0.0);
        prop_assert!(rel(pl, explicit_pl) <= 1e-8, "{} vs {}", pl, explicit_pl);

        // backlog of several batches equals editing loss on their concatenation
        let mut bk = BacklogAccumulator::new(mem.dims());
        let (mut ks, mut vs) = (Vec::new(), Vec::new());
        for i in 0..parts {
            let cols = 1 + i;
            let (k, v) = (randn(&mut rng, d0, cols), randn(&mut rng, d1, cols));
            bk.absorb(&EditBatch::new(k.clone(), v.clone()).unwrap()).unwrap();
            ks.push(k);
            vs.push(v);
        }
        let kcat = DMatrix::from_columns(&ks.iter().flat_map(|k| k.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>());
        let vcat = DMatrix::from_columns(&vs.iter().flat_map(|v| v.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>());
        let concat = EditBatch::new(kcat, vcat).unwrap();
        let bl = bk.loss(&w).unwrap();
        let el = concat.editing_loss(&w).unwrap();
        prop_assert!(bl >= 0.0 && el >= 0.0);
        prop_assert!(rel(bl, el) <= 1e-8, "{} vs {}", bl, el);
    }

    #[test]
    fn preservation_loss_sees_every_translation(seed: u64, d0 in 1usize..=8, d1 in 1usize..=8, extra in 0usize..=40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = randn(&mut rng, d1, d0);
        let k0 = randn(&mut rng, d0, d0 + extra);
        let mem = AssociativeMemory::new(w0.clone(), &k0).unwrap();
        let p = randn(&mut rng, d1, d0);
        let pl = mem.preservation_loss(&(&w0 + &p)).unwrap();
        let lower = smallest_eigenvalue(&gram(&k0)) * p.norm_squared();
        prop_assert!(pl > 0.0);
        prop_assert!(pl >= lower * (1.0 - 1e-8), "{} < {}", pl, lower);
    }

    #[test]
    fn closed_form_is_stationary(seed: u64, d0 in 1usize..=8, d1 in 1usize..=6, n in 1usize..=4, past in 0usize..=8, az in 0.05f64..20.0) {
        let (mem, bk, batch) = instance(seed, d0, d1, n, 4 * d0, past);
        let s = solve_lyaplock(&mem, &bk, &batch, 1.0, az, RidgePolicy::default()).unwrap();
        let f0 = objective(&mem, &bk, &batch, 1.0, az, &s.delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..8 {
            let e = randn(&mut rng, d1, d0);
            let scale = 1e-4 * s.delta.norm().max(f64::MIN_POSITIVE) / e.norm();
            let f = objective(&mem, &bk, &batch, 1.0, az, &(&s.delta + e * scale)).unwrap();
            prop_assert!(f >= f0 - 1e-9 * f0.abs(), "{} < {}", f, f0);
        }
    }

    #[test]
    fn common_weight_scaling_leaves_delta_unchanged(seed: u64, d0 in 1usize..=8, d1 in 1usize..=6, n in 1usize..=4, past in 0usize..=8, c_log in -3.0f64..3.0) {
        let (mem, bk, batch) = instance(seed, d0, d1, n, 4 * d0, past);
        let c = 10f64.powf(c_log);
        let a = solve_lyaplock(&mem, &bk, &batch, 0.7, 1.9, RidgePolicy::default()).unwrap();
        let b = solve_lyaplock(&mem, &bk, &batch, 0.7 * c, 1.9 * c, RidgePolicy::default()).unwrap();
        let diff = (&a.delta - &b.delta).norm() / a.delta.norm().max(f64::MIN_POSITIVE);
        prop_assert!(diff <= 1e-10, "{}", diff);
    }

    #[test]
    fn larger_preservation_weight_trades_edit_for_preservation(seed: u64, d0 in 1usize..=8, d1 in 1usize..=6, n in 1usize..=4, past in 0usize..=8) {
        let (mem, bk, batch) = instance(seed, d0, d1, n, 4 * d0, past);
        let mut prev: Option<(f64, f64)> = None;
        for az in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0] {
            let s = solve_lyaplock(&mem, &bk, &batch, 1.0, az, RidgePolicy::default()).unwrap();
            let w = mem.weights() + &s.delta;
            let pl = mem.preservation_loss(&w).unwrap();
            let edit = batch.editing_loss(&w).unwrap() + bk.loss(&w).unwrap();
            if let Some((ppl, pedit)) = prev {
                prop_assert!(pl <= ppl + 1e-9, "PL rose {} -> {}", ppl, pl);
                prop_assert!(edit >= pedit - 1e-9, "EL+BL fell {} -> {}", pedit, edit);
            }
            prev = Some((pl, edit));
        }
    }

    #[test]
    fn queue_floor_and_drift_bound(alpha in 0.1f64..200.0, d_base in 1e-3f64..1e3, pls in proptest::collection::vec(0.0f64..1.0, 1..200)) {
        let params = derive_params(alpha, d_base).unwrap();
        let mut s = QueueState::initial(&params);
        let mut history = vec![s.z];
        for u in pls {
            // spread losses over [0, 4D] so both floor and growth regimes occur
            let pl = 4.0 * params.d_threshold * u;
            let bound = s.drift_upper_bound(&params, pl);
            let next = s.update(&params, pl).unwrap();
            prop_assert!(next.z >= params.z_max);
            prop_assert!(next.drift_last <= bound + 1e-9 * (1.0 + bound.abs()), "{} > {}", next.drift_last, bound);
            s = next;
            history.push(s.z);
        }
        // Z(T)/T and Z(T+1)/(T+1) differ by O(1/T)
        let t = history.len() - 1;
        if t >= 1 {
            let r_t = stability_ratio(&history[..t]).unwrap();
            let r_t1 = stability_ratio(&history).unwrap();
            let step = params.a * 4.0 * params.d_threshold + params.b;
            prop_assert!((r_t - r_t1).abs() <= (r_t + step) / (t as f64 + 1.0) + 1e-12);
        }
    }

    #[test]
    fn runs_compose_and_replay(seed: u64, editor_ix in 0usize..3, alpha in 5.0f64..150.0, record_every in 1usize..5) {
        let editor = [EditorKind::Lyaplock, EditorKind::Baseline, EditorKind::EditOnly][editor_ix];
        let spec = StreamSpec::new(Dims::new(6, 5).unwrap(), 2, 25, seed);
        let mut cfg = RunConfig::new(StreamSource::Synthetic(spec), editor, alpha);
        cfg.record_every = record_every;
        let o = run(&cfg).unwrap();
        prop_assert!(o.summary.status.is_completed());

        let moved = &o.final_weights - &o.initial_weights;
        prop_assert!((&o.delta_sum - &moved).norm() <= 1e-9 * moved.norm().max(1e-300));

        // queue replay from recorded losses is exact
        let mut s = QueueState::initial(&o.params);
        for (t, &pl) in o.pl_history.iter().enumerate() {
            prop_assert_eq!(s.z.to_bits(), o.z_history[t].to_bits());
            s = s.update(&o.params, pl).unwrap();
        }
        prop_assert_eq!(s.z.to_bits(), o.z_history.last().unwrap().to_bits());

        for r in &o.records {
            let t = r.t as usize;
            let mean = o.pl_history[..t].iter().sum::<f64>() / t as f64;
            prop_assert!((r.avg_pl - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
            prop_assert_eq!(r.z.to_bits(), o.z_history[t - 1].to_bits());
        }
        prop_assert_eq!(o.records.last().unwrap().t, 25);

        let suff = check_sufficiency_empirical(&o).unwrap();
        prop_assert!(suff.passed());
        // ε read off the run: Z(T+1)/T = ε·a
        let t = o.pl_history.len() as f64;
        let eps = o.z_history.last().unwrap() / (t * o.params.a);
        let bound = o.params.d_threshold + eps + o.z_history[0] / (o.params.a * t);
        prop_assert!(suff.measured_avg_pl <= bound * (1.0 + 1e-12));

        let again = run(&cfg).unwrap();
        prop_assert_eq!(format!("{:?}", again.records), format!("{:?}", o.records));
    }

    #[test]
    fn exact_targets_are_met_by_every_editor(seed: u64, d0 in 2usize..=10, d1 in 1usize..=8) {
        let n = 1 + (seed as usize) % d0.min(4);
        let mut spec = StreamSpec::new(Dims::new(d0, d1).unwrap(), n, 6, seed);
        spec.teacher_drift = 0.0;
        for editor in [EditorKind::Lyaplock, EditorKind::Baseline, EditorKind::EditOnly] {
            let prepared = StreamSource::Synthetic(spec.clone()).prepare().unwrap();
            let mut mem = prepared.memory;
            let bk = BacklogAccumulator::new(mem.dims());
            for batch in prepared.batches {
                let batch = batch.unwrap();
                let s = match editor {
                    EditorKind::Lyaplock => solve_lyaplock(&mem, &bk, &batch, 1.0, 1.0, RidgePolicy::default()),
                    EditorKind::Baseline => solve_baseline(&mem, &batch, RidgePolicy::default()),
                    EditorKind::EditOnly => solve_edit_only(&mem, &batch, RidgePolicy::default()),
                }.unwrap();
                mem.apply_delta(&s.delta).unwrap();
                let el = batch.editing_loss(mem.weights()).unwrap();
                prop_assert!(el <= 1e-16 * batch.values().norm_squared(), "{}: {}", editor, el);
            }
        }
    }
}
