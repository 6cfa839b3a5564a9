mod common;

use common::{finite_difference, max_relative_error, random_fixture, Fixture, Perturb, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scdgn::engine::{backward, GradientMode};
use scdgn::model::{forward, Ablation, HyperParams, ParamGroup, Parameters};

const SMALL: Shape = Shape {
    target_users: 2,
    source_users: 1,
    items: 3,
    clusters: 2,
    text_dim: 5,
};

fn hp() -> HyperParams {
    HyperParams {
        dim: 4,
        debias_dim: 4,
        cross_layers: 2,
        target_layers: 2,
        lambda_rs: 0.7,
        lambda_dr: 0.5,
        lambda_reg: 0.05,
        k: 2,
        ..HyperParams::default()
    }
}

fn grads(f: &Fixture, mode: GradientMode) -> Parameters {
    let cache = forward(&f.params, &f.data, &f.hp);
    backward(&f.batch, &cache, &f.params, &f.data, &f.hp, mode, 0).unwrap()
}

fn check(hp: HyperParams, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_fixture(&mut rng, &SMALL, hp.clone());
        let fd = finite_difference(&f, 1e-5, Perturb::Explicit);
        let (err, at) = max_relative_error(&grads(&f, GradientMode::Detached), &fd, 1e-6);
        assert!(err < 1e-4, "seed {seed}: {err} at {at}");
        let fd = finite_difference(&f, 1e-5, Perturb::Both);
        let (err, at) = max_relative_error(&grads(&f, GradientMode::Full), &fd, 1e-6);
        assert!(err < 1e-4, "seed {seed} full: {err} at {at}");
    }
}

#[test]
fn detached_gradient_matches_differences() {
    check(hp(), 0..10);
}

#[test]
fn gradient_with_dedup_and_full_user_restriction() {
    check(
        HyperParams {
            dedup_layer0: true,
            restrict_full_user: true,
            ..hp()
        },
        20..25,
    );
}

#[test]
fn gradient_under_each_ablation() {
    for ablation in [Ablation::NoSi, Ablation::NoDrloss, Ablation::NoDb] {
        check(HyperParams { ablation, ..hp() }, 40..43);
    }
}

#[test]
fn ablated_debias_groups_get_zero_gradient() {
    for ablation in [Ablation::NoSi, Ablation::NoDb] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_fixture(&mut rng, &SMALL, HyperParams { ablation, ..hp() });
        let g = grads(&f, GradientMode::Full);
        for group in [ParamGroup::UserDebias, ParamGroup::ClusterDebias] {
            assert!(g.group(group).iter().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn doubling_dr_weight_doubles_its_share_of_w() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = random_fixture(&mut rng, &SMALL, hp());
    let with = |lambda_dr: f64| {
        let f = Fixture {
            hp: HyperParams { lambda_dr, ..base.hp.clone() },
            data: base.data.clone(),
            params: base.params.clone(),
            batch: base.batch.clone(),
        };
        grads(&f, GradientMode::Detached).reduce_weight
    };
    let g0 = with(0.0);
    let share1 = with(0.5) - &g0;
    let share2 = with(1.0) - &g0;
    for (a, b) in share1.iter().zip(share2.iter()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} {b}");
    }
    assert!(share1.iter().any(|x| x.abs() > 1e-8));
}

