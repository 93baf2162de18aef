mod oracles;

use chrono::{Days, NaiveDate};
use ftrl_core::data::{make_windows, SeriesFrame, WindowedDataset};
use ftrl_core::envs::{forecast_reward, ControlConfig, ControlEnv, Environment, ForecastEnv, Traversal};
use ftrl_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng as _;

fn dataset(len: usize, t: usize, p: usize) -> WindowedDataset {
    let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let ts = (0..len).map(|i| start + Days::new(i as u64)).collect();
    let y: Vec<f64> = (0..len).map(|i| (i as f64 * 0.37).sin()).collect();
    let z: Vec<f64> = (0..len).map(|i| i as f64).collect();
    let frame = SeriesFrame::new(ts, vec![("y".into(), y), ("z".into(), z)]).unwrap();
    make_windows(&frame, t, p, 1).unwrap()
}

#[test]
fn reward_law_on_random_pairs() {
    let rng = &mut seeded(2024);
    let mut exact = 0;
    for _ in 0..10_000 {
        let p = rng.random_range(1..8);
        let scale = [0.01, 1.0, 10.0][rng.random_range(0..3)];
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-scale..scale)).collect();
        let a: Vec<f64> = if rng.random_bool(0.1) {
            exact += 1;
            y.clone()
        } else {
            (0..p).map(|_| rng.random_range(-scale..scale)).collect()
        };
        let r = forecast_reward(&a, &y);
        let expected = oracles::reward_oracle(&a, &y);
        let mse: f64 = a.iter().zip(&y).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / p as f64;
        assert!((-1.0..=1.0).contains(&r), "reward {r} outside [-1, 1]");
        // Past MSE ~37, 2·exp(−MSE) is under half an ulp of 1 and the sum rounds to −1.
        if mse < 36.0 {
            assert!(r > -1.0, "reward {r} at mse {mse}");
        }
        assert!((r - expected).abs() <= 1e-12);
        if mse == 0.0 {
            assert_eq!(r, 1.0);
        } else if mse > 1e-12 {
            assert!(r < 1.0);
        }

        // A second forecast at a different distance from the same target.
        let b: Vec<f64> = (0..p).map(|_| rng.random_range(-scale..scale)).collect();
        let mse_b: f64 = b.iter().zip(&y).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / p as f64;
        let rb = forecast_reward(&b, &y);
        // Below ~1e-16 relative difference the exponential cannot separate them.
        if (mse - mse_b).abs() > 1e-12 && mse.max(mse_b) < 30.0 {
            assert_eq!(mse < mse_b, r > rb, "mse {mse} vs {mse_b}, reward {r} vs {rb}");
        }
    }
    assert!(exact > 500);
}

#[test]
fn reward_worked_examples() {
    let e = 2.0 * (-1f64).exp() - 1.0;
    assert!((forecast_reward(&[1.0], &[0.0]) - e).abs() < 1e-15);
    assert!((forecast_reward(&[1.0, -1.0], &[0.0, 0.0]) - e).abs() < 1e-15);
    assert!((e - -0.264241).abs() < 1e-6);
    assert!(forecast_reward(&[2f64.ln().sqrt()], &[0.0]).abs() < 1e-15);
}

proptest! {
    #[test]
    fn reward_is_bounded_and_one_only_at_truth(
        y in prop::collection::vec(-5.0f64..5.0, 1..6),
        d in prop::collection::vec(-3.0f64..3.0, 1..6),
    ) {
        let a: Vec<f64> = y.iter().zip(d.iter().cycle()).map(|(u, v)| u + v).collect();
        let r = forecast_reward(&a, &y);
        prop_assert!(r.is_finite() && r > -1.0 && r <= 1.0);
        prop_assert_eq!(forecast_reward(&y, &y), 1.0);
        if a != y {
            prop_assert!(r < 1.0);
        }
    }

    #[test]
    fn episode_accounting(len in 6usize..60, episode in 1usize..40, start_frac in 0.0f64..1.0) {
        let ds = dataset(len, 3, 2);
        let n = ds.len();
        let start = ((n as f64 * start_frac) as usize).min(n - 1);
        let mut env = ForecastEnv::new(ds.clone(), Traversal::Sequential).with_episode_length(episode);
        let first = env.reset_at(0, start);
        prop_assert_eq!(&first.data[..], ds.state(start));
        let mut steps = 0;
        loop {
            let cursor = env.cursor();
            let r = env.step(&[0.0, 0.0]);
            prop_assert!(r.reward.is_finite());
            prop_assert_eq!(&r.info[..], ds.target(cursor));
            steps += 1;
            if r.done {
                break;
            }
            prop_assert_eq!(&r.observation.data[..], ds.state(env.cursor()));
        }
        prop_assert_eq!(steps, episode.min(n - start));
        prop_assert!(env.is_done());
    }

    #[test]
    fn shuffled_observations_are_dataset_states(seed in any::<u64>()) {
        let ds = dataset(40, 4, 1);
        let mut env = ForecastEnv::new(ds.clone(), Traversal::Shuffled).with_episode_length(10);
        let mut obs = env.reset(seed);
        let replay = env.clone().reset(seed);
        prop_assert_eq!(&obs, &replay);
        loop {
            prop_assert_eq!(&obs.data[..], ds.state(env.cursor()));
            let r = env.step(&[0.0]);
            if r.done {
                break;
            }
            obs = r.observation;
        }
    }
}

#[test]
fn sequential_reset_starts_at_first_window() {
    let ds = dataset(30, 3, 1);
    let mut env = ForecastEnv::new(ds.clone(), Traversal::Sequential);
    for seed in 0..5 {
        let obs = env.reset(seed);
        assert_eq!(env.cursor(), 0);
        assert_eq!(obs.data, ds.state(0));
    }
}

#[test]
#[should_panic(expected = "step after done")]
fn control_step_after_done_panics() {
    let mut env = ControlEnv::new(ControlConfig { step_limit: 1, ..ControlConfig::line_racer() });
    env.reset(0);
    env.step(&[0.0]);
    env.step(&[0.0]);
}

#[test]
fn line_racer_examples() {
    let mut env = ControlEnv::new(ControlConfig::line_racer());
    env.reset(0);
    let before = env.position();
    let r = env.step(&[1.0]);
    assert_eq!(r.reward, (env.position() - before) - 0.1);
    env.reset(0);
    let r = env.step(&[0.0]);
    assert_eq!(r.reward, 0.0);
    assert_eq!(r.observation.data, vec![0.0]);
}

#[test]
fn stick_balance_forced_angle_ends_episode_without_healthy_bonus() {
    for seed in 0..10 {
        let mut env = ControlEnv::new(ControlConfig::stick_balance());
        env.reset(seed);
        env.force_angle(-0.9);
        let x0 = env.position();
        let r = env.step(&[0.3, -0.2]);
        assert!(r.done);
        let forward = env.position() - x0;
        let ctrl = 0.3f64 * 0.3 + 0.2 * 0.2;
        assert!((r.reward - (forward - 1e-3 * ctrl)).abs() < 1e-15);
    }
}

#[test]
fn stick_balance_reward_formula_while_healthy() {
    let mut env = ControlEnv::new(ControlConfig::stick_balance());
    env.reset(4);
    let x0 = env.position();
    let r = env.step(&[0.5, 0.1]);
    assert!(!r.done);
    let forward = env.position() - x0;
    assert!((r.reward - (forward + 1.0 - 1e-3 * 0.26)).abs() < 1e-15);
}

#[test]
fn line_racer_return_grows_with_episode_length() {
    let cfg = ControlConfig { w_ctrl: 0.0, step_limit: 400, ..ControlConfig::line_racer() };
    let mut env = ControlEnv::new(cfg);
    env.reset(0);
    let mut total = 0.0;
    let mut previous = f64::NEG_INFINITY;
    for step in 0..400 {
        total += env.step(&[0.6]).reward;
        // The first step moves nothing under explicit Euler.
        if step > 0 {
            assert!(total > previous, "step {step}: {total} <= {previous}");
        }
        previous = total;
    }
}

#[test]
fn control_reset_is_seeded() {
    let mut a = ControlEnv::new(ControlConfig::stick_balance());
    let mut b = ControlEnv::new(ControlConfig::stick_balance());
    assert_eq!(a.reset(9), b.reset(9));
    assert_ne!(a.reset(9), a.reset(10));
    a.reset(9);
    for _ in 0..20 {
        let (ra, rb) = (a.step(&[0.1, 0.0]), b.step(&[0.1, 0.0]));
        assert_eq!((ra.reward, ra.done, &ra.observation), (rb.reward, rb.done, &rb.observation));
        if ra.done {
            break;
        }
    }
}
