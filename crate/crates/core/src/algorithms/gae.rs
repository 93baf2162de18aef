/// Generalized advantage estimates and returns.
///
/// `dones[t]` marks the last step of an episode: the value after it is
/// ignored and the estimate does not look past it. `bootstrap` is the value
/// of the observation following the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(
        (0.0..=1.0).contains(&gamma) && (0.0..=1.0).contains(&lambda),
        "contract violation: gamma {gamma} and lambda {lambda} must lie in [0, 1]"
    );
    let n = rewards.len();
    assert!(
        values.len() == n && dones.len() == n,
        "contract violation: rollout arrays differ in length ({n}, {}, {})",
        values.len(),
        dones.len()
    );
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let (a, r) = compute_gae(&[1.0], &[0.5], &[false], 0.4, 1.0, 1.0);
        assert!((a[0] - 0.9).abs() < 1e-15);
        assert!((r[0] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn two_steps() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.5, 0.4], &[false, false], 0.3, 0.9, 0.8);
        assert!((a[0] - 1.4864).abs() < 1e-12);
        assert!((a[1] - 0.87).abs() < 1e-12);
    }

    #[test]
    fn terminal_truncates() {
        let (a, _) = compute_gae(&[2.0, 5.0], &[0.5, 9.0], &[true, false], 7.0, 0.99, 0.95);
        assert_eq!(a[0], 2.0 - 0.5);
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn gamma_out_of_range() {
        compute_gae(&[1.0], &[0.0], &[false], 0.0, 1.5, 0.9);
    }
}
