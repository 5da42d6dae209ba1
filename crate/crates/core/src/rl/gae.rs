/// Generalized advantage estimates and returns for one trajectory.
///
/// `dones[t]` marks that the episode ended after step `t`, so neither the
/// next value nor later residuals leak across it. `bootstrap` is the value
/// of the state after the last step.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "equal-length series");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shift to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        adv.iter_mut().for_each(|a| *a -= mean);
        return;
    }
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    // A second pass removes the rounding left by the first.
    let m2 = adv.iter().sum::<f64>() / n;
    adv.iter_mut().for_each(|a| *a -= m2);
}

/// Direct double sum `Σ_l (γλ)^l δ_{t+l}`, stopping after the first episode
/// end. Quadratic; for checking [`gae`].
pub fn gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let value_after = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta = |t: usize| {
        let next = if dones[t] { 0.0 } else { value_after(t) };
        rewards[t] + gamma * next - values[t]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                sum += (gamma * lambda).powi(l as i32) * delta(t + l);
                if dones[t + l] {
                    break;
                }
            }
            sum
        })
        .collect()
}
