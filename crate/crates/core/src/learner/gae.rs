//! Generalized advantage estimation.

use super::TrainError;
use crate::num::Scalar;

/// Computes advantages by the backward recursion
/// `A[t] = d[t] + discount * lambda * (1 - done[t]) * A[t+1]` with
/// `d[t] = r[t] + discount * V[t+1] * (1 - done[t]) - V[t]`.
///
/// `values` carries one extra entry: the bootstrap value for a truncated
/// final state (ignored when the last step is terminal). With `lambda = 1`
/// this is the discounted Monte-Carlo return minus the baseline; with
/// `lambda = 0` it is the one-step TD error.
pub fn gae<S: Scalar>(
    rewards: &[S],
    values: &[S],
    dones: &[bool],
    discount: S,
    lambda: S,
) -> Result<Vec<S>, TrainError> {
    if values.len() != rewards.len() + 1 || dones.len() != rewards.len() {
        return Err(TrainError::LengthMismatch(format!(
            "rewards {} values {} dones {}",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![S::zero(); n];
    let mut carry = S::zero();
    for t in (0..n).rev() {
        let not_done = if dones[t] { S::zero() } else { S::one() };
        let delta = rewards[t] + discount * values[t + 1] * not_done - values[t];
        carry = delta + discount * lambda * not_done * carry;
        advantages[t] = carry;
    }
    Ok(advantages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undiscounted_mc_example() {
        let adv = gae(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[false, true], 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![2.0, 1.0]);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let rewards = [0.3, -1.2, 2.0, 0.7];
        let values = [0.1, 0.4, -0.2, 0.9, 0.5];
        let dones = [false, false, false, false];
        let adv = gae(&rewards, &values, &dones, 0.99, 0.0).unwrap();
        for t in 0..rewards.len() {
            let expected = rewards[t] + 0.99 * values[t + 1] - values[t];
            assert_eq!(adv[t], expected, "step {t}");
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(gae(&[1.0], &[0.0], &[false], 0.9, 0.9).is_err());
        assert!(gae(&[1.0], &[0.0, 0.0], &[], 0.9, 0.9).is_err());
    }
}
