//! Stage two: progressive residual reasoning.
//!
//! Starting from `r⁰ = pivot + r_p`, each step extracts a latent user
//! `uᵗ = φ(rᵗ⁻¹)` and removes it, `rᵗ = rᵗ⁻¹ − uᵗ`. From the second step on, the
//! loop stops as soon as two consecutive users have cosine similarity above
//! `α`; it always stops at `t_max`. The account representation is the mean of
//! the extracted users.

use crate::error::{Error, Result};
use crate::numeric::cosine_similarity;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Similarity,
    Cap,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Similarity => "similarity",
            StopReason::Cap => "cap",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReasoningTrace {
    pub initial: Vec<f64>,
    /// `r¹ ..= rᵀ`.
    pub states: Vec<Vec<f64>>,
    /// `u¹ ..= uᵀ`.
    pub users: Vec<Vec<f64>>,
    /// `sim(uᵗ, uᵗ⁻¹)` for `t = 2 ..= T`.
    pub similarities: Vec<f64>,
    pub stop: StopReason,
}

impl ReasoningTrace {
    /// Number of inferred users `T`.
    pub fn steps(&self) -> usize {
        self.users.len()
    }

    /// `rᵗ` for `t = 0 ..= T`.
    pub fn state(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.initial
        } else {
            &self.states[t - 1]
        }
    }

    /// `account_id,T,stop_reason,sim_2,...,sim_T` row (no trailing newline).
    pub fn csv_row(&self, account: usize) -> String {
        let mut row = format!("{account},{},{}", self.steps(), self.stop.as_str());
        for s in &self.similarities {
            row.push(',');
            row.push_str(&s.to_string());
        }
        row
    }
}

pub fn init_state(pivot: &[f64], position: &[f64]) -> Result<Vec<f64>> {
    if pivot.len() != position.len() {
        return Err(Error::InvalidInput(format!(
            "pivot has {} dimensions, reasoning position embedding {}",
            pivot.len(),
            position.len()
        )));
    }
    Ok(pivot.iter().zip(position).map(|(p, q)| p + q).collect())
}

/// `(uᵗ, rᵗ)` from `rᵗ⁻¹`.
pub fn reason_step<F>(state: &[f64], phi: &mut F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reasoning state".into()));
    }
    let user = phi(state)?;
    if user.len() != state.len() {
        return Err(Error::InvalidInput(format!(
            "reasoning function returned {} dimensions for a {}-dimensional state",
            user.len(),
            state.len()
        )));
    }
    let next = state.iter().zip(&user).map(|(r, u)| r - u).collect();
    Ok((user, next))
}

/// Outcome of the termination test at step `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopCheck {
    /// `sim(uᵗ, uᵗ⁻¹)`, present for `t ≥ 2`.
    pub similarity: Option<f64>,
    pub stop: Option<StopReason>,
}

pub fn should_terminate(
    user: &[f64],
    previous: Option<&[f64]>,
    alpha: f64,
    t: usize,
    t_max: usize,
) -> Result<StopCheck> {
    if t < 1 {
        return Err(Error::InvalidInput(
            "reasoning steps are numbered from 1".into(),
        ));
    }
    let similarity = match previous {
        Some(prev) if t >= 2 => Some(cosine_similarity(user, prev)?),
        _ => None,
    };
    let stop = if similarity.is_some_and(|s| s > alpha) {
        Some(StopReason::Similarity)
    } else if t >= t_max {
        Some(StopReason::Cap)
    } else {
        None
    };
    Ok(StopCheck { similarity, stop })
}

pub fn run_reasoning<F>(
    pivot: &[f64],
    position: &[f64],
    mut phi: F,
    alpha: f64,
    t_max: usize,
) -> Result<ReasoningTrace>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if t_max < 1 {
        return Err(Error::InvalidConfig("t_max must be at least 1".into()));
    }
    let initial = init_state(pivot, position)?;
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut users: Vec<Vec<f64>> = Vec::new();
    let mut similarities = Vec::new();
    for t in 1.. {
        let current = states.last().unwrap_or(&initial);
        let (user, next) = reason_step(current, &mut phi)?;
        let check = should_terminate(&user, users.last().map(Vec::as_slice), alpha, t, t_max)?;
        users.push(user);
        states.push(next);
        similarities.extend(check.similarity);
        if let Some(stop) = check.stop {
            return Ok(ReasoningTrace {
                initial,
                states,
                users,
                similarities,
                stop,
            });
        }
    }
    unreachable!("the loop returns by t_max")
}

/// Mean of the inferred users.
pub fn aggregate(users: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = users
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot aggregate an empty user list".into()))?;
    let mut out = vec![0.0; first.len()];
    for u in users {
        if u.len() != out.len() {
            return Err(Error::InvalidInput(
                "inferred users differ in dimension".into(),
            ));
        }
        crate::numeric::axpy(&mut out, 1.0, u);
    }
    let n = users.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half(r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.iter().map(|v| 0.5 * v).collect())
    }

    fn identity(r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }

    #[test]
    fn init_cases() {
        let p = [1.0, -2.0];
        assert_eq!(init_state(&p, &[0.0, 0.0]).unwrap(), p.to_vec());
        assert_eq!(
            init_state(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            vec![3.0, 4.0]
        );
        assert!(init_state(&p, &[1.0]).is_err());
    }

    #[test]
    fn step_cases() {
        let (u, r) = reason_step(&[2.0, -4.0], &mut identity).unwrap();
        assert_eq!(u, vec![2.0, -4.0]);
        assert_eq!(r, vec![0.0, 0.0]);
        let (u, r) = reason_step(&[2.0, -4.0], &mut half).unwrap();
        assert_eq!(u, vec![1.0, -2.0]);
        assert_eq!(r, vec![1.0, -2.0]);
        let (u, r) = reason_step(&[0.0, 0.0], &mut half).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn termination_rules() {
        let v = [1.0, 2.0];
        assert_eq!(should_terminate(&v, None, -1.0, 1, 5).unwrap().stop, None);
        assert_eq!(
            should_terminate(&v, Some(&v), -1.0, 1, 5).unwrap().stop,
            None
        );
        assert_eq!(
            should_terminate(&v, Some(&v), 0.5, 2, 5).unwrap().stop,
            Some(StopReason::Similarity)
        );
        assert_eq!(
            should_terminate(&v, Some(&v), 1.0, 2, 5).unwrap().stop,
            None
        );
        assert_eq!(
            should_terminate(&v, Some(&v), 1.0, 5, 5).unwrap().stop,
            Some(StopReason::Cap)
        );
    }

    #[test]
    fn halving_stub_stops_at_two() {
        let trace = run_reasoning(&[4.0, 0.0], &[0.0, 0.0], half, 0.5, 10).unwrap();
        assert_eq!(trace.steps(), 2);
        assert_eq!(trace.users, vec![vec![2.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(trace.stop, StopReason::Similarity);
        assert_eq!(trace.similarities, vec![1.0]);
    }

    #[test]
    fn always_similar_and_cap() {
        let t = run_reasoning(&[1.0, 1.0], &[0.5, 0.0], half, -1.0, 10).unwrap();
        assert_eq!(t.steps(), 2);
        let t = run_reasoning(&[1.0, 1.0], &[0.5, 0.0], half, -1.0, 1).unwrap();
        assert_eq!((t.steps(), t.stop), (1, StopReason::Cap));
        assert!(run_reasoning(&[1.0], &[0.0], half, 0.5, 0).is_err());
    }

    #[test]
    fn identity_runs_to_the_cap() {
        // u¹ = r⁰ and every later user is zero, whose similarity is defined as 0
        let t = run_reasoning(&[1.0, -1.0], &[0.0, 0.0], identity, 0.5, 6).unwrap();
        assert_eq!((t.steps(), t.stop), (6, StopReason::Cap));
        assert!(t.similarities.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn aggregation_cases() {
        assert_eq!(aggregate(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            aggregate(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            aggregate(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_row_format() {
        let t = run_reasoning(&[4.0, 0.0], &[0.0, 0.0], half, 0.5, 10).unwrap();
        assert_eq!(t.csv_row(7), "7,2,similarity,1");
    }

    proptest! {
        #[test]
        fn trace_invariants(
            pivot in prop::collection::vec(-3.0f64..3.0, 4),
            scales in prop::collection::vec(0.05f64..0.95, 4),
            alpha in -1.0f64..1.2,
            t_max in 1usize..9,
        ) {
            // a state-dependent linear map, so users rotate between steps
            let mut phi = |r: &[f64]| -> Result<Vec<f64>> {
                Ok(vec![scales[0] * r[0] + 0.3 * r[1], scales[1] * r[1], scales[2] * r[2] - 0.2 * r[0], scales[3] * r[3]])
            };
            let t = run_reasoning(&pivot, &[0.1, 0.0, -0.1, 0.2], &mut phi, alpha, t_max).unwrap();
            prop_assert!(t.steps() >= 1 && t.steps() <= t_max);
            let mut expect = t.initial.clone();
            for u in &t.users {
                expect.iter_mut().zip(u).for_each(|(e, v)| *e -= v);
            }
            for (a, b) in expect.iter().zip(t.state(t.steps())) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            // only the final check may fire
            let fired: Vec<bool> = t.similarities.iter().map(|s| *s > alpha).collect();
            if let Some((last, earlier)) = fired.split_last() {
                prop_assert!(earlier.iter().all(|f| !f));
                prop_assert_eq!(*last, t.stop == StopReason::Similarity);
            }
            if t.stop == StopReason::Cap {
                prop_assert_eq!(t.steps(), t_max);
            }
        }

        #[test]
        fn aggregate_permutation_and_scale(
            users in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..6),
            k in 0.1f64..10.0,
        ) {
            let base = aggregate(&users).unwrap();
            let mut rev = users.clone();
            rev.reverse();
            let r = aggregate(&rev).unwrap();
            let scaled: Vec<Vec<f64>> = users.iter().map(|u| u.iter().map(|v| v * k).collect()).collect();
            let s = aggregate(&scaled).unwrap();
            for i in 0..3 {
                prop_assert!((base[i] - r[i]).abs() < 1e-12);
                prop_assert!((s[i] - k * base[i]).abs() < 1e-9);
            }
        }
    }
}
