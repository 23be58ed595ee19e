use serde::{Deserialize, Serialize};

use crate::corpus::{KeywordRule, KnowledgeSet};
use crate::{Error, Result};

/// `a[i] = 1` when the utterance shares at least `threshold` keywords with
/// entry `i`.
pub fn activation(utterance: &[String], knowledge: &KnowledgeSet, rule: &KeywordRule, threshold: usize) -> Vec<f64> {
    let words = rule.keywords(utterance);
    knowledge
        .keywords
        .iter()
        .map(|k| {
            let shared = k.intersection(&words).count();
            if shared >= threshold.max(1) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// `v_t = max(v_{t-1}, a_t)`.
pub fn update_coverage(v_prev: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    same_len(v_prev, a)?;
    Ok(v_prev.iter().zip(a).map(|(v, a)| v.max(*a)).collect())
}

/// `d_t = min(a_t, v_{t-1})`.
pub fn repetition(a: &[f64], v_prev: &[f64]) -> Result<Vec<f64>> {
    same_len(a, v_prev)?;
    Ok(a.iter().zip(v_prev).map(|(a, v)| a.min(*v)).collect())
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoState {
    pub activation: Vec<f64>,
    pub coverage: Vec<f64>,
    pub repetition: Vec<f64>,
}

/// Running coverage and repetition over one conversation, from `v_0 = 0`.
#[derive(Clone, Debug)]
pub struct InfoTracker {
    coverage: Vec<f64>,
    repetition_sum: f64,
    states: Vec<InfoState>,
}

impl InfoTracker {
    pub fn new(m: usize) -> Self {
        InfoTracker {
            coverage: vec![0.0; m],
            repetition_sum: 0.0,
            states: Vec::new(),
        }
    }

    pub fn step(&mut self, a: &[f64]) -> Result<&InfoState> {
        let d = repetition(a, &self.coverage)?;
        let v = update_coverage(&self.coverage, a)?;
        self.repetition_sum += mean(&d);
        self.coverage = v.clone();
        self.states.push(InfoState {
            activation: a.to_vec(),
            coverage: v,
            repetition: d,
        });
        Ok(self.states.last().expect("just pushed"))
    }

    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    pub fn states(&self) -> &[InfoState] {
        &self.states
    }

    /// `mean(v_T) − Σ_t mean(d_t)`.
    pub fn informativeness(&self) -> f64 {
        mean(&self.coverage) - self.repetition_sum
    }
}

/// Informativeness of a whole conversation given its per-turn activations.
pub fn informativeness(activations: &[Vec<f64>]) -> Result<f64> {
    let first = activations.first().ok_or(Error::Empty("informativeness needs at least one turn"))?;
    let mut tracker = InfoTracker::new(first.len());
    for a in activations {
        tracker.step(a)?;
    }
    Ok(tracker.informativeness())
}

/// Places one speaker's activation into the joint vector over both
/// backgrounds (speaker 0's entries first).
pub fn joint_activation(speaker: usize, own: &[f64], sizes: [usize; 2]) -> Result<Vec<f64>> {
    if speaker > 1 {
        return Err(Error::InvalidArgument(format!("speaker {speaker} is not 0 or 1")));
    }
    if own.len() != sizes[speaker] {
        return Err(Error::Shape(format!("activation of length {} for {} entries", own.len(), sizes[speaker])));
    }
    let mut joint = vec![0.0; sizes[0] + sizes[1]];
    let offset = if speaker == 0 { 0 } else { sizes[0] };
    joint[offset..offset + own.len()].copy_from_slice(own);
    Ok(joint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    fn one_hot(m: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        v
    }

    #[test]
    fn informativeness_examples() {
        let turns = vec![one_hot(5, 0), one_hot(5, 2), one_hot(5, 0)];
        assert!((informativeness(&turns).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(informativeness(&vec![vec![0.0; 5]; 4]).unwrap(), 0.0);
        let all: Vec<_> = (0..5).map(|i| one_hot(5, i)).collect();
        assert!((informativeness(&all).unwrap() - 1.0).abs() < 1e-12);
        assert!(informativeness(&[]).is_err());
    }

    #[test]
    fn coverage_and_repetition_examples() {
        assert_eq!(update_coverage(&[0.0, 1.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(update_coverage(&[0.0; 3], &[1.0, 0.0, 1.0]).unwrap(), vec![1.0, 0.0, 1.0]);
        assert_eq!(repetition(&[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(repetition(&[1.0, 0.0, 1.0], &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(repetition(&[1.0; 3], &[1.0; 3]).unwrap(), vec![1.0; 3]);
        assert!(update_coverage(&[0.0], &[0.0, 1.0]).is_err());
        assert!(repetition(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn activation_examples() {
        let rule = KeywordRule::default();
        let z = KnowledgeSet::from_sentences(&["i like to ski", "i have a dog"], &rule).unwrap();
        assert_eq!(activation(&tokenize("i like to ski"), &z, &rule, 1), vec![1.0, 0.0]);
        assert_eq!(activation(&[], &z, &rule, 1), vec![0.0, 0.0]);
        assert_eq!(activation(&z.entries[1], &z, &rule, 1), vec![0.0, 1.0]);
    }

    #[test]
    fn joint_layout() {
        assert_eq!(joint_activation(1, &[1.0, 0.0], [3, 2]).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(joint_activation(0, &[1.0], [3, 2]).is_err());
    }

    proptest! {
        #[test]
        fn repeats_never_raise_informativeness(turns in prop::collection::vec(prop::collection::vec(prop::bool::ANY, 6), 1..10)) {
            let acts: Vec<Vec<f64>> = turns.iter().map(|t| t.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).collect();
            let mut tracker = InfoTracker::new(6);
            for a in &acts {
                let before = tracker.coverage().to_vec();
                let r_before = tracker.informativeness();
                let s = tracker.step(a).unwrap().clone();
                for i in 0..6 {
                    prop_assert!(s.coverage[i] >= before[i]);
                    prop_assert!(s.repetition[i] <= s.activation[i] && s.repetition[i] <= before[i]);
                }
                let mean_v: f64 = s.coverage.iter().sum::<f64>() / 6.0;
                prop_assert!(tracker.informativeness() <= mean_v + 1e-12);
                let adds_nothing = a.iter().zip(&before).all(|(a, v)| *a <= *v);
                if adds_nothing && a.iter().any(|&x| x > 0.0) {
                    prop_assert!(tracker.informativeness() < r_before);
                }
            }
        }
    }
}
