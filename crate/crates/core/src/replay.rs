//! Sliding-window n-step collection and the sequence replay buffer.
//!
//! Consecutive windows of one episode overlap in `n - 1` transitions. The
//! buffer notices the overlap and stores each transition once; a stored
//! sequence is just the id of its first transition.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Generalized state `s_t` (the policy input).
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// Scaled reward.
    pub reward: f64,
    /// `log pi(u_t | s_t)` under the behavior policy.
    pub logp: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.reward.is_finite()
            && self.logp.is_finite()
            && self.obs.iter().chain(&self.action).chain(&self.next_obs).all(|x| x.is_finite())
    }
}

/// `n` consecutive transitions of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct NStepSequence {
    pub transitions: Vec<Transition>,
}

impl NStepSequence {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// First index `k` whose successor does not start where `k` ended.
    pub fn check_chain(&self) -> Result<()> {
        for (k, w) in self.transitions.windows(2).enumerate() {
            if w[0].next_obs != w[1].obs || w[0].terminated {
                return Err(Error::BrokenChain(k));
            }
        }
        Ok(())
    }
}

/// Deque holding the last `n - 1` transitions of the running episode.
#[derive(Debug, Clone)]
pub struct NStepCollector {
    n: usize,
    window: VecDeque<Transition>,
}

impl NStepCollector {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "horizon must be at least 1");
        Self {
            n,
            window: VecDeque::with_capacity(n),
        }
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Appends `d`; once `n` transitions are held, emits the window and
    /// slides it by one.
    pub fn push(&mut self, d: Transition) -> Option<NStepSequence> {
        self.window.push_back(d);
        if self.window.len() < self.n {
            return None;
        }
        let seq = NStepSequence {
            transitions: self.window.iter().cloned().collect(),
        };
        self.window.pop_front();
        Some(seq)
    }

    /// Drops the partial window (episode reset or termination).
    pub fn clear(&mut self) {
        self.window.clear();
    }
}

/// Stacked batch of `N` sequences, rows ordered sequence-major
/// (row `i * n + k` is element `k` of sequence `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub num_seqs: usize,
    pub n: usize,
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub logp: Vec<f64>,
    pub next_obs: Matrix,
    pub terminated: Vec<bool>,
}

impl SequenceBatch {
    pub fn rows(&self) -> usize {
        self.num_seqs * self.n
    }

    pub fn from_sequences(seqs: &[&[Transition]]) -> Result<Self> {
        let n = seqs.first().map_or(0, |s| s.len());
        let first = seqs.first().and_then(|s| s.first());
        let d = first.map_or(0, |t| t.obs.len());
        let m = first.map_or(0, |t| t.action.len());
        let rows = seqs.len() * n;
        let mut obs = Vec::with_capacity(rows * d);
        let mut next_obs = Vec::with_capacity(rows * d);
        let mut actions = Vec::with_capacity(rows * m);
        let mut rewards = Vec::with_capacity(rows);
        let mut logp = Vec::with_capacity(rows);
        let mut terminated = Vec::with_capacity(rows);
        for s in seqs {
            if s.len() != n {
                return Err(crate::error::shape_err("SequenceBatch", (n, d), (s.len(), d)));
            }
            for t in *s {
                obs.extend_from_slice(&t.obs);
                next_obs.extend_from_slice(&t.next_obs);
                actions.extend_from_slice(&t.action);
                rewards.push(t.reward);
                logp.push(t.logp);
                terminated.push(t.terminated);
            }
        }
        Ok(Self {
            num_seqs: seqs.len(),
            n,
            obs: Matrix::from_vec(rows, d, obs)?,
            actions: Matrix::from_vec(rows, m, actions)?,
            rewards,
            logp,
            next_obs: Matrix::from_vec(rows, d, next_obs)?,
            terminated,
        })
    }
}

/// FIFO ring of n-step sequences with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    n: usize,
    capacity: usize,
    warm: usize,
    /// Transitions with ids `base .. base + trans.len()`.
    trans: VecDeque<Transition>,
    base: u64,
    /// Start id of every stored sequence, oldest first.
    starts: VecDeque<u64>,
}

impl ReplayBuffer {
    pub fn new(n: usize, capacity: usize, warm: usize) -> Self {
        assert!(n >= 1 && capacity >= 1, "horizon and capacity must be positive");
        Self {
            n,
            capacity,
            warm,
            trans: VecDeque::new(),
            base: 0,
            starts: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn is_warm(&self) -> bool {
        self.len() >= self.warm.max(1)
    }

    /// Number of distinct transitions held.
    pub fn stored_transitions(&self) -> usize {
        self.trans.len()
    }

    fn next_id(&self) -> u64 {
        self.base + self.trans.len() as u64
    }

    /// Stores a sequence, evicting the oldest one when full.
    pub fn insert(&mut self, seq: &NStepSequence) -> Result<()> {
        if seq.len() != self.n {
            return Err(Error::InvalidConfig(alloc::format!(
                "sequence length {} does not match horizon {}",
                seq.len(),
                self.n
            )));
        }
        seq.check_chain()?;
        if let Some(bad) = seq.transitions.iter().position(|t| !t.is_finite()) {
            let _ = bad;
            return Err(Error::NonFinite("transition"));
        }
        let overlap = self.n - 1;
        let shares_tail = overlap > 0
            && !self.starts.is_empty()
            && self.trans.len() >= overlap
            && self
                .trans
                .iter()
                .skip(self.trans.len() - overlap)
                .zip(&seq.transitions[..overlap])
                .all(|(a, b)| a == b)
            && *self.starts.back().unwrap_or(&0) + 1 == self.next_id() - overlap as u64;
        let start = if shares_tail {
            self.next_id() - overlap as u64
        } else {
            let s = self.next_id();
            for t in &seq.transitions[..overlap] {
                self.trans.push_back(t.clone());
            }
            s
        };
        self.trans.push_back(seq.transitions[overlap].clone());
        self.starts.push_back(start);

        if self.starts.len() > self.capacity {
            self.starts.pop_front();
            let keep_from = self.starts.front().copied().unwrap_or(self.next_id());
            while self.base < keep_from {
                self.trans.pop_front();
                self.base += 1;
            }
        }
        Ok(())
    }

    /// The `i`-th stored sequence, oldest first.
    pub fn get(&self, i: usize) -> Option<NStepSequence> {
        let start = *self.starts.get(i)?;
        let off = (start - self.base) as usize;
        Some(NStepSequence {
            transitions: self.trans.range(off..off + self.n).cloned().collect(),
        })
    }

    /// Uniform sampling with replacement of `count` sequence indices.
    pub fn sample_indices(&self, count: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if !self.is_warm() {
            return Err(Error::NotWarm {
                have: self.len(),
                need: self.warm.max(1),
            });
        }
        Ok((0..count).map(|_| rng::uniform_index(rng, self.len())).collect())
    }

    pub fn batch(&self, indices: &[usize]) -> Result<SequenceBatch> {
        let mut slices: Vec<Vec<&Transition>> = Vec::with_capacity(indices.len());
        for &i in indices {
            let start = self.starts[i];
            let off = (start - self.base) as usize;
            slices.push(self.trans.range(off..off + self.n).collect());
        }
        let owned: Vec<Vec<Transition>> = slices
            .into_iter()
            .map(|v| v.into_iter().cloned().collect())
            .collect();
        let refs: Vec<&[Transition]> = owned.iter().map(|v| v.as_slice()).collect();
        SequenceBatch::from_sequences(&refs)
    }

    pub fn sample(&self, count: usize, rng: &mut Rng) -> Result<SequenceBatch> {
        let idx = self.sample_indices(count, rng)?;
        self.batch(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    fn tr(step: usize) -> Transition {
        Transition {
            obs: vec![step as f64],
            action: vec![0.5 * step as f64],
            reward: -(step as f64),
            logp: -1.0,
            next_obs: vec![(step + 1) as f64],
            terminated: false,
        }
    }

    #[test]
    fn window_slides_by_one() {
        let mut c = NStepCollector::new(10);
        for s in 1..=9 {
            assert!(c.push(tr(s)).is_none());
        }
        let a = c.push(tr(10)).unwrap();
        assert_eq!(a.transitions.first().unwrap().obs[0], 1.0);
        assert_eq!(a.transitions.last().unwrap().obs[0], 10.0);
        let b = c.push(tr(11)).unwrap();
        assert_eq!(b.transitions.first().unwrap().obs[0], 2.0);
        assert_eq!(b.transitions.last().unwrap().obs[0], 11.0);
        assert_eq!(&a.transitions[1..], &b.transitions[..9]);
    }

    #[test]
    fn reset_requires_fresh_window() {
        let mut c = NStepCollector::new(3);
        c.push(tr(0));
        c.push(tr(1));
        c.clear();
        assert!(c.push(tr(5)).is_none());
        assert!(c.push(tr(6)).is_none());
        assert!(c.push(tr(7)).is_some());
    }

    #[test]
    fn horizon_one_emits_every_transition() {
        let mut c = NStepCollector::new(1);
        for s in 0..5 {
            assert_eq!(c.push(tr(s)).unwrap().transitions, vec![tr(s)]);
        }
    }

    #[test]
    fn broken_chain_is_rejected() {
        let mut buf = ReplayBuffer::new(2, 10, 1);
        let seq = NStepSequence {
            transitions: vec![tr(0), tr(2)],
        };
        assert_eq!(buf.insert(&seq), Err(Error::BrokenChain(0)));
    }

    #[test]
    fn overlapping_windows_share_storage() {
        let mut c = NStepCollector::new(4);
        let mut buf = ReplayBuffer::new(4, 100, 1);
        let mut emitted = Vec::new();
        for s in 0..20 {
            if let Some(seq) = c.push(tr(s)) {
                buf.insert(&seq).unwrap();
                emitted.push(seq);
            }
        }
        assert_eq!(buf.len(), 17);
        assert_eq!(buf.stored_transitions(), 20);
        for (i, seq) in emitted.iter().enumerate() {
            assert_eq!(&buf.get(i).unwrap(), seq);
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut c = NStepCollector::new(3);
        let mut buf = ReplayBuffer::new(3, 5, 1);
        let mut emitted = Vec::new();
        for s in 0..30 {
            if s == 12 {
                c.clear();
            }
            if let Some(seq) = c.push(tr(s)) {
                buf.insert(&seq).unwrap();
                emitted.push(seq);
            }
        }
        assert_eq!(buf.len(), 5);
        let tail = &emitted[emitted.len() - 5..];
        for (i, seq) in tail.iter().enumerate() {
            assert_eq!(&buf.get(i).unwrap(), seq);
        }
        assert!(buf.stored_transitions() <= 5 + 2);
    }

    #[test]
    fn sampling_requires_warm_buffer() {
        let buf = ReplayBuffer::new(1, 10, 1);
        let mut rng = seeded(0);
        assert!(matches!(buf.sample(3, &mut rng), Err(Error::NotWarm { .. })));
        let mut buf = ReplayBuffer::new(1, 10, 2);
        buf.insert(&NStepSequence { transitions: vec![tr(0)] }).unwrap();
        assert!(buf.sample(1, &mut rng).is_err());
    }

    #[test]
    fn single_sequence_repeats() {
        let mut buf = ReplayBuffer::new(2, 10, 1);
        buf.insert(&NStepSequence {
            transitions: vec![tr(0), tr(1)],
        })
        .unwrap();
        let b = buf.sample(3, &mut seeded(1)).unwrap();
        assert_eq!(b.rows(), 6);
        assert_eq!(b.obs.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(1, 100, 1);
        for s in 0..10 {
            buf.insert(&NStepSequence { transitions: vec![tr(s)] }).unwrap();
        }
        let mut rng = seeded(42);
        let draws = 100_000;
        let idx = buf.sample_indices(draws, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        for i in idx {
            counts[i] += 1;
        }
        let p = 0.1;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
