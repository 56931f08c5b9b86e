//! Checkpoint files: the magic line `MSACL-CKPT-1`, a little-endian `u64`
//! header length, a JSON header, then every network's parameters as
//! little-endian `f64` in declared order.

use std::collections::BTreeMap;
use std::path::Path;

use msacl_core::env::EnvId;
use msacl_core::learner::Agent;
use msacl_core::nn::{CriticNet, LyapunovNet, Mlp, PolicyNet};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8] = b"MSACL-CKPT-1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetLayout {
    pub name: String,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub env: EnvId,
    pub reference: Option<String>,
    pub param_overrides: BTreeMap<String, f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub env_steps: u64,
    pub iterations: u64,
    pub horizon: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub log_alpha: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub nets: Vec<NetLayout>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub agent: Agent,
}

const NET_NAMES: [&str; 6] = ["policy", "q1", "q2", "q1_target", "q2_target", "lyapunov"];

fn nets(agent: &Agent) -> [&Mlp; 6] {
    [
        &agent.policy.trunk,
        &agent.q1.mlp,
        &agent.q2.mlp,
        &agent.q1_target.mlp,
        &agent.q2_target.mlp,
        &agent.lyapunov.mlp,
    ]
}

impl Checkpoint {
    /// Header fields other than the network layouts, which are filled in
    /// from `agent`.
    pub fn new(mut header: CheckpointHeader, agent: Agent) -> Self {
        header.nets = NET_NAMES
            .iter()
            .zip(nets(&agent))
            .map(|(n, m)| NetLayout {
                name: n.to_string(),
                sizes: m.sizes(),
            })
            .collect();
        header.log_alpha = agent.log_alpha;
        header.action_low = agent.policy.action_low.clone();
        header.action_high = agent.policy.action_high.clone();
        Self { header, agent }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for net in nets(&self.agent) {
            for p in net.params() {
                for v in p.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| LabError::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("missing magic"))?;
        let (len, rest) = rest.split_at_checked(8).ok_or_else(|| bad("truncated header length"))?;
        let len = u64::from_le_bytes(len.try_into().expect("8 bytes")) as usize;
        let (json, mut body) = rest.split_at_checked(len).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(json)?;
        if header.nets.len() != NET_NAMES.len() || header.nets.iter().zip(NET_NAMES).any(|(n, e)| n.name != e) {
            return Err(bad("unexpected network list"));
        }
        let mut mlps = Vec::with_capacity(NET_NAMES.len());
        for layout in &header.nets {
            let mut mlp = Mlp::zeros(&layout.sizes);
            for p in mlp.params_mut() {
                let need = p.len() * 8;
                let (chunk, tail) = body.split_at_checked(need).ok_or_else(|| bad("truncated parameters"))?;
                for (v, b) in p.data_mut().iter_mut().zip(chunk.chunks_exact(8)) {
                    *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
                }
                body = tail;
            }
            mlps.push(mlp);
        }
        if !body.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let mut it = mlps.into_iter();
        let mut next = || it.next().expect("six networks");
        let agent = Agent {
            policy: PolicyNet {
                trunk: next(),
                action_low: header.action_low.clone(),
                action_high: header.action_high.clone(),
            },
            q1: CriticNet { mlp: next() },
            q2: CriticNet { mlp: next() },
            q1_target: CriticNet { mlp: next() },
            q2_target: CriticNet { mlp: next() },
            lyapunov: LyapunovNet { mlp: next() },
            log_alpha: header.log_alpha,
        };
        Ok(Self { header, agent })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(LabError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(LabError::io(path))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use msacl_core::env::Env;
    use msacl_core::rng;

    fn sample() -> Checkpoint {
        let env = Env::new(EnvId::DuctedFan);
        let agent = Agent::new(env.spec(), &[5, 3], 0.7, &mut rng::seeded(4));
        let header = CheckpointHeader {
            env: EnvId::DuctedFan,
            reference: None,
            param_overrides: BTreeMap::from([("m".to_string(), 12.0)]),
            noise_sigma: 0.0,
            seed: 4,
            env_steps: 1234,
            iterations: 56,
            horizon: 10,
            alpha1: 1.0,
            alpha2: 2.0,
            alpha3: 0.15,
            log_alpha: 0.0,
            action_low: Vec::new(),
            action_high: Vec::new(),
            nets: Vec::new(),
        };
        Checkpoint::new(header, agent)
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert!(bytes.starts_with(MAGIC));
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        let p = Path::new("mem");
        assert!(Checkpoint::from_bytes(&bytes[1..], p).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8], p).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long, p).is_err());
    }
}
