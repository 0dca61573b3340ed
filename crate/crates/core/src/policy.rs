//! Policy inference: a tanh MLP loaded from a portable weights file, and
//! scripted policies for tests and baselines.
//!
//! # Weights file, version 1
//!
//! ```text
//! GUSTPOLICY 1\n
//! {metadata JSON on one line}\n
//! payload: little-endian IEEE-754 f64 values, tensors back to back
//! ```
//!
//! The metadata lists every tensor by name and shape in payload order,
//! plus `payload_bytes` and the lowercase hex `sha256` of the payload.
//! Weight matrices have shape `[out, in]` and are stored row-major.
//! Tensor names:
//!
//! * `actor.{i}.weight`, `actor.{i}.bias`: hidden layers, tanh after each
//! * `mean.weight`, `mean.bias`: action means, no activation
//! * `log_std`: state-independent log standard deviations, `[act_dim]`
//! * `critic.{i}.weight`, `critic.{i}.bias`: value trunk, absent when
//!   `shared_trunk` is true
//! * `value.weight`, `value.bias`: value head, `[1, hidden]`

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Action, Observation, ACT_DIM, OBS_DIM};

pub const MAGIC: &str = "GUSTPOLICY";
pub const FORMAT_VERSION: u32 = 1;
/// Hidden widths of the reference network.
pub const REFERENCE_HIDDEN: [usize; 4] = [512, 256, 256, 128];

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a policy weights file")]
    BadHeader,
    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed metadata: {0}")]
    BadMetadata(String),
    #[error("payload checksum or length does not match the metadata")]
    BadChecksum,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weights contain non-finite values")]
    NonFiniteWeights,
    #[error("policy produced a non-finite output")]
    NonFiniteOutput,
    #[error("unknown policy '{0}' (expected scripted:hover, scripted:straight, scripted:fixed:VX,VY,VZ or a weights file)")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetadata {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub activation: String,
    #[serde(default)]
    pub run_id: String,
    pub shared_trunk: bool,
    pub tensors: Vec<TensorInfo>,
    pub payload_bytes: usize,
    pub sha256: String,
}

/// Fully connected layer, `y = W x + b` with `W` row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±1/sqrt(inputs)`.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let k = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| rng.random_range(-k..=k)).collect(),
            bias: (0..outputs).map(|_| rng.random_range(-k..=k)).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi))
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

fn tanh_stack(layers: &[Dense], x: &[f64]) -> Vec<f64> {
    layers.iter().fold(x.to_vec(), |h, l| {
        let mut y = l.forward(&h);
        y.iter_mut().for_each(|v| *v = v.tanh());
        y
    })
}

/// Gaussian actor with tanh hidden layers and a value head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub run_id: String,
    pub actor: Vec<Dense>,
    pub mean: Dense,
    pub log_std: Vec<f64>,
    /// Empty when the value head sits on the actor trunk.
    pub critic: Vec<Dense>,
    pub value: Dense,
    pub shared_trunk: bool,
}

impl MlpPolicy {
    /// Separate actor and critic trunks with the given hidden widths, all
    /// parameters zero.
    pub fn zeros(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Self {
        Self::build(obs_dim, act_dim, hidden, Dense::zeros)
    }

    pub fn random<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut p = Self::build(obs_dim, act_dim, hidden, |i, o| Dense::random(i, o, rng));
        p.log_std = vec![-0.5; act_dim];
        p
    }

    fn build(obs_dim: usize, act_dim: usize, hidden: &[usize], mut layer: impl FnMut(usize, usize) -> Dense) -> Self {
        let widths: Vec<usize> = std::iter::once(obs_dim).chain(hidden.iter().copied()).collect();
        let actor: Vec<Dense> = widths.windows(2).map(|w| layer(w[0], w[1])).collect();
        let last = *widths.last().unwrap();
        let mean = layer(last, act_dim);
        let critic: Vec<Dense> = widths.windows(2).map(|w| layer(w[0], w[1])).collect();
        let value = layer(last, 1);
        Self {
            obs_dim,
            act_dim,
            run_id: String::new(),
            actor,
            mean,
            log_std: vec![0.0; act_dim],
            critic,
            value,
            shared_trunk: false,
        }
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), PolicyError> {
        if obs.len() != self.obs_dim {
            return Err(PolicyError::ShapeMismatch(format!(
                "observation has {} values, policy expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        Ok(())
    }

    /// Unclamped action means.
    pub fn action_mean(&self, obs: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check_obs(obs)?;
        let mean = self.mean.forward(&tanh_stack(&self.actor, obs));
        if mean.iter().all(|v| v.is_finite()) {
            Ok(mean)
        } else {
            Err(PolicyError::NonFiniteOutput)
        }
    }

    /// Deterministic action: the clamped mean.
    pub fn infer(&self, obs: &[f64]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.action_mean(obs)?.into_iter().map(|m| m.clamp(-1.0, 1.0)).collect())
    }

    /// Gaussian sample around the mean, clamped.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>, PolicyError> {
        let mean = self.action_mean(obs)?;
        Ok(mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let n: f64 = StandardNormal.sample(rng);
                (m + ls.exp() * n).clamp(-1.0, 1.0)
            })
            .collect())
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, PolicyError> {
        self.check_obs(obs)?;
        let trunk = if self.shared_trunk { &self.actor } else { &self.critic };
        let v = self.value.forward(&tanh_stack(trunk, obs))[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PolicyError::NonFiniteOutput)
        }
    }

    /// Rejects a policy whose interface differs from the environment's.
    pub fn expect_dims(&self, obs_dim: usize, act_dim: usize) -> Result<(), PolicyError> {
        if self.obs_dim != obs_dim || self.act_dim != act_dim {
            return Err(PolicyError::ShapeMismatch(format!(
                "policy maps {} -> {}, environment needs {} -> {}",
                self.obs_dim, self.act_dim, obs_dim, act_dim
            )));
        }
        Ok(())
    }

    /// Tensors in payload order.
    fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut v = Vec::new();
        for (i, l) in self.actor.iter().enumerate() {
            push_dense(&mut v, format!("actor.{i}"), l);
        }
        push_dense(&mut v, "mean".into(), &self.mean);
        v.push(("log_std".into(), vec![self.act_dim], self.log_std.as_slice()));
        if !self.shared_trunk {
            for (i, l) in self.critic.iter().enumerate() {
                push_dense(&mut v, format!("critic.{i}"), l);
            }
        }
        push_dense(&mut v, "value".into(), &self.value);
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.named_tensors();
        let mut payload = Vec::new();
        for (_, _, values) in &tensors {
            for v in *values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = PolicyMetadata {
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            activation: "tanh".into(),
            run_id: self.run_id.clone(),
            shared_trunk: self.shared_trunk,
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorInfo {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
            payload_bytes: payload.len(),
            sha256: sha256_hex(&payload),
        };
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\n").into_bytes();
        out.extend(serde_json::to_vec(&meta).expect("metadata serializes"));
        out.push(b'\n');
        out.extend(payload);
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let io = |source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let bytes = std::fs::read(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        let (header, rest) = split_line(bytes).ok_or(PolicyError::BadHeader)?;
        let header = std::str::from_utf8(header).map_err(|_| PolicyError::BadHeader)?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.strip_prefix(' '))
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or(PolicyError::BadHeader)?;
        if version != FORMAT_VERSION {
            return Err(PolicyError::UnsupportedVersion(version));
        }
        let (meta_line, payload) = split_line(rest).ok_or(PolicyError::BadChecksum)?;
        let meta: PolicyMetadata =
            serde_json::from_slice(meta_line).map_err(|e| PolicyError::BadMetadata(e.to_string()))?;
        if payload.len() != meta.payload_bytes || sha256_hex(payload) != meta.sha256 {
            return Err(PolicyError::BadChecksum);
        }
        if meta.activation != "tanh" {
            return Err(PolicyError::BadMetadata(format!(
                "unsupported activation '{}'",
                meta.activation
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        assemble(&meta, &values)
    }
}

fn push_dense<'a>(v: &mut Vec<(String, Vec<usize>, &'a [f64])>, prefix: String, d: &'a Dense) {
    v.push((format!("{prefix}.weight"), vec![d.outputs, d.inputs], d.weight.as_slice()));
    v.push((format!("{prefix}.bias"), vec![d.outputs], d.bias.as_slice()));
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let i = bytes.iter().position(|b| *b == b'\n')?;
    Some((&bytes[..i], &bytes[i + 1..]))
}

fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// Rebuilds the network from the tensor table, checking that shapes chain.
fn assemble(meta: &PolicyMetadata, values: &[f64]) -> Result<MlpPolicy, PolicyError> {
    let mismatch = |m: String| PolicyError::ShapeMismatch(m);
    let mut tensors = std::collections::HashMap::new();
    let mut offset = 0;
    for t in &meta.tensors {
        let n: usize = t.shape.iter().product();
        let slice = values
            .get(offset..offset + n)
            .ok_or_else(|| mismatch(format!("tensor {} runs past the payload", t.name)))?;
        offset += n;
        if tensors.insert(t.name.as_str(), (t.shape.clone(), slice)).is_some() {
            return Err(PolicyError::BadMetadata(format!("duplicate tensor {}", t.name)));
        }
    }
    if offset != values.len() {
        return Err(mismatch(format!(
            "payload holds {} values, tensors describe {offset}",
            values.len()
        )));
    }

    let dense = |prefix: &str, inputs: usize| -> Result<Dense, PolicyError> {
        let (ws, w) = tensors
            .get(format!("{prefix}.weight").as_str())
            .ok_or_else(|| mismatch(format!("missing {prefix}.weight")))?;
        let (bs, b) = tensors
            .get(format!("{prefix}.bias").as_str())
            .ok_or_else(|| mismatch(format!("missing {prefix}.bias")))?;
        if ws.len() != 2 || ws[1] != inputs || bs.as_slice() != [ws[0]] {
            return Err(mismatch(format!(
                "{prefix}: weight {ws:?} and bias {bs:?} do not fit input width {inputs}"
            )));
        }
        Ok(Dense {
            inputs,
            outputs: ws[0],
            weight: w.to_vec(),
            bias: b.to_vec(),
        })
    };
    let stack = |prefix: &str| -> Result<(Vec<Dense>, usize), PolicyError> {
        let mut layers = Vec::new();
        let mut width = meta.obs_dim;
        while tensors.contains_key(format!("{prefix}.{}.weight", layers.len()).as_str()) {
            let l = dense(&format!("{prefix}.{}", layers.len()), width)?;
            width = l.outputs;
            layers.push(l);
        }
        Ok((layers, width))
    };

    let (actor, width) = stack("actor")?;
    let mean = dense("mean", width)?;
    if mean.outputs != meta.act_dim {
        return Err(mismatch(format!(
            "mean head has {} outputs, metadata says act_dim {}",
            mean.outputs, meta.act_dim
        )));
    }
    let (log_shape, log_std) = tensors
        .get("log_std")
        .ok_or_else(|| mismatch("missing log_std".into()))?;
    if log_shape.as_slice() != [meta.act_dim] {
        return Err(mismatch(format!("log_std shape {log_shape:?}")));
    }
    let (critic, critic_width) = if meta.shared_trunk {
        (Vec::new(), width)
    } else {
        stack("critic")?
    };
    let value = dense("value", critic_width)?;
    if value.outputs != 1 {
        return Err(mismatch("value head must have one output".into()));
    }
    let used = 2 * (actor.len() + critic.len()) + 2 + 1 + 2;
    if used != tensors.len() {
        return Err(PolicyError::BadMetadata("unrecognised tensors in file".into()));
    }
    let policy = MlpPolicy {
        obs_dim: meta.obs_dim,
        act_dim: meta.act_dim,
        run_id: meta.run_id.clone(),
        actor,
        mean,
        log_std: log_std.to_vec(),
        critic,
        value,
        shared_trunk: meta.shared_trunk,
    };
    let finite = policy.actor.iter().chain(&policy.critic).all(Dense::is_finite)
        && policy.mean.is_finite()
        && policy.value.is_finite()
        && policy.log_std.iter().all(|v| v.is_finite());
    if !finite {
        return Err(PolicyError::NonFiniteWeights);
    }
    Ok(policy)
}

/// Hand-written policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptedPolicy {
    Hover,
    /// Fly at `speed` straight at the active gate's center.
    StraightToGate { speed: f64, v_cap: f64 },
    /// Constant velocity reference.
    FixedVelocity { velocity: [f64; 3], v_cap: f64 },
}

impl ScriptedPolicy {
    pub fn act(&self, obs: &Observation) -> Action {
        match *self {
            ScriptedPolicy::Hover => Action::HOVER,
            ScriptedPolicy::StraightToGate { speed, v_cap } => {
                let offset = obs.gate_offset();
                let dist = offset.norm();
                if dist < 1e-9 {
                    return Action::HOVER;
                }
                let dir = offset / dist;
                Action([dir.x, dir.y, dir.z, scale_for(speed, v_cap)])
            }
            ScriptedPolicy::FixedVelocity { velocity, v_cap } => {
                // largest component sets the scale, the rest follow proportionally
                let peak = velocity.iter().fold(0.0f64, |m, v| m.max(v.abs())).min(v_cap);
                if peak == 0.0 {
                    return Action::HOVER;
                }
                let d = velocity.map(|v| (v / peak).clamp(-1.0, 1.0));
                Action([d[0], d[1], d[2], scale_for(peak, v_cap)])
            }
        }
    }
}

/// Scale component giving a commanded magnitude of `speed` for a unit
/// direction.
fn scale_for(speed: f64, v_cap: f64) -> f64 {
    (2.0 * speed / v_cap - 1.0).clamp(-1.0, 1.0)
}

/// Any policy the runner can drive an environment with.
#[derive(Debug, Clone)]
pub enum PolicySource {
    Scripted(ScriptedPolicy),
    Network(std::sync::Arc<MlpPolicy>),
}

impl PolicySource {
    /// Parses `scripted:hover`, `scripted:straight`,
    /// `scripted:fixed:VX,VY,VZ` or a weights file path. Scripted speeds
    /// come from the scenario.
    pub fn parse(spec: &str, speed: f64, v_cap: f64) -> Result<Self, PolicyError> {
        let unknown = || PolicyError::UnknownPolicy(spec.to_string());
        if let Some(kind) = spec.strip_prefix("scripted:") {
            let policy = match kind {
                "hover" => ScriptedPolicy::Hover,
                "straight" | "straight-to-gate" => ScriptedPolicy::StraightToGate { speed, v_cap },
                _ => {
                    let values = kind.strip_prefix("fixed:").ok_or_else(unknown)?;
                    let v: Vec<f64> = values
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| unknown())?;
                    let velocity: [f64; 3] = v.try_into().map_err(|_| unknown())?;
                    ScriptedPolicy::FixedVelocity { velocity, v_cap }
                }
            };
            return Ok(Self::Scripted(policy));
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(unknown());
        }
        let net = MlpPolicy::load(path)?;
        net.expect_dims(OBS_DIM, ACT_DIM)?;
        Ok(Self::Network(std::sync::Arc::new(net)))
    }

    pub fn act(&self, obs: &Observation) -> Result<Action, PolicyError> {
        match self {
            PolicySource::Scripted(p) => Ok(p.act(obs)),
            PolicySource::Network(net) => {
                let a = net.infer(&obs.0)?;
                Ok(Action(a.try_into().map_err(|_| {
                    PolicyError::ShapeMismatch("network action width differs from 4".into())
                })?))
            }
        }
    }
}
