//! Actor-critic placement optimizer: a frozen graph-convolution state
//! encoder, a Gaussian coordinate actor with equidistant discretization, an
//! MSE critic, and clipped-surrogate policy updates over single-step
//! episodes (the state is the graph encoding and never changes; one action
//! is one full placement).

// index loops mirror the math across several same-shaped buffers
#![allow(clippy::needless_range_loop)]

pub mod net;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::error::{Error, Result};
use crate::mesh::{communication_cost, Coord, Mesh, Placement};
use crate::placement::{place_zigzag, resolve_conflicts, traffic_priority};
use crate::taskgraph::TaskGraph;

use net::{ActorForward, ActorGrads, CriticGrads, OptState};
pub use net::{ActorNet, CriticNet, Encoder, Mat, OptimizerKind};

const LN_2PI: f64 = 1.8378770664093453;

/// Reward clip bounds from the training recipe.
pub const REWARD_CLIP: f64 = 10.0;

/// Graph state fed to the policy: bytes-weighted adjacency, its symmetric
/// normalization with self-loops (over the binarized edge set), five node
/// features, and the frozen embedding. Computed once per graph and reused
/// for the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoding {
    pub adjacency: Mat,
    pub l_hat: Mat,
    pub features: Mat,
    pub embedding: Mat,
    /// Column means of the embedding; the critic's input.
    pub pooled: Vec<f64>,
}

/// Builds the state encoding. Node features are multicast (0/1) plus in/out
/// degree and in/out byte volume, each of the last four min-max normalized
/// to [0,1] over the graph.
pub fn encode_state(graph: &TaskGraph, encoder: &Encoder) -> StateEncoding {
    let n = graph.len();
    let mut adjacency = Mat::zeros(n, n);
    let mut binary = Mat::zeros(n, n);
    for e in &graph.edges {
        *adjacency.at_mut(e.src, e.dst) += e.bytes as f64;
        *binary.at_mut(e.src, e.dst) = 1.0;
        *binary.at_mut(e.dst, e.src) = 1.0;
    }
    // self-loops, then symmetric normalization
    let mut l_hat = binary;
    for i in 0..n {
        *l_hat.at_mut(i, i) = 1.0;
    }
    let deg: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| l_hat.at(i, j)).sum::<f64>())
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = l_hat.at(i, j);
            if v != 0.0 {
                *l_hat.at_mut(i, j) = v / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
    }

    let mut features = Mat::zeros(n, 5);
    let raw: Vec<[f64; 4]> = graph
        .nodes
        .iter()
        .map(|node| {
            [
                node.degree_in as f64,
                node.degree_out as f64,
                node.bytes_in as f64,
                node.bytes_out as f64,
            ]
        })
        .collect();
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for r in &raw {
        for d in 0..4 {
            lo[d] = lo[d].min(r[d]);
            hi[d] = hi[d].max(r[d]);
        }
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        *features.at_mut(i, 0) = if node.multicast { 1.0 } else { 0.0 };
        for d in 0..4 {
            let span = hi[d] - lo[d];
            *features.at_mut(i, d + 1) = if span > 0.0 {
                (raw[i][d] - lo[d]) / span
            } else {
                0.0
            };
        }
    }

    let embedding = l_hat.matmul(&features).matmul(&encoder.w_g).relu_in_place();
    let embed_dim = embedding.cols;
    let mut pooled = vec![0.0; embed_dim];
    for i in 0..n {
        for j in 0..embed_dim {
            pooled[j] += embedding.at(i, j) / n as f64;
        }
    }
    StateEncoding {
        adjacency,
        l_hat,
        features,
        embedding,
        pooled,
    }
}

/// Frozen encoder plus the trainable actor/critic heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub encoder: Encoder,
    pub actor: ActorNet,
    pub critic: CriticNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub clip_epsilon: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ppo_epochs: usize,
    pub grad_clip: f64,
    pub episodes: usize,
    pub sigma_min: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub pretrain_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 32,
            hidden_dim: 64,
            clip_epsilon: 0.1,
            batch_size: 256,
            learning_rate: 0.005,
            ppo_epochs: 10,
            grad_clip: 0.5,
            episodes: 200,
            sigma_min: 0.05,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            pretrain_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "embed_dim, hidden_dim and batch_size must be >= 1".into(),
            ));
        }
        if self.ppo_epochs == 0 {
            return Err(Error::Validation("ppo_epochs must be >= 1".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Validation("clip_epsilon must be in (0,1)".into()));
        }
        if self.sigma_min <= 0.0 || self.learning_rate <= 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::Validation(
                "sigma_min, learning_rate and grad_clip must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled placement: per-node pre-clip Gaussian draws, the summed
/// log-density of those draws, the discretized targets, and the conflict-free
/// placement they decode to.
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub raw: Vec<[f64; 2]>,
    pub log_prob: f64,
    pub targets: Vec<Coord>,
    pub placement: Placement,
}

/// Maps a clipped coordinate in [-1,1] onto one of `bins` equidistant cells.
pub fn discretize(value: f64, bins: u32) -> u32 {
    let clipped = value.clamp(-1.0, 1.0);
    let idx = ((clipped + 1.0) / 2.0 * bins as f64).floor() as i64;
    idx.clamp(0, bins as i64 - 1) as u32
}

fn gaussian_log_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * LN_2PI
}

/// Draws one placement from the policy head: per-node Gaussian samples,
/// clipped to [-1,1], discretized onto the grid, then conflict-resolved.
/// The log-probability is the pre-clip density; the clip is part of the
/// environment's deterministic decoding.
pub fn sample_action(
    dist: &ActorForward,
    mesh: &Mesh,
    priorities: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<ActionSample> {
    let n = dist.mu.len();
    let mut raw = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut log_prob = 0.0;
    for i in 0..n {
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let ax = dist.mu[i][0] + dist.sigma[i][0] * zx;
        let ay = dist.mu[i][1] + dist.sigma[i][1] * zy;
        log_prob += gaussian_log_pdf(ax, dist.mu[i][0], dist.sigma[i][0]);
        log_prob += gaussian_log_pdf(ay, dist.mu[i][1], dist.sigma[i][1]);
        raw.push([ax, ay]);
        targets.push(Coord::new(
            discretize(ax, mesh.width),
            discretize(ay, mesh.height),
        ));
    }
    if !log_prob.is_finite() {
        return Err(Error::NonFinite("action log-probability".into()));
    }
    let placement = resolve_conflicts(&targets, priorities, mesh)?;
    Ok(ActionSample {
        raw,
        log_prob,
        targets,
        placement,
    })
}

/// Normalized clipped reward: zero when the placement matches the zigzag
/// baseline cost, +10 at zero cost, -10 at or beyond twice the baseline.
pub fn reward_from_cost(cost: u64, baseline_cost: u64) -> f64 {
    if baseline_cost == 0 {
        return if cost == 0 { 0.0 } else { -REWARD_CLIP };
    }
    let r = REWARD_CLIP * (baseline_cost as f64 - cost as f64) / baseline_cost as f64;
    r.clamp(-REWARD_CLIP, REWARD_CLIP)
}

pub fn reward(graph: &TaskGraph, placement: &Placement, baseline_cost: u64) -> Result<f64> {
    let cost = communication_cost(graph, placement)?;
    Ok(reward_from_cost(cost, baseline_cost))
}

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub raw: Vec<[f64; 2]>,
    pub log_prob_old: f64,
    pub reward: f64,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

/// Surrogate losses plus everything a test needs to audit one epoch.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub ratios: Vec<f64>,
    /// Per-sample (unclipped, clipped) surrogate terms.
    pub surrogates: Vec<(f64, f64)>,
}

/// Computes the clipped-surrogate actor loss, the MSE critic loss, and the
/// exact analytic gradients of both for the current parameters. Pure; shared
/// by the PPO update, the gradient-check suite, and the acceptance tests.
pub fn losses_and_grads(
    policy: &PolicyParams,
    encoding: &StateEncoding,
    traj: &Trajectory,
    cfg: &TrainConfig,
) -> Result<(LossReport, ActorGrads, CriticGrads)> {
    let n = encoding.embedding.rows;
    let b = traj.samples.len();
    if b == 0 {
        return Err(Error::Validation("empty trajectory".into()));
    }
    let fwd = policy.actor.forward(&encoding.embedding, cfg.sigma_min);
    let mut actor_loss = 0.0;
    let mut ratios = Vec::with_capacity(b);
    let mut surrogates = Vec::with_capacity(b);
    let mut d_mu = vec![[0.0; 2]; n];
    let mut d_sigma = vec![[0.0; 2]; n];
    let lo = 1.0 - cfg.clip_epsilon;
    let hi = 1.0 + cfg.clip_epsilon;
    for s in &traj.samples {
        let mut lp_new = 0.0;
        for i in 0..n {
            lp_new += gaussian_log_pdf(s.raw[i][0], fwd.mu[i][0], fwd.sigma[i][0]);
            lp_new += gaussian_log_pdf(s.raw[i][1], fwd.mu[i][1], fwd.sigma[i][1]);
        }
        let ratio = (lp_new - s.log_prob_old).exp();
        let surr1 = ratio * s.advantage;
        let surr2 = ratio.clamp(lo, hi) * s.advantage;
        actor_loss -= surr1.min(surr2) / b as f64;
        ratios.push(ratio);
        surrogates.push((surr1, surr2));

        // gradient flows only through the unclipped branch when selected
        if surr1 <= surr2 {
            let d_lp = -(ratio * s.advantage) / b as f64;
            for i in 0..n {
                for d in 0..2 {
                    let mu = fwd.mu[i][d];
                    let sigma = fwd.sigma[i][d];
                    let diff = s.raw[i][d] - mu;
                    d_mu[i][d] += d_lp * diff / (sigma * sigma);
                    d_sigma[i][d] += d_lp * (diff * diff / (sigma * sigma * sigma) - 1.0 / sigma);
                }
            }
        }
    }
    let critic_fwd = policy.critic.forward(&encoding.pooled);
    let critic_loss = traj
        .samples
        .iter()
        .map(|s| (critic_fwd.value - s.value_target).powi(2))
        .sum::<f64>()
        / b as f64;
    if !actor_loss.is_finite() || !critic_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "losses diverged: actor={actor_loss}, critic={critic_loss}"
        )));
    }
    let actor_grads = policy
        .actor
        .backward(&encoding.embedding, &fwd, &d_mu, &d_sigma);
    let dv = traj
        .samples
        .iter()
        .map(|s| 2.0 * (critic_fwd.value - s.value_target))
        .sum::<f64>()
        / b as f64;
    let critic_grads = policy.critic.backward(&encoding.pooled, &critic_fwd, dv);
    Ok((
        LossReport {
            actor_loss,
            critic_loss,
            ratios,
            surrogates,
        },
        actor_grads,
        critic_grads,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss_first: f64,
    pub actor_loss_last: f64,
    pub critic_loss_first: f64,
    pub critic_loss_last: f64,
}

/// Runs `ppo_epochs` clipped-surrogate passes over the batch, stepping actor
/// and critic with gradient-norm clipping. The frozen encoder is untouched.
pub fn ppo_update(
    policy: &mut PolicyParams,
    encoding: &StateEncoding,
    traj: &Trajectory,
    cfg: &TrainConfig,
    actor_opt: &mut OptState,
    critic_opt: &mut OptState,
) -> Result<UpdateStats> {
    let mut first = None;
    let mut last = (0.0, 0.0);
    for _ in 0..cfg.ppo_epochs {
        let (report, actor_grads, critic_grads) = losses_and_grads(policy, encoding, traj, cfg)?;
        if first.is_none() {
            first = Some((report.actor_loss, report.critic_loss));
        }
        last = (report.actor_loss, report.critic_loss);
        actor_opt.step(
            policy.actor.param_vecs_mut(),
            actor_grads.grad_vecs(),
            cfg.learning_rate,
            cfg.grad_clip,
        );
        critic_opt.step(
            policy.critic.param_vecs_mut(),
            critic_grads.grad_vecs(),
            cfg.learning_rate,
            cfg.grad_clip,
        );
    }
    let first = first.unwrap();
    Ok(UpdateStats {
        actor_loss_first: first.0,
        actor_loss_last: last.0,
        critic_loss_first: first.1,
        critic_loss_last: last.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
    pub best_cost: u64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best_placement: Placement,
    pub best_cost: u64,
    pub baseline_cost: u64,
    pub curve: Vec<CurvePoint>,
    pub policy: PolicyParams,
    pub config: TrainConfig,
    /// True when the episode budget was zero and the zigzag fallback was
    /// returned instead of a trained placement.
    pub fallback: bool,
}

/// Full training loop: sample a batch of placements from the current policy,
/// score them against the zigzag baseline, PPO-update, and keep the best
/// placement ever sampled. Fully determined by (seed, graph, mesh, config).
pub fn train(graph: &TaskGraph, mesh: &Mesh, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    graph.validate()?;
    if graph.is_empty() {
        return Err(Error::Validation("cannot train on an empty graph".into()));
    }
    if graph.len() > mesh.cells() {
        return Err(Error::MeshTooSmall {
            nodes: graph.len(),
            cells: mesh.cells(),
        });
    }
    let zigzag = place_zigzag(graph, mesh)?;
    let baseline_cost = communication_cost(graph, &zigzag)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoder = if cfg.pretrain_encoder {
        // features are needed before the encoder exists; build them with a
        // throwaway encoder of the right shape
        let probe = Encoder::seeded(cfg.embed_dim, &mut rng);
        let features = encode_state(graph, &probe).features;
        Encoder::pretrained(&features, cfg.embed_dim, &mut rng)
    } else {
        Encoder::seeded(cfg.embed_dim, &mut rng)
    };
    let mut policy = PolicyParams {
        actor: ActorNet::seeded(cfg.embed_dim, cfg.hidden_dim, &mut rng),
        critic: CriticNet::seeded(cfg.embed_dim, cfg.hidden_dim, &mut rng),
        encoder,
    };
    let encoding = encode_state(graph, &policy.encoder);
    let priorities = traffic_priority(graph);

    if cfg.episodes == 0 {
        return Ok(TrainResult {
            best_placement: zigzag,
            best_cost: baseline_cost,
            baseline_cost,
            curve: Vec::new(),
            policy,
            config: *cfg,
            fallback: true,
        });
    }

    let shapes = |net_fc1: &Mat, net_fc2: &Mat| {
        [
            net_fc1.data.len(),
            net_fc1.rows,
            net_fc2.data.len(),
            net_fc2.rows,
        ]
    };
    let mut actor_opt = OptState::new(
        cfg.optimizer,
        &shapes(&policy.actor.fc1_w, &policy.actor.fc2_w),
    );
    let mut critic_opt = OptState::new(
        cfg.optimizer,
        &shapes(&policy.critic.fc1_w, &policy.critic.fc2_w),
    );

    let mut best: Option<(u64, Placement)> = None;
    let mut curve = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let fwd = policy.actor.forward(&encoding.embedding, cfg.sigma_min);
        let samples: Vec<ActionSample> = (0..cfg.batch_size)
            .map(|_| sample_action(&fwd, mesh, &priorities, &mut rng))
            .collect::<Result<_>>()?;
        let costs = batch::map(&samples, |s| {
            communication_cost(graph, &s.placement).expect("sampled placement covers the graph")
        });
        for (s, &cost) in samples.iter().zip(&costs) {
            let better = best.as_ref().is_none_or(|(bc, _)| cost < *bc);
            if better {
                best = Some((cost, s.placement.clone()));
            }
        }
        let value = policy.critic.forward(&encoding.pooled).value;
        let mut reward_sum = 0.0;
        let traj = Trajectory {
            samples: samples
                .iter()
                .zip(&costs)
                .map(|(s, &cost)| {
                    let r = reward_from_cost(cost, baseline_cost);
                    reward_sum += r;
                    TrajectorySample {
                        raw: s.raw.clone(),
                        log_prob_old: s.log_prob,
                        reward: r,
                        advantage: r - value,
                        value_target: r,
                    }
                })
                .collect(),
        };
        ppo_update(
            &mut policy,
            &encoding,
            &traj,
            cfg,
            &mut actor_opt,
            &mut critic_opt,
        )?;
        let (best_cost, _) = best.as_ref().unwrap();
        curve.push(CurvePoint {
            episode,
            mean_reward: reward_sum / cfg.batch_size as f64,
            best_cost: *best_cost,
        });
    }
    let (best_cost, best_placement) = best.unwrap();
    Ok(TrainResult {
        best_placement,
        best_cost,
        baseline_cost,
        curve,
        policy,
        config: *cfg,
        fallback: false,
    })
}

/// Versioned checkpoint: all parameter tensors, the config and seed, and the
/// best placement found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub baseline_cost: u64,
    pub best_cost: u64,
    pub mesh: [u32; 2],
    pub best_assignment: BTreeMap<u32, [u32; 2]>,
    pub policy: PolicyParams,
}

impl Checkpoint {
    pub fn from_result(result: &TrainResult) -> Self {
        let mesh = result.best_placement.mesh;
        Checkpoint {
            version: 1,
            config: result.config,
            baseline_cost: result.baseline_cost,
            best_cost: result.best_cost,
            mesh: [mesh.width, mesh.height],
            best_assignment: result
                .best_placement
                .assignments()
                .iter()
                .enumerate()
                .map(|(id, c)| (id as u32, [c.x, c.y]))
                .collect(),
            policy: result.policy.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Writes the per-episode reward curve as CSV.
pub fn write_reward_curve<W: std::io::Write>(curve: &[CurvePoint], mut out: W) -> Result<()> {
    writeln!(out, "episode,mean_reward,best_cost")?;
    for p in curve {
        writeln!(out, "{},{},{}", p.episode, p.mean_reward, p.best_cost)?;
    }
    Ok(())
}
