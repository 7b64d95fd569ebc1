//! The distributed method family as simulated server/node loops.
//!
//! Every struct owns its server state and the per-node states (compressor,
//! shift, private random stream) and advances one communication round per
//! `step` call. Node order is fixed, so runs are deterministic for a given
//! seed regardless of scheduling.

use rand_chacha::ChaCha8Rng;

use crate::compress::{Compressor, SparseUpdate};
use crate::error::{Error, Result};
use crate::optim::prox::{prox, Regularizer};
use crate::optim::rng::{coin_rng, master_rng, node_rng};
use crate::problem::DistributedProblem;
use crate::sampling::Sampling;
use crate::{Result as CrateResult, Vector};

/// Communication counters for one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Coordinates sent worker -> server this round (summed over nodes).
    pub coords_up: u64,
    /// Coordinates broadcast server -> workers this round (counted once).
    pub coords_down: u64,
    pub bits_up: u64,
    pub bits_down: u64,
}

impl StepStats {
    fn add_up(&mut self, u: &SparseUpdate) {
        self.coords_up += u.payload_coords() as u64;
        self.bits_up += u.payload_bits();
    }

    fn add_down(&mut self, u: &SparseUpdate) {
        self.coords_down += u.payload_coords() as u64;
        self.bits_down += u.payload_bits();
    }
}

/// Per-node optimizer memory: compressor, shift vector, private stream.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub compressor: Compressor,
    /// DIANA-family control vector; stays in `range(L_i)` by construction.
    pub shift: Vector,
    pub rng: ChaCha8Rng,
}

/// Builds node states with matrix-aware or standard compressors and
/// zero-initialized shifts (zero is always in `range(L_i)`).
pub fn build_nodes(
    problem: &DistributedProblem,
    samplings: &[Sampling],
    matrix_aware: bool,
    seed: u64,
) -> CrateResult<Vec<NodeState>> {
    if samplings.len() != problem.n() {
        return Err(Error::DimMismatch {
            left: samplings.len(),
            right: problem.n(),
        });
    }
    let d = problem.dim();
    problem
        .nodes()
        .iter()
        .zip(samplings)
        .enumerate()
        .map(|(i, (node, s))| {
            let compressor = if matrix_aware {
                Compressor::matrix_aware(node.matrix().clone(), s.clone())?
            } else {
                Compressor::standard(s.clone())
            };
            Ok(NodeState {
                id: i,
                compressor,
                shift: Vector::zeros(d),
                rng: node_rng(seed, i),
            })
        })
        .collect()
}

/// Builds node states with identity compressors (uncompressed baselines).
pub fn build_identity_nodes(problem: &DistributedProblem, seed: u64) -> Vec<NodeState> {
    let d = problem.dim();
    (0..problem.n())
        .map(|i| NodeState {
            id: i,
            compressor: Compressor::identity(d),
            shift: Vector::zeros(d),
            rng: node_rng(seed, i),
        })
        .collect()
}

/// Interface the run driver uses to advance any distributed method.
pub trait DistributedMethod {
    fn step(&mut self, problem: &DistributedProblem) -> Result<StepStats>;
    /// The iterate whose residual is traced.
    fn iterate(&self) -> &Vector;
    /// The gradient estimate applied in the last step (for diagnostics).
    fn last_estimate(&self) -> Option<&Vector>;
    /// Re-derives every random stream from a fresh seed, leaving the
    /// optimizer state untouched (conditional Monte-Carlo over one step).
    fn reseed(&mut self, seed: u64);
}

fn reseed_nodes(nodes: &mut [NodeState], seed: u64) {
    for node in nodes {
        node.rng = node_rng(seed, node.id);
    }
}

/// DCGD/DCGD+: compressed gradient step without variance reduction.
/// `x <- prox_{gamma R}(x - gamma (1/n) sum_i decompress(compress(grad_i)))`.
#[derive(Debug, Clone)]
pub struct DcgdPlus {
    x: Vector,
    gamma: f64,
    reg: Regularizer,
    nodes: Vec<NodeState>,
    last_estimate: Option<Vector>,
}

impl DcgdPlus {
    pub fn new(x0: Vector, gamma: f64, reg: Regularizer, nodes: Vec<NodeState>) -> Self {
        Self {
            x: x0,
            gamma,
            reg,
            nodes,
            last_estimate: None,
        }
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }
}

impl DistributedMethod for DcgdPlus {
    fn step(&mut self, problem: &DistributedProblem) -> Result<StepStats> {
        let n = self.nodes.len() as f64;
        let mut stats = StepStats::default();
        let mut sum = Vector::zeros(self.x.len());
        for node in &mut self.nodes {
            let grad = problem.node(node.id).grad(&self.x);
            let update = node.compressor.compress(&grad, &mut node.rng)?;
            stats.add_up(&update);
            sum += node.compressor.decompress(&update)?;
        }
        let estimate = sum / n;
        self.x = prox(&self.reg, self.gamma, &(&self.x - self.gamma * &estimate));
        self.last_estimate = Some(estimate);
        Ok(stats)
    }

    fn iterate(&self) -> &Vector {
        &self.x
    }

    fn last_estimate(&self) -> Option<&Vector> {
        self.last_estimate.as_ref()
    }

    fn reseed(&mut self, seed: u64) {
        reseed_nodes(&mut self.nodes, seed);
    }
}

/// DIANA/DIANA+: shift-tracking variance reduction. Nodes send
/// `compress(grad_i - h_i)`; shifts move by an `alpha` fraction of the
/// decompressed update, and the server tracks the averaged shift.
#[derive(Debug, Clone)]
pub struct DianaPlus {
    x: Vector,
    h: Vector,
    gamma: f64,
    alpha: f64,
    reg: Regularizer,
    nodes: Vec<NodeState>,
    last_estimate: Option<Vector>,
}

impl DianaPlus {
    pub fn new(
        x0: Vector,
        gamma: f64,
        alpha: f64,
        reg: Regularizer,
        nodes: Vec<NodeState>,
    ) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            h: Vector::zeros(d),
            gamma,
            alpha,
            reg,
            nodes,
            last_estimate: None,
        }
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn server_shift(&self) -> &Vector {
        &self.h
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    fn debug_check_shift_mean(&self) {
        #[cfg(debug_assertions)]
        {
            let mut mean = Vector::zeros(self.h.len());
            for node in &self.nodes {
                mean += &node.shift;
            }
            mean /= self.nodes.len() as f64;
            let scale = 1.0 + self.h.norm();
            debug_assert!(
                (&mean - &self.h).norm() <= 1e-10 * scale,
                "server shift drifted from node mean"
            );
        }
    }
}

impl DistributedMethod for DianaPlus {
    fn step(&mut self, problem: &DistributedProblem) -> Result<StepStats> {
        let n = self.nodes.len() as f64;
        let mut stats = StepStats::default();
        let mut dbar = Vector::zeros(self.x.len());
        for node in &mut self.nodes {
            let grad = problem.node(node.id).grad(&self.x);
            let shifted = &grad - &node.shift;
            let update = node.compressor.compress(&shifted, &mut node.rng)?;
            stats.add_up(&update);
            let dbar_i = node.compressor.decompress(&update)?;
            node.shift += self.alpha * &dbar_i;
            dbar += dbar_i;
        }
        dbar /= n;
        let estimate = &dbar + &self.h;
        self.x = prox(&self.reg, self.gamma, &(&self.x - self.gamma * &estimate));
        self.h += self.alpha * &dbar;
        self.debug_check_shift_mean();
        self.last_estimate = Some(estimate);
        Ok(stats)
    }

    fn iterate(&self) -> &Vector {
        &self.x
    }

    fn last_estimate(&self) -> Option<&Vector> {
        self.last_estimate.as_ref()
    }

    fn reseed(&mut self, seed: u64) {
        reseed_nodes(&mut self.nodes, seed);
    }
}

/// ADIANA/ADIANA+ parameters (from the theory rules).
#[derive(Debug, Clone, Copy)]
pub struct AdianaParams {
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub q: f64,
}

/// ADIANA/ADIANA+: accelerated variance reduction with four model sequences
/// and two sparse messages per node per round (one sketch draw serves both).
#[derive(Debug, Clone)]
pub struct AdianaPlus {
    y: Vector,
    z: Vector,
    w: Vector,
    h: Vector,
    params: AdianaParams,
    reg: Regularizer,
    nodes: Vec<NodeState>,
    coin: ChaCha8Rng,
    last_x: Vector,
    last_estimate: Option<Vector>,
}

impl AdianaPlus {
    pub fn new(
        x0: Vector,
        params: AdianaParams,
        reg: Regularizer,
        nodes: Vec<NodeState>,
        seed: u64,
    ) -> Self {
        let d = x0.len();
        Self {
            y: x0.clone(),
            z: x0.clone(),
            w: x0.clone(),
            h: Vector::zeros(d),
            params,
            reg,
            nodes,
            coin: coin_rng(seed),
            last_x: x0,
            last_estimate: None,
        }
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn z(&self) -> &Vector {
        &self.z
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    /// The extrapolated point gradients were last computed at.
    pub fn x(&self) -> &Vector {
        &self.last_x
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }
}

impl DistributedMethod for AdianaPlus {
    fn step(&mut self, problem: &DistributedProblem) -> Result<StepStats> {
        let p = self.params;
        let n = self.nodes.len() as f64;
        let mut stats = StepStats::default();

        let x = p.theta1 * &self.z + p.theta2 * &self.w + (1.0 - p.theta1 - p.theta2) * &self.y;

        let mut dbar = Vector::zeros(x.len());
        let mut deltabar = Vector::zeros(x.len());
        for node in &mut self.nodes {
            let local = problem.node(node.id);
            let grad_x = local.grad(&x);
            let grad_w = local.grad(&self.w);
            // One sketch serves both messages of the round.
            let sketch = node.compressor.draw_sketch(&mut node.rng);
            let (u_model, u_anchor) = match &sketch {
                Some(s) => (
                    node.compressor.compress_with(s, &(&grad_x - &node.shift))?,
                    node.compressor.compress_with(s, &(&grad_w - &node.shift))?,
                ),
                None => (
                    node.compressor.compress(&(&grad_x - &node.shift), &mut node.rng)?,
                    node.compressor.compress(&(&grad_w - &node.shift), &mut node.rng)?,
                ),
            };
            stats.add_up(&u_model);
            stats.add_up(&u_anchor);
            dbar += node.compressor.decompress(&u_model)?;
            let delta_i = node.compressor.decompress(&u_anchor)?;
            node.shift += p.alpha * &delta_i;
            deltabar += delta_i;
        }
        dbar /= n;
        deltabar /= n;

        let estimate = &dbar + &self.h;
        self.h += p.alpha * &deltabar;

        let y_next = prox(&self.reg, p.eta, &(&x - p.eta * &estimate));
        let z_next =
            p.beta * &self.z + (1.0 - p.beta) * &x + (p.gamma / p.eta) * (&y_next - &x);
        use rand::Rng;
        let w_next = if self.coin.gen::<f64>() < p.q {
            self.y.clone()
        } else {
            self.w.clone()
        };

        self.y = y_next;
        self.z = z_next;
        self.w = w_next;
        self.last_x = x;
        self.last_estimate = Some(estimate);
        Ok(stats)
    }

    /// The proximal-output sequence `y` is the traced solution estimate.
    fn iterate(&self) -> &Vector {
        &self.y
    }

    fn last_estimate(&self) -> Option<&Vector> {
        self.last_estimate.as_ref()
    }

    fn reseed(&mut self, seed: u64) {
        reseed_nodes(&mut self.nodes, seed);
        self.coin = coin_rng(seed);
    }
}

/// ISEGA+: like DIANA+ but the shift moves by the sketch rescaled by the
/// inclusion probabilities (the projection step), with no `alpha`.
#[derive(Debug, Clone)]
pub struct IsegaPlus {
    x: Vector,
    h: Vector,
    gamma: f64,
    reg: Regularizer,
    nodes: Vec<NodeState>,
    last_estimate: Option<Vector>,
}

impl IsegaPlus {
    pub fn new(x0: Vector, gamma: f64, reg: Regularizer, nodes: Vec<NodeState>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            h: Vector::zeros(d),
            gamma,
            reg,
            nodes,
            last_estimate: None,
        }
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }
}

impl DistributedMethod for IsegaPlus {
    fn step(&mut self, problem: &DistributedProblem) -> Result<StepStats> {
        let n = self.nodes.len() as f64;
        let mut stats = StepStats::default();
        let mut dbar = Vector::zeros(self.x.len());
        let mut shift_bar = Vector::zeros(self.x.len());
        for node in &mut self.nodes {
            let grad = problem.node(node.id).grad(&self.x);
            let shifted = &grad - &node.shift;
            let update = node.compressor.compress(&shifted, &mut node.rng)?;
            stats.add_up(&update);
            dbar += node.compressor.decompress(&update)?;
            // Shift update: decompress Diag(P_i) * Delta_i.
            let probs = node
                .compressor
                .sampling()
                .map(|s| s.probs().clone())
                .unwrap_or_else(|| Vector::repeat(self.x.len(), 1.0));
            let scaled = update.scaled(&probs)?;
            let shift_step = node.compressor.decompress(&scaled)?;
            node.shift += &shift_step;
            shift_bar += shift_step;
        }
        dbar /= n;
        shift_bar /= n;
        let estimate = &self.h + &dbar;
        self.x = prox(&self.reg, self.gamma, &(&self.x - self.gamma * &estimate));
        self.h += &shift_bar;
        self.last_estimate = Some(estimate);
        Ok(stats)
    }

    fn iterate(&self) -> &Vector {
        &self.x
    }

    fn last_estimate(&self) -> Option<&Vector> {
        self.last_estimate.as_ref()
    }

    fn reseed(&mut self, seed: u64) {
        reseed_nodes(&mut self.nodes, seed);
    }
}

/// DIANA++: DIANA+ workers plus master-side compression of the aggregated
/// estimate, with a second control vector `H` mirrored by every node.
#[derive(Debug, Clone)]
pub struct DianaPp {
    x: Vector,
    h: Vector,
    master_shift: Vector,
    gamma: f64,
    alpha: f64,
    beta: f64,
    reg: Regularizer,
    nodes: Vec<NodeState>,
    master: Compressor,
    master_rng: ChaCha8Rng,
    /// Node-side mirrors of `x` and `H`, reconstructed from the broadcast
    /// sparse message each round.
    mirror_x: Vec<Vector>,
    mirror_shift: Vec<Vector>,
    last_estimate: Option<Vector>,
}

impl DianaPp {
    /// Builds the method. When the master sampling always selects every
    /// coordinate its compression is the exact identity on `range(L)`, so the
    /// identity compressor is used and the trajectory coincides bitwise with
    /// the one-sided method.
    pub fn new(
        x0: Vector,
        gamma: f64,
        alpha: f64,
        beta: f64,
        reg: Regularizer,
        nodes: Vec<NodeState>,
        problem: &DistributedProblem,
        master_sampling: &Sampling,
        seed: u64,
    ) -> CrateResult<Self> {
        let d = x0.len();
        let master = if master_sampling.always_full() {
            Compressor::identity(d)
        } else {
            Compressor::matrix_aware(problem.matrix().clone(), master_sampling.clone())?
        };
        let n = nodes.len();
        Ok(Self {
            x: x0.clone(),
            h: Vector::zeros(d),
            master_shift: Vector::zeros(d),
            gamma,
            alpha,
            beta,
            reg,
            nodes,
            master,
            master_rng: master_rng(seed),
            mirror_x: vec![x0; n],
            mirror_shift: vec![Vector::zeros(d); n],
            last_estimate: None,
        })
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn master_shift(&self) -> &Vector {
        &self.master_shift
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn mirrors_consistent(&self) -> bool {
        self.mirror_x.iter().all(|m| m == &self.x)
            && self.mirror_shift.iter().all(|m| m == &self.master_shift)
    }
}

impl DistributedMethod for DianaPp {
    fn step(&mut self, problem: &DistributedProblem) -> Result<StepStats> {
        let n = self.nodes.len() as f64;
        let mut stats = StepStats::default();

        // Worker phase, identical to the one-sided method.
        let mut dbar = Vector::zeros(self.x.len());
        for node in &mut self.nodes {
            let grad = problem.node(node.id).grad(&self.x);
            let shifted = &grad - &node.shift;
            let update = node.compressor.compress(&shifted, &mut node.rng)?;
            stats.add_up(&update);
            let dbar_i = node.compressor.decompress(&update)?;
            node.shift += self.alpha * &dbar_i;
            dbar += dbar_i;
        }
        dbar /= n;
        let g = &dbar + &self.h;

        // Master phase: compress g - H, broadcast the sparse message. An
        // identity master makes the control vector pointless; H stays at
        // zero so the reconstruction H + (g - H) is exactly g.
        let identity_master = matches!(self.master, Compressor::Identity { .. });
        let wire = self
            .master
            .compress(&(&g - &self.master_shift), &mut self.master_rng)?;
        stats.add_down(&wire);
        let delta = self.master.decompress(&wire)?;
        let estimate = &self.master_shift + &delta;

        self.x = prox(&self.reg, self.gamma, &(&self.x - self.gamma * &estimate));
        self.h += self.alpha * &dbar;
        if !identity_master {
            self.master_shift += self.beta * &delta;
        }

        // Node mirrors reconstruct the same state from the broadcast bytes.
        let bytes = wire.to_bytes();
        for i in 0..self.mirror_x.len() {
            let parsed = SparseUpdate::from_bytes(&bytes)?;
            let delta_i = self.master.decompress(&parsed)?;
            let estimate_i = &self.mirror_shift[i] + &delta_i;
            self.mirror_x[i] = prox(
                &self.reg,
                self.gamma,
                &(&self.mirror_x[i] - self.gamma * &estimate_i),
            );
            if !identity_master {
                self.mirror_shift[i] += self.beta * &delta_i;
            }
        }
        debug_assert!(self.mirrors_consistent(), "node mirrors diverged");

        self.last_estimate = Some(estimate);
        Ok(stats)
    }

    fn iterate(&self) -> &Vector {
        &self.x
    }

    fn last_estimate(&self) -> Option<&Vector> {
        self.last_estimate.as_ref()
    }

    fn reseed(&mut self, seed: u64) {
        reseed_nodes(&mut self.nodes, seed);
        self.master_rng = master_rng(seed);
    }
}
