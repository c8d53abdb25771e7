//! Planar locomotion environments with per-episode morphology resampling.
//!
//! Two bodies are provided: `hopper2d` (torso, thigh, leg, foot; 3 actuated
//! joints) and `walker2d` (torso plus two legs; 6 actuated joints). At every
//! reset the link thicknesses and lengths are scaled by `1 + c_i` with `c`
//! drawn uniformly from `[-sigma, sigma]^5`, which changes masses, inertias
//! and geometry — the transition dynamics depend on a context the agent
//! never observes.
//!
//! Observations follow the layout elevation, sin/cos of the heading angle,
//! linear velocity, roll, pitch, per-joint angle/velocity pairs and foot
//! contact flags; the out-of-plane entries (`sin alpha`, `v_y`, `roll`) are
//! kept at their planar constants so the width matches the 3-d convention.
//!
//! Reward per control step: `w_p * v_x + w_a * alive - w_c * |action|^2`.
//! Episodes end on a fall (torso below half its standing height or pitch
//! beyond 1 rad) or after 1000 steps.

pub mod chain;
pub mod morphology;
pub mod testset;

pub use chain::{Chain, ContactParams, Link, Vec2};
pub use morphology::{
    episode_morphology, make_test_set, sample_morphology, MorphologyContext, PERTURBATION_DIM,
};

use crate::rng::Rng;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("invalid morphology context: {0}")]
    InvalidContext(String),
    #[error("simulation diverged at step {step}: {detail}")]
    SimulationDiverged { step: u32, detail: String },
    #[error("step() called on a finished episode")]
    EpisodeOver,
    #[error("action width {got} does not match environment ({want})")]
    ActionWidth { want: usize, got: usize },
    #[error("unknown limb id {0}")]
    UnknownLimb(usize),
}

/// Base geometry of one link.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct LinkGeom {
    pub length: f64,
    pub thickness: f64,
    pub density: f64,
}

impl LinkGeom {
    fn new(length: f64, thickness: f64, density: f64) -> Self {
        LinkGeom { length, thickness, density }
    }

    /// Cylinder-model mass: `density * length * thickness^2`.
    pub fn mass(&self) -> f64 {
        self.density * self.length * self.thickness * self.thickness
    }

    /// Thin-rod moment of inertia about the center of mass.
    pub fn inertia(&self) -> f64 {
        self.mass() * (self.length * self.length + self.thickness * self.thickness) / 12.0
    }
}

/// Fully resolved per-link geometry of one episode's body.
#[derive(Clone, Debug)]
pub struct BodyParams {
    pub links: Vec<LinkGeom>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BodyKind {
    Hopper2d,
    Walker2d,
}

/// Reward weights of the locomotion objective.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct RewardWeights {
    pub progress: f64,
    pub alive: f64,
    pub action_cost: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { progress: 1.0, alive: 0.5, action_cost: 0.05 }
    }
}

/// Static description of an environment: dimensions, base body, integration
/// constants, reward weights and termination thresholds.
#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: &'static str,
    pub kind: BodyKind,
    pub n_s: usize,
    pub n_a: usize,
    pub perturbation_dim: usize,
    base_links: Vec<LinkGeom>,
    pub dt: f64,
    pub substeps: usize,
    pub torque_limit: f64,
    pub reward: RewardWeights,
    pub contact: ContactParams,
    /// Fall when torso height drops below this fraction of standing height.
    pub fall_height_fraction: f64,
    /// Fall when |pitch| exceeds this (rad).
    pub fall_pitch: f64,
    pub episode_cap: u32,
    pub state_names: Vec<&'static str>,
    pub action_names: Vec<&'static str>,
    /// Limb groups addressable by the single-limb sweep: (label, link ids).
    pub limb_groups: Vec<(&'static str, Vec<usize>)>,
}

const DENSITY: f64 = 1500.0;
const JOINT_NOISE: f64 = 0.005;
/// Lengths are clamped here when a sweep shortens a limb to nothing.
pub const MIN_LINK_LENGTH: f64 = 1e-3;

impl EnvSpec {
    pub fn hopper2d() -> Self {
        EnvSpec {
            name: "hopper2d",
            kind: BodyKind::Hopper2d,
            n_s: 15,
            n_a: 3,
            perturbation_dim: PERTURBATION_DIM,
            base_links: vec![
                LinkGeom::new(0.40, 0.05, DENSITY), // torso
                LinkGeom::new(0.45, 0.05, DENSITY), // thigh
                LinkGeom::new(0.50, 0.04, DENSITY), // leg
                LinkGeom::new(0.39, 0.04, DENSITY), // foot
            ],
            dt: 1.0 / 60.0,
            substeps: 8,
            torque_limit: 40.0,
            reward: RewardWeights::default(),
            contact: ContactParams::default(),
            fall_height_fraction: 0.5,
            fall_pitch: 1.0,
            episode_cap: 1000,
            state_names: vec![
                "elevation", "sin_alpha", "cos_alpha", "v_x", "v_y", "v_z", "roll", "pitch",
                "thigh_angle", "thigh_velocity", "leg_angle", "leg_velocity", "foot_angle",
                "foot_velocity", "foot_contact",
            ],
            action_names: vec!["thigh_torque", "leg_torque", "foot_torque"],
            limb_groups: vec![("limb", vec![1, 2]), ("foot", vec![3])],
        }
    }

    pub fn walker2d() -> Self {
        EnvSpec {
            name: "walker2d",
            kind: BodyKind::Walker2d,
            n_s: 22,
            n_a: 6,
            perturbation_dim: PERTURBATION_DIM,
            base_links: vec![
                LinkGeom::new(0.40, 0.05, DENSITY), // torso
                LinkGeom::new(0.45, 0.05, DENSITY), // right thigh
                LinkGeom::new(0.50, 0.04, DENSITY), // right leg
                LinkGeom::new(0.26, 0.04, DENSITY), // right foot
                LinkGeom::new(0.45, 0.05, DENSITY), // left thigh
                LinkGeom::new(0.50, 0.04, DENSITY), // left leg
                LinkGeom::new(0.26, 0.04, DENSITY), // left foot
            ],
            dt: 1.0 / 60.0,
            substeps: 8,
            torque_limit: 40.0,
            reward: RewardWeights::default(),
            contact: ContactParams::default(),
            fall_height_fraction: 0.5,
            fall_pitch: 1.0,
            episode_cap: 1000,
            state_names: vec![
                "elevation", "sin_alpha", "cos_alpha", "v_x", "v_y", "v_z", "roll", "pitch",
                "right_thigh_angle", "right_thigh_velocity", "right_leg_angle",
                "right_leg_velocity", "right_foot_angle", "right_foot_velocity",
                "left_thigh_angle", "left_thigh_velocity", "left_leg_angle", "left_leg_velocity",
                "left_foot_angle", "left_foot_velocity", "right_foot_contact",
                "left_foot_contact",
            ],
            action_names: vec![
                "right_thigh_torque", "right_leg_torque", "right_foot_torque",
                "left_thigh_torque", "left_leg_torque", "left_foot_torque",
            ],
            limb_groups: vec![
                ("right_limb", vec![1, 2]),
                ("right_foot", vec![3]),
                ("left_limb", vec![4, 5]),
                ("left_foot", vec![6]),
            ],
        }
    }

    pub fn by_name(name: &str) -> Result<Self, EnvError> {
        match name {
            "hopper2d" => Ok(EnvSpec::hopper2d()),
            "walker2d" => Ok(EnvSpec::walker2d()),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }

    pub fn names() -> &'static [&'static str] {
        &["hopper2d", "walker2d"]
    }

    /// The reward formula at one step.
    pub fn step_reward(&self, v_x: f64, alive: bool, action: &[f64]) -> f64 {
        let cost: f64 = action.iter().map(|a| a * a).sum();
        self.reward.progress * v_x + self.reward.alive * (alive as u8 as f64)
            - self.reward.action_cost * cost
    }

    /// Scale the base geometry by a morphology context. Fails if any length
    /// or thickness would become non-positive (impossible for sigma < 1).
    pub fn apply_morphology(&self, ctx: &MorphologyContext) -> Result<BodyParams, EnvError> {
        use morphology::component::*;
        if ctx.dim() != self.perturbation_dim {
            return Err(EnvError::InvalidContext(format!(
                "context has {} components, {} expects {}",
                ctx.dim(),
                self.name,
                self.perturbation_dim
            )));
        }
        let c = ctx.components();
        let mut links = self.base_links.clone();
        let (torso, limbs, feet) = self.link_roles();
        links[torso].thickness *= 1.0 + c[TORSO_THICKNESS];
        for &i in &limbs {
            links[i].thickness *= 1.0 + c[LIMB_THICKNESS];
            links[i].length *= 1.0 + c[LIMB_LENGTH];
        }
        for &i in &feet {
            links[i].thickness *= 1.0 + c[FOOT_THICKNESS];
            links[i].length *= 1.0 + c[FOOT_LENGTH];
        }
        for (i, l) in links.iter().enumerate() {
            if l.length <= 0.0 || l.thickness <= 0.0 {
                return Err(EnvError::InvalidContext(format!(
                    "link {i} degenerate: length {} thickness {}",
                    l.length, l.thickness
                )));
            }
        }
        Ok(BodyParams { links })
    }

    fn link_roles(&self) -> (usize, Vec<usize>, Vec<usize>) {
        match self.kind {
            BodyKind::Hopper2d => (0, vec![1, 2], vec![3]),
            BodyKind::Walker2d => (0, vec![1, 2, 4, 5], vec![3, 6]),
        }
    }

    /// Base body with one limb group's length scaled by `factor` (clamped at
    /// [`MIN_LINK_LENGTH`] so full amputation stays integrable).
    pub fn single_limb_body(&self, limb_id: usize, factor: f64) -> Result<BodyParams, EnvError> {
        let group = self.limb_groups.get(limb_id).ok_or(EnvError::UnknownLimb(limb_id))?;
        let mut links = self.base_links.clone();
        for &i in &group.1 {
            links[i].length = (links[i].length * factor).max(MIN_LINK_LENGTH);
        }
        Ok(BodyParams { links })
    }

    /// Assemble the articulated chain for a resolved body.
    pub fn build_chain(&self, body: &BodyParams) -> Chain {
        match self.kind {
            BodyKind::Hopper2d => {
                let mut links = vec![torso_link(&body.links[0])];
                links.extend(leg_links(&body.links[1..4], 0, 3, 0, ""));
                Chain::new(links)
            }
            BodyKind::Walker2d => {
                let mut links = vec![torso_link(&body.links[0])];
                links.extend(leg_links(&body.links[1..4], 0, 3, 0, "right_"));
                links.extend(leg_links(&body.links[4..7], 0, 6, 3, "left_"));
                Chain::new(links)
            }
        }
    }

    /// Torso-origin height of the noiseless rest pose (the standing
    /// reference for elevation and the fall threshold).
    pub fn standing_height(&self, body: &BodyParams) -> f64 {
        let chain = self.build_chain(body);
        let q = vec![0.0; chain.n_q];
        -chain.min_contact_height(&q)
    }
}

fn torso_link(g: &LinkGeom) -> Link {
    Link {
        name: "torso".into(),
        parent: None,
        dof: 2,
        anchor: Vec2::ZERO,
        com: Vec2::new(0.0, g.length / 2.0),
        mass: g.mass(),
        inertia: g.inertia(),
        torque_index: None,
        limit: None,
        // end points collide so a fallen body rests on the ground
        contacts: vec![Vec2::ZERO, Vec2::new(0.0, g.length)],
        foot_sensor: false,
    }
}

/// Thigh, leg and foot links hanging from `parent`. `dof0` is the first
/// generalized-coordinate index, `act0` the first action index.
fn leg_links(geoms: &[LinkGeom], parent: usize, dof0: usize, act0: usize, prefix: &str) -> Vec<Link> {
    let (thigh, leg, foot) = (&geoms[0], &geoms[1], &geoms[2]);
    // chain index of a link is its dof minus 2
    let thigh_idx = dof0 - 2;
    vec![
        Link {
            name: format!("{prefix}thigh"),
            parent: Some(parent),
            dof: dof0,
            anchor: Vec2::ZERO,
            com: Vec2::new(0.0, -thigh.length / 2.0),
            mass: thigh.mass(),
            inertia: thigh.inertia(),
            torque_index: Some(act0),
            limit: Some((-1.5, 1.5)),
            contacts: vec![Vec2::new(0.0, -thigh.length)],
            foot_sensor: false,
        },
        Link {
            name: format!("{prefix}leg"),
            parent: Some(thigh_idx),
            dof: dof0 + 1,
            anchor: Vec2::new(0.0, -thigh.length),
            com: Vec2::new(0.0, -leg.length / 2.0),
            mass: leg.mass(),
            inertia: leg.inertia(),
            torque_index: Some(act0 + 1),
            limit: Some((-1.5, 1.5)),
            contacts: vec![Vec2::new(0.0, -leg.length)],
            foot_sensor: false,
        },
        Link {
            name: format!("{prefix}foot"),
            parent: Some(thigh_idx + 1),
            dof: dof0 + 2,
            anchor: Vec2::new(0.0, -leg.length),
            com: Vec2::new(foot.length / 6.0, 0.0),
            mass: foot.mass(),
            inertia: foot.inertia(),
            torque_index: Some(act0 + 2),
            limit: Some((-0.8, 0.8)),
            // heel and toe on the bottom surface; the ankle sits a third of
            // the way along the foot
            contacts: vec![
                Vec2::new(-foot.length / 3.0, -foot.thickness / 2.0),
                Vec2::new(2.0 * foot.length / 3.0, -foot.thickness / 2.0),
            ],
            foot_sensor: true,
        },
    ]
}

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Termination {
    Fall,
    StepCap,
}

#[derive(Clone, Debug)]
pub struct StepInfo {
    pub termination: Option<Termination>,
    /// Whole-body center-of-mass velocity.
    pub com_velocity: Vec2,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A running episode.
pub struct Env {
    pub spec: EnvSpec,
    chain: Chain,
    context: MorphologyContext,
    q: Vec<f64>,
    qd: Vec<f64>,
    steps: u32,
    done: bool,
    standing_height: f64,
    touching: Vec<bool>,
    foot_links: Vec<usize>,
}

impl Env {
    /// Start an episode: apply the morphology, place the body at rest with
    /// small uniform joint noise (±0.005 rad) and the lowest contact point
    /// exactly on the ground.
    pub fn reset(spec: &EnvSpec, context: &MorphologyContext, seed: u64) -> Result<Env, EnvError> {
        let body = spec.apply_morphology(context)?;
        Env::reset_with_body(spec, context, body, seed)
    }

    /// As [`Env::reset`] but with explicit link geometry (limb sweeps).
    pub fn reset_with_body(
        spec: &EnvSpec,
        context: &MorphologyContext,
        body: BodyParams,
        seed: u64,
    ) -> Result<Env, EnvError> {
        let chain = spec.build_chain(&body);
        let standing_height = spec.standing_height(&body);
        let mut rng = Rng::stream(seed, "env-reset-noise", &[]);
        let mut q = vec![0.0; chain.n_q];
        for dof in 3..chain.n_q {
            q[dof] = rng.uniform_range(-JOINT_NOISE, JOINT_NOISE);
        }
        // settle the lowest contact point onto the ground
        q[1] = -chain.min_contact_height(&q);
        let foot_links: Vec<usize> = chain
            .links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.foot_sensor)
            .map(|(i, _)| i)
            .collect();
        let touching = vec![false; chain.links.len()];
        let qd = vec![0.0; chain.n_q];
        Ok(Env {
            spec: spec.clone(),
            chain,
            context: context.clone(),
            q,
            qd,
            steps: 0,
            done: false,
            standing_height,
            touching,
            foot_links,
        })
    }

    pub fn context(&self) -> &MorphologyContext {
        &self.context
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn standing_height(&self) -> f64 {
        self.standing_height
    }

    /// Torso-origin height.
    pub fn torso_height(&self) -> f64 {
        self.q[1]
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> (&[f64], &[f64]) {
        (&self.q, &self.qd)
    }

    /// Mechanical energy (tests for integrator blow-up).
    pub fn energy(&self) -> f64 {
        self.chain.mechanical_energy(&self.q, &self.qd, &self.spec.contact)
    }

    /// Current observation vector (width `n_s`).
    pub fn observation(&self) -> Vec<f64> {
        let frames = self.chain.kinematics(&self.q, &self.qd);
        let torso = &self.chain.links[0];
        let rc = torso.com.rot(frames[0].cs);
        let tvel = frames[0].vel.add(rc.perp().scale(frames[0].omega));

        let mut obs = Vec::with_capacity(self.spec.n_s);
        obs.push(self.q[1] - self.standing_height); // elevation
        obs.push(0.0); // sin(alpha): heading equals target direction in-plane
        obs.push(1.0); // cos(alpha)
        obs.push(tvel.x);
        obs.push(0.0); // v_y
        obs.push(tvel.z);
        obs.push(0.0); // roll
        obs.push(self.q[2]); // pitch
        for dof in 3..self.chain.n_q {
            obs.push(self.q[dof]);
            obs.push(self.qd[dof]);
        }
        for &fl in &self.foot_links {
            obs.push(if self.touching[fl] { 1.0 } else { 0.0 });
        }
        debug_assert_eq!(obs.len(), self.spec.n_s);
        obs
    }

    /// Advance one control step (torques = clamped action times the torque
    /// limit, integrated over `substeps` semi-implicit Euler substeps).
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action.len() != self.spec.n_a {
            return Err(EnvError::ActionWidth { want: self.spec.n_a, got: action.len() });
        }
        let torques: Vec<f64> =
            action.iter().map(|a| a.clamp(-1.0, 1.0) * self.spec.torque_limit).collect();
        let h = self.spec.dt / self.spec.substeps as f64;
        for _ in 0..self.spec.substeps {
            self.touching = self.chain.substep(&mut self.q, &mut self.qd, &torques, &self.spec.contact, h);
        }
        if !(self.q.iter().all(|x| x.is_finite()) && self.qd.iter().all(|x| x.is_finite())) {
            self.done = true;
            return Err(EnvError::SimulationDiverged {
                step: self.steps,
                detail: format!(
                    "context {:?}, q {:?}, qd {:?}",
                    self.context.components(),
                    self.q,
                    self.qd
                ),
            });
        }
        self.steps += 1;

        let fallen = self.q[1] < self.spec.fall_height_fraction * self.standing_height
            || self.q[2].abs() > self.spec.fall_pitch;
        let cap = self.steps >= self.spec.episode_cap;
        self.done = fallen || cap;

        let frames = self.chain.kinematics(&self.q, &self.qd);
        let torso = &self.chain.links[0];
        let rc = torso.com.rot(frames[0].cs);
        let tvel = frames[0].vel.add(rc.perp().scale(frames[0].omega));
        let reward = self.spec.step_reward(tvel.x, !fallen, action);

        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            info: StepInfo {
                termination: if fallen {
                    Some(Termination::Fall)
                } else if cap {
                    Some(Termination::StepCap)
                } else {
                    None
                },
                com_velocity: self.chain.com_velocity(&frames),
            },
        })
    }
}

