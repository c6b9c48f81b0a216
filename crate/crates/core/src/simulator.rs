//! Synthetic pedestrian scenes: agents steer toward cycled waypoints at a
//! preferred speed, push each other apart with an exponential short-range
//! repulsion, and groups pull stragglers back toward their centroid. A
//! second pass corrupts the ground truth into detections — Gaussian jitter,
//! random misses, scripted occlusions and uniform Poisson clutter.
//!
//! Everything is deterministic per seed: scene layout draws come from one
//! stream, corruption draws from an independently derived one, and the
//! dynamics themselves are pure.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::geometry::{euclidean, Bounds, Point2};
use crate::predictor::TrainSample;

/// Stream separator so corruption draws never alias layout draws.
const CORRUPTION_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug)]
pub enum SimError {
    BadConfig(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadConfig(msg) => write!(f, "bad scene config: {msg}"),
        }
    }
}

impl std::error::Error for SimError {}

/// One scripted hole in an agent's detections: frames
/// `start_frame .. start_frame + duration` produce nothing for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionScript {
    pub agent: usize,
    pub start_frame: i64,
    pub duration: usize,
}

impl OcclusionScript {
    fn covers(&self, agent: usize, frame: i64) -> bool {
        self.agent == agent
            && frame >= self.start_frame
            && frame < self.start_frame + self.duration as i64
    }
}

/// Detector-noise model applied on top of the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    /// Probability that a visible agent produces no detection in a frame.
    pub p_miss: f64,
    /// Std-dev of the Gaussian added to each detected coordinate (raw units).
    pub jitter_sigma: f64,
    /// Expected false positives per frame, uniform over the arena.
    pub clutter_rate: f64,
    pub occlusions: Vec<OcclusionScript>,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            p_miss: 0.0,
            jitter_sigma: 0.0,
            clutter_rate: 0.0,
            occlusions: vec![],
        }
    }
}

/// Steering and interaction constants. These are repo-frozen tuning values,
/// not physical measurements; the invariants tests pin their effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    /// Frames over which velocity relaxes toward the desired velocity.
    pub relaxation_time: f64,
    /// Peak pairwise repulsion acceleration (raw units / frame²).
    pub repulsion_strength: f64,
    /// Length scale of the exponential repulsion decay (raw units).
    pub repulsion_radius: f64,
    /// Pull toward the group centroid per unit of excess separation.
    pub cohesion_strength: f64,
    /// Group members closer to their centroid than this feel no pull.
    pub comfort_distance: f64,
    /// Documented ceiling on same-group pairwise separation after burn-in.
    pub cohesion_bound: f64,
    /// Advance to the next waypoint when within this distance.
    pub waypoint_capture: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            relaxation_time: 2.0,
            repulsion_strength: 0.08,
            repulsion_radius: 0.6,
            cohesion_strength: 0.2,
            comfort_distance: 0.6,
            cohesion_bound: 2.0,
            waypoint_capture: 0.3,
        }
    }
}

/// A fully scripted agent: start, waypoint route (cycled) and preferred
/// speed. Used by the benchmark scenes; random scenes draw these instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRoute {
    pub start: Point2,
    pub waypoints: Vec<Point2>,
    pub speed: f64,
}

/// Where agents and their routes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Starts, waypoints and speeds drawn uniformly from the scene seed.
    Random { waypoints_per_agent: usize },
    /// Explicit routes, one per agent, in agent order.
    Scripted { routes: Vec<AgentRoute> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub arena: Bounds,
    pub n_frames: usize,
    pub n_agents: usize,
    /// Number of groups the agents are split into (0 = everyone solo).
    /// Grouped agents share a route and speed so cohesion has something
    /// to hold together.
    pub n_groups: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub layout: Layout,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub corruption: CorruptionConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::minimal(1)
    }
}

impl SceneConfig {
    /// A solo-agent random scene with no corruption — the smallest valid
    /// config, useful as a test baseline.
    pub fn minimal(seed: u64) -> Self {
        SceneConfig {
            seed,
            arena: Bounds::new(0.0, 0.0, 10.0, 10.0).expect("static bounds"),
            n_frames: 40,
            n_agents: 1,
            n_groups: 0,
            speed_min: 0.04,
            speed_max: 0.08,
            layout: Layout::Random {
                waypoints_per_agent: 2,
            },
            physics: PhysicsConfig::default(),
            corruption: CorruptionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadConfig(msg));
        if Bounds::new(
            self.arena.x_min,
            self.arena.y_min,
            self.arena.x_max,
            self.arena.y_max,
        )
        .is_err()
        {
            return bad("arena bounds are degenerate or non-finite".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames must be >= 1".into());
        }
        if self.n_agents == 0 {
            return bad("n_agents must be >= 1".into());
        }
        if self.n_groups > self.n_agents {
            return bad(format!(
                "n_groups {} exceeds n_agents {}",
                self.n_groups, self.n_agents
            ));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad(format!(
                "speed range [{}, {}] must satisfy 0 < min <= max",
                self.speed_min, self.speed_max
            ));
        }
        match &self.layout {
            Layout::Random {
                waypoints_per_agent,
            } => {
                if *waypoints_per_agent == 0 {
                    return bad("waypoints_per_agent must be >= 1".into());
                }
            }
            Layout::Scripted { routes } => {
                if routes.len() != self.n_agents {
                    return bad(format!(
                        "scripted layout has {} routes for {} agents",
                        routes.len(),
                        self.n_agents
                    ));
                }
                for (i, r) in routes.iter().enumerate() {
                    if r.waypoints.is_empty() {
                        return bad(format!("agent {i} has no waypoints"));
                    }
                    if !(r.speed > 0.0 && r.speed <= self.speed_max) {
                        return bad(format!(
                            "agent {i} speed {} outside (0, {}]",
                            r.speed, self.speed_max
                        ));
                    }
                }
            }
        }
        let c = &self.corruption;
        if !(0.0..=1.0).contains(&c.p_miss) {
            return bad(format!("p_miss {} outside [0, 1]", c.p_miss));
        }
        if !c.jitter_sigma.is_finite() || c.jitter_sigma < 0.0 {
            return bad(format!("jitter_sigma {} must be >= 0", c.jitter_sigma));
        }
        if !c.clutter_rate.is_finite() || c.clutter_rate < 0.0 {
            return bad(format!("clutter_rate {} must be >= 0", c.clutter_rate));
        }
        for (i, o) in c.occlusions.iter().enumerate() {
            if o.agent >= self.n_agents {
                return bad(format!(
                    "occlusion {i} targets agent {} of {}",
                    o.agent, self.n_agents
                ));
            }
            if o.duration == 0 {
                return bad(format!("occlusion {i} has zero duration"));
            }
        }
        let p = &self.physics;
        for (name, v) in [
            ("relaxation_time", p.relaxation_time),
            ("repulsion_radius", p.repulsion_radius),
            ("waypoint_capture", p.waypoint_capture),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return bad(format!("{name} must be > 0"));
            }
        }
        for (name, v) in [
            ("repulsion_strength", p.repulsion_strength),
            ("cohesion_strength", p.cohesion_strength),
            ("comfort_distance", p.comfort_distance),
            ("cohesion_bound", p.cohesion_bound),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be >= 0"));
            }
        }
        Ok(())
    }
}

/// One agent's true trajectory: a stable id and a position for every frame
/// `1..=n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: u32,
    pub positions: Vec<Point2>,
    pub group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub agents: Vec<AgentTrack>,
    pub n_frames: usize,
}

impl GroundTruth {
    /// (id, position) of every agent at a 1-based frame.
    pub fn at_frame(&self, frame: i64) -> Vec<(u32, Point2)> {
        let idx = (frame - 1) as usize;
        self.agents
            .iter()
            .map(|a| (a.id, a.positions[idx]))
            .collect()
    }
}

/// Per-frame detections, index 0 holding frame 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub frames: Vec<Vec<Point2>>,
}

impl DetectionSet {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn total_detections(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

struct ResolvedAgent {
    waypoints: Vec<Point2>,
    speed: f64,
    group: Option<usize>,
}

/// Draw or copy each agent's start, route, speed and group membership.
fn resolve_agents(config: &SceneConfig, rng: &mut ChaCha8Rng) -> (Vec<Point2>, Vec<ResolvedAgent>) {
    let arena = &config.arena;
    // Keep random draws off the walls so repulsion can act before clamping.
    let inset = 0.05;
    let draw_point = |rng: &mut ChaCha8Rng| {
        Point2::new(
            rng.gen_range(arena.x_min + inset * arena.width()..arena.x_max - inset * arena.width()),
            rng.gen_range(
                arena.y_min + inset * arena.height()..arena.y_max - inset * arena.height(),
            ),
        )
    };
    match &config.layout {
        Layout::Scripted { routes } => {
            let starts = routes.iter().map(|r| r.start).collect();
            let agents = routes
                .iter()
                .enumerate()
                .map(|(i, r)| ResolvedAgent {
                    waypoints: r.waypoints.clone(),
                    speed: r.speed,
                    group: group_of(i, config.n_agents, config.n_groups),
                })
                .collect();
            (starts, agents)
        }
        Layout::Random {
            waypoints_per_agent,
        } => {
            // One route and speed per group so members actually travel
            // together; solo agents draw their own.
            let n_groups = config.n_groups;
            let group_routes: Vec<(Vec<Point2>, f64)> = (0..n_groups)
                .map(|_| {
                    let route = (0..*waypoints_per_agent).map(|_| draw_point(rng)).collect();
                    let speed = rng.gen_range(config.speed_min..=config.speed_max);
                    (route, speed)
                })
                .collect();
            let mut starts = Vec::with_capacity(config.n_agents);
            let mut agents = Vec::with_capacity(config.n_agents);
            for i in 0..config.n_agents {
                let group = group_of(i, config.n_agents, n_groups);
                match group {
                    Some(g) => {
                        let anchor = group_routes[g].0[0];
                        let dx = rng.gen_range(-0.3..0.3);
                        let dy = rng.gen_range(-0.3..0.3);
                        starts.push(Point2::new(anchor.x + dx, anchor.y + dy));
                        agents.push(ResolvedAgent {
                            waypoints: group_routes[g].0.clone(),
                            speed: group_routes[g].1,
                            group,
                        });
                    }
                    None => {
                        starts.push(draw_point(rng));
                        agents.push(ResolvedAgent {
                            waypoints: (0..*waypoints_per_agent).map(|_| draw_point(rng)).collect(),
                            speed: rng.gen_range(config.speed_min..=config.speed_max),
                            group: None,
                        });
                    }
                }
            }
            (starts, agents)
        }
    }
}

/// Agents are split into `n_groups` contiguous chunks; with 0 groups
/// everyone is solo.
fn group_of(agent: usize, n_agents: usize, n_groups: usize) -> Option<usize> {
    if n_groups == 0 {
        return None;
    }
    let per = n_agents.div_ceil(n_groups);
    Some((agent / per).min(n_groups - 1))
}

fn clamp_to_arena(p: Point2, arena: &Bounds) -> Point2 {
    Point2::new(
        p.x.clamp(arena.x_min, arena.x_max),
        p.y.clamp(arena.y_min, arena.y_max),
    )
}

/// One synchronous physics step over all agents.
fn step_dynamics(
    config: &SceneConfig,
    agents: &[ResolvedAgent],
    positions: &[Point2],
    velocities: &mut [Point2],
    waypoint_idx: &mut [usize],
) -> Vec<Point2> {
    let phys = &config.physics;
    let n = agents.len();
    // Group centroids from the pre-step snapshot.
    let mut centroid_sum = vec![(0.0, 0.0, 0usize); config.n_groups.max(1)];
    for (i, a) in agents.iter().enumerate() {
        if let Some(g) = a.group {
            centroid_sum[g].0 += positions[i].x;
            centroid_sum[g].1 += positions[i].y;
            centroid_sum[g].2 += 1;
        }
    }

    let mut next = Vec::with_capacity(n);
    for (i, agent) in agents.iter().enumerate() {
        let pos = positions[i];
        // Advance the route when the current waypoint is reached.
        let wp_count = agent.waypoints.len();
        if euclidean(pos, agent.waypoints[waypoint_idx[i]]) < phys.waypoint_capture && wp_count > 1
        {
            waypoint_idx[i] = (waypoint_idx[i] + 1) % wp_count;
        }
        let target = agent.waypoints[waypoint_idx[i]];
        let to_target = (target.x - pos.x, target.y - pos.y);
        let dist = (to_target.0 * to_target.0 + to_target.1 * to_target.1).sqrt();
        let desired = if dist > 1e-9 {
            (
                to_target.0 / dist * agent.speed,
                to_target.1 / dist * agent.speed,
            )
        } else {
            (0.0, 0.0)
        };
        let mut ax = (desired.0 - velocities[i].x) / phys.relaxation_time;
        let mut ay = (desired.1 - velocities[i].y) / phys.relaxation_time;

        // Exponential pairwise repulsion, directed away from each other.
        for (j, other) in positions.iter().enumerate() {
            if j == i {
                continue;
            }
            let dx = pos.x - other.x;
            let dy = pos.y - other.y;
            let d = (dx * dx + dy * dy).sqrt().max(1e-9);
            let push = phys.repulsion_strength * (-d / phys.repulsion_radius).exp();
            ax += push * dx / d;
            ay += push * dy / d;
        }

        // Pull stragglers back toward their group centroid.
        if let Some(g) = agent.group {
            let (sx, sy, count) = centroid_sum[g];
            if count > 1 {
                let cx = sx / count as f64;
                let cy = sy / count as f64;
                let dx = cx - pos.x;
                let dy = cy - pos.y;
                let d = (dx * dx + dy * dy).sqrt();
                if d > phys.comfort_distance {
                    let pull = phys.cohesion_strength * (d - phys.comfort_distance);
                    ax += pull * dx / d;
                    ay += pull * dy / d;
                }
            }
        }

        let mut vx = velocities[i].x + ax;
        let mut vy = velocities[i].y + ay;
        let speed = (vx * vx + vy * vy).sqrt();
        if speed > config.speed_max {
            vx *= config.speed_max / speed;
            vy *= config.speed_max / speed;
        }
        velocities[i] = Point2::new(vx, vy);
        next.push(clamp_to_arena(
            Point2::new(pos.x + vx, pos.y + vy),
            &config.arena,
        ));
    }
    next
}

/// Corrupt the ground truth into per-frame detections: occlusion scripts
/// suppress, misses drop, jitter perturbs, clutter adds.
fn corrupt(config: &SceneConfig, truth: &GroundTruth, rng: &mut ChaCha8Rng) -> DetectionSet {
    let c = &config.corruption;
    let jitter =
        (c.jitter_sigma > 0.0).then(|| Normal::new(0.0, c.jitter_sigma).expect("validated sigma"));
    let clutter =
        (c.clutter_rate > 0.0).then(|| Poisson::new(c.clutter_rate).expect("validated rate"));
    let arena = &config.arena;

    let mut frames = Vec::with_capacity(truth.n_frames);
    for f in 1..=truth.n_frames as i64 {
        let mut dets = Vec::new();
        for (i, agent) in truth.agents.iter().enumerate() {
            if c.occlusions.iter().any(|o| o.covers(i, f)) {
                continue;
            }
            if rng.gen::<f64>() < c.p_miss {
                continue;
            }
            let p = agent.positions[(f - 1) as usize];
            let det = match &jitter {
                Some(n) => Point2::new(p.x + n.sample(rng), p.y + n.sample(rng)),
                None => p,
            };
            dets.push(det);
        }
        if let Some(po) = &clutter {
            let k = po.sample(rng) as usize;
            for _ in 0..k {
                dets.push(Point2::new(
                    rng.gen_range(arena.x_min..arena.x_max),
                    rng.gen_range(arena.y_min..arena.y_max),
                ));
            }
        }
        frames.push(dets);
    }
    DetectionSet { frames }
}

/// Run a scene end to end: resolve the layout, integrate the dynamics for
/// `n_frames` steps, then corrupt. Deterministic per config.
pub fn generate(config: &SceneConfig) -> Result<(GroundTruth, DetectionSet), SimError> {
    config.validate()?;
    let mut scene_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (starts, agents) = resolve_agents(config, &mut scene_rng);

    let mut positions: Vec<Point2> = starts
        .iter()
        .map(|p| clamp_to_arena(*p, &config.arena))
        .collect();
    let mut velocities = vec![Point2::new(0.0, 0.0); agents.len()];
    let mut waypoint_idx = vec![0usize; agents.len()];
    let mut trajectories: Vec<Vec<Point2>> =
        vec![Vec::with_capacity(config.n_frames); agents.len()];

    for frame in 0..config.n_frames {
        if frame > 0 {
            positions = step_dynamics(
                config,
                &agents,
                &positions,
                &mut velocities,
                &mut waypoint_idx,
            );
        }
        for (t, p) in trajectories.iter_mut().zip(&positions) {
            t.push(*p);
        }
    }

    let truth = GroundTruth {
        agents: trajectories
            .into_iter()
            .zip(&agents)
            .enumerate()
            .map(|(i, (positions, a))| AgentTrack {
                id: (i + 1) as u32,
                positions,
                group: a.group,
            })
            .collect(),
        n_frames: config.n_frames,
    };

    let mut corruption_rng = ChaCha8Rng::seed_from_u64(config.seed ^ CORRUPTION_STREAM);
    let detections = corrupt(config, &truth, &mut corruption_rng);
    Ok((truth, detections))
}

/// Slide windows of `t_obs + t_pred` frames (stride 1) over every agent of
/// every scene, normalizing positions into the unit square by the scene's
/// arena. Neighbour windows are the other agents within `neighbour_radius`
/// (normalized units) of the subject at the window's last observed frame.
/// Trajectories too short for one window are skipped.
pub fn make_training_set(
    configs: &[SceneConfig],
    t_obs: usize,
    t_pred: usize,
    neighbour_radius: f64,
) -> Result<Vec<TrainSample>, SimError> {
    let mut samples = Vec::new();
    for config in configs {
        let (truth, _) = generate(config)?;
        let arena = &config.arena;
        let norm: Vec<Vec<Point2>> = truth
            .agents
            .iter()
            .map(|a| a.positions.iter().map(|p| arena.normalize(*p)).collect())
            .collect();
        let span = t_obs + t_pred;
        for (i, traj) in norm.iter().enumerate() {
            if traj.len() < span {
                continue;
            }
            for s in 0..=traj.len() - span {
                let end = s + t_obs - 1;
                let window = traj[s..s + t_obs].to_vec();
                let future = traj[s + t_obs..s + span].to_vec();
                let neighbours = norm
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .filter(|(_, other)| euclidean(traj[end], other[end]) <= neighbour_radius)
                    .map(|(_, other)| other[s..s + t_obs].to_vec())
                    .collect();
                samples.push(TrainSample {
                    window,
                    neighbours,
                    future,
                });
            }
        }
    }
    Ok(samples)
}

/// A named, frozen scene for the ablation/acceptance suite.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScene {
    pub name: &'static str,
    pub config: SceneConfig,
}

fn arena_10() -> Bounds {
    Bounds::new(0.0, 0.0, 10.0, 10.0).expect("static bounds")
}

fn route(start: (f64, f64), waypoints: &[(f64, f64)], speed: f64) -> AgentRoute {
    AgentRoute {
        start: Point2::new(start.0, start.1),
        waypoints: waypoints.iter().map(|&(x, y)| Point2::new(x, y)).collect(),
        speed,
    }
}

/// The frozen benchmark suite. Scene list, seeds and every constant are
/// fixed; regenerating any scene is bitwise reproducible.
pub fn standard_benchmark() -> Vec<BenchmarkScene> {
    let arena = arena_10();
    let scripted = |routes: Vec<AgentRoute>,
                    seed: u64,
                    n_frames: usize,
                    speed_max: f64,
                    corruption: CorruptionConfig| {
        SceneConfig {
            seed,
            arena,
            n_frames,
            n_agents: routes.len(),
            n_groups: 0,
            speed_min: 0.01,
            speed_max,
            layout: Layout::Scripted { routes },
            physics: PhysicsConfig::default(),
            corruption,
        }
    };

    vec![
        // Two pedestrians crossing diagonally through the centre.
        BenchmarkScene {
            name: "crossing_pair",
            config: scripted(
                vec![
                    route((1.0, 1.0), &[(9.0, 9.0), (1.0, 1.0)], 0.08),
                    route((9.0, 1.0), &[(1.0, 9.0), (9.0, 1.0)], 0.08),
                ],
                101,
                70,
                0.1,
                CorruptionConfig {
                    jitter_sigma: 0.02,
                    ..Default::default()
                },
            ),
        },
        // A four-person group walking a loop together.
        BenchmarkScene {
            name: "group_walk",
            config: SceneConfig {
                seed: 202,
                arena,
                n_frames: 80,
                n_agents: 4,
                n_groups: 1,
                speed_min: 0.05,
                speed_max: 0.09,
                layout: Layout::Random {
                    waypoints_per_agent: 3,
                },
                physics: PhysicsConfig::default(),
                corruption: CorruptionConfig {
                    p_miss: 0.05,
                    jitter_sigma: 0.02,
                    ..Default::default()
                },
            },
        },
        // A 3-frame occlusion: the everyday case, bridged by gating alone.
        BenchmarkScene {
            name: "occlusion_3",
            config: scripted(
                vec![
                    route((1.0, 3.0), &[(9.0, 3.0), (1.0, 3.0)], 0.06),
                    route((1.0, 7.0), &[(9.0, 7.0), (1.0, 7.0)], 0.06),
                ],
                303,
                60,
                0.1,
                CorruptionConfig {
                    occlusions: vec![OcclusionScript {
                        agent: 0,
                        start_frame: 25,
                        duration: 3,
                    }],
                    ..Default::default()
                },
            ),
        },
        // An 8-frame occlusion: the long-gap case the long-horizon predictor
        // has to carry. Slow walker so the reappearance stays inside the gate.
        BenchmarkScene {
            name: "occlusion_8",
            config: scripted(
                vec![
                    route((2.0, 5.0), &[(8.5, 5.0), (2.0, 5.0)], 0.035),
                    route((2.0, 8.5), &[(8.5, 8.5), (2.0, 8.5)], 0.035),
                ],
                404,
                80,
                0.06,
                CorruptionConfig {
                    occlusions: vec![OcclusionScript {
                        agent: 0,
                        start_frame: 30,
                        duration: 8,
                    }],
                    ..Default::default()
                },
            ),
        },
        // A 12-frame disappearance: past the termination age, so the id is
        // retired and a fresh one picks the walker up again.
        BenchmarkScene {
            name: "occlusion_12",
            config: scripted(
                vec![
                    route((2.0, 5.0), &[(8.5, 5.0), (2.0, 5.0)], 0.035),
                    route((2.0, 2.0), &[(8.5, 2.0), (2.0, 2.0)], 0.035),
                ],
                505,
                80,
                0.06,
                CorruptionConfig {
                    occlusions: vec![OcclusionScript {
                        agent: 0,
                        start_frame: 30,
                        duration: 12,
                    }],
                    ..Default::default()
                },
            ),
        },
        // Heavy uniform clutter over a few real walkers.
        BenchmarkScene {
            name: "clutter_storm",
            config: scripted(
                vec![
                    route((1.0, 2.0), &[(9.0, 8.0), (1.0, 2.0)], 0.07),
                    route((9.0, 2.0), &[(1.0, 8.0), (9.0, 2.0)], 0.07),
                    route((5.0, 1.0), &[(5.0, 9.0), (5.0, 1.0)], 0.07),
                ],
                606,
                70,
                0.1,
                CorruptionConfig {
                    p_miss: 0.05,
                    jitter_sigma: 0.03,
                    clutter_rate: 0.8,
                    ..Default::default()
                },
            ),
        },
        // Six walkers criss-crossing with jitter and misses near the gate
        // size — the duplicate-track stress test.
        BenchmarkScene {
            name: "dense_crossing",
            config: scripted(
                vec![
                    route((1.0, 1.5), &[(9.0, 8.5), (1.0, 1.5)], 0.08),
                    route((9.0, 1.5), &[(1.0, 8.5), (9.0, 1.5)], 0.08),
                    route((1.0, 5.0), &[(9.0, 5.0), (1.0, 5.0)], 0.08),
                    route((9.0, 4.0), &[(1.0, 4.0), (9.0, 4.0)], 0.08),
                    route((5.5, 1.0), &[(4.5, 9.0), (5.5, 1.0)], 0.08),
                    route((4.0, 9.0), &[(6.0, 1.0), (4.0, 9.0)], 0.08),
                ],
                707,
                90,
                0.1,
                CorruptionConfig {
                    p_miss: 0.12,
                    jitter_sigma: 0.08,
                    ..Default::default()
                },
            ),
        },
    ]
}
