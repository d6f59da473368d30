//! Epidemic simulation on a dynamic contact graph.
//!
//! A population of `n` nodes is partitioned (or covered, in overlapping mode)
//! by households. Household contacts repeat daily with fresh duration and
//! proximity attributes; cross-household contacts are resampled every day.
//! Infection follows a four-state machine per node: susceptible, infected
//! (not yet infectious), infectious between day offsets `k1..=k2`, infected
//! again until offset 13, recovered (terminal) from offset 14 on. The viral
//! load is drawn once per infection and stays constant for the whole 14-day
//! episode.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use rand::SeedableRng;

/// Total length of one infection episode in days.
pub const INFECTION_DAYS: u32 = 14;

/// Closed range for sampling an attribute like contact duration or proximity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMode {
    DisjointCliques,
    OverlappingAlmostCliques,
}

/// Simulation parameters. `household_dist[s]` is the probability of a
/// household of size `s + 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub t_max: usize,
    pub k1: u32,
    pub k2: u32,
    /// Stray-infection probability per susceptible node per day.
    pub p1: f64,
    /// Baseline transmission rate per (viral load x proximity x hour).
    pub lambda0: f64,
    /// Inter-clique contact intensity; the expected number of cross-household
    /// contacts per day is `alpha * n` (count drawn Binomial(n, alpha)).
    pub alpha: f64,
    pub viral_load_max: f64,
    pub household_dist: Vec<f64>,
    pub graph_mode: GraphMode,
    /// Fraction of intra-household edges removed once at construction
    /// (overlapping mode turns cliques into "almost-cliques").
    pub edge_drop_frac: f64,
    pub rng_seed: u64,
    #[serde(default = "default_intra_tau")]
    pub intra_tau: Range,
    #[serde(default = "default_intra_d")]
    pub intra_d: Range,
    #[serde(default = "default_inter_tau")]
    pub inter_tau: Range,
    #[serde(default = "default_inter_d")]
    pub inter_d: Range,
}

fn default_intra_tau() -> Range {
    Range { lo: 1.0, hi: 8.0 }
}
fn default_intra_d() -> Range {
    Range { lo: 0.5, hi: 1.0 }
}
fn default_inter_tau() -> Range {
    Range { lo: 0.1, hi: 1.0 }
}
fn default_inter_d() -> Range {
    Range { lo: 0.1, hi: 0.5 }
}

/// Household-size distribution used when none is configured, sizes 1..=7.
pub fn default_household_dist() -> Vec<f64> {
    vec![0.04, 0.10, 0.17, 0.25, 0.20, 0.13, 0.11]
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            t_max: 250,
            k1: 3,
            k2: 7,
            p1: 2e-4,
            lambda0: 4e-6,
            alpha: 0.05,
            viral_load_max: 32768.0,
            household_dist: default_household_dist(),
            graph_mode: GraphMode::DisjointCliques,
            edge_drop_frac: 0.0,
            rng_seed: 0,
            intra_tau: default_intra_tau(),
            intra_d: default_intra_d(),
            inter_tau: default_inter_tau(),
            inter_d: default_inter_d(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("population must be nonempty"));
        }
        if self.k1 == 0 || self.k1 > self.k2 {
            return Err(Error::config("need 0 < k1 <= k2"));
        }
        if u32::try_from(self.k2).unwrap() >= INFECTION_DAYS {
            return Err(Error::config("k2 must fall inside the 14-day episode"));
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::config("p1 must be in [0,1]"));
        }
        if self.lambda0 <= 0.0 {
            return Err(Error::config("lambda0 must be positive"));
        }
        if self.alpha < 0.0 {
            return Err(Error::config("alpha must be nonnegative"));
        }
        if self.viral_load_max <= 1.0 {
            return Err(Error::config("viral_load_max must exceed 1"));
        }
        validate_dist(&self.household_dist)?;
        if !(0.0..1.0).contains(&self.edge_drop_frac) {
            return Err(Error::config("edge_drop_frac must be in [0,1)"));
        }
        Ok(())
    }
}

fn validate_dist(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::config("household distribution has empty support"));
    }
    if dist.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::config("household distribution has negative mass"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "household distribution sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// One undirected contact, stored with `i < j`; `tau` in hours, `d` a
/// dimensionless proximity measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEdge {
    pub i: u32,
    pub j: u32,
    pub tau: f64,
    pub d: f64,
}

impl ContactEdge {
    pub fn new(a: u32, b: u32, tau: f64, d: f64) -> Result<Self> {
        if a == b {
            return Err(Error::structural("self-contact edge"));
        }
        if tau <= 0.0 || d <= 0.0 {
            return Err(Error::domain("contact attributes must be positive"));
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        Ok(ContactEdge { i, j, tau, d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthState {
    Susceptible,
    Infected,
    Infectious,
    Recovered,
}

impl HealthState {
    pub fn as_str(self) -> &'static str {
        match self {
            HealthState::Susceptible => "susceptible",
            HealthState::Infected => "infected",
            HealthState::Infectious => "infectious",
            HealthState::Recovered => "recovered",
        }
    }
}

/// Per-node epidemic state on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub state: HealthState,
    pub infection_day: Option<u32>,
    pub viral_load: f64,
}

impl NodeState {
    pub fn susceptible() -> Self {
        NodeState { state: HealthState::Susceptible, infection_day: None, viral_load: 0.0 }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, HealthState::Infected | HealthState::Infectious)
    }
}

/// Full simulated history: households, one contact graph and one truth
/// snapshot per day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContactTimeline {
    pub config: SimConfig,
    pub households: Vec<Vec<u32>>,
    pub daily_graphs: Vec<Vec<ContactEdge>>,
    pub daily_truth: Vec<Vec<NodeState>>,
}

impl ContactTimeline {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn t_max(&self) -> usize {
        self.config.t_max
    }

    /// Number of nodes with nonzero viral load on `day`.
    pub fn active_infections(&self, day: usize) -> usize {
        self.daily_truth[day].iter().filter(|s| s.is_active()).count()
    }

    /// Nodes ever infected up to and including `day`.
    pub fn cumulative_infections(&self, day: usize) -> usize {
        self.daily_truth[day].iter().filter(|s| s.infection_day.is_some()).count()
    }

    /// Binary infection indicator for one day.
    pub fn binary_truth(&self, day: usize) -> Vec<bool> {
        self.daily_truth[day].iter().map(NodeState::is_active).collect()
    }

    /// Viral loads for one day (zero outside infection episodes).
    pub fn viral_loads(&self, day: usize) -> Vec<f64> {
        self.daily_truth[day].iter().map(|s| s.viral_load).collect()
    }

    /// Mean fraction of active infections over a day range.
    pub fn mean_sparsity(&self, days: std::ops::Range<usize>) -> f64 {
        let len = days.len().max(1) as f64;
        days.map(|d| self.active_infections(d) as f64 / self.n() as f64).sum::<f64>() / len
    }
}

/// Draw a household cover of exactly `n` nodes. In disjoint mode households
/// partition the nodes; in overlapping mode two consecutive non-trivial
/// households share one node with probability 1/2.
pub fn sample_households(
    n: usize,
    dist: &[f64],
    mode: GraphMode,
    rng: &mut SimRng,
) -> Result<Vec<Vec<u32>>> {
    if n == 0 {
        return Err(Error::config("population must be nonempty"));
    }
    validate_dist(dist)?;
    let mut households: Vec<Vec<u32>> = Vec::new();
    let mut next = 0u32; // first unassigned node id
    let mut prev_nontrivial = false;
    while (next as usize) < n {
        let mut size = sample_size(dist, rng);
        let mut start = next;
        if mode == GraphMode::OverlappingAlmostCliques
            && prev_nontrivial
            && size > 1
            && start > 0
            && rng.random_bool(0.5)
        {
            start -= 1; // share the previous household's last node
        }
        // truncate the last household so ids end exactly at n
        size = size.min(n as u32 - start);
        if size == 0 {
            break;
        }
        households.push((start..start + size).collect());
        next = start + size;
        prev_nontrivial = size > 1;
    }
    Ok(households)
}

fn sample_size(dist: &[f64], rng: &mut SimRng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx as u32 + 1;
        }
    }
    dist.len() as u32
}

/// Transmission probability for one contact:
/// `1 - exp(-lambda0 * viral_load * d * tau)`.
pub fn infection_probability(viral_load: f64, d: f64, tau: f64, lambda0: f64) -> Result<f64> {
    for (name, v) in [("viral_load", viral_load), ("d", d), ("tau", tau), ("lambda0", lambda0)] {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::domain(format!("{name} must be nonnegative, got {v}")));
        }
    }
    Ok(-(-lambda0 * viral_load * d * tau).exp_m1())
}

/// Probability of infection given independent exposure probabilities:
/// `1 - prod(1 - p_k)`. Empty input gives 0.
pub fn combined_infection_probability(probs: &[f64]) -> Result<f64> {
    let mut log_escape = 0.0f64;
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability {p} outside [0,1]")));
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        log_escape += (1.0 - p).ln();
    }
    Ok(-log_escape.exp_m1())
}

/// Intra-household edge list (constant pair structure; attributes are
/// resampled daily). In overlapping mode a fraction of pairs is removed once.
fn household_pairs(
    households: &[Vec<u32>],
    edge_drop_frac: f64,
    rng: &mut SimRng,
) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for hh in households {
        for a in 0..hh.len() {
            for b in (a + 1)..hh.len() {
                pairs.push((hh[a], hh[b]));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    if edge_drop_frac > 0.0 {
        let keep = pairs.len() - (pairs.len() as f64 * edge_drop_frac).round() as usize;
        // deterministic subsample: shuffle then truncate
        pairs.shuffle(rng);
        pairs.truncate(keep);
        pairs.sort_unstable();
    }
    pairs
}

use rand::seq::SliceRandom;

/// Advance the population by one day. Susceptible nodes are exposed to their
/// infectious neighbors in `day_graph` plus the stray probability `p1`;
/// everyone else moves along the state machine by day offset.
pub fn evolve_day(
    states: &mut [NodeState],
    day: u32,
    day_graph: &[ContactEdge],
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<()> {
    let n = states.len();
    // advance previously infected nodes to their state for `day`
    for s in states.iter_mut() {
        if let Some(t0) = s.infection_day {
            debug_assert!(day >= t0);
            let offset = day - t0;
            s.state = if offset >= INFECTION_DAYS {
                s.viral_load = 0.0;
                HealthState::Recovered
            } else if offset >= config.k1 && offset <= config.k2 {
                HealthState::Infectious
            } else {
                HealthState::Infected
            };
        }
    }
    // accumulate per-susceptible escape probability from infectious contacts
    let mut log_escape = vec![0.0f64; n];
    for e in day_graph {
        let (i, j) = (e.i as usize, e.j as usize);
        if i >= n || j >= n {
            return Err(Error::structural(format!("edge ({}, {}) outside population", e.i, e.j)));
        }
        for (src, dst) in [(i, j), (j, i)] {
            if states[src].state == HealthState::Infectious
                && states[dst].state == HealthState::Susceptible
            {
                let p =
                    infection_probability(states[src].viral_load, e.d, e.tau, config.lambda0)?;
                log_escape[dst] += (1.0 - p).ln();
            }
        }
    }
    let load_dist = Uniform::new(1.0, config.viral_load_max)
        .map_err(|e| Error::Numerical(format!("viral load range: {e}")))?;
    for (idx, s) in states.iter_mut().enumerate() {
        if s.state != HealthState::Susceptible {
            continue;
        }
        let p_contact = -log_escape[idx].exp_m1();
        let p_total = 1.0 - (1.0 - p_contact) * (1.0 - config.p1);
        if rng.random::<f64>() < p_total {
            s.state = HealthState::Infected;
            s.infection_day = Some(day);
            s.viral_load = load_dist.sample(rng);
        }
    }
    Ok(())
}

/// Run the full simulation. Deterministic given `config.rng_seed`.
pub fn run_simulation(config: &SimConfig) -> Result<ContactTimeline> {
    config.validate()?;
    let mut rng = SimRng::seed_from_u64(config.rng_seed);
    let households = sample_households(config.n, &config.household_dist, config.graph_mode, &mut rng)?;
    let intra_pairs = household_pairs(&households, config.edge_drop_frac, &mut rng);

    let mut states = vec![NodeState::susceptible(); config.n];
    let mut daily_graphs = Vec::with_capacity(config.t_max);
    let mut daily_truth = Vec::with_capacity(config.t_max);

    let node_range = Uniform::new(0u32, config.n as u32)
        .map_err(|e| Error::Numerical(format!("node range: {e}")))?;
    let mut household_of = vec![usize::MAX; config.n];
    for (h, hh) in households.iter().enumerate() {
        for &v in hh {
            household_of[v as usize] = h; // overlap nodes keep the later id
        }
    }

    for day in 0..config.t_max {
        let mut edges = Vec::with_capacity(intra_pairs.len());
        for &(a, b) in &intra_pairs {
            edges.push(ContactEdge {
                i: a,
                j: b,
                tau: config.intra_tau.sample(&mut rng),
                d: config.intra_d.sample(&mut rng),
            });
        }
        // cross-household contacts, resampled daily
        let n_cross: u64 = rand_distr::Binomial::new(config.n as u64, config.alpha.min(1.0))
            .map_err(|e| Error::Numerical(format!("binomial: {e}")))?
            .sample(&mut rng);
        let mut seen: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
        for _ in 0..n_cross {
            // rejection-sample a cross-household pair
            for _attempt in 0..32 {
                let a = node_range.sample(&mut rng);
                let b = node_range.sample(&mut rng);
                if a == b || household_of[a as usize] == household_of[b as usize] {
                    continue;
                }
                let key = if a < b { (a, b) } else { (b, a) };
                if !seen.insert(key) {
                    continue;
                }
                edges.push(ContactEdge {
                    i: key.0,
                    j: key.1,
                    tau: config.inter_tau.sample(&mut rng),
                    d: config.inter_d.sample(&mut rng),
                });
                break;
            }
        }
        evolve_day(&mut states, day as u32, &edges, config, &mut rng)?;
        daily_graphs.push(edges);
        daily_truth.push(states.clone());
    }

    Ok(ContactTimeline { config: config.clone(), households, daily_graphs, daily_truth })
}

/// The 50-day testing window centered on the peak day of active infections:
/// `[t_peak - 24, t_peak + 25]`, clipped to keep the full 50-day length.
pub fn select_test_window(timeline: &ContactTimeline) -> Result<std::ops::Range<usize>> {
    const WINDOW: usize = 50;
    let t_max = timeline.t_max();
    if t_max < WINDOW {
        return Err(Error::config(format!("horizon {t_max} shorter than the {WINDOW}-day window")));
    }
    let mut peak_day = None;
    let mut peak = 0usize;
    for day in 0..t_max {
        let active = timeline.active_infections(day);
        if active > peak {
            peak = active;
            peak_day = Some(day);
        }
    }
    let peak_day = peak_day.ok_or_else(|| {
        Error::Numerical("epidemic never took off: no peak to center the window on".into())
    })?;
    let start = peak_day.saturating_sub(24).min(t_max - WINDOW);
    Ok(start..start + WINDOW)
}

/// Target statistic for `calibrate_lambda0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationTarget {
    /// Peak active-infection count inside `[lo, hi]`.
    PeakActive { lo: f64, hi: f64 },
    /// Mean active fraction over the selected 50-day window inside `[lo, hi]`.
    WindowSparsity { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub lambda0: f64,
    pub achieved: f64,
    pub in_band: bool,
    pub evaluations: usize,
}

/// Bisect `lambda0` (log scale, fixed seed) until the target statistic lands
/// in the requested band. The statistic is monotone in `lambda0` up to
/// seed noise; if the band is never hit the closest endpoint is returned
/// with `in_band = false`.
pub fn calibrate_lambda0(
    base: &SimConfig,
    target: CalibrationTarget,
    max_evals: usize,
) -> Result<CalibrationOutcome> {
    let (band_lo, band_hi) = match target {
        CalibrationTarget::PeakActive { lo, hi } | CalibrationTarget::WindowSparsity { lo, hi } => {
            (lo, hi)
        }
    };
    if band_lo > band_hi || band_lo < 0.0 {
        return Err(Error::config("calibration band must satisfy 0 <= lo <= hi"));
    }
    let stat = |lambda0: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let mut cfg = base.clone();
        cfg.lambda0 = lambda0;
        let timeline = run_simulation(&cfg)?;
        Ok(match target {
            CalibrationTarget::PeakActive { .. } => (0..cfg.t_max)
                .map(|d| timeline.active_infections(d))
                .max()
                .unwrap_or(0) as f64,
            CalibrationTarget::WindowSparsity { .. } => {
                match select_test_window(&timeline) {
                    Ok(w) => timeline.mean_sparsity(w),
                    Err(_) => 0.0, // epidemic never took off
                }
            }
        })
    };

    let mut evals = 0usize;
    let mut lo = 1e-9f64;
    let mut hi = 1e-2f64;
    let mut best = (lo, f64::INFINITY, 0.0); // (lambda0, distance, value)
    let mut track = |l: f64, v: f64, best: &mut (f64, f64, f64)| {
        let dist = if v < band_lo {
            band_lo - v
        } else if v > band_hi {
            v - band_hi
        } else {
            0.0
        };
        if dist < best.1 {
            *best = (l, dist, v);
        }
    };

    let v_lo = stat(lo, &mut evals)?;
    track(lo, v_lo, &mut best);
    if v_lo >= band_lo && v_lo <= band_hi {
        return Ok(CalibrationOutcome { lambda0: lo, achieved: v_lo, in_band: true, evaluations: evals });
    }
    let v_hi = stat(hi, &mut evals)?;
    track(hi, v_hi, &mut best);
    if v_hi >= band_lo && v_hi <= band_hi {
        return Ok(CalibrationOutcome { lambda0: hi, achieved: v_hi, in_band: true, evaluations: evals });
    }

    while evals < max_evals {
        let mid = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
        let v = stat(mid, &mut evals)?;
        track(mid, v, &mut best);
        if v >= band_lo && v <= band_hi {
            return Ok(CalibrationOutcome { lambda0: mid, achieved: v, in_band: true, evaluations: evals });
        }
        if v < band_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    Ok(CalibrationOutcome { lambda0: best.0, achieved: best.2, in_band: false, evaluations: evals })
}
