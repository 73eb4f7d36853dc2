//! Exact event-driven Monte-Carlo simulation of fluid models.
//!
//! Every path draws from its own ChaCha stream (seed, path index), and sums
//! are reduced chunk by chunk in index order, so estimates do not depend on
//! the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SfmError};
use crate::model::SfmModel;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub paths: usize,
    pub horizon: f64,
    /// Starting level.
    pub level: f64,
    /// Law of the starting phase.
    pub phase_law: Vec<f64>,
}

impl SimConfig {
    /// Start at `level` in a fixed phase.
    pub fn from_phase(seed: u64, paths: usize, horizon: f64, level: f64, phase: usize, phases: usize) -> Self {
        let mut phase_law = vec![0.0; phases];
        if phase < phases {
            phase_law[phase] = 1.0;
        }
        SimConfig { seed, paths, horizon, level, phase_law }
    }

    pub fn validate(&self, model: &SfmModel) -> Result<()> {
        if self.paths == 0 {
            return Err(SfmError::InvalidArgument("at least one path is required".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(SfmError::InvalidArgument(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(SfmError::InvalidArgument(format!("starting level {} must be nonnegative", self.level)));
        }
        let m = model.phase_count();
        let total: f64 = self.phase_law.iter().sum();
        if self.phase_law.len() != m || self.phase_law.iter().any(|&g| !(g >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(SfmError::InvalidArgument(format!("starting phase law must be a probability vector of length {m}")));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Whether `value` lies within `k` standard errors.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }

    /// `|mean − value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Phase jump tables.
#[derive(Debug, Clone)]
struct Dynamics {
    rates: Vec<f64>,
    exit: Vec<f64>,
    /// Cumulative jump probabilities and targets per phase.
    jumps: Vec<Vec<(f64, usize)>>,
    start: Vec<f64>,
}

impl Dynamics {
    fn new(model: &SfmModel, phase_law: &[f64]) -> Self {
        let t = model.generator();
        let m = model.phase_count();
        let mut jumps = Vec::with_capacity(m);
        let mut exit = Vec::with_capacity(m);
        for i in 0..m {
            let q = -t[(i, i)];
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in 0..m {
                if j != i && t[(i, j)] > 0.0 {
                    acc += t[(i, j)] / q;
                    row.push((acc, j));
                }
            }
            if let Some(last) = row.last_mut() {
                last.0 = f64::INFINITY;
            }
            jumps.push(row);
            exit.push(q);
        }
        let mut acc = 0.0;
        let start = phase_law
            .iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect();
        Dynamics { rates: model.rates().iter().copied().collect(), exit, jumps, start }
    }

    fn initial_phase(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random::<f64>() * self.start.last().copied().unwrap_or(1.0);
        self.start.iter().position(|&c| u < c).unwrap_or(self.start.len() - 1)
    }

    fn holding(&self, phase: usize, rng: &mut ChaCha8Rng) -> f64 {
        let q = self.exit[phase];
        if q > 0.0 {
            -(1.0 - rng.random::<f64>()).ln() / q
        } else {
            f64::INFINITY
        }
    }

    fn next_phase(&self, phase: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        self.jumps[phase].iter().find(|(c, _)| u < *c).map(|&(_, j)| j).unwrap_or(phase)
    }
}

/// A sojourn: on `[t0, t1)` the phase is fixed and the level is
/// `max(x0 + c(t − t0), 0)`, with the level pinned at zero once reached.
#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    t1: f64,
    x0: f64,
    phase: usize,
    rate: f64,
}

impl Segment {
    fn level_at(&self, t: f64) -> f64 {
        if self.x0 == 0.0 && self.rate <= 0.0 {
            0.0
        } else {
            (self.x0 + self.rate * (t - self.t0)).max(0.0)
        }
    }

    /// First time in the segment at which the level reaches `y`.
    fn hits(&self, y: f64) -> Option<f64> {
        if self.rate == 0.0 || (self.x0 == 0.0 && self.rate < 0.0) {
            return None;
        }
        let th = self.t0 + (y - self.x0) / self.rate;
        (th > self.t0 && th <= self.t1).then_some(th)
    }
}

struct Path<'a> {
    dyn_: &'a Dynamics,
    rng: ChaCha8Rng,
    t: f64,
    x: f64,
    phase: usize,
}

impl<'a> Path<'a> {
    fn new(dyn_: &'a Dynamics, seed: u64, index: u64, level: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let phase = dyn_.initial_phase(&mut rng);
        Path { dyn_, rng, t: 0.0, x: level, phase }
    }

    fn next(&mut self) -> Segment {
        let dt = self.dyn_.holding(self.phase, &mut self.rng);
        let rate = self.dyn_.rates[self.phase];
        let seg = Segment { t0: self.t, t1: self.t + dt, x0: self.x, phase: self.phase, rate };
        if dt.is_finite() {
            self.x = seg.level_at(seg.t1);
            self.t = seg.t1;
            self.phase = self.dyn_.next_phase(self.phase, &mut self.rng);
        }
        seg
    }
}

/// Sums of per-path observation vectors, reduced in a fixed order.
fn run<F>(model: &SfmModel, cfg: &SimConfig, cells: usize, observe: F) -> Result<Vec<Estimate>>
where
    F: Fn(&mut Path, &mut [f64]) + Sync,
{
    cfg.validate(model)?;
    let dyn_ = Dynamics::new(model, &cfg.phase_law);
    let chunks = cfg.paths.div_ceil(CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; cells];
            let mut sq = vec![0.0; cells];
            let mut obs = vec![0.0; cells];
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.paths) {
                obs.iter_mut().for_each(|o| *o = 0.0);
                let mut path = Path::new(&dyn_, cfg.seed, i as u64, cfg.level);
                observe(&mut path, &mut obs);
                for k in 0..cells {
                    sum[k] += obs[k];
                    sq[k] += obs[k] * obs[k];
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; cells];
    let mut sq = vec![0.0; cells];
    for (s, q) in &partial {
        for k in 0..cells {
            sum[k] += s[k];
            sq[k] += q[k];
        }
    }
    let n = cfg.paths as f64;
    Ok(sum
        .iter()
        .zip(&sq)
        .map(|(&s, &q)| {
            let mean = s / n;
            let var = if cfg.paths > 1 { ((q - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            Estimate { mean, std_error: (var / n).sqrt() }
        })
        .collect())
}

/// Walks a path through increasing times, calling `at(k, level, phase)` for
/// each `times[k]` below the horizon.
fn observe_times(path: &mut Path, times: &[f64], mut at: impl FnMut(usize, f64, usize)) {
    let mut k = 0;
    while k < times.len() {
        let seg = path.next();
        while k < times.len() && times[k] < seg.t1 {
            at(k, seg.level_at(times[k]), seg.phase);
            k += 1;
        }
    }
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.windows(2).any(|w| w[0] > w[1]) || times.iter().any(|&t| !(t >= 0.0) || t > horizon) {
        return Err(SfmError::InvalidArgument("observation times must be sorted and within the horizon".into()));
    }
    Ok(())
}

/// `P(X(t) = 0, φ(t) = i)` for each time, row-major over (time, phase).
pub fn boundary_probabilities(model: &SfmModel, cfg: &SimConfig, times: &[f64]) -> Result<Vec<Vec<Estimate>>> {
    check_times(times, cfg.horizon)?;
    let m = model.phase_count();
    let est = run(model, cfg, times.len() * m, |path, obs| {
        observe_times(path, times, |k, x, i| {
            if x == 0.0 {
                obs[k * m + i] = 1.0;
            }
        })
    })?;
    Ok(est.chunks(m).map(|c| c.to_vec()).collect())
}

/// Silverman's rule for a Gaussian kernel.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n < 2 {
        return 1.0;
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((n - 1) as f64 * p).round() as usize];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

/// Kernel estimate of the level density `f_i(x, t)` on `X(t) > 0`, for each
/// `x` in `levels`, row-major over (level, phase). Returns the bandwidth used.
pub fn level_density(model: &SfmModel, cfg: &SimConfig, t: f64, levels: &[f64]) -> Result<(Vec<Vec<Estimate>>, f64)> {
    check_times(&[t], cfg.horizon)?;
    // Bandwidth from a pilot run on a disjoint stream range.
    let pilot_n = cfg.paths.clamp(1, 20_000);
    let dyn_ = Dynamics::new(model, &cfg.phase_law);
    let mut pilot = Vec::with_capacity(pilot_n);
    for i in 0..pilot_n {
        let mut path = Path::new(&dyn_, cfg.seed ^ 0x9e37_79b9_7f4a_7c15, i as u64, cfg.level);
        observe_times(&mut path, &[t], |_, x, _| {
            if x > 0.0 {
                pilot.push(x)
            }
        });
    }
    let h = silverman_bandwidth(&pilot) * (pilot_n as f64 / cfg.paths as f64).powf(0.2);
    let m = model.phase_count();
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let est = run(model, cfg, levels.len() * m, |path, obs| {
        observe_times(path, &[t], |_, x, i| {
            if x > 0.0 {
                for (k, &y) in levels.iter().enumerate() {
                    // Reflection at the boundary keeps mass on (0, ∞).
                    let u = (y - x) / h;
                    let v = (y + x) / h;
                    obs[k * m + i] = norm * ((-0.5 * u * u).exp() + (-0.5 * v * v).exp());
                }
            }
        })
    })?;
    Ok((est.chunks(m).map(|c| c.to_vec()).collect(), h))
}

/// Outcome of a two-boundary passage from level `x` in `(0, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageEstimates {
    /// `E[e^{−sτ}; level 0 hit first, in phase j]`, one entry per phase.
    pub lower: Vec<Estimate>,
    /// `E[e^{−sτ}; level y hit first, in phase j]`.
    pub upper: Vec<Estimate>,
    /// Fraction of paths still between the levels at the horizon.
    pub censored: f64,
}

/// First-passage transforms between levels 0 and `y` at real `s ≥ 0`.
pub fn passage_transform(model: &SfmModel, cfg: &SimConfig, y: f64, s: f64) -> Result<PassageEstimates> {
    if !(cfg.level > 0.0 && cfg.level < y) || !(s >= 0.0) {
        return Err(SfmError::InvalidArgument(format!("need 0 < x < y and s >= 0, got x = {}, y = {y}, s = {s}", cfg.level)));
    }
    let m = model.phase_count();
    let horizon = cfg.horizon;
    let est = run(model, cfg, 2 * m + 1, |path, obs| loop {
        let seg = path.next();
        let lo = seg.hits(0.0);
        let hi = seg.hits(y);
        match (lo, hi) {
            (Some(t), _) if t <= horizon => {
                obs[seg.phase] = (-s * t).exp();
                return;
            }
            (_, Some(t)) if t <= horizon => {
                obs[m + seg.phase] = (-s * t).exp();
                return;
            }
            _ if seg.t1 >= horizon => {
                obs[2 * m] = 1.0;
                return;
            }
            _ => {}
        }
    })?;
    Ok(PassageEstimates { lower: est[..m].to_vec(), upper: est[m..2 * m].to_vec(), censored: est[2 * m].mean })
}

/// Probability that the level reaches 0 before the horizon, for a path that
/// is abandoned as safe once the level reaches `stop_above`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuinEstimate {
    pub ruin: Estimate,
    /// Fraction of paths neither ruined nor stopped by the horizon.
    pub censored: f64,
}

pub fn ruin_frequency(model: &SfmModel, cfg: &SimConfig, stop_above: f64) -> Result<RuinEstimate> {
    if !(stop_above > cfg.level) {
        return Err(SfmError::InvalidArgument(format!("stop level {stop_above} must exceed the start {}", cfg.level)));
    }
    let horizon = cfg.horizon;
    let est = run(model, cfg, 2, |path, obs| loop {
        let seg = path.next();
        if let Some(t) = seg.hits(0.0) {
            if t <= horizon {
                obs[0] = 1.0;
            } else {
                obs[1] = 1.0;
            }
            return;
        }
        if seg.hits(stop_above).is_some() {
            return;
        }
        if seg.t1 >= horizon {
            obs[1] = 1.0;
            return;
        }
    })?;
    Ok(RuinEstimate { ruin: est[0], censored: est[1].mean })
}
