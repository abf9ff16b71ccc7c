//! Brute-force evaluation: posture sweeps, orientation clouds, batch runs
//! over solvers, the DLS-specific target correction and result filter, and
//! summary statistics.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{wrap_pi, Quat, Vec3};
use crate::io::{csv_err, sig6};
use crate::metrics::{error_breakdown, ErrorWeights};
use crate::registry::IkSolver;
use crate::skeleton::{Posture, Pose, Skeleton};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Angular step of the posture grid. When absent each joint's range is
    /// split into `posture_values` evenly spaced values.
    pub posture_step: Option<f64>,
    pub posture_values: usize,
    /// Yaw, pitch and twist counts over (−π, π].
    pub orientation_counts: [usize; 3],
    /// Seeded subsample sizes; all samples when absent.
    pub max_postures: Option<usize>,
    pub max_targets: Option<usize>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::desk_scale()
    }
}

impl SweepConfig {
    /// Five values per joint, a (12, 12, 5) cloud, at most 100 postures.
    pub fn desk_scale() -> Self {
        SweepConfig {
            posture_step: None,
            posture_values: 5,
            orientation_counts: [12, 12, 5],
            max_postures: Some(100),
            max_targets: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.posture_step {
            if !(s > 0.0) {
                return Err(invalid("posture_step must be positive"));
            }
        } else if self.posture_values == 0 {
            return Err(invalid("posture_values must be positive"));
        }
        if self.orientation_counts.contains(&0) {
            return Err(invalid("orientation counts must be positive"));
        }
        Ok(())
    }
}

/// Whether posture sweeps vary joint `k`; twisting roots and end-points
/// do not change the shape.
pub fn is_swept(skel: &Skeleton, k: usize) -> bool {
    let l = &skel.links[k];
    !(l.is_twister && (k == 0 || skel.is_ee(k)))
}

fn joint_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let full_turn = max - min >= std::f64::consts::TAU - 1e-9;
    let count = ((max - min) / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=count).map(|i| min + i as f64 * step).collect();
    if (g.last().copied().unwrap_or(min) - max).abs() > 1e-9 {
        g.push(max);
    }
    if full_turn && g.len() > 1 {
        g.pop();
    }
    g
}

/// Cartesian product of the per-joint grids, first joint slowest. Unswept
/// joints rest at 0.
pub fn generate_postures(skel: &Skeleton, step: f64) -> Result<Vec<Posture>> {
    if !(step > 0.0) {
        return Err(invalid("posture step must be positive"));
    }
    let grids: Vec<Vec<f64>> = (0..skel.n_dofs())
        .map(|k| {
            let l = &skel.links[k];
            if is_swept(skel, k) {
                joint_grid(l.min_theta, l.max_theta, step)
            } else {
                vec![0.0f64.clamp(l.min_theta, l.max_theta)]
            }
        })
        .collect();
    product(&grids).iter().map(|a| Pose::from_angles(skel, a)).collect()
}

/// Grid with `values` samples per swept joint, each over its own range.
pub fn generate_postures_by_count(skel: &Skeleton, values: usize) -> Result<Vec<Posture>> {
    if values == 0 {
        return Err(invalid("posture value count must be positive"));
    }
    let grids: Vec<Vec<f64>> = (0..skel.n_dofs())
        .map(|k| {
            let l = &skel.links[k];
            if !is_swept(skel, k) {
                vec![0.0f64.clamp(l.min_theta, l.max_theta)]
            } else if values == 1 {
                vec![(l.min_theta + l.max_theta) / 2.0]
            } else {
                joint_grid(l.min_theta, l.max_theta, (l.max_theta - l.min_theta) / (values - 1) as f64)
            }
        })
        .collect();
    product(&grids).iter().map(|a| Pose::from_angles(skel, a)).collect()
}

fn product(grids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grids.iter().fold(vec![Vec::new()], |acc, g| {
        acc.iter()
            .flat_map(|pre| {
                g.iter().map(move |&v| {
                    let mut p = pre.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

/// n angles centred on zero, spaced 2π/n, in (−π, π].
fn cloud_axis(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let a = wrap_pi(std::f64::consts::TAU * k as f64 / n as f64);
            if a <= -std::f64::consts::PI + 1e-12 {
                std::f64::consts::PI
            } else {
                a
            }
        })
        .collect()
}

/// Yaw about Ŷ, pitch about X̂, then twist about Ŷ.
pub fn ypr_quat(yaw: f64, pitch: f64, roll: f64) -> Quat {
    Quat::from_axis_angle(Vec3::Y, yaw) * Quat::from_axis_angle(Vec3::X, pitch) * Quat::from_axis_angle(Vec3::Y, roll)
}

fn rotation_key(q: Quat) -> [i64; 4] {
    let q = q.normalized();
    let c = [q.w, q.v.x, q.v.y, q.v.z];
    let lead = c.iter().copied().find(|x| x.abs() > 1e-9).unwrap_or(1.0);
    let s = if lead < 0.0 { -1.0 } else { 1.0 };
    c.map(|x| (s * x * 1e8).round() as i64)
}

/// Grid compositions, plus the quarter-turn compositions (which hold the
/// six axis-aligned directions and every ±π case) whenever all three counts
/// exceed one. Identical rotations appear once, in first-seen order.
pub fn generate_orientation_cloud(counts: [usize; 3], include_roll: bool) -> Vec<Quat> {
    let roll_count = if include_roll { counts[2] } else { 1 };
    let (hs, vs, ts) = (cloud_axis(counts[0]), cloud_axis(counts[1]), cloud_axis(roll_count));
    let mut all = Vec::new();
    for &h in &hs {
        for &v in &vs {
            for &t in &ts {
                all.push(ypr_quat(h, v, t));
            }
        }
    }
    if counts.iter().all(|&c| c > 1) {
        let quarter = cloud_axis(4);
        let rolls = if include_roll { quarter.clone() } else { vec![0.0] };
        for &h in &quarter {
            for &v in &quarter {
                for &t in &rolls {
                    all.push(ypr_quat(h, v, t));
                }
            }
        }
    }
    let mut seen = HashSet::new();
    all.into_iter().filter(|q| seen.insert(rotation_key(*q))).collect()
}

/// Twists targets half a turn about their own pointing axis where the
/// five-joint test arm cannot present the unflipped up-side: targets facing
/// forward (+Z) must have their Z column pointing down, targets facing
/// backward must have it pointing up.
pub fn dls_target_correction(tau: Quat) -> Quat {
    let forward = tau.y_axis().z >= 0.0;
    let up = tau.z_axis().y;
    if (forward && up > 0.0) || (!forward && up < 0.0) {
        tau * Quat::from_axis_angle(Vec3::Y, std::f64::consts::PI)
    } else {
        tau
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub skeleton: String,
    pub posture_id: usize,
    pub target_id: usize,
    pub solver: String,
    pub iterations: usize,
    pub time_ms: f64,
    pub err_combined: f64,
    pub err_orientation: f64,
    pub err_posture: f64,
    /// Panic or error message of a failed sample; errors are NaN then.
    pub failure: Option<String>,
}

impl SampleResult {
    pub fn key(&self) -> (&str, usize, usize) {
        (&self.skeleton, self.posture_id, self.target_id)
    }
}

/// Postures and targets of one skeleton after subsampling, with their
/// original ids.
pub struct SweepSet {
    pub postures: Vec<(usize, Posture)>,
    pub targets: Vec<(usize, Quat)>,
}

fn subsample<T: Clone>(items: Vec<T>, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<(usize, T)> {
    match max {
        Some(m) if m < items.len() => {
            let mut idx = rand::seq::index::sample(rng, items.len(), m).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| (i, items[i].clone())).collect()
        }
        _ => items.into_iter().enumerate().collect(),
    }
}

pub fn sweep_set(skel: &Skeleton, sweep: &SweepConfig) -> Result<SweepSet> {
    sweep.validate()?;
    let postures = match sweep.posture_step {
        Some(s) => generate_postures(skel, s)?,
        None => generate_postures_by_count(skel, sweep.posture_values)?,
    };
    let targets = generate_orientation_cloud(sweep.orientation_counts, true);
    let mut rng = ChaCha8Rng::seed_from_u64(sweep.seed);
    Ok(SweepSet {
        postures: subsample(postures, sweep.max_postures, &mut rng),
        targets: subsample(targets, sweep.max_targets, &mut rng),
    })
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs one solver on one sample. Panics and errors become failed records.
pub fn run_sample(
    solver: &dyn IkSolver,
    skel: &Skeleton,
    ids: (usize, usize),
    psi: &Posture,
    tau: Quat,
    weights: &ErrorWeights,
) -> SampleResult {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(|| solver.solve(skel, tau, psi)));
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut r = SampleResult {
        skeleton: skel.name.clone(),
        posture_id: ids.0,
        target_id: ids.1,
        solver: solver.name().to_string(),
        iterations: 0,
        time_ms,
        err_combined: f64::NAN,
        err_orientation: f64::NAN,
        err_posture: f64::NAN,
        failure: None,
    };
    let measured = match out {
        Ok(Ok(o)) => {
            r.iterations = o.iterations;
            error_breakdown(&o.pose, tau, psi, skel, weights, solver.symmetric_endpoint())
        }
        Ok(Err(e)) => Err(e),
        Err(p) => {
            r.failure = Some(panic_message(p));
            return r;
        }
    };
    match measured {
        Ok(e) => {
            r.err_combined = e.combined;
            r.err_orientation = e.orientation;
            r.err_posture = e.posture;
        }
        Err(e) => r.failure = Some(e.to_string()),
    }
    r
}

/// Every (posture, target) pair of every skeleton through every solver,
/// ordered by (skeleton, posture, target, solver position).
pub fn run_batch(
    skeletons: &[Skeleton],
    solvers: &[&dyn IkSolver],
    sweep: &SweepConfig,
    weights: &ErrorWeights,
    threads: Option<usize>,
) -> Result<Vec<SampleResult>> {
    let sets: Vec<SweepSet> = skeletons.iter().map(|s| sweep_set(s, sweep)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = sets
        .iter()
        .enumerate()
        .flat_map(|(s, set)| {
            (0..set.postures.len()).flat_map(move |p| (0..set.targets.len()).map(move |t| (s, p, t)))
        })
        .collect();
    let work = || -> Vec<SampleResult> {
        jobs.par_iter()
            .flat_map_iter(|&(s, p, t)| {
                let (pid, psi) = &sets[s].postures[p];
                let (tid, tau) = sets[s].targets[t];
                solvers
                    .iter()
                    .map(move |solver| run_sample(*solver, &skeletons[s], (*pid, tid), psi, tau, weights))
            })
            .collect()
    };
    Ok(match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(e.to_string()))?
            .install(work),
        None => work(),
    })
}

/// Drops every sample whose no-posture DLS counterpart misses the
/// orientation by more than three thresholds.
pub fn filter_dls_results(
    results: &[SampleResult],
    nopost: &[SampleResult],
    threshold: f64,
) -> Result<Vec<SampleResult>> {
    let map: HashMap<(&str, usize, usize), f64> = nopost.iter().map(|r| (r.key(), r.err_orientation)).collect();
    let mut kept = Vec::new();
    for r in results {
        let e = *map.get(&r.key()).ok_or_else(|| {
            invalid(format!(
                "no no-posture counterpart for skeleton {} posture {} target {}",
                r.skeleton, r.posture_id, r.target_id
            ))
        })?;
        if !(e > 3.0 * threshold) {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

/// Population statistics; all zero for an empty slice.
pub fn stats(xs: &[f64]) -> Stats {
    if xs.is_empty() {
        return Stats::default();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    let median = if m % 2 == 1 { s[m / 2] } else { (s[m / 2 - 1] + s[m / 2]) / 2.0 };
    Stats {
        min: s[0],
        max: s[m - 1],
        mean,
        sd: var.sqrt(),
        median,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub skeleton: String,
    pub solver: String,
    pub samples: usize,
    pub failed: usize,
    pub iterations: Stats,
    pub time_ms: Stats,
    pub err_combined: Stats,
    pub err_orientation: Stats,
    pub err_posture: Stats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub skeleton: String,
    pub solver: String,
    pub measure: &'static str,
    pub low: f64,
    pub high: f64,
    pub count: usize,
    /// Count expected in the bin under the fitted normal curve.
    pub normal_expected: f64,
}

fn groups(results: &[SampleResult]) -> Vec<((String, String), Vec<&SampleResult>)> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut map: HashMap<(String, String), Vec<&SampleResult>> = HashMap::new();
    for r in results {
        let k = (r.skeleton.clone(), r.solver.clone());
        if !map.contains_key(&k) {
            order.push(k.clone());
        }
        map.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let v = map.remove(&k).expect("group present");
            (k, v)
        })
        .collect()
}

/// Per-(skeleton, solver) statistics over successful samples, in first-seen
/// order.
pub fn summarize(results: &[SampleResult]) -> Vec<SummaryRow> {
    groups(results)
        .into_iter()
        .map(|((skeleton, solver), rs)| {
            let ok: Vec<&SampleResult> = rs.iter().copied().filter(|r| r.failure.is_none()).collect();
            let col = |f: fn(&SampleResult) -> f64| stats(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                skeleton,
                solver,
                samples: rs.len(),
                failed: rs.len() - ok.len(),
                iterations: col(|r| r.iterations as f64),
                time_ms: col(|r| r.time_ms),
                err_combined: col(|r| r.err_combined),
                err_orientation: col(|r| r.err_orientation),
                err_posture: col(|r| r.err_posture),
            }
        })
        .collect()
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + erf((x - mean) / (sd * std::f64::consts::SQRT_2)))
}

// Abramowitz-Stegun 7.1.26, |error| < 1.5e-7
fn erf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t + 0.254829592)
            * t
            * (-x * x).exp();
    y.copysign(x)
}

/// `bins` equal-width bins over [0, max] per error measure, with the count
/// a normal curve of the same mean and sd would put in each.
pub fn histograms(results: &[SampleResult], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let mut out = Vec::new();
    for ((skeleton, solver), rs) in groups(results) {
        let ok: Vec<&SampleResult> = rs.into_iter().filter(|r| r.failure.is_none()).collect();
        let measures: [(&'static str, fn(&SampleResult) -> f64); 3] = [
            ("combined", |r| r.err_combined),
            ("orientation", |r| r.err_orientation),
            ("posture", |r| r.err_posture),
        ];
        for (measure, f) in measures {
            let xs: Vec<f64> = ok.iter().map(|r| f(r)).collect();
            let st = stats(&xs);
            let width = if st.max > 0.0 { st.max / bins as f64 } else { 1.0 / bins as f64 };
            let mut counts = vec![0usize; bins];
            for &x in &xs {
                counts[((x / width) as usize).min(bins - 1)] += 1;
            }
            for (i, &count) in counts.iter().enumerate() {
                let (low, high) = (i as f64 * width, (i + 1) as f64 * width);
                let normal_expected = if st.sd > 0.0 {
                    xs.len() as f64 * (normal_cdf(high, st.mean, st.sd) - normal_cdf(low, st.mean, st.sd))
                } else if st.mean >= low && (st.mean < high || i == bins - 1) {
                    xs.len() as f64
                } else {
                    0.0
                };
                out.push(HistogramBin {
                    skeleton: skeleton.clone(),
                    solver: solver.clone(),
                    measure,
                    low,
                    high,
                    count,
                    normal_expected,
                });
            }
        }
    }
    out
}

pub const RESULT_HEADER: [&str; 9] = [
    "skeleton",
    "posture_id",
    "target_id",
    "solver",
    "iterations",
    "time_ms",
    "err_combined",
    "err_orientation",
    "err_posture",
];

pub fn write_results<W: Write>(results: &[SampleResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER).map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.skeleton.clone(),
            r.posture_id.to_string(),
            r.target_id.to_string(),
            r.solver.clone(),
            r.iterations.to_string(),
            sig6(r.time_ms),
            sig6(r.err_combined),
            sig6(r.err_orientation),
            sig6(r.err_posture),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn stat_fields(s: &Stats, with_median: bool) -> Vec<String> {
    let mut v = vec![sig6(s.min), sig6(s.max), sig6(s.mean), sig6(s.sd)];
    if with_median {
        v.push(sig6(s.median));
    }
    v
}

/// Summary CSV; the first line is a comment naming the host.
pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    writeln!(
        out,
        "# hardware: {} {}, {} threads; wall times are raw local times",
        std::env::consts::ARCH,
        std::env::consts::OS,
        threads
    )?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["skeleton", "solver", "samples", "failed"];
    header.extend(["iter_min", "iter_max", "iter_mean", "iter_sd"]);
    header.extend(["time_ms_min", "time_ms_max", "time_ms_mean", "time_ms_sd", "time_ms_median"]);
    header.extend(["combined_mean", "combined_sd", "orientation_mean", "orientation_sd", "posture_mean", "posture_sd"]);
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.skeleton.clone(), r.solver.clone(), r.samples.to_string(), r.failed.to_string()];
        rec.extend(stat_fields(&r.iterations, false));
        rec.extend(stat_fields(&r.time_ms, true));
        for s in [&r.err_combined, &r.err_orientation, &r.err_posture] {
            rec.extend([sig6(s.mean), sig6(s.sd)]);
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histograms<W: Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["skeleton", "solver", "measure", "bin_low", "bin_high", "count", "normal_expected"])
        .map_err(csv_err)?;
    for b in bins {
        w.write_record([
            b.skeleton.clone(),
            b.solver.clone(),
            b.measure.to_string(),
            sig6(b.low),
            sig6(b.high),
            b.count.to_string(),
            sig6(b.normal_expected),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
