//! Seeded Monte Carlo drivers: recovery-vs-SR curves and (rank, SR) phase
//! grids over random tensor rings.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{df_square_unfolding, df_tensor_ring};
use crate::error::{Error, Result};
use crate::metrics::relative_error;
use crate::sampling::{samples_for_rate, ObservationMask};
use crate::solver::{trbu_complete, unfolding_count, SolverConfig};
use crate::tr::{numerical_rank, TrFactors};

pub const CURVE_THRESHOLD: f64 = 1e-6;
pub const GRID_THRESHOLD: f64 = 1e-4;

/// Sampling rates `lo/20, …, hi/20`.
pub fn sr_steps(lo: usize, hi: usize) -> Vec<f64> {
    (lo..=hi).map(|k| k as f64 / 20.0).collect()
}

/// One completion run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub len: usize,
    pub sr: f64,
    pub samples: usize,
    pub trial: usize,
    pub seed: u64,
    /// NaN when the solver failed.
    pub re: f64,
    pub success: bool,
    pub iters: usize,
    pub seconds: f64,
    /// Numerical rank of the balanced unfolding of the estimate, when requested.
    pub unfolding_rank: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub r: usize,
    pub sr: f64,
    pub rate: f64,
    pub df_m_ratio: f64,
    pub df_tr_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub records: Vec<TrialRecord>,
    /// Filled by [`run_phase_grid`].
    pub grid: Vec<GridCell>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct CurveSpec {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub sr_list: Vec<f64>,
    /// Unfolding lengths to compare; all of `1..=⌈d/2⌉` by default.
    pub lens: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub threshold: f64,
    pub cfg: SolverConfig<f64>,
    pub record_ranks: bool,
    pub jobs: Option<usize>,
}

impl CurveSpec {
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>, sr_list: Vec<f64>) -> Self {
        let lens = (1..=unfolding_count(dims.len())).collect();
        Self {
            dims,
            ranks,
            sr_list,
            lens,
            trials: 10,
            base_seed: 0,
            threshold: CURVE_THRESHOLD,
            cfg: SolverConfig::synthetic(),
            record_ranks: false,
            jobs: None,
        }
    }

    /// Fixed sample count instead of a rate list, balanced unfolding only.
    pub fn table_row(n: usize, d: usize, r: usize, m: usize) -> Self {
        let dims = vec![n; d];
        let total: usize = dims.iter().product();
        let mut s = Self::new(dims, vec![r; d], vec![m as f64 / total as f64]);
        s.lens = vec![unfolding_count(d)];
        s.threshold = GRID_THRESHOLD;
        s.record_ranks = true;
        s
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_jobs(mut self, jobs: Option<usize>) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn with_lens(mut self, lens: Vec<usize>) -> Self {
        self.lens = lens;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n: usize,
    pub d: usize,
    pub r_list: Vec<usize>,
    pub sr_list: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub threshold: f64,
    pub cfg: SolverConfig<f64>,
    pub jobs: Option<usize>,
}

impl GridSpec {
    pub fn new(n: usize, d: usize, r_list: Vec<usize>, sr_list: Vec<f64>) -> Self {
        Self {
            n,
            d,
            r_list,
            sr_list,
            trials: 10,
            base_seed: 0,
            threshold: GRID_THRESHOLD,
            cfg: SolverConfig::synthetic(),
            jobs: None,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_jobs(mut self, jobs: Option<usize>) -> Self {
        self.jobs = jobs;
        self
    }
}

/// Named parameter sets.
pub mod presets {
    use super::*;

    pub const CURVES: &[&str] = &["fig1a", "fig1b", "table2-a", "table2-b"];
    pub const GRIDS: &[&str] = &["fig2", "fig2-small"];

    pub fn curve(name: &str) -> Result<CurveSpec> {
        Ok(match name {
            "fig1a" => CurveSpec::new(vec![3; 8], vec![2; 8], sr_steps(1, 19)),
            "fig1b" => CurveSpec::new(vec![6; 6], vec![3; 6], sr_steps(1, 19)),
            "table2-a" => CurveSpec::table_row(12, 5, 2, 24884),
            "table2-b" => CurveSpec::table_row(20, 4, 4, 32000),
            other => return Err(Error::invalid(format!("unknown curve preset {other:?}"))),
        })
    }

    pub fn grid(name: &str) -> Result<GridSpec> {
        let mu0 = 1e-2;
        Ok(match name {
            "fig2" => {
                let mut g = GridSpec::new(20, 4, (2..=19).collect(), sr_steps(1, 19));
                g.cfg = g.cfg.with_mu0(mu0);
                g
            }
            "fig2-small" => {
                let mut g = GridSpec::new(
                    20,
                    4,
                    vec![2, 5, 8, 11, 14, 17],
                    vec![0.1, 0.25, 0.4, 0.55, 0.7, 0.85],
                );
                g.cfg = g.cfg.with_mu0(mu0);
                g.trials = 5;
                g
            }
            other => return Err(Error::invalid(format!("unknown grid preset {other:?}"))),
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `trial`-th tensor at configuration `cell`. The mask uses
/// `mask_seed(seed)`.
pub fn trial_seed(base: u64, cell: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(base ^ ((cell as u64) << 32)) ^ trial as u64)
}

pub fn mask_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x6d61_736b)
}

struct Job {
    ranks: Vec<usize>,
    sr: f64,
    trial: usize,
    seed: u64,
}

fn run_job(
    dims: &[usize],
    job: &Job,
    lens: &[usize],
    cfg: &SolverConfig<f64>,
    threshold: f64,
    record_ranks: bool,
) -> Result<Vec<TrialRecord>> {
    let truth = TrFactors::<f64>::random(dims, &job.ranks, job.seed)?.synthesize();
    let total = truth.len();
    let samples = samples_for_rate(total, job.sr).max(1);
    let mask = ObservationMask::uniform(dims, samples, mask_seed(job.seed))?;
    let observed = mask.project(&truth, 0.0)?;
    let mut out = Vec::with_capacity(lens.len());
    for &len in lens {
        let cfg = cfg.clone().with_len(len);
        let start = Instant::now();
        let result = trbu_complete(&observed, &mask, &cfg);
        let seconds = start.elapsed().as_secs_f64();
        let mut rec = TrialRecord {
            dims: dims.to_vec(),
            ranks: job.ranks.clone(),
            len,
            sr: job.sr,
            samples,
            trial: job.trial,
            seed: job.seed,
            re: f64::NAN,
            success: false,
            iters: 0,
            seconds,
            unfolding_rank: None,
            error: None,
        };
        match result {
            Ok((est, trace)) => {
                rec.re = relative_error(&est, &truth)?;
                rec.success = rec.re < threshold;
                rec.iters = trace.iterations();
                if record_ranks {
                    let h = unfolding_count(dims.len());
                    rec.unfolding_rank = Some(numerical_rank(&est, 0, h, 1e-6)?);
                }
            }
            // Invalid configurations abort the run; numerical trouble is a data point.
            Err(e @ Error::InvalidArgument(_)) => return Err(e),
            Err(e) => rec.error = Some(e.to_string()),
        }
        out.push(rec);
    }
    Ok(out)
}

fn run_jobs(
    dims: &[usize],
    jobs: Vec<Job>,
    lens: &[usize],
    cfg: &SolverConfig<f64>,
    threshold: f64,
    record_ranks: bool,
    threads: Option<usize>,
) -> Result<Vec<TrialRecord>> {
    let work = || -> Result<Vec<TrialRecord>> {
        let chunks: Vec<Result<Vec<TrialRecord>>> = jobs
            .par_iter()
            .map(|j| run_job(dims, j, lens, cfg, threshold, record_ranks))
            .collect();
        let mut out = Vec::new();
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    };
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn check_rates(srs: &[f64]) -> Result<()> {
    if srs.is_empty() {
        return Err(Error::invalid("empty sampling-rate list"));
    }
    if let Some(bad) = srs.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
        return Err(Error::invalid(format!("sampling rate {bad} outside (0, 1]")));
    }
    Ok(())
}

pub fn run_recovery_curve(spec: &CurveSpec) -> Result<ExperimentReport> {
    let d = spec.dims.len();
    if spec.ranks.len() != d {
        return Err(Error::invalid(format!("{} ranks for an order-{d} tensor", spec.ranks.len())));
    }
    check_rates(&spec.sr_list)?;
    for &l in &spec.lens {
        spec.cfg.clone().with_len(l).resolve(d)?;
    }
    let jobs = spec
        .sr_list
        .iter()
        .enumerate()
        .flat_map(|(c, &sr)| {
            (0..spec.trials).map(move |trial| Job {
                ranks: spec.ranks.clone(),
                sr,
                trial,
                seed: trial_seed(spec.base_seed, c, trial),
            })
        })
        .collect();
    let records = run_jobs(
        &spec.dims,
        jobs,
        &spec.lens,
        &spec.cfg,
        spec.threshold,
        spec.record_ranks,
        spec.jobs,
    )?;
    Ok(ExperimentReport {
        records,
        grid: Vec::new(),
        threshold: spec.threshold,
    })
}

pub fn run_phase_grid(spec: &GridSpec) -> Result<ExperimentReport> {
    let (n, d) = (spec.n, spec.d);
    if let Some(&r) = spec.r_list.iter().find(|&&r| r < 1 || r >= n) {
        return Err(Error::invalid(format!("rank {r} outside [1, {}]", n - 1)));
    }
    check_rates(&spec.sr_list)?;
    let dims = vec![n; d];
    let total: usize = dims.iter().product();
    let balanced = unfolding_count(d);
    spec.cfg.clone().with_len(balanced).resolve(d)?;
    let mut jobs = Vec::new();
    for (ri, &r) in spec.r_list.iter().enumerate() {
        for (si, &sr) in spec.sr_list.iter().enumerate() {
            let cell = ri * spec.sr_list.len() + si;
            for trial in 0..spec.trials {
                jobs.push(Job {
                    ranks: vec![r; d],
                    sr,
                    trial,
                    seed: trial_seed(spec.base_seed, cell, trial),
                });
            }
        }
    }
    let records = run_jobs(
        &dims,
        jobs,
        &[balanced],
        &spec.cfg,
        spec.threshold,
        false,
        spec.jobs,
    )?;
    let mut grid = Vec::with_capacity(spec.r_list.len() * spec.sr_list.len());
    for (ri, &r) in spec.r_list.iter().enumerate() {
        let df_m = df_square_unfolding(n as u64, d as u32, r as u64)? as f64;
        let df_tr = df_tensor_ring(n as u64, d as u32, r as u64) as f64;
        for (si, &sr) in spec.sr_list.iter().enumerate() {
            let cell = ri * spec.sr_list.len() + si;
            let rows = &records[cell * spec.trials..(cell + 1) * spec.trials];
            let wins = rows.iter().filter(|t| t.success).count();
            let m = samples_for_rate(total, sr).max(1) as f64;
            grid.push(GridCell {
                r,
                sr,
                rate: if spec.trials == 0 { 0.0 } else { wins as f64 / spec.trials as f64 },
                df_m_ratio: df_m / m,
                df_tr_ratio: df_tr / m,
            });
        }
    }
    Ok(ExperimentReport {
        records,
        grid,
        threshold: spec.threshold,
    })
}

impl ExperimentReport {
    /// Success fraction over the trials at unfolding length `len` and rate `sr`.
    pub fn success_rate(&self, len: usize, sr: f64) -> Option<f64> {
        let rows: Vec<&TrialRecord> = self
            .records
            .iter()
            .filter(|t| t.len == len && t.sr == sr)
            .collect();
        if rows.is_empty() {
            return None;
        }
        Some(rows.iter().filter(|t| t.success).count() as f64 / rows.len() as f64)
    }

    /// `(len, sr, rate)` in first-seen order.
    pub fn curve_summary(&self) -> Vec<(usize, f64, f64)> {
        let mut keys: Vec<(usize, f64)> = Vec::new();
        for t in &self.records {
            if !keys.iter().any(|&(l, s)| l == t.len && s == t.sr) {
                keys.push((t.len, t.sr));
            }
        }
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.into_iter()
            .map(|(l, s)| (l, s, self.success_rate(l, s).expect("key present")))
            .collect()
    }

    pub fn cell(&self, r: usize, sr: f64) -> Option<&GridCell> {
        self.grid.iter().find(|c| c.r == r && c.sr == sr)
    }

    /// Zero the timing column so that reports of identical runs compare equal.
    pub fn clear_timing(&mut self) {
        for t in &mut self.records {
            t.seconds = 0.0;
        }
    }

    /// `l,sr,trial,seed,re,success,iters,seconds`, one row per run.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("l,sr,trial,seed,re,success,iters,seconds\n");
        for t in &self.records {
            writeln!(
                s,
                "{},{},{},{},{:e},{},{},{:.3}",
                t.len, t.sr, t.trial, t.seed, t.re, t.success as u8, t.iters, t.seconds
            )
            .expect("string write");
        }
        s
    }

    /// `r,sr,rate,df_m_ratio,df_tr_ratio`, one row per cell.
    pub fn grid_csv(&self) -> String {
        let mut s = String::from("r,sr,rate,df_m_ratio,df_tr_ratio\n");
        for c in &self.grid {
            writeln!(s, "{},{},{},{:.6},{:.6}", c.r, c.sr, c.rate, c.df_m_ratio, c.df_tr_ratio)
                .expect("string write");
        }
        s
    }
}
