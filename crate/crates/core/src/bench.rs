//! Analytic cost model and empirical scaling measurements.
//!
//! The dominant work of a forward pass is the attention core: scores and
//! value aggregation, one multiply-add each per (query, key, channel):
//!
//! ```text
//! encoder    2 · n_x · n_z · d
//! processor  2 · L · n_z² · d
//! decoder    2 · n_z · n_y · d
//! ```
//!
//! so `C1 = C2 = C3 = 2`. Projections, feed-forward layers, normalisation
//! and softmax add terms linear in `n_x` and `n_y` (and constant in both for
//! the processor); [`predicted_cost`] accounts for every one of them.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{attention_block, AttentionConfig, AttentionWeights};
use crate::data::DiscretizedFunction;
use crate::error::{Error, Result};
use crate::model::{Ipot, IpotConfig};
use crate::parallel::ExecPolicy;
use crate::tensor::flops::{self, FlopTally};
use crate::tensor::{kernels, Backend, Eval, Tensor};

pub const C1: u64 = 2;
pub const C2: u64 = 2;
pub const C3: u64 = 2;

/// Cost weights of elementwise kernels, mirroring what the kernels record.
const W_LAYER_NORM: u64 = 8;
const W_SOFTMAX: u64 = 4;
const W_GELU: u64 = 8;

/// Benchmarks hold this for their whole duration so timings never overlap.
pub static BENCH_LOCK: Mutex<()> = Mutex::new(());

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CostModel {
    pub n_x: u64,
    pub n_y: u64,
    pub n_z: u64,
    pub d: u64,
    pub layers: u64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if [self.n_x, self.n_y, self.n_z, self.d, self.layers].contains(&0) {
            return Err(Error::Config(format!("cost model sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// `C1·n_x·n_z·d + C2·L·n_z²·d + C3·n_z·n_y·d`.
pub fn flop_count(m: &CostModel) -> u64 {
    C1 * m.n_x * m.n_z * m.d + C2 * m.layers * m.n_z * m.n_z * m.d + C3 * m.n_z * m.n_y * m.d
}

/// Exact per-component work of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlopBreakdown {
    pub encoder_core: u64,
    pub processor_core: u64,
    pub decoder_core: u64,
    /// Every other multiply-add: projections, merges, feed-forward, head.
    pub projections: u64,
    pub elementwise: u64,
}

impl FlopBreakdown {
    pub fn core(&self) -> u64 {
        self.encoder_core + self.processor_core + self.decoder_core
    }

    pub fn matmul(&self) -> u64 {
        self.core() + self.projections
    }

    pub fn total(&self) -> u64 {
        self.matmul() + self.elementwise
    }
}

/// Projection multiply-adds and elementwise work of one attention block with
/// `r` query rows and `s` key rows of width `kv`.
fn block_overhead(cfg: &AttentionConfig, r: u64, s: u64, kv: u64) -> (u64, u64) {
    let (d, hf, h) = (cfg.d_model as u64, cfg.ff_hidden as u64, cfg.heads as u64);
    let merge = if h > 1 { r * d * d } else { 0 };
    let macs = r * d * d + 2 * s * kv * d + merge + 2 * r * d * hf;
    let elementwise = W_LAYER_NORM * r * d
        + W_LAYER_NORM * s * kv
        + r * d
        + W_SOFTMAX * h * r * s
        + r * d
        + W_LAYER_NORM * r * d
        + r * hf
        + W_GELU * r * hf
        + r * d
        + r * d;
    (macs, elementwise)
}

pub fn predicted_cost(cfg: &IpotConfig, n_x: usize, n_y: usize) -> FlopBreakdown {
    let (nx, ny, nz, d) = (n_x as u64, n_y as u64, cfg.n_z as u64, cfg.d_z as u64);
    let layers = cfg.layers as u64;
    let core = |r: u64, s: u64| 2 * r * s * d;
    let (enc_p, enc_e) = block_overhead(&cfg.encoder_block(), nz, nx, cfg.input_width() as u64);
    let (proc_p, proc_e) = block_overhead(&cfg.processor_block(), nz, nz, d);
    let (dec_p, dec_e) = block_overhead(&cfg.decoder_block(), ny, nz, d);
    let (q, out) = (cfg.query_width() as u64, cfg.d_out as u64);
    FlopBreakdown {
        encoder_core: core(nz, nx),
        processor_core: layers * core(nz, nz),
        decoder_core: core(ny, nz),
        projections: enc_p + layers * proc_p + dec_p + ny * q * d + ny * d * out,
        elementwise: enc_e + layers * proc_e + dec_e + ny * d + ny * out,
    }
}

/// Random input function with `n` points and `n` query coordinates.
pub fn synthetic_problem(cfg: &IpotConfig, n: usize, seed: u64) -> Result<(DiscretizedFunction, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_coord();
    let mut uniform = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random::<f64>()).collect() };
    let coords = Tensor::matrix(n, d, uniform(n * d))?;
    let values = Tensor::matrix(n, cfg.d_in, uniform(n * cfg.d_in))?;
    let queries = Tensor::matrix(n, d, uniform(n * d))?;
    Ok((DiscretizedFunction::new(coords, values)?, queries))
}

/// Work recorded by one single-threaded forward pass.
pub fn counted_cost(model: &Ipot, a: &DiscretizedFunction, y: &Tensor) -> Result<FlopTally> {
    let (out, tally) = flops::measure(|| model.forward_with(a, y, ExecPolicy::Sequential));
    out?;
    Ok(tally)
}

/// Forward pass of the same architecture with the inducing points removed:
/// the lifted observations themselves are the latent set, so every block
/// attends over `n_x` tokens. Query rows are processed in chunks, which
/// changes memory use but not arithmetic.
pub fn quadratic_forward(model: &Ipot, a: &DiscretizedFunction, y: &Tensor, policy: ExecPolicy) -> Result<Tensor> {
    const ROWS: usize = 1024;
    let cfg = &model.config;
    let input = model.encoded_input(a)?.matrix().clone();
    let w = model.params.map(&mut |t| Arc::new(t.clone()));
    let d = cfg.d_z;
    let block = |queries: &Tensor, kv: &Arc<Tensor>, blk: &AttentionWeights<Arc<Tensor>>| -> Result<Tensor> {
        let n = queries.rows();
        let starts: Vec<usize> = (0..n).step_by(ROWS).collect();
        let parts = policy
            .map(&starts, |&s| {
                let idx: Vec<usize> = (s..(s + ROWS).min(n)).collect();
                let mut e = Eval;
                let q = e.constant(queries.select_rows(&idx));
                attention_block(&mut e, &q, kv, blk).map(Arc::unwrap_or_clone)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(n * d);
        for p in parts {
            data.extend_from_slice(p.data());
        }
        Tensor::matrix(n, d, data)
    };
    // Tokens start as the lifted positional part of each observation.
    let pe = kernels::slice_cols(&input, 0, cfg.query_width())?;
    let mut e = Eval;
    let pe = e.constant(pe);
    let tokens = e.affine(&pe, &w.query_proj_w, Some(&w.query_proj_b))?;
    let mut z = block(&tokens, &Arc::new(input), &w.encoder)?;
    for blk in &w.processor {
        let kv = Arc::new(z.clone());
        z = block(&z, &kv, blk)?;
    }
    let features = model.query_features(y)?;
    crate::model::decode_chunked(cfg, &w, model.output_norm.as_ref(), &features, &Arc::new(z), policy)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub n: usize,
    /// Latent set size; equals `n` for the quadratic baseline.
    pub nz: usize,
    pub layers: usize,
    pub flops_pred: u64,
    pub flops_counted: u64,
    pub times: Vec<f64>,
    pub median: f64,
    /// Peak resident set during the timed passes, where the platform reports it.
    pub peak_bytes: Option<u64>,
    /// The size was skipped because it would not fit the memory budget.
    pub capped: bool,
}

impl BenchResult {
    /// Largest deviation of a repeat from the median, relative to the median.
    pub fn spread(&self) -> f64 {
        self.times
            .iter()
            .map(|t| (t - self.median).abs() / self.median)
            .fold(0.0, f64::max)
    }

    pub fn csv_row(&self) -> String {
        let all: Vec<String> = self.times.iter().map(|t| format!("{t:.6}")).collect();
        format!(
            "{},{},{},{},{},{:.6},{},{}",
            self.n,
            self.nz,
            self.layers,
            self.flops_pred,
            self.flops_counted,
            self.median,
            all.join(";"),
            self.peak_bytes.map(|b| b.to_string()).unwrap_or_default()
        )
    }
}

pub const BENCH_CSV_HEADER: &str = "n,nz,L,flops_pred,flops_counted,time_s_median,time_s_all,peak_bytes";

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Usage("linear fit needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Usage("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (intercept + slope * a)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    pub warmups: usize,
    pub policy: ExecPolicy,
    pub seed: u64,
    /// Also time the no-inducing-point baseline up to `quadratic_cap`.
    pub quadratic_baseline: bool,
    pub quadratic_cap: usize,
    /// Sizes whose estimated footprint exceeds this are recorded as capped.
    pub memory_budget: Option<u64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            warmups: 2,
            policy: ExecPolicy::Parallel,
            seed: 0,
            quadratic_baseline: false,
            quadratic_cap: 16_384,
            memory_budget: available_memory(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub results: Vec<BenchResult>,
    pub fit: LinearFit,
    pub quadratic: Vec<BenchResult>,
    /// `median(quadratic)/median(linear)` at every size both ran.
    pub speedups: Vec<(usize, f64)>,
    pub memory_label: &'static str,
}

impl ScalingReport {
    pub fn csv(&self) -> String {
        let mut s = String::from(BENCH_CSV_HEADER);
        s.push('\n');
        for r in self.results.iter().chain(&self.quadratic) {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "fit": self.fit,
            "flop_constants": { "c1": C1, "c2": C2, "c3": C3 },
            "speedups": self.speedups,
            "memory": self.memory_label,
            "results": self.results,
            "quadratic_baseline": self.quadratic,
        })
    }
}

fn read_status_kib(field: &str) -> Option<u64> {
    let text = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = text.lines().find(|l| l.starts_with(field))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Resets the peak-RSS watermark where the platform supports it.
fn reset_peak_rss() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

fn peak_rss_bytes() -> Option<u64> {
    read_status_kib("VmHWM:").map(|k| k * 1024)
}

/// `MemAvailable` on Linux.
pub fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    line.split_whitespace().nth(1)?.parse::<u64>().ok().map(|k| k * 1024)
}

/// Rough upper bound on the live bytes of one forward pass.
pub fn estimated_bytes(cfg: &IpotConfig, n: usize, quadratic: bool) -> u64 {
    let n = n as u64;
    let width = (cfg.input_width() + cfg.query_width() + 4 * cfg.d_z) as u64;
    let tokens = if quadratic { n } else { cfg.n_z as u64 };
    let scores = tokens.min(1024.max(cfg.n_z as u64)) * n.max(tokens) * 3;
    8 * (n * width * 3 + scores)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn time_runs(opts: &BenchOptions, mut run: impl FnMut() -> Result<()>) -> Result<(Vec<f64>, Option<u64>)> {
    for _ in 0..opts.warmups {
        run()?;
    }
    let tracked = reset_peak_rss();
    let mut times = Vec::with_capacity(opts.repeats);
    for _ in 0..opts.repeats.max(1) {
        let t = Instant::now();
        run()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok((times, if tracked { peak_rss_bytes() } else { None }))
}

fn capped(n: usize, nz: usize, layers: usize) -> BenchResult {
    BenchResult {
        n,
        nz,
        layers,
        flops_pred: 0,
        flops_counted: 0,
        times: Vec::new(),
        median: f64::NAN,
        peak_bytes: None,
        capped: true,
    }
}

/// Times forward passes with `n_x = n_y = n` for every size.
pub fn bench_scaling(model: &Ipot, sizes: &[usize], opts: &BenchOptions) -> Result<ScalingReport> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("bench sizes must be non-empty and ascending".into()));
    }
    let _guard = BENCH_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = &model.config;
    let mut results = Vec::new();
    let mut quadratic = Vec::new();
    let mut speedups = Vec::new();
    for &n in sizes {
        let fits = |quad: bool| opts.memory_budget.is_none_or(|b| estimated_bytes(cfg, n, quad) < b);
        if !fits(false) {
            log::warn!("size {n} exceeds the memory budget; recorded as capped");
            results.push(capped(n, cfg.n_z, cfg.layers));
            continue;
        }
        let (a, y) = synthetic_problem(cfg, n, opts.seed.wrapping_add(n as u64))?;
        let pred = predicted_cost(cfg, n, n).total();
        let counted = counted_cost(model, &a, &y)?.total();
        let (times, peak) = time_runs(opts, || model.forward_with(&a, &y, opts.policy).map(|_| ()))?;
        let med = median(&times);
        log::info!("n = {n}: median {med:.4}s");
        results.push(BenchResult {
            n,
            nz: cfg.n_z,
            layers: cfg.layers,
            flops_pred: pred,
            flops_counted: counted,
            times,
            median: med,
            peak_bytes: peak,
            capped: false,
        });
        if opts.quadratic_baseline && n <= opts.quadratic_cap {
            if !fits(true) {
                quadratic.push(capped(n, n, cfg.layers));
                continue;
            }
            let mut qcfg = cfg.clone();
            qcfg.n_z = n;
            let qpred = predicted_cost(&qcfg, n, n).total();
            let (qtimes, qpeak) =
                time_runs(opts, || quadratic_forward(model, &a, &y, opts.policy).map(|_| ()))?;
            let qmed = median(&qtimes);
            speedups.push((n, qmed / med));
            quadratic.push(BenchResult {
                n,
                nz: n,
                layers: cfg.layers,
                flops_pred: qpred,
                flops_counted: 0,
                times: qtimes,
                median: qmed,
                peak_bytes: qpeak,
                capped: false,
            });
        }
    }
    let measured: Vec<&BenchResult> = results.iter().filter(|r| !r.capped).collect();
    let xs: Vec<f64> = measured.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = measured.iter().map(|r| r.median).collect();
    let fit = if xs.len() >= 2 {
        linear_fit(&xs, &ys)?
    } else {
        LinearFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r2: f64::NAN,
        }
    };
    Ok(ScalingReport {
        results,
        fit,
        quadratic,
        speedups,
        memory_label: "peak resident set size of the process (not accelerator memory)",
    })
}

/// One row of the inducing-point ablation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducingRow {
    pub nz: usize,
    pub test_rel_l2: f64,
    /// Median seconds for one forward pass over the test inputs.
    pub time_s: f64,
    pub params: usize,
}

/// Median wall time of a forward pass over every sample of `indices`.
pub fn time_forward(model: &Ipot, data: &crate::data::DatasetBundle, indices: &[usize], opts: &BenchOptions) -> Result<f64> {
    let (times, _) = time_runs(opts, || {
        for &i in indices {
            let s = &data.samples[i];
            if data.frames == 0 {
                model.forward_with(&s.input, s.target.coords(), opts.policy)?;
            } else {
                model.rollout(&s.input, s.target.coords(), data.frames)?;
            }
        }
        Ok(())
    })?;
    Ok(median(&times))
}

/// Trains one model per inducing-point count (via `train`) and reports test
/// error and inference time for each.
pub fn bench_inducing_points(
    base: &IpotConfig,
    nz_list: &[usize],
    data: &crate::data::DatasetBundle,
    opts: &BenchOptions,
    train: &mut dyn FnMut(Ipot) -> Result<Ipot>,
) -> Result<Vec<InducingRow>> {
    let test = data.test_indices();
    let mut rows = Vec::with_capacity(nz_list.len());
    for &nz in nz_list {
        let mut cfg = base.clone();
        cfg.n_z = nz;
        let model = train(Ipot::init(cfg, opts.seed)?)?;
        let err = crate::training::evaluate(&model, data, &test, opts.policy)?.mean;
        let _guard = BENCH_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        let time_s = time_forward(&model, data, &test, opts)?;
        rows.push(InducingRow {
            nz,
            test_rel_l2: err,
            time_s,
            params: model.param_count(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::FourierSpec;

    fn small() -> IpotConfig {
        IpotConfig {
            n_z: 8,
            d_z: 16,
            layers: 2,
            heads_enc: 1,
            heads_proc: 4,
            heads_dec: 2,
            encoding: FourierSpec::new(vec![3, 3], vec![5.0, 5.0]).unwrap(),
            d_in: 1,
            d_out: 1,
        }
    }

    #[test]
    fn doubling_inputs_adds_the_encoder_term() {
        let m = CostModel { n_x: 1000, n_y: 500, n_z: 64, d: 32, layers: 3 };
        let m2 = CostModel { n_x: 2000, ..m };
        assert_eq!(flop_count(&m2) - flop_count(&m), C1 * 1000 * 64 * 32);
    }

    #[test]
    fn affine_in_n() {
        let f = |n| flop_count(&CostModel { n_x: n, n_y: n, n_z: 256, d: 64, layers: 4 }) as i128;
        assert_eq!(f(3000) - 2 * f(2000) + f(1000), 0);
        let cfg = IpotConfig::darcy();
        let p = |n| predicted_cost(&cfg, n, n).total() as i128;
        assert_eq!(p(3000) - 2 * p(2000) + p(1000), 0);
    }

    #[test]
    fn processor_dominates_deep_models() {
        let f = |l| flop_count(&CostModel { n_x: 16, n_y: 16, n_z: 256, d: 64, layers: l }) as f64;
        let ratio = f(100) / f(10);
        assert!((ratio - 10.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn single_inducing_point_runs() {
        let mut cfg = small();
        cfg.n_z = 1;
        let model = Ipot::init(cfg.clone(), 0).unwrap();
        let (a, y) = synthetic_problem(&cfg, 20, 0).unwrap();
        let out = model.forward(&a, &y).unwrap();
        assert!(out.values().data().iter().all(|v| v.is_finite()));
        assert_eq!(counted_cost(&model, &a, &y).unwrap().matmul_macs, predicted_cost(&cfg, 20, 20).matmul());
    }

    #[test]
    fn instrumented_count_matches_prediction() {
        let cfg = small();
        let model = Ipot::init(cfg.clone(), 0).unwrap();
        for (nx, ny) in [(10, 7), (33, 1), (100, 250)] {
            let (a, _) = synthetic_problem(&cfg, nx, 1).unwrap();
            let (_, y) = synthetic_problem(&cfg, ny, 2).unwrap();
            let counted = counted_cost(&model, &a, &y).unwrap();
            let pred = predicted_cost(&cfg, nx, ny);
            assert_eq!(counted.matmul_macs, pred.matmul());
            assert_eq!(counted.elementwise, pred.elementwise);
        }
    }

    #[test]
    fn core_terms_match_cost_model() {
        let cfg = IpotConfig::darcy();
        let b = predicted_cost(&cfg, 1000, 700);
        let m = CostModel { n_x: 1000, n_y: 700, n_z: 256, d: 64, layers: 4 };
        assert_eq!(b.core(), flop_count(&m));
    }

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn quadratic_baseline_runs_and_differs_in_cost() {
        let cfg = small();
        let model = Ipot::init(cfg.clone(), 0).unwrap();
        let (a, y) = synthetic_problem(&cfg, 40, 3).unwrap();
        let out = quadratic_forward(&model, &a, &y, ExecPolicy::Sequential).unwrap();
        assert_eq!(out.shape(), &[40, 1]);
        let par = quadratic_forward(&model, &a, &y, ExecPolicy::Parallel).unwrap();
        assert_eq!(out, par);
    }

    #[test]
    fn scaling_report_shapes_and_csv() {
        let cfg = small();
        let model = Ipot::init(cfg, 0).unwrap();
        let opts = BenchOptions {
            repeats: 2,
            warmups: 1,
            quadratic_baseline: true,
            quadratic_cap: 64,
            ..Default::default()
        };
        let r = bench_scaling(&model, &[32, 64, 128], &opts).unwrap();
        assert_eq!(r.results.len(), 3);
        assert_eq!(r.quadratic.len(), 2);
        let csv = r.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), BENCH_CSV_HEADER);
        for line in lines {
            assert_eq!(line.split(',').count(), 8, "{line}");
        }
        assert!(r.summary_json()["fit"]["r2"].is_number());
        assert!(bench_scaling(&model, &[64, 32], &opts).is_err());
    }

    #[test]
    fn tiny_budget_caps_instead_of_crashing() {
        let model = Ipot::init(small(), 0).unwrap();
        let opts = BenchOptions {
            repeats: 1,
            warmups: 0,
            memory_budget: Some(1),
            ..Default::default()
        };
        let r = bench_scaling(&model, &[16, 32], &opts).unwrap();
        assert!(r.results.iter().all(|r| r.capped));
    }
}
