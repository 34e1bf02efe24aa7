use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Dataset, Method, NetShape, RunConfig};
use super::train::{train_isolated, RunRecord, Status};
use super::HarnessError;
use crate::objectives::{CycleMode, MapMode, ObjectiveSpec, Sides};

/// Value lists expanded into the cartesian product of run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub base: RunConfig,
    pub decoder_layers: Vec<usize>,
    pub encoder_layers: Vec<usize>,
    pub discriminator_layers: Vec<usize>,
    pub decoder_width: Vec<usize>,
    pub encoder_width: Vec<usize>,
    pub discriminator_width: Vec<usize>,
    pub d_updates: Vec<usize>,
    pub g_updates: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::desk(RunConfig::default())
    }
}

impl GridSpec {
    /// 2 or 3 layers and 256 or 512 units per network, 1, 3 or 5 updates
    /// per player: 576 configurations.
    pub fn full(base: RunConfig) -> Self {
        Self {
            base,
            decoder_layers: vec![2, 3],
            encoder_layers: vec![2, 3],
            discriminator_layers: vec![2, 3],
            decoder_width: vec![256, 512],
            encoder_width: vec![256, 512],
            discriminator_width: vec![256, 512],
            d_updates: vec![1, 3, 5],
            g_updates: vec![1, 3, 5],
        }
    }

    /// Two layers, 64 or 256 units per network, 1 or 3 updates per player:
    /// 32 configurations.
    pub fn desk(base: RunConfig) -> Self {
        Self {
            base,
            decoder_layers: vec![2],
            encoder_layers: vec![2],
            discriminator_layers: vec![2],
            decoder_width: vec![64, 256],
            encoder_width: vec![64, 256],
            discriminator_width: vec![64, 256],
            d_updates: vec![1, 3],
            g_updates: vec![1, 3],
        }
    }

    /// A grid holding only `base`.
    pub fn single(base: RunConfig) -> Self {
        Self {
            decoder_layers: vec![base.decoder.layers],
            encoder_layers: vec![base.encoder.layers],
            discriminator_layers: vec![base.discriminator.layers],
            decoder_width: vec![base.decoder.width],
            encoder_width: vec![base.encoder.width],
            discriminator_width: vec![base.discriminator.width],
            d_updates: vec![base.d_updates],
            g_updates: vec![base.g_updates],
            base,
        }
    }

    pub fn len(&self) -> usize {
        self.lists().iter().map(|l| l.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lists(&self) -> [&[usize]; 8] {
        [
            &self.decoder_layers,
            &self.encoder_layers,
            &self.discriminator_layers,
            &self.decoder_width,
            &self.encoder_width,
            &self.discriminator_width,
            &self.d_updates,
            &self.g_updates,
        ]
    }

    /// Configurations in row-major order of the value lists.
    pub fn expand(&self) -> Vec<RunConfig> {
        let lists = self.lists();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = [0usize; 8];
        if self.is_empty() {
            return out;
        }
        loop {
            let v = |k: usize| lists[k][idx[k]];
            out.push(RunConfig {
                decoder: NetShape::new(v(0), v(3)),
                encoder: NetShape::new(v(1), v(4)),
                discriminator: NetShape::new(v(2), v(5)),
                d_updates: v(6),
                g_updates: v(7),
                ..self.base.clone()
            });
            let mut k = 8;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Trains every config in parallel; the output order matches the input.
pub fn run_all(configs: &[RunConfig]) -> Vec<RunRecord> {
    configs.par_iter().map(train_isolated).collect()
}

/// Every grid configuration under every method. Records are grouped by
/// configuration, methods in the given order.
pub fn grid_search(grid: &GridSpec, methods: &[Method]) -> Result<Vec<RunRecord>, HarnessError> {
    if grid.is_empty() || methods.is_empty() {
        return Err(HarnessError::Config("grid and method list must be non-empty".into()));
    }
    let configs: Vec<RunConfig> = grid
        .expand()
        .into_iter()
        .flat_map(|c| methods.iter().map(move |&m| RunConfig { method: m, ..c.clone() }))
        .collect();
    Ok(run_all(&configs))
}

/// Median of the finite values; `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, crate::metrics::std_dev(&v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub completed: usize,
    pub diverged: usize,
    pub failed: usize,
    pub median_icp: f64,
    pub median_mse: f64,
    pub mean_icp: f64,
    pub std_icp: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
    /// Share of all runs, evaluated or not, with ICP above 4.5.
    pub icp_above_4_5: f64,
}

/// Per-method statistics in order of first appearance. Runs without an
/// evaluation count against `icp_above_4_5` and are left out of the
/// medians.
pub fn summarize(records: &[RunRecord]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.method == m).collect();
            let icp: Vec<f64> = rs.iter().filter_map(|r| r.icp()).collect();
            let mse: Vec<f64> = rs.iter().filter_map(|r| r.mse()).collect();
            let (mean_icp, std_icp) = mean_std(&icp);
            let (mean_mse, std_mse) = mean_std(&mse);
            let count = |name: &str| rs.iter().filter(|r| r.status.name() == name).count();
            MethodSummary {
                method: m,
                runs: rs.len(),
                completed: count("completed"),
                diverged: count("diverged"),
                failed: count("failed"),
                median_icp: median(&icp),
                median_mse: median(&mse),
                mean_icp,
                std_icp,
                mean_mse,
                std_mse,
                icp_above_4_5: icp.iter().filter(|&&v| v > 4.5).count() as f64 / rs.len().max(1) as f64,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// `method,config_hash,seed,icp,mse,purity,status`, one row per record.
pub fn aggregate_csv(records: &[RunRecord]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "config_hash", "seed", "icp", "mse", "purity", "status"])?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.config_hash.clone(),
            r.seed.to_string(),
            opt(r.icp()),
            opt(r.mse()),
            opt(r.eval.as_ref().map(|e| e.purity)),
            r.status.name().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// `method,metric,bin_lo,bin_hi,count` with `bins` equal bins on
/// `[lo, hi]`; values outside are clamped into the end bins.
pub fn histogram_csv(records: &[RunRecord], metric: &str, lo: f64, hi: f64, bins: usize) -> Result<String, HarnessError> {
    let get: fn(&RunRecord) -> Option<f64> = match metric {
        "icp" => RunRecord::icp,
        "mse" => RunRecord::mse,
        _ => return Err(HarnessError::Config(format!("no histogram for {metric:?}"))),
    };
    if !(hi > lo) || bins == 0 {
        return Err(HarnessError::Config("histogram needs hi > lo and bins >= 1".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut out = String::from("method,metric,bin_lo,bin_hi,count\n");
    for s in summarize(records) {
        let mut counts = vec![0usize; bins];
        for v in records.iter().filter(|r| r.method == s.method).filter_map(get) {
            if v.is_finite() {
                let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        for (b, c) in counts.iter().enumerate() {
            let a = lo + width * b as f64;
            writeln!(out, "{},{metric},{a},{},{c}", s.method, a + width).expect("string write");
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub runs: usize,
    pub median_icp: f64,
    pub median_mse: f64,
    pub best_icp: bool,
    pub best_mse: bool,
}

/// One explicit-cycle run per `(λ, seed)`; `λ = 0` drops the cycle term.
pub fn lambda_sweep(
    base: &RunConfig,
    lambdas: &[f64],
    seeds: &[u64],
) -> Result<(Vec<RunRecord>, Vec<LambdaSummary>), HarnessError> {
    if lambdas.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one lambda and one seed".into()));
    }
    let mut probe = base.clone();
    probe.method = if base.method == Method::Custom { Method::Custom } else { Method::Alice };
    probe.lambda = 1.0;
    if !probe.has_explicit_cycle() {
        return Err(HarnessError::Config("lambda sweep needs an explicit cycle term".into()));
    }
    let configs: Vec<RunConfig> = lambdas
        .iter()
        .flat_map(|&l| {
            let probe = probe.clone();
            seeds.iter().map(move |&s| {
                let mut c = probe.clone();
                c.lambda = l;
                c.objective.lambda_cycle = l;
                c.seed = s;
                c
            })
        })
        .collect();
    let records = run_all(&configs);
    let mut summary: Vec<LambdaSummary> = lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let rs = &records[i * seeds.len()..(i + 1) * seeds.len()];
            let icp: Vec<f64> = rs.iter().filter_map(RunRecord::icp).collect();
            let mse: Vec<f64> = rs.iter().filter_map(RunRecord::mse).collect();
            LambdaSummary {
                lambda,
                runs: rs.len(),
                median_icp: median(&icp),
                median_mse: median(&mse),
                best_icp: false,
                best_mse: false,
            }
        })
        .collect();
    let pick = |key: fn(&LambdaSummary) -> f64, better: fn(f64, f64) -> bool| {
        let mut best: Option<usize> = None;
        for (i, s) in summary.iter().enumerate() {
            let v = key(s);
            if v.is_finite() && best.is_none_or(|b| better(v, key(&summary[b]))) {
                best = Some(i);
            }
        }
        best
    };
    let bi = pick(|s| s.median_icp, |a, b| a > b);
    let bm = pick(|s| s.median_mse, |a, b| a < b);
    if let Some(i) = bi {
        summary[i].best_icp = true;
    }
    if let Some(i) = bm {
        summary[i].best_mse = true;
    }
    Ok((records, summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingVariant {
    ExplicitMapExplicitCycle,
    ExplicitMapAdversarialCycle,
    AdversarialMapExplicitCycle,
    AdversarialMapAdversarialCycle,
}

impl PairingVariant {
    pub const ALL: [PairingVariant; 4] = [
        PairingVariant::ExplicitMapExplicitCycle,
        PairingVariant::ExplicitMapAdversarialCycle,
        PairingVariant::AdversarialMapExplicitCycle,
        PairingVariant::AdversarialMapAdversarialCycle,
    ];

    /// Joint matching plus the cycle term on x plus, when anchors exist,
    /// the mapping term on them in both directions, all with unit weight.
    pub fn objective(self, anchors: usize) -> ObjectiveSpec {
        use PairingVariant::*;
        let adversarial_cycle = matches!(self, ExplicitMapAdversarialCycle | AdversarialMapAdversarialCycle);
        let adversarial_map = matches!(self, AdversarialMapExplicitCycle | AdversarialMapAdversarialCycle);
        ObjectiveSpec {
            use_ali: true,
            cycle_mode: if adversarial_cycle { CycleMode::Adversarial } else { CycleMode::ExplicitL2 },
            cycle_sides: Sides::XOnly,
            map_mode: match (anchors, adversarial_map) {
                (0, _) => MapMode::None,
                (_, true) => MapMode::AdversarialConditional,
                (_, false) => MapMode::ExplicitL2,
            },
            map_sides: Sides::Both,
            lambda_cycle: 1.0,
            lambda_map: 1.0,
            feature_matching: adversarial_cycle,
            ..ObjectiveSpec::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub variant: PairingVariant,
    pub anchors: usize,
    pub seeds: Vec<u64>,
    /// Per seed; `NaN` for runs that produced no model.
    pub accuracies: Vec<f64>,
}

impl PairingSummary {
    /// Seeds with accuracy at least `threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.accuracies.iter().filter(|&&a| a >= threshold).count()
    }

    /// Seeds with accuracy at most `threshold`.
    pub fn count_at_most(&self, threshold: f64) -> usize {
        self.accuracies.iter().filter(|&&a| a <= threshold).count()
    }
}

/// Trains the pairing task once per seed with the first `anchors` pairs
/// supervised.
pub fn pairing_experiment(
    base: &RunConfig,
    variant: PairingVariant,
    anchors: usize,
    seeds: &[u64],
) -> Result<(Vec<RunRecord>, PairingSummary), HarnessError> {
    let configs: Vec<RunConfig> = seeds
        .iter()
        .map(|&s| RunConfig {
            method: Method::Custom,
            objective: variant.objective(anchors),
            dataset: Dataset::Pairing { anchors },
            seed: s,
            ..base.clone()
        })
        .collect();
    if let Some(c) = configs.first() {
        c.validate()?;
    }
    let records = run_all(&configs);
    let accuracies = records
        .iter()
        .map(|r| match (&r.status, &r.pairing) {
            (Status::Failed { .. }, _) | (_, None) => f64::NAN,
            (_, Some(p)) => p.accuracy,
        })
        .collect();
    Ok((
        records,
        PairingSummary {
            variant,
            anchors,
            seeds: seeds.to_vec(),
            accuracies,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cardinalities() {
        let full = GridSpec::full(RunConfig::default());
        assert_eq!(full.len(), 576);
        assert_eq!(full.expand().len(), 576);
        let desk = GridSpec::desk(RunConfig::default());
        assert_eq!(desk.expand().len(), 32);
        let single = GridSpec::single(RunConfig::default());
        assert_eq!(single.expand(), vec![RunConfig::default()]);
    }

    #[test]
    fn expansion_is_distinct_and_ordered() {
        let e = GridSpec::desk(RunConfig::default()).expand();
        let hashes: std::collections::BTreeSet<String> = e.iter().map(RunConfig::hash).collect();
        assert_eq!(hashes.len(), 32);
        assert_eq!((e[0].d_updates, e[0].g_updates), (1, 1));
        assert_eq!((e[1].d_updates, e[1].g_updates), (1, 3));
        assert_eq!(e[31].decoder.width, 256);
    }

    #[test]
    fn median_ignores_non_finite() {
        assert_eq!(median(&[3.0, 1.0, f64::NAN, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn pairing_objectives() {
        let o = PairingVariant::ExplicitMapExplicitCycle.objective(5);
        assert_eq!((o.cycle_mode, o.map_mode), (CycleMode::ExplicitL2, MapMode::ExplicitL2));
        assert_eq!(PairingVariant::ExplicitMapExplicitCycle.objective(0).map_mode, MapMode::None);
        let o = PairingVariant::AdversarialMapAdversarialCycle.objective(5);
        assert_eq!(o.required_discriminators().len(), 4);
    }
}
