//! Labelled training data: grid sampling of engagement initial conditions,
//! labelling with the trajectory optimiser, rebalancing and splitting.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_pn_target, Trajectory, Vec3, VehicleParams, VehicleState, ASSET, TARGET_DT, TARGET_T_MAX};
use crate::error::{Error, Result};
use crate::par::parallel_map;
use crate::trajopt::{solve_min_time, ScpConfig, TrajOptProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngagementClass {
    Stationary,
    Maneuvering,
}

impl EngagementClass {
    pub fn feature_dim(self) -> usize {
        self.csv_features().len()
    }

    fn csv_features(self) -> &'static [&'static str] {
        match self {
            EngagementClass::Stationary => &["rx", "rz", "vx", "rtz"],
            EngagementClass::Maneuvering => &["rx", "rz", "vx", "rtx", "rtz", "vtx"],
        }
    }
}

impl std::str::FromStr for EngagementClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(EngagementClass::Stationary),
            "maneuvering" => Ok(EngagementClass::Maneuvering),
            other => Err(Error::invalid(format!("unknown engagement class {other:?}"))),
        }
    }
}

impl std::fmt::Display for EngagementClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngagementClass::Stationary => "stationary",
            EngagementClass::Maneuvering => "maneuvering",
        })
    }
}

/// Surrogate input for one pursuer/target pair. Stationary pairs are
/// expressed relative to the target's x position; maneuvering pairs keep
/// absolute coordinates because the asset fixes the frame.
pub fn featurize(class: EngagementClass, pursuer: &VehicleState, target: &VehicleState) -> Vec<f64> {
    match class {
        EngagementClass::Stationary => vec![pursuer.r.x - target.r.x, pursuer.r.z, pursuer.v.x, target.r.z],
        EngagementClass::Maneuvering => vec![
            pursuer.r.x,
            pursuer.r.z,
            pursuer.v.x,
            target.r.x,
            target.r.z,
            target.v.x,
        ],
    }
}

/// Closed interval sampled at `count` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridAxis {
    pub const fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    /// Grid values; a single point sits at the lower bound.
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::invalid(format!("{name}: bad interval [{}, {}]", self.lo, self.hi)));
        }
        if self.count == 0 {
            return Err(Error::invalid(format!("{name}: grid count must be at least 1")));
        }
        Ok(())
    }
}

/// Initial-condition region for pursuers (`r_*`, `v_x`) and targets
/// (`r_tc_*`, `v_tc_x`). Vertical velocities are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleRanges {
    pub r_x: GridAxis,
    pub r_z: GridAxis,
    pub v_x: GridAxis,
    pub r_tc_x: GridAxis,
    pub r_tc_z: GridAxis,
    pub v_tc_x: GridAxis,
}

impl Default for SampleRanges {
    /// Paper intervals with desk-scale counts: 10×10×5×10 stationary points,
    /// 4×5×3×4×5×5 maneuvering points before rejection.
    fn default() -> Self {
        Self {
            r_x: GridAxis::new(-15_000.0, -5_000.0, 10),
            r_z: GridAxis::new(0.0, 30_000.0, 10),
            v_x: GridAxis::new(2_500.0, 3_500.0, 5),
            r_tc_x: GridAxis::new(5_000.0, 15_000.0, 4),
            r_tc_z: GridAxis::new(0.0, 30_000.0, 10),
            v_tc_x: GridAxis::new(-2_500.0, 3_500.0, 5),
        }
    }
}

impl SampleRanges {
    /// Counts multiplying to 375,000 stationary and 7,290,000 maneuvering
    /// points, the full-size grids.
    pub fn paper_scale() -> Self {
        let mut r = Self::default();
        r.r_x.count = 50;
        r.r_z.count = 50;
        r.v_x.count = 6;
        r.r_tc_z.count = 25;
        r
    }

    pub fn paper_scale_maneuvering() -> Self {
        let mut r = Self::default();
        r.r_x.count = 15;
        r.r_z.count = 15;
        r.v_x.count = 6;
        r.r_tc_x.count = 15;
        r.r_tc_z.count = 15;
        r.v_tc_x.count = 24;
        r
    }

    pub fn validate(&self) -> Result<()> {
        self.r_x.validate("r_x")?;
        self.r_z.validate("r_z")?;
        self.v_x.validate("v_x")?;
        self.r_tc_x.validate("r_tc_x")?;
        self.r_tc_z.validate("r_tc_z")?;
        self.v_tc_x.validate("v_tc_x")
    }

    /// Pursuer x relative to the target for stationary pairs; spans every
    /// difference of the two x intervals and reuses the `r_x` count.
    pub fn stationary_relative_x(&self) -> GridAxis {
        GridAxis::new(self.r_x.lo - self.r_tc_x.hi, self.r_x.hi - self.r_tc_x.lo, self.r_x.count)
    }

    pub fn grid_size(&self, class: EngagementClass) -> usize {
        match class {
            EngagementClass::Stationary => self.r_x.count * self.r_z.count * self.v_x.count * self.r_tc_z.count,
            EngagementClass::Maneuvering => {
                self.r_x.count * self.r_z.count * self.v_x.count * self.r_tc_x.count * self.r_tc_z.count * self.v_tc_x.count
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub pursuer: VehicleState,
    pub target: VehicleState,
}

/// Target motion as seen by the optimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPath {
    pub trajectory: Trajectory,
    /// Time the target reaches the asset; absent for stationary targets.
    pub t_hit: Option<f64>,
}

/// Simulates the target's flight to the asset. `None` when a maneuvering
/// target never gets there within the simulation horizon.
pub fn target_path(
    class: EngagementClass,
    target: &VehicleState,
    pn_gain: f64,
    params: &VehicleParams,
) -> Result<Option<TargetPath>> {
    match class {
        EngagementClass::Stationary => Ok(Some(TargetPath {
            trajectory: Trajectory::stationary(target.r),
            t_hit: None,
        })),
        EngagementClass::Maneuvering => {
            let run = simulate_pn_target(*target, ASSET, pn_gain, TARGET_DT, TARGET_T_MAX, params, true)?;
            Ok(run.reached.then_some(TargetPath {
                trajectory: run.trajectory,
                t_hit: Some(run.t_hit),
            }))
        }
    }
}

/// Minimum intercept time, or `None` when the optimiser reports the pair
/// infeasible or fails.
pub fn intercept_time(pursuer: &VehicleState, path: &TargetPath, params: &VehicleParams, scp: &ScpConfig) -> Option<f64> {
    let problem = TrajOptProblem {
        pursuer_r0: pursuer.r,
        pursuer_v0: pursuer.v,
        target: path.trajectory.clone(),
        target_t_hit: path.t_hit,
        params: *params,
    };
    match solve_min_time(&problem, scp) {
        Ok(sol) if sol.status.is_feasible() => Some(sol.t_f),
        _ => None,
    }
}

fn target_key(s: &VehicleState) -> [u64; 6] {
    s.to_array().map(f64::to_bits)
}

/// Cartesian product of the grids. Stationary points put the target at
/// `x = 0`; maneuvering points whose target cannot reach the asset under
/// nominal PN are dropped.
pub fn grid_sample(ranges: &SampleRanges, class: EngagementClass, params: &VehicleParams) -> Result<Vec<SamplePoint>> {
    ranges.validate()?;
    let mut points = Vec::with_capacity(ranges.grid_size(class));
    match class {
        EngagementClass::Stationary => {
            for rx in ranges.stationary_relative_x().values() {
                for rz in ranges.r_z.values() {
                    for vx in ranges.v_x.values() {
                        for tz in ranges.r_tc_z.values() {
                            points.push(SamplePoint {
                                pursuer: VehicleState::new(Vec3::new(rx, 0.0, rz), Vec3::new(vx, 0.0, 0.0)),
                                target: VehicleState::new(Vec3::new(0.0, 0.0, tz), Vec3::ZERO),
                            });
                        }
                    }
                }
            }
        }
        EngagementClass::Maneuvering => {
            let mut reaches = HashMap::new();
            for tx in ranges.r_tc_x.values() {
                for tz in ranges.r_tc_z.values() {
                    for tvx in ranges.v_tc_x.values() {
                        let t = VehicleState::new(Vec3::new(tx, 0.0, tz), Vec3::new(tvx, 0.0, 0.0));
                        let ok = target_path(class, &t, crate::dynamics::NOMINAL_PN_GAIN, params)?.is_some();
                        reaches.insert(target_key(&t), ok);
                    }
                }
            }
            for rx in ranges.r_x.values() {
                for rz in ranges.r_z.values() {
                    for vx in ranges.v_x.values() {
                        for tx in ranges.r_tc_x.values() {
                            for tz in ranges.r_tc_z.values() {
                                for tvx in ranges.v_tc_x.values() {
                                    let target = VehicleState::new(Vec3::new(tx, 0.0, tz), Vec3::new(tvx, 0.0, 0.0));
                                    if reaches[&target_key(&target)] {
                                        points.push(SamplePoint {
                                            pursuer: VehicleState::new(Vec3::new(rx, 0.0, rz), Vec3::new(vx, 0.0, 0.0)),
                                            target,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::invalid("grid produced no sample points"));
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub feasible: bool,
    /// Minimum intercept time, s; only for feasible samples.
    pub intercept_time: Option<f64>,
}

/// Labels every point with the trajectory optimiser (maneuvering targets are
/// flown under nominal PN first, once per distinct target). Output order
/// follows `points`.
pub fn label_samples(
    points: &[SamplePoint],
    class: EngagementClass,
    params: &VehicleParams,
    scp: &ScpConfig,
    workers: usize,
) -> Result<Vec<LabeledSample>> {
    let mut paths: HashMap<[u64; 6], Option<TargetPath>> = HashMap::new();
    for p in points {
        let key = target_key(&p.target);
        if !paths.contains_key(&key) {
            paths.insert(key, target_path(class, &p.target, crate::dynamics::NOMINAL_PN_GAIN, params)?);
        }
    }
    Ok(parallel_map(points, workers, |_, p| {
        let features = featurize(class, &p.pursuer, &p.target);
        let time = paths[&target_key(&p.target)]
            .as_ref()
            .and_then(|path| intercept_time(&p.pursuer, path, params, scp));
        LabeledSample {
            features,
            feasible: time.is_some(),
            intercept_time: time,
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class: EngagementClass,
    pub samples: Vec<LabeledSample>,
    pub split: Option<SplitTag>,
}

/// Result of [`Dataset::rebalance`]; `notice` explains an unchanged dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalanced {
    pub dataset: Dataset,
    pub removed: usize,
    pub notice: Option<String>,
}

impl Dataset {
    pub fn new(class: EngagementClass, samples: Vec<LabeledSample>) -> Self {
        Self {
            class,
            samples,
            split: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feasible_count(&self) -> usize {
        self.samples.iter().filter(|s| s.feasible).count()
    }

    pub fn feasible_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.feasible_count() as f64 / self.len() as f64
        }
    }

    /// Drops randomly chosen feasible samples, as few as possible, until the
    /// feasible fraction is at most `target_fraction`. A fraction of 1
    /// disables rebalancing.
    pub fn rebalance(&self, target_fraction: f64, seed: u64) -> Rebalanced {
        let unchanged = |notice: String| Rebalanced {
            dataset: self.clone(),
            removed: 0,
            notice: Some(notice),
        };
        if !(target_fraction > 0.0 && target_fraction <= 1.0) {
            return unchanged(format!("target fraction {target_fraction} outside (0, 1]"));
        }
        let feasible = self.feasible_count();
        let infeasible = self.len() - feasible;
        if self.feasible_fraction() <= target_fraction {
            return unchanged(format!(
                "feasible fraction {:.4} already at or below {target_fraction}",
                self.feasible_fraction()
            ));
        }
        if infeasible == 0 {
            return unchanged("no infeasible samples; rebalancing would empty the dataset".into());
        }
        // largest f with f / (f + infeasible) <= p
        let mut keep = (target_fraction * infeasible as f64 / (1.0 - target_fraction)).floor() as usize;
        while keep > 0 && keep as f64 / (keep + infeasible) as f64 > target_fraction {
            keep -= 1;
        }
        while (keep + 1) as f64 / (keep + 1 + infeasible) as f64 <= target_fraction {
            keep += 1;
        }
        let mut feasible_idx: Vec<usize> = (0..self.len()).filter(|&i| self.samples[i].feasible).collect();
        feasible_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut drop = vec![false; self.len()];
        for &i in &feasible_idx[keep..] {
            drop[i] = true;
        }
        let samples = self
            .samples
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(s, _)| s.clone())
            .collect();
        Rebalanced {
            dataset: Dataset {
                class: self.class,
                samples,
                split: self.split,
            },
            removed: feasible - keep,
            notice: None,
        }
    }

    /// Seeded partition into `(train, test)`, drawn uniformly within the
    /// feasible and infeasible strata so both sides keep the overall
    /// feasible fraction.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::invalid(format!("test fraction {test_fraction} outside (0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_test = (test_fraction * self.len() as f64).round() as usize;
        let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, s) in self.samples.iter().enumerate() {
            strata[usize::from(s.feasible)].push(i);
        }
        let feasible_test = ((test_fraction * strata[1].len() as f64).round() as usize).min(n_test);
        let quota = [n_test - feasible_test, feasible_test];
        let mut is_test = vec![false; self.len()];
        for (stratum, q) in strata.iter_mut().zip(quota) {
            stratum.shuffle(&mut rng);
            for &i in stratum.iter().take(q) {
                is_test[i] = true;
            }
        }
        let take = |want: bool, tag| Dataset {
            class: self.class,
            samples: self
                .samples
                .iter()
                .zip(&is_test)
                .filter(|(_, t)| **t == want)
                .map(|(s, _)| s.clone())
                .collect(),
            split: Some(tag),
        };
        Ok((take(false, SplitTag::Train), take(true, SplitTag::Test)))
    }

    /// Row-major feature matrix.
    pub fn feature_matrix(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.features.iter().copied()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.class.csv_features().to_vec();
        header.extend(["feasible", "t_intercept"]);
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            row.push(if s.feasible { "1" } else { "0" }.into());
            row.push(s.intercept_time.map(|t| t.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, class: EngagementClass) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let dim = class.feature_dim();
        let bad = |msg: String| Error::invalid(format!("{class} dataset CSV: {msg}"));
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let mut expect: Vec<&str> = class.csv_features().to_vec();
        expect.extend(["feasible", "t_intercept"]);
        if header.iter().collect::<Vec<_>>() != expect {
            return Err(bad(format!("header {:?}, expected {}", header, expect.join(","))));
        }
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |k: usize| {
                rec[k]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {}: {e}", line + 1)))
            };
            let features = (0..dim).map(num).collect::<Result<Vec<_>>>()?;
            let feasible = match &rec[dim] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("row {}: feasible flag {other:?}", line + 1))),
            };
            let intercept_time = if rec[dim + 1].is_empty() { None } else { Some(num(dim + 1)?) };
            if feasible != intercept_time.is_some() {
                return Err(bad(format!("row {}: time must be present exactly for feasible rows", line + 1)));
            }
            samples.push(LabeledSample {
                features,
                feasible,
                intercept_time,
            });
        }
        Ok(Self::new(class, samples))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::csv(path, e))
    }

    pub fn load_csv(path: &Path, class: EngagementClass) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), class)
    }
}

/// Provenance record written next to each dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub class: EngagementClass,
    pub ranges: SampleRanges,
    pub grid_points: usize,
    pub params: VehicleParams,
    pub scp: ScpConfig,
    pub target_fraction: f64,
    pub rebalance_seed: u64,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub feasible_fraction_before: f64,
    pub feasible_fraction_after: f64,
    pub samples_after_rebalance: usize,
    pub rebalance_notice: Option<String>,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Settings for [`build_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    pub class: EngagementClass,
    pub ranges: SampleRanges,
    pub target_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl DatagenConfig {
    pub fn new(class: EngagementClass, ranges: SampleRanges, seed: u64) -> Self {
        Self {
            class,
            ranges,
            target_fraction: 0.8,
            test_fraction: 0.2,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    /// Labelled grid before rebalancing.
    pub full: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: DatasetManifest,
}

/// Sample, label, rebalance and split in one go. Rebalancing and splitting
/// draw from seeds derived from `config.seed`.
pub fn build_dataset(
    config: &DatagenConfig,
    params: &VehicleParams,
    scp: &ScpConfig,
    workers: usize,
) -> Result<BuiltDataset> {
    let points = grid_sample(&config.ranges, config.class, params)?;
    let full = Dataset::new(config.class, label_samples(&points, config.class, params, scp, workers)?);
    let (rebalance_seed, split_seed) = (config.seed, config.seed.wrapping_add(1));
    let rebalanced = full.rebalance(config.target_fraction, rebalance_seed);
    let (train, test) = rebalanced.dataset.split(config.test_fraction, split_seed)?;
    let manifest = DatasetManifest {
        class: config.class,
        ranges: config.ranges,
        grid_points: points.len(),
        params: *params,
        scp: *scp,
        target_fraction: config.target_fraction,
        rebalance_seed,
        split_seed,
        test_fraction: config.test_fraction,
        feasible_fraction_before: full.feasible_fraction(),
        feasible_fraction_after: rebalanced.dataset.feasible_fraction(),
        samples_after_rebalance: rebalanced.dataset.len(),
        rebalance_notice: rebalanced.notice,
        train_samples: train.len(),
        test_samples: test.len(),
    };
    Ok(BuiltDataset {
        full,
        train,
        test,
        manifest,
    })
}
