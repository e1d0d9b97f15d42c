//! Regional CSF volumes to five reduced inputs, and a synthetic cohort
//! generator standing in for clinical data.
//!
//! The twelve regions are a 3 × 2 × 2 grid. Region `4k + q` lies in slab `k`
//! (0 front, 1 middle, 2 back) and quadrant `q` (0 left-top, 1 right-top,
//! 2 left-bottom, 3 right-bottom). The pools are fixed subsets of it:
//!
//! | pool   | regions              |
//! |--------|----------------------|
//! | front  | 0 1 2 3              |
//! | middle | 4 5 6 7              |
//! | back   | 8 9 10 11            |
//! | left   | 0 2 4 6 8 10         |
//! | right  | 1 3 5 7 9 11         |
//! | top    | 0 1 4 5 8 9          |
//! | bottom | 2 3 6 7 10 11        |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::Dataset;

pub const REGIONS: usize = 12;
pub const FRONT: [usize; 4] = [0, 1, 2, 3];
pub const MIDDLE: [usize; 4] = [4, 5, 6, 7];
pub const BACK: [usize; 4] = [8, 9, 10, 11];
pub const LEFT: [usize; 6] = [0, 2, 4, 6, 8, 10];
pub const RIGHT: [usize; 6] = [1, 3, 5, 7, 9, 11];
pub const TOP: [usize; 6] = [0, 1, 4, 5, 8, 9];
pub const BOTTOM: [usize; 6] = [2, 3, 6, 7, 10, 11];

/// Header comment written at the top of raw CSV files.
pub const SUBSET_COMMENT: &str = "# pools: front=0-3 middle=4-7 back=8-11 left=0,2,4,6,8,10 right=1,3,5,7,9,11 \
top=0,1,4,5,8,9 bottom=2,3,6,7,10,11";

/// Default onset age for atrophy, in years.
pub const DEFAULT_ONSET: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Normal,
    Alz,
    Ftd,
    Vasd,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Normal, Class::Alz, Class::Ftd, Class::Vasd];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Normal => "normal",
            Class::Alz => "alz",
            Class::Ftd => "ftd",
            Class::Vasd => "vasd",
        }
    }

    /// One-hot target row.
    pub fn target(self) -> [f64; 4] {
        let mut t = [0.0; 4];
        t[self.index()] = 1.0;
        t
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Class::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSubject {
    pub id: String,
    pub repeat: u32,
    pub class: Class,
    pub age: f64,
    pub bbox: f64,
    pub volumes: [f64; REGIONS],
}

impl RawSubject {
    pub fn validate(&self) -> Result<()> {
        if !(30.0..=100.0).contains(&self.age) {
            return Err(Error::InvalidArgument(format!("subject {}: age {} outside [30, 100]", self.id, self.age)));
        }
        if self.volumes.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("subject {}: volumes must be finite and ≥ 0", self.id)));
        }
        let vmax = self.volumes.iter().fold(0.0f64, |m, v| m.max(*v));
        if !(self.bbox.is_finite() && self.bbox > vmax) {
            return Err(Error::InvalidArgument(format!(
                "subject {}: bounding box {} must exceed every regional volume",
                self.id, self.bbox
            )));
        }
        Ok(())
    }
}

/// The seven pooled volumes, each a sum of regions over the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub front: f64,
    pub middle: f64,
    pub back: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl Pools {
    pub fn to_array(&self) -> [f64; 7] {
        [self.front, self.middle, self.back, self.left, self.right, self.top, self.bottom]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self { front: a[0], middle: a[1], back: a[2], left: a[3], right: a[4], top: a[5], bottom: a[6] }
    }

    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let a = self.to_array();
        Self::from_array(std::array::from_fn(|i| f(i, a[i])))
    }
}

pub fn pool_regions(volumes: &[f64; REGIONS], bbox: f64) -> Result<Pools> {
    if !(bbox > 0.0 && bbox.is_finite()) {
        return Err(Error::InvalidArgument(format!("bounding-box volume must be positive, got {bbox}")));
    }
    let sum = |idx: &[usize]| idx.iter().map(|&i| volumes[i]).sum::<f64>() / bbox;
    Ok(Pools {
        front: sum(&FRONT),
        middle: sum(&MIDDLE),
        back: sum(&BACK),
        left: sum(&LEFT),
        right: sum(&RIGHT),
        top: sum(&TOP),
        bottom: sum(&BOTTOM),
    })
}

/// Normal atrophy model `V = (age − C)/K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeModel {
    pub k: f64,
    pub onset: f64,
}

impl AgeModel {
    pub fn new(k: f64, onset: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite() && onset.is_finite()) {
            return Err(Error::InvalidArgument(format!("age model needs K > 0, got {k}")));
        }
        Ok(Self { k, onset })
    }

    /// `V' = V·K/(age − C)`.
    pub fn correct(&self, v: f64, age: f64) -> Result<f64> {
        if !(age > self.onset) {
            return Err(Error::AgeCorrection { age, onset: self.onset });
        }
        Ok(v * self.k / (age - self.onset))
    }

    /// Least-squares `K` through the origin of `V` against `age − C`.
    pub fn fit(ages: &[f64], values: &[f64], onset: f64) -> Result<Self> {
        if ages.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: ages.len(), got: values.len() });
        }
        let mut sxx = 0.0;
        let mut sxv = 0.0;
        for (&a, &v) in ages.iter().zip(values) {
            if a > onset {
                let x = a - onset;
                sxx += x * x;
                sxv += x * v;
            }
        }
        if !(sxv > 0.0) {
            return Err(Error::InsufficientData("no usable normal subjects above the onset age".into()));
        }
        Self::new(sxx / sxv, onset)
    }
}

/// One age model per pool, fitted on normal subjects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeCorrection {
    pub onset: f64,
    pub k: Pools,
}

impl AgeCorrection {
    pub fn uniform(k: f64, onset: f64) -> Result<Self> {
        AgeModel::new(k, onset)?;
        Ok(Self { onset, k: Pools::from_array([k; 7]) })
    }

    pub fn fit(subjects: &[RawSubject], onset: f64) -> Result<Self> {
        let normals: Vec<(f64, Pools)> = subjects
            .iter()
            .filter(|s| s.class == Class::Normal)
            .map(|s| Ok((s.age, pool_regions(&s.volumes, s.bbox)?)))
            .collect::<Result<_>>()?;
        let ages: Vec<f64> = normals.iter().map(|(a, _)| *a).collect();
        let mut k = [0.0; 7];
        for (i, slot) in k.iter_mut().enumerate() {
            let vals: Vec<f64> = normals.iter().map(|(_, p)| p.to_array()[i]).collect();
            *slot = AgeModel::fit(&ages, &vals, onset)?.k;
        }
        Ok(Self { onset, k: Pools::from_array(k) })
    }

    pub fn apply(&self, pools: &Pools, age: f64) -> Result<Pools> {
        let k = self.k.to_array();
        let mut out = [0.0; 7];
        for (i, v) in pools.to_array().into_iter().enumerate() {
            out[i] = AgeModel { k: k[i], onset: self.onset }.correct(v, age)?;
        }
        Ok(Pools::from_array(out))
    }
}

/// The five Anscombe-combined inputs.
pub fn reduce(p: &Pools) -> Result<[f64; 5]> {
    if let Some(v) = p.to_array().into_iter().find(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("pooled volume {v} must be finite and ≥ 0")));
    }
    let r2 = std::f64::consts::SQRT_2;
    let (f, m, b) = (p.front.sqrt(), p.middle.sqrt(), p.back.sqrt());
    Ok([
        (m - f) / r2,
        (m - b) / r2,
        (f + m + b) / 3f64.sqrt(),
        (p.left.sqrt() - p.right.sqrt()) / r2,
        (p.top.sqrt() - p.bottom.sqrt()) / r2,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRow {
    pub id: String,
    pub repeat: u32,
    pub class: Class,
    pub x: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTable {
    pub rows: Vec<ReducedRow>,
}

/// A subject dropped from the reduced table and why.
#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub id: String,
    pub repeat: u32,
    pub reason: String,
}

/// Pools, age-corrects and reduces every subject. Subjects at or below the
/// onset age are excluded and reported.
pub fn reduce_subjects(subjects: &[RawSubject], correction: &AgeCorrection) -> Result<(ReducedTable, Vec<Exclusion>)> {
    let mut rows = Vec::with_capacity(subjects.len());
    let mut excluded = Vec::new();
    for s in subjects {
        s.validate()?;
        let pools = pool_regions(&s.volumes, s.bbox)?;
        match correction.apply(&pools, s.age) {
            Ok(primed) => rows.push(ReducedRow { id: s.id.clone(), repeat: s.repeat, class: s.class, x: reduce(&primed)? }),
            Err(e @ Error::AgeCorrection { .. }) => {
                excluded.push(Exclusion { id: s.id.clone(), repeat: s.repeat, reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    Ok((ReducedTable { rows }, excluded))
}

const RAW_HEADER: [&str; 17] =
    ["id", "repeat", "class", "age", "bbox", "v0", "v1", "v2", "v3", "v4", "v5", "v6", "v7", "v8", "v9", "v10", "v11"];
const REDUCED_HEADER: [&str; 12] =
    ["id", "repeat", "class", "x1", "x2", "x3", "x4", "x5", "t_norm", "t_alz", "t_ftd", "t_vasd"];

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::parse(path, format!("expected header `{}`", want.join(","))));
    }
    Ok(())
}

fn field<T: FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| Error::parse(path, format!("line {line}: missing column {i}")))?;
    raw.trim().parse().map_err(|_| Error::parse(path, format!("line {line}: bad value `{raw}` in column {i}")))
}

pub fn write_raw_csv(subjects: &[RawSubject]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(RAW_HEADER)?;
    for s in subjects {
        let mut rec = vec![s.id.clone(), s.repeat.to_string(), s.class.to_string(), s.age.to_string(), s.bbox.to_string()];
        rec.extend(s.volumes.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(format!("{SUBSET_COMMENT}\n{}", String::from_utf8_lossy(&body)))
}

pub fn read_raw_csv(path: &Path, text: &str) -> Result<Vec<RawSubject>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    check_header(path, r.headers()?, &RAW_HEADER)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let class: String = field(path, &rec, 2)?;
        let s = RawSubject {
            id: field(path, &rec, 0)?,
            repeat: field(path, &rec, 1)?,
            class: class.parse().map_err(|e: Error| Error::parse(path, e.to_string()))?,
            age: field(path, &rec, 3)?,
            bbox: field(path, &rec, 4)?,
            volumes: {
                let mut v = [0.0; REGIONS];
                for (i, slot) in v.iter_mut().enumerate() {
                    *slot = field(path, &rec, 5 + i)?;
                }
                v
            },
        };
        s.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

impl ReducedTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(REDUCED_HEADER)?;
        for row in &self.rows {
            let mut rec = vec![row.id.clone(), row.repeat.to_string(), row.class.to_string()];
            rec.extend(row.x.iter().map(f64::to_string));
            rec.extend(row.class.target().iter().map(|t| format!("{t}")));
            w.write_record(&rec)?;
        }
        let body = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8_lossy(&body).into_owned())
    }

    pub fn from_csv(path: &Path, text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        check_header(path, r.headers()?, &REDUCED_HEADER)?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let class: String = field(path, &rec, 2)?;
            let class: Class = class.parse().map_err(|e: Error| Error::parse(path, e.to_string()))?;
            let mut x = [0.0; 5];
            for (i, slot) in x.iter_mut().enumerate() {
                *slot = field(path, &rec, 3 + i)?;
            }
            let mut t = [0.0; 4];
            for (i, slot) in t.iter_mut().enumerate() {
                *slot = field(path, &rec, 8 + i)?;
            }
            if t != class.target() {
                return Err(Error::parse(path, format!("targets {t:?} do not match class {class}")));
            }
            rows.push(ReducedRow { id: field(path, &rec, 0)?, repeat: field(path, &rec, 1)?, class, x });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(path, &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(
            self.rows.iter().map(|r| r.x.to_vec()).collect(),
            self.rows.iter().map(|r| r.class.target().to_vec()).collect(),
        )
    }
}

/// Multiplicative atrophy pattern of a class relative to normal ageing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    /// Front, middle and back slab factors.
    pub slab: [f64; 3],
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    pub age_mean: f64,
    pub age_sd: f64,
}

impl ClassProfile {
    pub fn region_factor(&self, region: usize) -> f64 {
        let (k, q) = (region / 4, region % 4);
        let side = if q % 2 == 0 { self.left } else { self.right };
        let vert = if q < 2 { self.top } else { self.bottom };
        self.slab[k] * side * vert
    }
}

/// Synthetic cohort settings. Profiles are in class order normal, alz, ftd, vasd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub counts: [usize; 4],
    pub repeats: u32,
    pub profiles: [ClassProfile; 4],
    pub onset: f64,
    /// Normal-ageing slope: total CSF fraction is `(age − onset)/k_total`.
    pub k_total: f64,
    /// Mean bounding-box volume and its log-normal spread.
    pub bbox_mean: f64,
    pub bbox_sd: f64,
    /// Log-normal spread of each subject's slab, side and vertical factors.
    pub subject_sd: f64,
    /// Independent log-normal spread per region.
    pub region_sd: f64,
    /// Repeat-measurement noise: sd `repeat_noise·√v` on each regional volume.
    pub repeat_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let base = ClassProfile { slab: [1.0; 3], left: 1.0, right: 1.0, top: 1.0, bottom: 1.0, age_mean: 64.2, age_sd: 7.7 };
        Self {
            counts: [10, 19, 19, 11],
            repeats: 2,
            profiles: [
                base,
                ClassProfile { slab: [1.0, 1.35, 1.3], age_mean: 61.3, age_sd: 6.4, ..base },
                ClassProfile { slab: [1.4, 1.1, 1.0], left: 1.12, right: 0.945, age_mean: 60.6, age_sd: 0.2, ..base },
                ClassProfile { slab: [1.25, 1.25, 1.25], top: 1.15, bottom: 0.93, age_mean: 67.6, age_sd: 5.9, ..base },
            ],
            onset: DEFAULT_ONSET,
            k_total: 400.0,
            bbox_mean: 1.5e6,
            bbox_sd: 0.1,
            subject_sd: 0.2,
            region_sd: 0.12,
            repeat_noise: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.counts.iter().sum::<usize>() == 0 || self.repeats == 0 {
            return Err(Error::InvalidArgument("synthetic cohort needs at least one subject and one repeat".into()));
        }
        if self.counts[Class::Normal.index()] < 2 {
            return Err(Error::InvalidArgument("at least two normal subjects are needed to fit the age model".into()));
        }
        let sds = [self.bbox_sd, self.subject_sd, self.region_sd, self.repeat_noise];
        if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("spreads must be finite and ≥ 0".into()));
        }
        if !(self.k_total > 0.0 && self.bbox_mean > 0.0) {
            return Err(Error::InvalidArgument("k_total and bbox_mean must be positive".into()));
        }
        for p in &self.profiles {
            let f = [p.slab[0], p.slab[1], p.slab[2], p.left, p.right, p.top, p.bottom];
            if f.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(p.age_sd >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid class profile {p:?}")));
            }
            if p.age_mean - 2.0 * p.age_sd <= self.onset {
                return Err(Error::InvalidArgument(format!(
                    "class mean age {} too close to the onset age {}",
                    p.age_mean, self.onset
                )));
            }
        }
        Ok(())
    }

    /// Noise-free reduced pattern of a class, with the age model fitted on
    /// noise-free normals.
    pub fn expected_pattern(&self, class: Class) -> Result<[f64; 5]> {
        let pools = |p: &ClassProfile| {
            let v: [f64; REGIONS] = std::array::from_fn(|r| p.region_factor(r) / REGIONS as f64);
            pool_regions(&v, 1.0)
        };
        let normal = pools(&self.profiles[Class::Normal.index()])?;
        let this = pools(&self.profiles[class.index()])?;
        reduce(&this.map(|i, v| v / normal.to_array()[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub subjects: Vec<RawSubject>,
    pub correction: AgeCorrection,
    pub reduced: ReducedTable,
    pub excluded: Vec<Exclusion>,
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a labelled synthetic cohort and reduces it.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::new();
    let mut next_id = 0;
    for class in Class::ALL {
        let p = &config.profiles[class.index()];
        let age_dist = Normal::new(p.age_mean, p.age_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for _ in 0..config.counts[class.index()] {
            next_id += 1;
            let id = format!("s{next_id:03}");
            let age = age_dist.sample(&mut rng).clamp(config.onset + 5.0, 100.0);
            let mut lognorm = |sd: f64| (sd * std_normal(&mut rng)).exp();
            let bbox = config.bbox_mean * lognorm(config.bbox_sd);
            let slab: [f64; 3] = std::array::from_fn(|k| p.slab[k] * lognorm(config.subject_sd));
            let (left, right) = (p.left * lognorm(config.subject_sd), p.right * lognorm(config.subject_sd));
            let (top, bottom) = (p.top * lognorm(config.subject_sd), p.bottom * lognorm(config.subject_sd));
            let subject = ClassProfile { slab, left, right, top, bottom, ..*p };
            let total = bbox * (age - config.onset) / config.k_total;
            let base: [f64; REGIONS] =
                std::array::from_fn(|r| total / REGIONS as f64 * subject.region_factor(r) * lognorm(config.region_sd));
            for repeat in 0..config.repeats {
                let volumes = base.map(|v| {
                    let noisy = v + config.repeat_noise * v.sqrt() * std_normal(&mut rng);
                    noisy.max(0.0)
                });
                subjects.push(RawSubject { id: id.clone(), repeat, class, age, bbox, volumes });
            }
        }
    }
    let correction = AgeCorrection::fit(&subjects, config.onset)?;
    let (reduced, excluded) = reduce_subjects(&subjects, &correction)?;
    Ok(SynthOutput { subjects, correction, reduced, excluded })
}
