//! Synthetic dual-modality datasets.
//!
//! Each sample pairs a high-SNR "scan" image (`H x W x C`) with a low-SNR
//! three-slice "volume" (`3 x H x W`). Both show the same pair of
//! comma-shaped striatal blobs:
//!
//! * controls have bright, symmetric blobs;
//! * patients have attenuated, asymmetric blobs whose loss grows with a
//!   per-subject severity drawn from a mixture of `severity_modes` modes.
//!   The tail of the comma fades faster than the head and the affected
//!   hemisphere faster than the other.
//!
//! The volume only starts to show attenuation once severity passes
//! `volume_onset`, so mild patients look normal there. Conversely a
//! fraction of "silent" patients, drawn from the most severe mode, have
//! scans that look normal while their volumes show the full loss; only the
//! volume reveals them. Pixel noise is Gaussian with standard deviation
//! `1 / snr` for the respective modality.
//!
//! Everything is a pure function of `(seed, subject, sample index)`, so
//! samples can be produced in any order or in parallel.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::net::Example;
use crate::rng::{self, SplitMix64};
use crate::{Error, Result, Tensor};

const STREAM_LABELS: u64 = 1;
const STREAM_SUBJECT: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
const STREAM_SPLIT: u64 = 4;
const STREAM_AUGMENT: u64 = 5;


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ScanStyle {
    ColorScan,
    GrayScan,
}

impl ScanStyle {
    pub fn channels(self) -> usize {
        match self {
            ScanStyle::ColorScan => 3,
            ScanStyle::GrayScan => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GeneratorConfig {
    pub name: String,
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    /// Subject ids run from `subject_offset` upward.
    pub subject_offset: u64,
    pub image_size: usize,
    pub scan_snr: f64,
    pub volume_snr: f64,
    /// Fraction of subjects that are patients.
    pub class_balance: f64,
    pub severity_modes: usize,
    /// Fraction of patients whose scans look normal.
    pub silent_patients: f64,
    /// Severity below which the volume shows no attenuation; above it the
    /// volume effect grows linearly back to full severity at 1.
    pub volume_onset: f64,
    pub seed: u64,
    pub style: ScanStyle,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n_subjects: 200,
            samples_per_subject: 2,
            subject_offset: 0,
            image_size: 32,
            scan_snr: 8.0,
            volume_snr: 3.0,
            class_balance: 0.64,
            severity_modes: 3,
            silent_patients: 0.15,
            volume_onset: 0.45,
            seed: 0,
            style: ScanStyle::ColorScan,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if self.image_size < 8 {
            return err("image_size must be at least 8");
        }
        if !(self.scan_snr > 0.0 && self.volume_snr > 0.0) {
            return err("SNR values must be positive");
        }
        if self.scan_snr <= self.volume_snr {
            return err("scan_snr must exceed volume_snr");
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return err("class_balance must lie in (0, 1)");
        }
        if self.severity_modes == 0 {
            return err("severity_modes must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.silent_patients) {
            return err("silent_patients must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.volume_onset) {
            return err("volume_onset must lie in [0, 1)");
        }
        Ok(())
    }

    /// Number of independent factors that shape the images: severity,
    /// affected hemisphere and whether the scan is silent.
    pub fn intrinsic_dim(&self) -> usize {
        3
    }

    /// Centers of the severity mixture, evenly spaced inside (0, 1) with
    /// one empty step below the mildest mode.
    pub fn severity_centers(&self) -> Vec<f64> {
        let k = self.severity_modes as f64;
        (0..self.severity_modes).map(|i| (i as f64 + 2.0) / (k + 2.0)).collect()
    }

    fn severity_spread(&self) -> f64 {
        0.25 / (self.severity_modes as f64 + 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Full,
    Train,
    Valid,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Full => "full",
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(SplitTag::Full),
            "train" => Some(SplitTag::Train),
            "valid" => Some(SplitTag::Valid),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject_id: u64,
    /// `[H, W, C]`
    pub scan: Tensor,
    /// `[3, H, W]`
    pub volume: Tensor,
    /// 0 = control, 1 = patient.
    pub label: u8,
    /// 0 for controls.
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: SplitTag,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, split: SplitTag, samples: Vec<Sample>) -> Self {
        Self {
            name: name.into(),
            split,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct subject ids in order of first appearance.
    pub fn subjects(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.subject_id) {
                out.push(s.subject_id);
            }
        }
        out
    }

    /// `[controls, patients]`
    pub fn label_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for s in &self.samples {
            c[usize::from(s.label.min(1))] += 1;
        }
        c
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subject_ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.subject_id).collect()
    }

    pub fn examples(&self, input: &InputSpec) -> Result<Vec<Example>> {
        self.samples
            .iter()
            .map(|s| {
                Ok(Example {
                    input: input.encode(s)?,
                    target: f64::from(s.label),
                })
            })
            .collect()
    }
}

/// Per-subject generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: u64,
    pub label: u8,
    pub severity: f64,
    /// Mode index of the severity mixture (patients only).
    pub mode: Option<usize>,
    /// `true` when the left hemisphere is the more affected one.
    pub left_affected: bool,
    /// Severity the scan shows: `severity`, or 0 for silent patients.
    pub scan_severity: f64,
    pub scan_gain: f64,
    /// Offset of the blob pair in pixels.
    pub shift: (f64, f64),
}

/// Draws every subject's parameters.
pub fn subjects(cfg: &GeneratorConfig) -> Result<Vec<Subject>> {
    cfg.validate()?;
    let n = cfg.n_subjects;
    let n_patients = libm::round(n as f64 * cfg.class_balance) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(cfg.seed, &[STREAM_LABELS]), &mut order);
    let mut is_patient = vec![false; n];
    for &k in &order[..n_patients.min(n)] {
        is_patient[k] = true;
    }
    let centers = cfg.severity_centers();
    let spread = cfg.severity_spread();
    Ok((0..n)
        .map(|k| {
            let id = cfg.subject_offset + k as u64;
            let mut r = rng::stream(cfg.seed, &[STREAM_SUBJECT, id]);
            let shift = (
                rng::uniform(&mut r, -1.0, 1.0),
                rng::uniform(&mut r, -1.0, 1.0),
            );
            let left_affected = rng::uniform(&mut r, 0.0, 1.0) < 0.5;
            if is_patient[k] {
                let silent = rng::uniform(&mut r, 0.0, 1.0) < cfg.silent_patients;
                let mode = if silent { centers.len() - 1 } else { rng::index(&mut r, centers.len()) };
                let severity = centers[mode] + rng::uniform(&mut r, -spread, spread);
                Subject {
                    id,
                    label: 1,
                    severity,
                    mode: Some(mode),
                    left_affected,
                    scan_severity: if silent { 0.0 } else { severity },
                    scan_gain: rng::uniform(&mut r, 0.95, 1.05),
                    shift,
                }
            } else {
                Subject {
                    id,
                    label: 0,
                    severity: 0.0,
                    mode: None,
                    left_affected,
                    scan_severity: 0.0,
                    scan_gain: rng::uniform(&mut r, 0.95, 1.05),
                    shift,
                }
            }
        })
        .collect())
}

/// Blob amplitudes `[(head, tail) for left, (head, tail) for right]`.
fn amplitudes(s: f64, left_affected: bool) -> [(f64, f64); 2] {
    let affected = (1.0 - 0.6 * s, 1.0 - s);
    let other = (1.0 - 0.3 * s, 1.0 - 0.6 * s);
    if left_affected {
        [affected, other]
    } else {
        [other, affected]
    }
}

/// Noise-free striatal template on an `n x n` grid.
fn template(n: usize, subject: &Subject, severity: f64, jitter: (f64, f64)) -> Vec<f64> {
    let size = n as f64;
    let amps = amplitudes(severity, subject.left_affected);
    let sigma_head = 0.065 * size;
    let sigma_tail = 0.05 * size;
    let mut blobs: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (side, &(head, tail)) in amps.iter().enumerate() {
        let dir = if side == 0 { -1.0 } else { 1.0 };
        let cx = (0.5 + dir * 0.12) * size + subject.shift.0 + jitter.0;
        let cy = 0.40 * size + subject.shift.1 + jitter.1;
        blobs.push((cx, cy, sigma_head, head));
        for k in 1..=3 {
            let k = k as f64;
            blobs.push((
                cx + dir * 0.04 * k * size,
                cy + 0.09 * k * size,
                sigma_tail,
                0.8 * tail,
            ));
        }
    }
    let mut img = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            img[y * n + x] = blobs
                .iter()
                .map(|&(cx, cy, s, a)| {
                    let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                    a * libm::exp(-d2 / (2.0 * s * s))
                })
                .sum();
        }
    }
    img
}

/// Anatomy shared by every volume slice: a faint ring.
fn anatomy(n: usize) -> Vec<f64> {
    let size = n as f64;
    let (cx, cy, radius, width) = (0.5 * size, 0.5 * size, 0.42 * size, 0.04 * size);
    let mut img = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let d = libm::hypot(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let off = (d - radius) / width;
            img[y * n + x] = 0.5 * libm::exp(-0.5 * off * off);
        }
    }
    img
}

const SLICE_WEIGHTS: [f64; 3] = [0.7, 1.0, 0.7];

/// Channel `c` of the colour palette at intensity `i`.
pub fn palette(i: f64, c: usize) -> f64 {
    match c {
        0 => i,
        1 => 0.7 * i,
        _ => 0.5 * (1.0 - i),
    }
}

/// Renders sample `index` of `subject`.
pub fn render(cfg: &GeneratorConfig, subject: &Subject, index: usize) -> Sample {
    let n = cfg.image_size;
    let mut r = rng::stream(cfg.seed, &[STREAM_SAMPLE, subject.id, index as u64]);
    let jitter = (rng::uniform(&mut r, -0.5, 0.5), rng::uniform(&mut r, -0.5, 0.5));
    let intensity = rng::uniform(&mut r, 0.95, 1.05);
    let scan_base = template(n, subject, subject.scan_severity, jitter);
    let volume_severity = ((subject.severity - cfg.volume_onset) / (1.0 - cfg.volume_onset)).max(0.0);
    let base = template(n, subject, volume_severity, jitter);

    let scan_sigma = 1.0 / cfg.scan_snr;
    let gain = subject.scan_gain * intensity;
    let channels = cfg.style.channels();
    let mut scan = vec![0.0; n * n * channels];
    for (p, &v) in scan_base.iter().enumerate() {
        let i = gain * v;
        for c in 0..channels {
            let clean = match cfg.style {
                ScanStyle::GrayScan => i,
                ScanStyle::ColorScan => palette(i, c),
            };
            scan[p * channels + c] = clean + scan_sigma * rng::normal(&mut r);
        }
    }

    let volume_sigma = 1.0 / cfg.volume_snr;
    let ring = anatomy(n);
    let mut volume = vec![0.0; 3 * n * n];
    for (t, w) in SLICE_WEIGHTS.iter().enumerate() {
        for p in 0..n * n {
            volume[t * n * n + p] = w * intensity * base[p] + ring[p] + volume_sigma * rng::normal(&mut r);
        }
    }

    Sample {
        subject_id: subject.id,
        scan: Tensor::from_parts(vec![n, n, channels], scan),
        volume: Tensor::from_parts(vec![3, n, n], volume),
        label: subject.label,
        severity: subject.severity,
    }
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    let subjects = subjects(cfg)?;
    let samples = subjects
        .iter()
        .flat_map(|s| (0..cfg.samples_per_subject).map(move |i| (s, i)))
        .map(|(s, i)| render(cfg, s, i))
        .collect();
    Ok(Dataset::new(cfg.name.clone(), SplitTag::Full, samples))
}

/// Subject counts for the three splits by largest remainder, with every
/// split receiving at least one subject.
fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = libm::floor(quotas[i]) as usize;
    }
    let mut rest: Vec<usize> = (0..3).collect();
    rest.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in rest.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], usize::MAX - j)).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

/// Subject-independent split into train/valid/test.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|f| !(*f > 0.0)) || libm::fabs(fractions.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(Error::Config("split fractions must be positive and sum to 1".into()));
    }
    let mut subjects = ds.subjects();
    if subjects.len() < 3 {
        return Err(Error::TooFewSubjects {
            found: subjects.len(),
        });
    }
    rng::shuffle(&mut rng::stream(seed, &[STREAM_SPLIT]), &mut subjects);
    let counts = apportion(subjects.len(), fractions);
    let part = |range: core::ops::Range<usize>, tag: SplitTag| {
        let ids = &subjects[range];
        Dataset::new(
            ds.name.clone(),
            tag,
            ds.samples
                .iter()
                .filter(|s| ids.contains(&s.subject_id))
                .cloned()
                .collect(),
        )
    };
    let a = counts[0];
    let b = a + counts[1];
    Ok((
        part(0..a, SplitTag::Train),
        part(a..b, SplitTag::Valid),
        part(b..subjects.len(), SplitTag::Test),
    ))
}

/// One percent of the dataset's pixel dynamic range.
pub fn default_noise_sigma(ds: &Dataset) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &ds.samples {
        for &v in s.scan.data().iter().chain(s.volume.data()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi > lo {
        0.01 * (hi - lo)
    } else {
        0.0
    }
}

fn jittered(t: &Tensor, sigma: f64, r: &mut SplitMix64) -> Tensor {
    if sigma == 0.0 {
        return t.clone();
    }
    let data = t.data().iter().map(|v| v + sigma * rng::normal(r)).collect();
    Tensor::from_parts(t.dims().to_vec(), data)
}

/// Appends noisy copies of minority-class samples, cycling through them in
/// dataset order, until both classes have the same count.
pub fn augment_balance(ds: &Dataset, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config("noise sigma must be finite and non-negative".into()));
    }
    let counts = ds.label_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass);
    }
    let minority = u8::from(counts[1] < counts[0]);
    let deficit = counts[0].abs_diff(counts[1]);
    let pool: Vec<&Sample> = ds.samples.iter().filter(|s| s.label == minority).collect();
    let mut r = rng::stream(seed, &[STREAM_AUGMENT]);
    let mut out = ds.clone();
    for k in 0..deficit {
        let src = pool[k % pool.len()];
        out.samples.push(Sample {
            scan: jittered(&src.scan, noise_sigma, &mut r),
            volume: jittered(&src.volume, noise_sigma, &mut r),
            ..src.clone()
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Modality {
    Dual,
    ScanOnly,
    VolumeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Layout {
    /// `[3, C + 1, H, W]`: at step `t` the scan channels followed by
    /// volume slice `t`.
    Sequence,
    /// Scan planes then volume slices, flattened to one vector.
    Flat,
}

/// How samples become network inputs. Gray scans go through the colour
/// palette when the network expects three channels, and colour scans are
/// averaged when it expects one; the masked modality is zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct InputSpec {
    pub layout: Layout,
    pub modality: Modality,
    pub scan_channels: usize,
    pub image_size: usize,
}

impl InputSpec {
    pub fn sequence(modality: Modality, scan_channels: usize, image_size: usize) -> Self {
        Self {
            layout: Layout::Sequence,
            modality,
            scan_channels,
            image_size,
        }
    }

    pub fn flat(modality: Modality, scan_channels: usize, image_size: usize) -> Self {
        Self {
            layout: Layout::Flat,
            modality,
            scan_channels,
            image_size,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let n = self.image_size;
        match self.layout {
            Layout::Sequence => vec![3, self.scan_channels + 1, n, n],
            Layout::Flat => vec![(self.scan_channels + 3) * n * n],
        }
    }

    /// Scan as `C x H x W` planes in the network's channel count.
    fn scan_planes(&self, s: &Sample) -> Vec<f64> {
        let n = self.image_size;
        let c_src = s.scan.dims()[2];
        let c_dst = self.scan_channels;
        let src = s.scan.data();
        let mut out = vec![0.0; c_dst * n * n];
        if self.modality == Modality::VolumeOnly {
            return out;
        }
        for p in 0..n * n {
            let px = &src[p * c_src..(p + 1) * c_src];
            let mean = px.iter().sum::<f64>() / c_src as f64;
            for c in 0..c_dst {
                out[c * n * n + p] = if c_src == c_dst {
                    px[c]
                } else if c_src == 1 && c_dst == 3 {
                    palette(px[0], c)
                } else if c_src == 1 {
                    px[0]
                } else {
                    mean
                };
            }
        }
        out
    }

    pub fn encode(&self, s: &Sample) -> Result<Tensor> {
        let n = self.image_size;
        let expect_scan = [n, n];
        if s.scan.dims().len() != 3 || s.scan.dims()[..2] != expect_scan || s.volume.dims() != [3, n, n] {
            return Err(Error::InputShape {
                expected: vec![n, n],
                found: s.scan.dims().to_vec(),
            });
        }
        let scan = self.scan_planes(s);
        let zero_volume = self.modality == Modality::ScanOnly;
        let vol = |i: usize| if zero_volume { 0.0 } else { s.volume.data()[i] };
        let plane = n * n;
        let data = match self.layout {
            Layout::Sequence => {
                let step = (self.scan_channels + 1) * plane;
                let mut d = vec![0.0; 3 * step];
                for t in 0..3 {
                    d[t * step..t * step + scan.len()].copy_from_slice(&scan);
                    for p in 0..plane {
                        d[t * step + scan.len() + p] = vol(t * plane + p);
                    }
                }
                d
            }
            Layout::Flat => {
                let mut d = scan;
                d.extend((0..3 * plane).map(vol));
                d
            }
        };
        Ok(Tensor::from_parts(self.dims(), data))
    }
}
