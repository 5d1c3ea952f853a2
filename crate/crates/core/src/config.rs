//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::ctf::CtfParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub n: usize,
    pub p: usize,
    pub snr: f64,
    pub seed: u64,
    pub defocus_um: Vec<f64>,
    pub cs_mm: f64,
    pub lambda_pm: f64,
    pub b_factor: f64,
    pub amp_contrast: f64,
    pub pixel_size_ang: f64,
    pub radius: f64,
    /// Fraction of the Nyquist bandlimit kept by the Fourier–Bessel basis.
    pub bandlimit: f64,
    pub s: usize,
    pub k: usize,
    pub angles: usize,
    pub shrink_tau: f64,
    pub threshold: f64,
    /// Blob count of the random phantom; 0 selects the built-in ten-blob particle.
    pub blobs: usize,
    pub blob_spread: f64,
    pub blob_sigma_min: f64,
    pub blob_sigma_max: f64,
    pub phantom_seed: u64,
    /// Number of class averages written to the montage.
    pub montage_classes: usize,
    /// Optional MRC volume projected instead of the built-in phantom.
    pub volume: Option<PathBuf>,
    /// Optional existing stack; when set the simulate stage only copies it.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let reference = CtfParams::reference(1.0);
        PipelineConfig {
            n: 1000,
            p: 33,
            snr: 1.0 / 40.0,
            seed: 1,
            defocus_um: vec![1.0, 1.3, 1.6, 1.9],
            cs_mm: reference.cs_mm,
            lambda_pm: reference.lambda_pm,
            b_factor: reference.b_factor,
            amp_contrast: reference.amp_contrast,
            pixel_size_ang: reference.pixel_size,
            radius: 14.0,
            bandlimit: 0.4,
            s: 50,
            k: 10,
            angles: 360,
            shrink_tau: 0.05,
            threshold: 0.9,
            blobs: 12,
            blob_spread: 0.6,
            blob_sigma_min: 0.08,
            blob_sigma_max: 0.14,
            phantom_seed: 1,
            montage_classes: 8,
            volume: None,
            input: None,
            out: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "n",
    "p",
    "snr",
    "seed",
    "defocus_um",
    "cs_mm",
    "lambda_pm",
    "b_factor",
    "amp_contrast",
    "pixel_size_ang",
    "radius",
    "bandlimit",
    "S",
    "K",
    "angles",
    "shrink_tau",
    "threshold",
    "blobs",
    "blob_spread",
    "blob_sigma_min",
    "blob_sigma_max",
    "phantom_seed",
    "montage_classes",
    "volume",
    "input",
    "out",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

/// Accepts plain numbers and `a/b` fractions such as `1/40`.
fn parse_ratio(key: &str, value: &str) -> Result<f64> {
    match value.split_once('/') {
        Some((a, b)) => Ok(parse_num::<f64>(key, a.trim())? / parse_num::<f64>(key, b.trim())?),
        None => parse_num(key, value),
    }
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", k + 1)))?;
            out.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "snr" => self.snr = parse_ratio(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "defocus_um" => {
                self.defocus_um = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "cs_mm" => self.cs_mm = parse_num(key, value)?,
            "lambda_pm" => self.lambda_pm = parse_num(key, value)?,
            "b_factor" => self.b_factor = parse_num(key, value)?,
            "amp_contrast" => self.amp_contrast = parse_num(key, value)?,
            "pixel_size_ang" => self.pixel_size_ang = parse_num(key, value)?,
            "radius" => self.radius = parse_num(key, value)?,
            "bandlimit" => self.bandlimit = parse_num(key, value)?,
            "S" => self.s = parse_num(key, value)?,
            "K" => self.k = parse_num(key, value)?,
            "angles" => self.angles = parse_num(key, value)?,
            "shrink_tau" => self.shrink_tau = parse_num(key, value)?,
            "threshold" => self.threshold = parse_num(key, value)?,
            "blobs" => self.blobs = parse_num(key, value)?,
            "blob_spread" => self.blob_spread = parse_num(key, value)?,
            "blob_sigma_min" => self.blob_sigma_min = parse_num(key, value)?,
            "blob_sigma_max" => self.blob_sigma_max = parse_num(key, value)?,
            "phantom_seed" => self.phantom_seed = parse_num(key, value)?,
            "montage_classes" => self.montage_classes = parse_num(key, value)?,
            "volume" => self.volume = (!value.is_empty()).then(|| PathBuf::from(value)),
            "input" => self.input = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in Self::parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn ctf_params(&self) -> Vec<CtfParams> {
        self.defocus_um
            .iter()
            .map(|&d| CtfParams {
                defocus_um: d,
                cs_mm: self.cs_mm,
                lambda_pm: self.lambda_pm,
                b_factor: self.b_factor,
                amp_contrast: self.amp_contrast,
                pixel_size: self.pixel_size_ang,
            })
            .collect()
    }

    pub fn n_groups(&self) -> usize {
        self.defocus_um.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p % 2 == 0 || self.p < 5 {
            return Err(Error::Config(format!("p must be odd and ≥ 5, got {}", self.p)));
        }
        if self.defocus_um.is_empty() {
            return Err(Error::Config("defocus_um must list at least one group".into()));
        }
        if self.n < self.defocus_um.len() {
            return Err(Error::Config(format!(
                "n = {} is smaller than the number of defocus groups {}",
                self.n,
                self.defocus_um.len()
            )));
        }
        if !(self.k < self.s) {
            return Err(Error::Config(format!("K ({}) must be smaller than S ({})", self.k, self.s)));
        }
        if !(self.s < self.n) {
            return Err(Error::Config(format!("S ({}) must be smaller than n ({})", self.s, self.n)));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let half = ((self.p - 1) / 2) as f64;
        if !(self.radius >= 1.0 && self.radius < half) {
            return Err(Error::Config(format!(
                "radius must be in [1, {half}) so a noise annulus remains, got {}",
                self.radius
            )));
        }
        if !(self.bandlimit > 0.0 && self.bandlimit <= 1.0) {
            return Err(Error::Config(format!("bandlimit must be in (0, 1], got {}", self.bandlimit)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if self.angles < 8 {
            return Err(Error::Config(format!("angles must be ≥ 8, got {}", self.angles)));
        }
        if !(0.0..1.0).contains(&self.shrink_tau) {
            return Err(Error::Config(format!("shrink_tau must be in [0, 1), got {}", self.shrink_tau)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        for p in self.ctf_params() {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical listing of every key, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("n", self.n.to_string());
        m.insert("p", self.p.to_string());
        m.insert("snr", self.snr.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert(
            "defocus_um",
            self.defocus_um.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        m.insert("cs_mm", self.cs_mm.to_string());
        m.insert("lambda_pm", self.lambda_pm.to_string());
        m.insert("b_factor", self.b_factor.to_string());
        m.insert("amp_contrast", self.amp_contrast.to_string());
        m.insert("pixel_size_ang", self.pixel_size_ang.to_string());
        m.insert("radius", self.radius.to_string());
        m.insert("bandlimit", self.bandlimit.to_string());
        m.insert("S", self.s.to_string());
        m.insert("K", self.k.to_string());
        m.insert("angles", self.angles.to_string());
        m.insert("shrink_tau", self.shrink_tau.to_string());
        m.insert("threshold", self.threshold.to_string());
        m.insert("blobs", self.blobs.to_string());
        m.insert("blob_spread", self.blob_spread.to_string());
        m.insert("blob_sigma_min", self.blob_sigma_min.to_string());
        m.insert("blob_sigma_max", self.blob_sigma_max.to_string());
        m.insert("phantom_seed", self.phantom_seed.to_string());
        m.insert("montage_classes", self.montage_classes.to_string());
        m.insert("volume", path_str(&self.volume));
        m.insert("input", path_str(&self.input));
        m.insert("out", self.out.display().to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the listed keys' canonical lines.
    pub fn hash_keys(&self, keys: &[&str]) -> String {
        let canon = self.canonical();
        let mut h = Sha256::new();
        for line in canon.lines() {
            let key = line.split(" = ").next().unwrap_or("");
            if keys.contains(&key) {
                h.update(line.as_bytes());
                h.update(b"\n");
            }
        }
        hex(&h.finalize())
    }

    /// Hash of everything except the output directory.
    pub fn hash(&self) -> String {
        let keys: Vec<&str> = KEYS.iter().copied().filter(|&k| k != "out").collect();
        self.hash_keys(&keys)
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
