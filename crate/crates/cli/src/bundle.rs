//! Feature bundles: a `key = value` config file plus three raw feature files.
//!
//! ```text
//! # bundle.cfg
//! sample_rate = 48000
//! frame_hop = 240
//! alpha = 0.55
//! env_order = 49
//! ap_order = 24
//! envelope = envelope.f32        # optional, these are the defaults
//! aperiodicity = aperiodicity.f32
//! f0 = f0.f32
//! ```
//!
//! Feature files hold little-endian IEEE 754 `f32` values with no header,
//! frame-major: frame `i`, coefficient `m` of an order-`M` track sits at byte
//! offset `4 * (i * (M + 1) + m)`. The f0 file has one value per frame in Hz,
//! zero for unvoiced frames. Relative paths resolve against the directory of
//! the config file. `#` starts a comment.

use std::fs;
use std::path::{Path, PathBuf};

use melcep::{CepstralTrack64, F0Track};

use crate::error::{CliError, Result};

pub const CONFIG_NAME: &str = "bundle.cfg";
const ENVELOPE_NAME: &str = "envelope.f32";
const APERIODICITY_NAME: &str = "aperiodicity.f32";
const F0_NAME: &str = "f0.f32";

#[derive(Debug, Clone, PartialEq)]
pub struct BundleConfig {
    pub sample_rate: u32,
    pub frame_hop: usize,
    pub alpha: f64,
    pub env_order: usize,
    pub ap_order: usize,
    pub envelope: PathBuf,
    pub aperiodicity: PathBuf,
    pub f0: PathBuf,
}

impl BundleConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let base = origin.parent().unwrap_or(Path::new("."));
        let mut sample_rate = None;
        let mut frame_hop = None;
        let mut alpha = None;
        let mut env_order = None;
        let mut ap_order = None;
        let mut envelope = base.join(ENVELOPE_NAME);
        let mut aperiodicity = base.join(APERIODICITY_NAME);
        let mut f0 = base.join(F0_NAME);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| CliError::Data(format!("{}:{}: {msg}", origin.display(), n + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected key = value, got `{line}`")))?;
            let number = |what: &str| bad(format!("{key}: `{value}` is not {what}"));
            match key {
                "sample_rate" => sample_rate = Some(value.parse().map_err(|_| number("a positive integer"))?),
                "frame_hop" => frame_hop = Some(value.parse().map_err(|_| number("an integer"))?),
                "alpha" => alpha = Some(value.parse().map_err(|_| number("a number"))?),
                "env_order" => env_order = Some(value.parse().map_err(|_| number("an integer"))?),
                "ap_order" => ap_order = Some(value.parse().map_err(|_| number("an integer"))?),
                "envelope" => envelope = base.join(value),
                "aperiodicity" => aperiodicity = base.join(value),
                "f0" => f0 = base.join(value),
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        let missing = |key: &str| CliError::Data(format!("{}: missing `{key}`", origin.display()));
        let cfg = Self {
            sample_rate: sample_rate.ok_or_else(|| missing("sample_rate"))?,
            frame_hop: frame_hop.ok_or_else(|| missing("frame_hop"))?,
            alpha: alpha.ok_or_else(|| missing("alpha"))?,
            env_order: env_order.ok_or_else(|| missing("env_order"))?,
            ap_order: ap_order.ok_or_else(|| missing("ap_order"))?,
            envelope,
            aperiodicity,
            f0,
        };
        if cfg.sample_rate == 0 || cfg.frame_hop == 0 {
            return Err(CliError::Data(format!(
                "{}: sample_rate and frame_hop must be positive",
                origin.display()
            )));
        }
        if !(cfg.alpha.abs() < 1.0) {
            return Err(CliError::Data(format!("{}: alpha {} outside (-1, 1)", origin.display(), cfg.alpha)));
        }
        Ok(cfg)
    }

    /// Config text with file names relative to the config's directory.
    fn render(&self) -> String {
        format!(
            "sample_rate = {}\nframe_hop = {}\nalpha = {}\nenv_order = {}\nap_order = {}\n\
             envelope = {ENVELOPE_NAME}\naperiodicity = {APERIODICITY_NAME}\nf0 = {F0_NAME}\n",
            self.sample_rate, self.frame_hop, self.alpha, self.env_order, self.ap_order
        )
    }
}

/// Envelope and aperiodicity cepstra with the f0 contour they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub envelope: CepstralTrack64,
    pub aperiodicity: CepstralTrack64,
    pub f0: F0Track,
}

impl FeatureBundle {
    /// Loads from a config file, or from `bundle.cfg` inside a directory.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg_path = if path.is_dir() { path.join(CONFIG_NAME) } else { path.to_path_buf() };
        let text = fs::read_to_string(&cfg_path).map_err(|e| CliError::io(&cfg_path, e))?;
        let cfg = BundleConfig::parse(&text, &cfg_path)?;
        let fs = cfg.sample_rate as f64;
        let env = read_track(&cfg.envelope, cfg.env_order)?;
        let ap = read_track(&cfg.aperiodicity, cfg.ap_order)?;
        let f0 = read_f32(&cfg.f0)?;
        let (ne, na, nf) = (env.len() / (cfg.env_order + 1), ap.len() / (cfg.ap_order + 1), f0.len());
        if ne != na || ne != nf {
            return Err(CliError::Data(format!(
                "frame counts differ: {} has {ne}, {} has {na}, {} has {nf}",
                cfg.envelope.display(),
                cfg.aperiodicity.display(),
                cfg.f0.display()
            )));
        }
        if let Some(i) = f0.iter().position(|&v| v < 0.0 || v >= fs / 2.0) {
            return Err(CliError::Data(format!(
                "{}: frame {i}: f0 {} Hz outside [0, {} Hz)",
                cfg.f0.display(),
                f0[i],
                fs / 2.0
            )));
        }
        Ok(Self {
            envelope: CepstralTrack64::new(env, cfg.env_order, cfg.alpha, cfg.frame_hop)
                .map_err(|e| CliError::io(&cfg.envelope, e))?,
            aperiodicity: CepstralTrack64::new(ap, cfg.ap_order, cfg.alpha, cfg.frame_hop)
                .map_err(|e| CliError::io(&cfg.aperiodicity, e))?,
            f0: F0Track::new(f0, cfg.frame_hop, fs).map_err(|e| CliError::io(&cfg.f0, e))?,
        })
    }

    /// Writes `bundle.cfg` and the three feature files into `dir`, creating it
    /// if needed. Values are stored as `f32`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let fs = self.f0.sample_rate();
        if fs.fract() != 0.0 {
            return Err(CliError::Usage(format!("sample rate {fs} is not an integer")));
        }
        let cfg = BundleConfig {
            sample_rate: fs as u32,
            frame_hop: self.envelope.frame_hop(),
            alpha: self.envelope.warp(),
            env_order: self.envelope.order(),
            ap_order: self.aperiodicity.order(),
            envelope: dir.join(ENVELOPE_NAME),
            aperiodicity: dir.join(APERIODICITY_NAME),
            f0: dir.join(F0_NAME),
        };
        write_f32(&cfg.envelope, self.envelope.as_slice())?;
        write_f32(&cfg.aperiodicity, self.aperiodicity.as_slice())?;
        write_f32(&cfg.f0, self.f0.values())?;
        let cfg_path = dir.join(CONFIG_NAME);
        fs::write(&cfg_path, cfg.render()).map_err(|e| CliError::io(&cfg_path, e))
    }

    pub fn sample_rate(&self) -> f64 {
        self.f0.sample_rate()
    }
}

fn read_track(path: &Path, order: usize) -> Result<Vec<f64>> {
    let data = read_f32(path)?;
    let dim = order + 1;
    if data.is_empty() || data.len() % dim != 0 {
        return Err(CliError::Data(format!(
            "{}: {} values do not form whole frames of {dim} coefficients",
            path.display(),
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Data(format!(
            "{}: frame {}, coefficient {}: non-finite value",
            path.display(),
            i / dim,
            i % dim
        )));
    }
    Ok(data)
}

/// Raw little-endian `f32` values widened to `f64`.
pub fn read_f32(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(CliError::Data(format!(
            "{}: {} bytes is not a whole number of f32 values",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

pub fn write_f32(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
