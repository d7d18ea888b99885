use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use melcep::{Component, ExpFilterConfig, Interp, Realization, ZeroPhaseConfig};

use crate::audio::WavFormat;

#[derive(Debug, Parser)]
#[command(name = "melcep", version, about = "Mel-cepstral source-filter vocoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a waveform from a feature bundle.
    Synth {
        bundle: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        wav: WavArgs,
    },
    /// Synthesize with f0 scaled by a number of semitones.
    PitchShift {
        bundle: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        semitones: f64,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        wav: WavArgs,
    },
    /// Synthesize with the cepstra reinterpreted at another warp.
    Warp {
        bundle: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        wav: WavArgs,
    },
    /// Print the multi-resolution STFT loss between two recordings.
    Loss {
        reference: PathBuf,
        degraded: PathBuf,
        #[command(flatten)]
        windows: WindowArgs,
    },
    /// Fit envelope and aperiodicity cepstra to a target recording.
    Fit {
        target: PathBuf,
        bundle: PathBuf,
        /// Directory for the fitted bundle.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 1e-2)]
        step: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// Loss history file; `<output>/history.txt` by default.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        windows: WindowArgs,
    },
    /// Export a log-magnitude spectrogram as text.
    Spectrogram {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1024)]
        window: usize,
        #[arg(long, default_value_t = 256)]
        hop: usize,
    },
    /// Compare one component's adjoint with finite differences.
    Gradcheck {
        /// tv_fir, exp_filter, zero_phase, mixed, loss or chain.
        component: Component,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = melcep::gradients::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = melcep::gradients::FD_STEP)]
        step: f64,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 1200)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        taps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RealizationArg {
    Cascade,
    Fir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Hold,
    Linear,
}

impl From<InterpArg> for Interp {
    fn from(v: InterpArg) -> Self {
        match v {
            InterpArg::Hold => Interp::Hold,
            InterpArg::Linear => Interp::Linear,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Linear-axis cepstrum order of the envelope filter.
    #[arg(long, default_value_t = 199)]
    pub order: usize,
    #[arg(long, default_value_t = 20)]
    pub maclaurin_order: usize,
    #[arg(long, value_enum, default_value_t = RealizationArg::Cascade)]
    pub realization: RealizationArg,
    #[arg(long, value_enum, default_value_t = InterpArg::Hold)]
    pub interp: InterpArg,
    #[arg(long, default_value_t = 256)]
    pub half_taps: usize,
    /// Noise seed; also seeds the dither of 16-bit output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    pub fn filter(&self) -> ExpFilterConfig {
        ExpFilterConfig {
            cepstrum_order: self.order,
            maclaurin_order: self.maclaurin_order,
            realization: match self.realization {
                RealizationArg::Cascade => Realization::Cascade,
                RealizationArg::Fir => Realization::SingleFir,
            },
            interp: self.interp.into(),
            ..ExpFilterConfig::default()
        }
    }

    pub fn zero_phase(&self) -> ZeroPhaseConfig {
        ZeroPhaseConfig {
            interp: self.interp.into(),
            ..ZeroPhaseConfig::new(self.half_taps)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WavArgs {
    /// Write 16-bit PCM with TPDF dither instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
}

impl WavArgs {
    pub fn format(&self, seed: u64) -> WavFormat {
        if self.pcm16 {
            WavFormat::Pcm16 { dither_seed: seed }
        } else {
            WavFormat::Float32
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// STFT window lengths; each uses a hop of one fifth of the window.
    #[arg(long, value_delimiter = ',', default_values_t = [600, 1200, 2400])]
    pub windows: Vec<usize>,
}

impl WindowArgs {
    pub fn configs(&self) -> Vec<melcep::StftConfig> {
        self.windows.iter().map(|&w| melcep::StftConfig::with_overlap(w)).collect()
    }
}
