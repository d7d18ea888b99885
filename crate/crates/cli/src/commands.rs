use std::fs;
use std::io::Write;
use std::path::Path;

use melcep::gradients::gradcheck_with_step;
use melcep::{
    fit_cepstra, multi_res_stft_loss, shift_semitones, stft_magnitude, synthesize, ChainConfig, Error,
    FitOptions, GradCheckSize, Signal64, StftConfig, SynthesisInput,
};

use crate::args::{Cli, Command, SynthArgs};
use crate::audio::{read_wav, write_wav};
use crate::bundle::FeatureBundle;
use crate::error::{CliError, Result};

/// Runs one command, writing any report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth {
            bundle,
            output,
            synth,
            wav,
        } => {
            let b = FeatureBundle::load(&bundle)?;
            write_wav(&output, &synthesize_bundle(&b, &synth)?, wav.format(synth.seed))
        }
        Command::PitchShift {
            bundle,
            semitones,
            output,
            synth,
            wav,
        } => {
            let mut b = FeatureBundle::load(&bundle)?;
            b.f0 = shift_semitones(&b.f0, semitones)?;
            write_wav(&output, &synthesize_bundle(&b, &synth)?, wav.format(synth.seed))
        }
        Command::Warp {
            bundle,
            alpha,
            output,
            synth,
            wav,
        } => {
            let mut b = FeatureBundle::load(&bundle)?;
            b.envelope = b.envelope.with_warp(alpha)?;
            b.aperiodicity = b.aperiodicity.with_warp(alpha)?;
            write_wav(&output, &synthesize_bundle(&b, &synth)?, wav.format(synth.seed))
        }
        Command::Loss {
            reference,
            degraded,
            windows,
        } => {
            let x = read_wav(&reference)?;
            let y = read_wav(&degraded)?;
            if x.sample_rate != y.sample_rate {
                return Err(CliError::Data(format!(
                    "sample rates differ: {} Hz in {}, {} Hz in {}",
                    x.sample_rate,
                    reference.display(),
                    y.sample_rate,
                    degraded.display()
                )));
            }
            if x.len() != y.len() {
                return Err(CliError::Data(format!(
                    "lengths differ: {} samples in {}, {} in {}",
                    x.len(),
                    reference.display(),
                    y.len(),
                    degraded.display()
                )));
            }
            let configs = windows.configs();
            let report = multi_res_stft_loss(&x, &y, &configs)?;
            writeln!(out, "total={:.6}", report.total).map_err(stdout_error)?;
            for (i, (part, cfg)) in report.per_resolution.iter().zip(&configs).enumerate() {
                writeln!(
                    out,
                    "resolution={i} window={} hop={} fft_size={} sc={:.6} mag={:.6}",
                    cfg.window_len, cfg.hop, cfg.fft_size, part.sc, part.mag
                )
                .map_err(stdout_error)?;
            }
            Ok(())
        }
        Command::Fit {
            target,
            bundle,
            output,
            iters,
            step,
            momentum,
            history,
            synth,
            windows,
        } => {
            let b = FeatureBundle::load(&bundle)?;
            let x = read_wav(&target)?;
            let input = synthesis_input(&b, &synth)?;
            if x.sample_rate != b.sample_rate() || x.len() != input.total_len() {
                return Err(CliError::Data(format!(
                    "{}: {} samples at {} Hz, the bundle spans {} samples at {} Hz",
                    target.display(),
                    x.len(),
                    x.sample_rate,
                    input.total_len(),
                    b.sample_rate()
                )));
            }
            let opts = FitOptions {
                iters,
                step,
                momentum,
                chain: ChainConfig {
                    filter: synth.filter(),
                    zero_phase: synth.zero_phase(),
                    losses: windows.configs(),
                },
            };
            let history_path = history.unwrap_or_else(|| output.join("history.txt"));
            match fit_cepstra(&x, &input, &opts) {
                Ok(fit) => {
                    let fitted = FeatureBundle {
                        envelope: fit.envelope,
                        aperiodicity: fit.aperiodicity,
                        f0: b.f0,
                    };
                    fitted.save(&output)?;
                    write_history(&history_path, &fit.history)?;
                    let (first, last) = (fit.history[0], fit.history[fit.history.len() - 1]);
                    writeln!(out, "iters={iters} initial_loss={first:.6} final_loss={last:.6}").map_err(stdout_error)
                }
                Err(Error::Divergence {
                    iteration,
                    loss,
                    initial,
                    history,
                }) => {
                    fs::create_dir_all(&output).map_err(|e| CliError::io(&output, e))?;
                    write_history(&history_path, &history)?;
                    Err(CliError::Numerical(format!(
                        "fit diverged at iteration {iteration}: loss {loss} vs initial {initial}; \
                         history written to {}",
                        history_path.display()
                    )))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Spectrogram {
            input,
            output,
            window,
            hop,
        } => {
            let x = read_wav(&input)?;
            let cfg = StftConfig::new(window, hop);
            let spec = stft_magnitude(&x, &cfg)?;
            let mut text = format!(
                "# frames={} bins={} hop={} fft_size={}\n",
                spec.frames, spec.bins, cfg.hop, cfg.fft_size
            );
            for f in 0..spec.frames {
                let row: Vec<String> = spec
                    .frame(f)
                    .iter()
                    .map(|a| format!("{:.6}", (a + melcep::losses::LOG_FLOOR).ln()))
                    .collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            fs::write(&output, text).map_err(|e| CliError::io(&output, e))
        }
        Command::Gradcheck {
            component,
            seed,
            threshold,
            step,
            frames,
            order,
            samples,
            taps,
        } => {
            let size = GradCheckSize {
                frames,
                order,
                samples,
                taps,
            };
            let report = gradcheck_with_step(component, size, seed, threshold, step)?;
            writeln!(
                out,
                "component={} seed={seed} step={step:e} threshold={threshold:e} passed={}",
                component.name(),
                report.passed
            )
            .map_err(stdout_error)?;
            for g in &report.groups {
                writeln!(
                    out,
                    "group={} count={} kinks={} max_rel_error={:.3e} max_abs_error={:.3e}",
                    g.name, g.count, g.kinks, g.max_rel_error, g.max_abs_error
                )
                .map_err(stdout_error)?;
            }
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Numerical(format!(
                    "gradcheck {} failed: max relative error {:.3e} >= {threshold:e}",
                    component.name(),
                    report.max_rel_error()
                )))
            }
        }
    }
}

fn synthesis_input(b: &FeatureBundle, synth: &SynthArgs) -> Result<SynthesisInput<f64>> {
    Ok(SynthesisInput::new(
        b.envelope.clone(),
        b.aperiodicity.clone(),
        b.f0.clone(),
        synth.seed,
    )?)
}

/// Waveform for `b` under the filter flags in `synth`.
pub fn synthesize_bundle(b: &FeatureBundle, synth: &SynthArgs) -> Result<Signal64> {
    let input = synthesis_input(b, synth)?;
    Ok(synthesize(&input, &synth.filter(), &synth.zero_phase())?)
}

fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let text: String = history
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{i} {l:.9e}\n"))
        .collect();
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn stdout_error(e: std::io::Error) -> CliError {
    CliError::Data(format!("writing report: {e}"))
}
