use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use emtstep::methodlab::{lab_table, FixtureParams};
use emtstep::oracle::{oracle_run, OracleConfig};
use emtstep::scheme::{self, ReinitMethod, SchemeConfig, SchemeKind};
use emtstep::wave::{compare, Waveform};
use emtstep::{netlist, ValidatedCircuit};

/// Fixed-step transient simulator for circuits with ideal switches.
#[derive(Debug, Parser)]
#[command(name = "emtstep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a netlist.
    Run {
        netlist: PathBuf,
        /// Step size in seconds; overrides `.tran h=`.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value = "proposed")]
        scheme: SchemeKind,
        #[arg(long, default_value = "fbbe")]
        reinit: ReinitMethod,
        /// Return to the regular time mesh after every switching instant.
        #[arg(long)]
        mesh_resync: bool,
        /// CSV output; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Event log; defaults to `<out stem>.events.log` next to `--out`.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Comma-separated signals such as `v(load),i(L1)`.
        #[arg(long, value_delimiter = ',')]
        signals: Option<Vec<String>>,
    },
    /// Fine-step backward-Euler reference run.
    Oracle {
        netlist: PathBuf,
        /// Sub-steps per `.tran` step.
        #[arg(long, default_value_t = 1000)]
        refine: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        signals: Option<Vec<String>>,
    },
    /// Error metrics of waveform `a` against reference `b`.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Post-switching values of every reinitialization method on the
    /// interrupted-inductor fixture.
    Lab {
        #[arg(long = "L", default_value_t = 0.005)]
        l: f64,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        il0: f64,
    },
}

fn load_circuit(path: &Path) -> Result<ValidatedCircuit> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    netlist::load(&text).with_context(|| format!("in {}", path.display()))
}

fn probes(
    circuit: &ValidatedCircuit,
    names: Option<Vec<String>>,
) -> Result<Vec<emtstep::circuit::Probe>> {
    match names {
        None => Ok(circuit.default_signals()),
        Some(names) => names
            .iter()
            .map(|n| {
                circuit
                    .probe(n)
                    .ok_or_else(|| anyhow!("unknown signal '{n}'"))
            })
            .collect(),
    }
}

fn emit_wave(wave: &Waveform, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => wave
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?,
        None => wave.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn default_event_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.events.log"))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            netlist,
            h,
            scheme,
            reinit,
            mesh_resync,
            out,
            events,
            signals,
        } => {
            let circuit = load_circuit(&netlist)?;
            let mut cfg = SchemeConfig::for_circuit(&circuit)
                .with_scheme(scheme)
                .with_reinit(reinit)
                .with_mesh_resync(mesh_resync);
            if let Some(h) = h {
                cfg = cfg.with_h(h);
            }
            cfg.signals = probes(&circuit, signals)?;
            let result = scheme::run(&circuit, &cfg)?;
            emit_wave(&result.waveform, out.as_deref())?;
            let event_path = events.or_else(|| out.as_deref().map(default_event_path));
            if let Some(path) = event_path {
                let file = std::fs::File::create(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                result.events.write_to(io::BufWriter::new(file))?;
            }
        }
        Command::Oracle {
            netlist,
            refine,
            out,
            signals,
        } => {
            let circuit = load_circuit(&netlist)?;
            let mut cfg = OracleConfig::for_circuit(&circuit, refine);
            cfg.signals = probes(&circuit, signals)?;
            let wave = oracle_run(&circuit, &cfg)?;
            emit_wave(&wave, out.as_deref())?;
        }
        Command::Compare {
            a,
            b,
            grid_step,
            report,
        } => {
            let wa = Waveform::load(&a).with_context(|| format!("reading {}", a.display()))?;
            let wb = Waveform::load(&b).with_context(|| format!("reading {}", b.display()))?;
            let text = compare(&wa, &wb, grid_step)?.to_string();
            match report {
                Some(path) => std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => io::stdout().lock().write_all(text.as_bytes())?,
            }
        }
        Command::Lab { l, h, il0 } => {
            if !(l > 0.0 && h > 0.0) {
                bail!("L and h must be positive");
            }
            print!("{}", lab_table(FixtureParams { l, h, il0 }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
