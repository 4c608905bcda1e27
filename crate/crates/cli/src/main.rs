//! `jdisc`: batch front end for pullback structures, disc solves and the
//! supporting numerical checks. Every run writes `summary.json` (or
//! `error.json`) and `timing.json` into its output directory.

mod manifest;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use manifest::{Command, GridSpec, ModelRef, RunManifest};
use run::{execute, output_dir, RunError};

/// Environment variable naming the default output root.
const OUTPUT_ROOT_VAR: &str = "JDISC_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(
    name = "jdisc",
    version,
    about = "Pseudo-holomorphic disc experiments in coordinate models"
)]
struct Args {
    /// Command to run; may instead come from the manifest.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON run manifest; flags override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (default: $JDISC_OUTPUT_ROOT/<command>).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid as RxT, e.g. 64x128.
    #[arg(long)]
    grid: Option<GridSpec>,
    /// Built-in model or coefficient name (zero, half-w, identity, shear-2zbar-w, blowup, integrable-graph).
    #[arg(long)]
    model: Option<String>,
    /// Winding number of w, or the degree for phasefit and the zero count for vekua.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Comma-separated radii for sweep.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Comma-separated slices as re:im.
    #[arg(long, value_delimiter = ',', value_parser = parse_slice)]
    z_slices: Option<Vec<[f64; 2]>>,
    /// Torus-fill phases for attach.
    #[arg(long)]
    t_samples: Option<usize>,
}

fn parse_slice(s: &str) -> Result<[f64; 2], String> {
    let (re, im) = s.split_once(':').unwrap_or((s, "0"));
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("slice '{s}': {e}"));
    Ok([parse(re)?, parse(im)?])
}

fn load_manifest(args: &Args) -> Result<RunManifest, RunError> {
    let mut m = match &args.manifest {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| RunError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
            serde_json::from_str::<RunManifest>(&text)
                .map_err(|e| RunError::Usage(format!("manifest {}: {e}", path.display())))?
        }
        None => RunManifest::default(),
    };
    let command = match (args.command, m.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(RunError::Usage(format!(
                "command '{}' conflicts with manifest command '{}'",
                a.name(),
                b.name()
            )))
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => return Err(RunError::Usage("no command given".into())),
    };
    if let Some(name) = &args.model {
        m.model = Some(ModelRef::Name(name.clone()));
    }
    m.grid = args.grid.or(m.grid);
    let p = &mut m.params;
    p.seed = args.seed.or(p.seed);
    p.n = args.n.or(p.n);
    p.r = args.r.or(p.r);
    p.t = args.t.or(p.t);
    p.t_samples = args.t_samples.or(p.t_samples);
    if let Some(radii) = &args.radii {
        p.radii = Some(radii.clone());
    }
    if let Some(slices) = &args.z_slices {
        p.z_slices = Some(slices.clone());
    }
    Ok(m.resolve(command))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(dir.join(name), text)
}

fn error_record(command: Option<&str>, e: &RunError, manifest: Option<&RunManifest>) -> serde_json::Value {
    json!({
        "command": command,
        "status": "error",
        "kind": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
        "manifest": manifest,
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let env_root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from);
    let start = Instant::now();
    let manifest = match load_manifest(&args) {
        Ok(m) => m,
        Err(e) => {
            // no resolved manifest: the record goes to stderr, and to --output if given
            let record = error_record(args.command.map(Command::name), &e, None);
            if let Some(dir) = &args.output {
                let _ = write_json(dir, "error.json", &record);
            }
            eprintln!(
                "{}",
                serde_json::to_string(&record).expect("json value serializes")
            );
            return ExitCode::from(e.exit_code());
        }
    };
    let out = output_dir(args.output.clone(), &manifest, env_root);
    let command = manifest.command.expect("resolved").name();
    // a rerun into the same directory must not leave the other outcome behind
    for stale in ["summary.json", "error.json"] {
        let _ = fs::remove_file(out.join(stale));
    }
    let outcome = execute(&manifest, &out);
    let timing = json!({"command": command, "wall_seconds": start.elapsed().as_secs_f64()});
    let _ = write_json(&out, "timing.json", &timing);
    match outcome {
        Ok(report) => {
            let summary = json!({
                "command": command,
                "status": "ok",
                "manifest": manifest,
                "results": report.results,
                "artifacts": report.artifacts,
            });
            if let Err(e) = write_json(&out, "summary.json", &summary) {
                eprintln!("cannot write summary to {}: {e}", out.display());
                return ExitCode::from(1);
            }
            println!("{}", out.join("summary.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            let record = error_record(Some(command), &e, Some(&manifest));
            let _ = write_json(&out, "error.json", &record);
            eprintln!(
                "{}",
                serde_json::to_string(&record).expect("json value serializes")
            );
            ExitCode::from(code)
        }
    }
}
