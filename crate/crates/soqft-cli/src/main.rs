use clap::{Args, Parser, Subcommand};
use soqft::resources::{self, MoleculeSpec, ResourceReport};
use soqft::scenario::{self, Manifest, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "soqft", version, about = "Split-operator QFT grid emulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (bundled name or TOML path).
    Run(RunArgs),
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        config: String,
    },
    /// List bundled scenarios.
    List,
    /// Compare two run manifests.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Also compare seed-dependent artifacts.
        #[arg(long)]
        strict: bool,
    },
    /// Qubit and gate-depth estimate for a molecule.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Allow scenarios marked extended.
    #[arg(long)]
    extended: bool,
    /// Independent jobs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeat: u64,
}

#[derive(Args)]
struct EstimateArgs {
    /// Named preset (nh3, c2f6).
    #[arg(long)]
    molecule: Option<String>,
    #[arg(long)]
    particles: Option<u64>,
    #[arg(long)]
    electrons: Option<u64>,
    #[arg(long)]
    z_max: Option<u64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    n_r: Option<u64>,
    /// Print CSV instead of text.
    #[arg(long)]
    csv: bool,
}

fn estimate(a: &EstimateArgs) -> soqft::Result<String> {
    let mut spec = match &a.molecule {
        Some(m) => MoleculeSpec::preset(m)
            .ok_or_else(|| soqft::Error::Config(format!("unknown molecule preset {m}")))?,
        None => {
            let (Some(p), Some(z), Some(c3)) = (a.particles, a.z_max, a.c3) else {
                return Err(soqft::Error::Config(
                    "give --molecule, or --particles, --z-max and --c3".into(),
                ));
            };
            MoleculeSpec {
                name: "custom".into(),
                particles: p,
                electrons: a.electrons.unwrap_or(p),
                z_max: z,
                c3,
                n_r_override: None,
            }
        }
    };
    if let Some(p) = a.particles {
        spec.particles = p;
    }
    if let Some(e) = a.electrons {
        spec.electrons = e;
    }
    if let Some(c3) = a.c3 {
        spec.c3 = c3;
    }
    spec.n_r_override = a.n_r;
    let r = ResourceReport::new(&spec)?;
    Ok(if a.csv { resources::reports_csv(&[r]) } else { r.text() })
}

fn run(a: &RunArgs) -> soqft::Result<()> {
    let cfg = scenario::load(&a.config)?;
    let base = a.seed.unwrap_or(cfg.seed);
    for k in 0..a.repeat.max(1) {
        let out_dir = if a.repeat > 1 { a.out.join(format!("rep_{k}")) } else { a.out.clone() };
        let opts = RunOptions {
            out_dir,
            seed: Some(base.wrapping_add(k)),
            extended: a.extended,
            threads: a.threads,
        };
        for v in scenario::run_scenario(&cfg, &opts)? {
            let label = if v.label.is_empty() { cfg.name.clone() } else { format!("{} [{}]", cfg.name, v.label) };
            println!("{label}: {} artifacts in {}", v.manifest.artifacts.len(), v.dir.display());
            if let Some(p) = v.prep_success {
                println!("  preparation success probability {p:.6e}");
            }
            if let Some(a) = v.final_autocorrelation {
                println!("  final |autocorrelation| {:.9}", a.norm());
            }
            for e in &v.energies {
                println!("  {:?} energy {:.9} ± {:.2e}", e.method, e.energy, e.uncertainty);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(&a),
        Command::Validate { config } => scenario::load(&config).and_then(|c| {
            for n in c.validate()? {
                println!("note: {n}");
            }
            println!("{}: ok", c.name);
            Ok(())
        }),
        Command::List => scenario::list_scenarios().map(|l| {
            for s in l {
                let ext = if s.extended { " (extended)" } else { "" };
                println!("{:<20} {}{ext}", s.name, s.description);
            }
        }),
        Command::Diff { a, b, strict } => (|| {
            let read = |p: &PathBuf| -> soqft::Result<Manifest> {
                let p = if p.is_dir() { p.join("manifest.toml") } else { p.clone() };
                Manifest::from_toml(&std::fs::read_to_string(&p)?, &p.display().to_string())
            };
            let d = scenario::diff_manifests(&read(&a)?, &read(&b)?, !strict);
            for line in &d {
                println!("{line}");
            }
            if d.is_empty() {
                Ok(())
            } else {
                Err(soqft::Error::Config(format!("{} difference(s)", d.len())))
            }
        })(),
        Command::Estimate(a) => estimate(&a).map(|s| print!("{s}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
