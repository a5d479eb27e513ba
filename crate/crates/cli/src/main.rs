use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use optipromp::scenario::{validate_file, write_outputs, RunOutcome, Scenario};

#[derive(Parser)]
#[command(name = "optipromp", version, about = "Run and check trajectory optimization scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files and write CSV outputs.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Overrides the seed in every scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of scenarios run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory. With several files each gets a subdirectory named after the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without optimizing.
    Validate { file: PathBuf },
}

struct Finished {
    name: String,
    dir: PathBuf,
    outcome: RunOutcome,
}

fn run_one(path: &Path, seed: Option<u64>, out: Option<&Path>, many: bool) -> Result<Finished, String> {
    let scenario = Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let seed = seed.unwrap_or(scenario.seed);
    let outcome = scenario.run(seed).map_err(|e| format!("{}: {e}", path.display()))?;
    let dir = match (out, &scenario.output) {
        (Some(o), _) if many => o.join(&scenario.name),
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("out").join(&scenario.name),
    };
    write_outputs(&dir, &scenario, &outcome).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Finished { name: scenario.name, dir, outcome })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn print_summary(done: &[Finished]) {
    let pushes = done.iter().map(|f| f.outcome.metrics.pushes.len()).max().unwrap_or(0);
    let mut header = format!("{:<28} {:>10}", "scenario", "M_c");
    for k in 1..=pushes {
        header.push_str(&format!(" {:>12}", format!("M_p(n{k})")));
    }
    header.push_str("  result");
    println!("{header}");
    for f in done {
        let m = &f.outcome.metrics;
        let mut line = format!("{:<28} {:>10}", f.name, fmt_opt(m.m_c));
        for k in 0..pushes {
            line.push_str(&format!(" {:>12}", fmt_opt(m.pushes.get(k).map(|p| p.m_p))));
        }
        line.push_str(if m.passed() { "  pass" } else { "  FAIL" });
        println!("{line}");
    }
}

fn run(files: Vec<PathBuf>, seed: Option<u64>, jobs: usize, out: Option<PathBuf>) -> ExitCode {
    let many = files.len() > 1;
    let results: Vec<Mutex<Option<Result<Finished, String>>>> = files.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, files.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(path) = files.get(i) else { break };
                let r = run_one(path, seed, out.as_deref(), many);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut done = Vec::new();
    let mut failed = false;
    for r in results {
        match r.into_inner().unwrap().expect("every job ran") {
            Ok(f) => {
                eprintln!("wrote {}", f.dir.display());
                done.push(f);
            }
            Err(e) => {
                eprintln!("error: {e}");
                failed = true;
            }
        }
    }
    print_summary(&done);
    if failed {
        ExitCode::from(1)
    } else if done.iter().all(|f| f.outcome.metrics.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { files, seed, jobs, out } => run(files, seed, jobs, out),
        Command::Validate { file } => {
            let issues = validate_file(&file);
            if issues.is_empty() {
                println!("{}: ok", file.display());
                ExitCode::SUCCESS
            } else {
                for i in &issues {
                    println!("{}: {i}", file.display());
                }
                ExitCode::from(1)
            }
        }
    }
}
