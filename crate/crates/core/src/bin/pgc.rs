use std::process::ExitCode;

use pgc_core::experiment::{emit_results, run_experiment, ExperimentSpec};
use pgc_core::Error;

fn main() -> ExitCode {
    let spec = match ExperimentSpec::parse_args(std::env::args_os()) {
        Ok(spec) => spec,
        Err(Error::Cli(e)) => e.exit(),
        Err(e) => {
            eprintln!("pgc: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = spec.cells() {
        eprintln!("pgc: {e}");
        return ExitCode::from(2);
    }
    if let Err(e) = std::fs::create_dir_all(&spec.out) {
        eprintln!("pgc: cannot create {}: {e}", spec.out.display());
        return ExitCode::FAILURE;
    }
    let results = match run_experiment(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("pgc: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = emit_results(&results, &spec, &spec.out) {
        eprintln!("pgc: writing results failed: {e}");
        return ExitCode::FAILURE;
    }
    for r in &results {
        let fsts = r.fsts();
        let successes = fsts.iter().filter(|f| f.is_some()).count();
        let median = pgc_core::harness::median_fst(&fsts).map_or("inf".to_string(), |m| m.to_string());
        println!(
            "{:<8} eps={:<5} buffer={:<4} successes={}/{} median_fst={}",
            r.cell.kind,
            r.cell.epsilon,
            r.cell.buffer,
            successes,
            fsts.len(),
            median
        );
    }
    println!("results written to {}", spec.out.display());
    ExitCode::SUCCESS
}
