use std::fs::File;
use std::io::Write;
use std::time::Instant;

use simcensus::report::{emit_boxplot_data, emit_tables, write_entities_csv, write_tables_csv};
use simcensus::study::run_study;

use crate::config::RunConfigFile;
use crate::{CliError, StudyArgs};

pub fn run(args: StudyArgs) -> Result<(), CliError> {
    let mut file = RunConfigFile::load(&args.config)?;
    for assignment in &args.set {
        file.set(assignment)?;
    }
    if let Some(seed) = args.seed {
        file.set(&format!("seed={seed}"))?;
    }
    if let Some(workers) = args.workers {
        file.set(&format!("workers={workers}"))?;
    }
    if let Some(out) = &args.out {
        file.set(&format!("out={}", out.display()))?;
    }
    let (config, out_dir) = file.resolve()?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;

    let started = Instant::now();
    let metrics = run_study(&config)?;
    let elapsed = started.elapsed();

    let tables = emit_tables(&metrics);
    let entities = emit_boxplot_data(&metrics);
    write_tables_csv(&tables, File::create(out_dir.join("tables.csv"))?)?;
    write_entities_csv(&entities, File::create(out_dir.join("entities.csv"))?)?;

    let mut manifest = File::create(out_dir.join("run_manifest"))?;
    write!(manifest, "{}", file.echo())?;
    writeln!(manifest, "effective.scenario={}", metrics.scenario_name)?;
    writeln!(manifest, "effective.case={}", metrics.case_label)?;
    writeln!(manifest, "effective.replicates={}", metrics.replicates)?;
    writeln!(manifest, "effective.censuses={}", metrics.censuses)?;
    writeln!(manifest, "effective.seed={}", metrics.seed)?;
    writeln!(
        manifest,
        "effective.estimators={}",
        metrics
            .estimators
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    if let Some(z) = metrics.reference_poverty_line {
        writeln!(manifest, "effective.reference_poverty_line={z}")?;
    }
    writeln!(manifest, "version={}", env!("CARGO_PKG_VERSION"))?;
    writeln!(manifest, "wall_time_seconds={:.3}", elapsed.as_secs_f64())?;

    println!(
        "study {}/{} done: I={} B={} in {:.1}s -> {}",
        metrics.scenario_name,
        metrics.case_label,
        metrics.replicates,
        metrics.censuses,
        elapsed.as_secs_f64(),
        out_dir.display()
    );
    Ok(())
}
