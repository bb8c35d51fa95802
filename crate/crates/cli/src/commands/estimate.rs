use std::fs::File;

use simcensus::fit::{decompose_residuals, fit_ols, fit_onefold};
use simcensus::population::{import_population_csv, poverty_line, FgtParams};
use simcensus::rng::RngStream;
use simcensus::sampling::{draw_sample, extract_sample, SamplingDesign};
use simcensus::simulator::{run_estimator, EstimatorKind};
use simcensus::Error;

use crate::{CliError, EstimateArgs};

pub fn run(args: EstimateArgs) -> Result<(), CliError> {
    let kind = EstimatorKind::parse(&args.estimator)
        .ok_or_else(|| CliError::Usage(format!("unknown estimator '{}'", args.estimator)))?;
    let alphas: Vec<u8> = args
        .alphas
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u8>()
                .map_err(|_| CliError::Usage(format!("--alphas: bad entry '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    if args.censuses == 0 {
        return Err(CliError::Usage("--censuses must be >= 1".into()));
    }

    let file = File::open(&args.population).map_err(|e| {
        CliError::Usage(format!("cannot read {}: {e}", args.population.display()))
    })?;
    let population = import_population_csv(file).map_err(|e| match e {
        e @ Error::CsvRow { .. } => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    let layout = population.layout().clone();

    let z = match args.poverty_line {
        Some(z) if z > 0.0 => z,
        Some(z) => return Err(CliError::Usage(format!("--poverty-line must be > 0, got {z}"))),
        None => poverty_line(&population, args.poverty_fraction),
    };
    let fgt: Vec<FgtParams> = alphas
        .iter()
        .map(|&alpha| FgtParams::new(z, alpha, 0.0))
        .collect::<Result<_, simcensus::Error>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let design = SamplingDesign::uniform(
        layout.areas(),
        args.subareas_per_area,
        args.units_per_subarea,
    );
    let root = RngStream::new(args.seed);
    let index = draw_sample(&layout, &design, root.child(0)).map_err(CliError::from)?;
    let sample = extract_sample(&population, &index)?;

    let estimates = if kind.is_one_fold() {
        let (fit, effects) = fit_onefold(&sample)?;
        run_estimator(
            kind,
            &fit,
            &effects,
            population.census(),
            &index,
            &fgt,
            args.censuses,
            root.child(1),
        )?
    } else {
        let fit = fit_ols(&sample)?;
        let effects = decompose_residuals(&fit, &sample);
        run_estimator(
            kind,
            &fit,
            &effects,
            population.census(),
            &index,
            &fgt,
            args.censuses,
            root.child(1),
        )?
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", args.out.display())))?;
    let path = args.out.join("estimates.csv");
    let mut writer = csv_writer(File::create(&path)?)?;
    writer
        .write_record(["estimator", "alpha", "d", "j_or_blank", "estimate", "naive_mse"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let d_total = layout.areas();
    let s_total = layout.total_subareas();
    for (m, &alpha) in alphas.iter().enumerate() {
        for d in 0..d_total {
            writer
                .write_record([
                    kind.name(),
                    &alpha.to_string(),
                    &(d + 1).to_string(),
                    "",
                    &estimates.area_estimate[m * d_total + d].to_string(),
                    &estimates.area_naive_mse[m * d_total + d].to_string(),
                ])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        for s in 0..s_total {
            writer
                .write_record([
                    kind.name(),
                    &alpha.to_string(),
                    &(layout.area_of_subarea(s) + 1).to_string(),
                    &(layout.local_subarea(s) + 1).to_string(),
                    &estimates.subarea_estimate[m * s_total + s].to_string(),
                    &estimates.subarea_naive_mse[m * s_total + s].to_string(),
                ])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    writer.flush().map_err(CliError::from)?;
    println!(
        "estimate {} done: z={z:.6} rows={} -> {}",
        kind.name(),
        alphas.len() * (d_total + s_total),
        path.display()
    );
    Ok(())
}

fn csv_writer<W: std::io::Write>(inner: W) -> Result<csv::Writer<W>, CliError> {
    Ok(csv::Writer::from_writer(inner))
}
